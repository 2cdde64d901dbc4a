"""Smallest Hessian eigenvalue along optimizer trajectories via Lanczos."""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, List, Optional

import numpy as np
from scipy.linalg import eigh_tridiagonal

from .core import ObjectiveHandle, hvp
from .optim import StepHook, TraceRecord


@dataclass
class LanczosResult:
    lambda_min: float
    ritz_residual: float
    iters_used: int
    breakdown: bool = False
    converged: bool = False
    history: List[float] = field(default_factory=list)


def lanczos_min_eig(hvp_op: Callable[[np.ndarray], np.ndarray], dim: int, max_iters: Optional[int] = None,
                    tol: float = 1e-8, rng: Optional[np.random.Generator] = None) -> LanczosResult:
    """Most negative eigenvalue of a symmetric operator.

    Runs Lanczos with full reorthogonalization on ``-H`` from a seeded random
    start and negates the largest Ritz value, stopping once it moves by less
    than ``tol`` between iterations. ``history`` holds the estimate after each
    iteration; it never increases.
    """
    if max_iters is None:
        max_iters = min(dim, 200)
    max_iters = min(max_iters, dim)
    if max_iters < 1:
        raise ValueError("max_iters must be positive")
    rng = rng if rng is not None else np.random.default_rng(0)

    q = rng.standard_normal(dim)
    q /= np.linalg.norm(q)
    Q = np.empty((max_iters, dim))
    alphas, betas = [], []
    history: List[float] = []
    prev = math.inf
    beta_prev, q_prev = 0.0, np.zeros(dim)
    residual, breakdown, converged = math.inf, False, False
    scale = 0.0

    for j in range(max_iters):
        Q[j] = q
        w = -np.asarray(hvp_op(q), dtype=float)
        if not np.all(np.isfinite(w)):
            raise FloatingPointError(f"operator returned non-finite values at Lanczos iteration {j + 1}")
        a = float(q @ w)
        w = w - a * q - beta_prev * q_prev
        for _ in range(2):
            w -= Q[:j + 1].T @ (Q[:j + 1] @ w)
        b = float(np.linalg.norm(w))
        alphas.append(a)
        scale = max(scale, abs(a), b)

        if j == 0:
            theta, y = np.array([a]), np.ones((1, 1))
        else:
            theta, y = eigh_tridiagonal(np.array(alphas), np.array(betas))
        est = -float(theta[-1])
        history.append(est)
        residual = b * abs(float(y[-1, -1]))

        if b <= 1e-12 * max(scale, 1.0):
            breakdown = True
            converged = True
            break
        if abs(est - prev) < tol:
            converged = True
            break
        prev = est
        betas.append(b)
        q_prev, q = q, w / b
        beta_prev = b

    return LanczosResult(lambda_min=history[-1], ritz_residual=residual, iters_used=len(history),
                         breakdown=breakdown, converged=converged, history=history)


def hessian_min_eig(obj: ObjectiveHandle, x, max_iters: Optional[int] = None, tol: float = 1e-8,
                    seed: int = 0) -> LanczosResult:
    x = np.asarray(x, dtype=float)
    return lanczos_min_eig(lambda v: hvp(obj, x, v), obj.dim, max_iters, tol, np.random.default_rng(seed))


class MinEigTracker(StepHook):
    """Fill ``lambda_min`` on every trace row whose ``t`` is a multiple of ``stride``.

    A stride of ``inf`` (or ``None``) disables tracking.
    """

    def __init__(self, obj: ObjectiveHandle, stride, max_iters: Optional[int] = None, tol: float = 1e-8,
                 seed: int = 0):
        if obj.hvp_fn is None:
            raise ValueError("tracking needs an objective with Hessian-vector products")
        self.obj = obj
        self.stride = stride
        self.max_iters = max_iters
        self.tol = tol
        self.seed = seed
        self.results: List[tuple] = []

    def on_record(self, record: TraceRecord, state) -> None:
        s = self.stride
        if s is None or not math.isfinite(s) or record.t % int(s) != 0:
            return
        res = hessian_min_eig(self.obj, state.x, self.max_iters, self.tol, self.seed)
        record.lambda_min = res.lambda_min
        self.results.append((record.t, res))

    def summary(self) -> dict:
        return {"lambda_min_evaluations": len(self.results)}


def track_min_eig(run_fn, obj: ObjectiveHandle, stride, **kw):
    """Run ``run_fn(hooks)`` with a :class:`MinEigTracker` attached; returns the run result."""
    tracker = MinEigTracker(obj, stride, **kw)
    return run_fn([tracker])
