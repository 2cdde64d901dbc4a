"""Benchmark objectives with closed-form smoothness and gradient bounds."""
from __future__ import annotations

import math
from typing import Callable, Dict, Sequence

import numpy as np

from .core import FiniteSumObjective, ObjectiveHandle, ObjectiveMeta


def quadratic(A, box_radius: float = 1.0, name: str = "quadratic") -> ObjectiveHandle:
    """``f(x) = 1/2 x^T A x`` for symmetric positive semidefinite ``A``.

    ``sigma`` is only valid on the box ``[-box_radius, box_radius]^d``; the
    gradient of a quadratic is unbounded globally.
    """
    A = np.atleast_2d(np.asarray(A, dtype=float))
    if not np.allclose(A, A.T):
        raise ValueError("A must be symmetric")
    eigs = np.linalg.eigvalsh(A)
    if eigs[0] < -1e-12:
        raise ValueError("A must be positive semidefinite")
    d = A.shape[0]
    L = float(max(eigs[-1], 1e-300))
    sigma = L * box_radius * math.sqrt(d)
    meta = ObjectiveMeta(L=L, sigma=sigma, f_star=0.0, B_l=0.0,
                         note=f"sigma is box-local on [-{box_radius}, {box_radius}]^{d}")
    return ObjectiveHandle(
        dim=d,
        value_fn=lambda x: 0.5 * float(x @ A @ x),
        grad_fn=lambda x: A @ x,
        hvp_fn=lambda x, v: A @ v,
        meta=meta,
        x_star=np.zeros(d),
        name=name,
    )


def half_norm_squared(d: int, box_radius: float = 1.0) -> ObjectiveHandle:
    return quadratic(np.eye(d), box_radius=box_radius, name="half_norm_squared")


def logistic_sum(A, name: str = "logistic_sum") -> ObjectiveHandle:
    """Symmetric logistic sum ``sum_i softplus(a_i.x) + softplus(-a_i.x)``.

    The gradient ``A^T tanh(Ax/2)`` is a sum of sigmoid-shaped terms, so it is
    globally bounded. With ``m`` rows there are ``k = 2m`` terms, the minimiser
    is the origin and ``f* = k log 2``. The curvature is largest at the origin,
    which makes ``L = ||A||_2^2 / 2`` exact.
    """
    A = np.atleast_2d(np.asarray(A, dtype=float))
    m, d = A.shape
    spec = float(np.linalg.norm(A, 2))
    L = spec ** 2 / 2.0
    sigma = min(float(np.sum(np.linalg.norm(A, axis=1))), spec * math.sqrt(m))
    f_star = 2 * m * math.log(2.0)

    def value(x):
        u = A @ x
        return float(np.sum(np.logaddexp(0.0, u) + np.logaddexp(0.0, -u)))

    def gradient(x):
        return A.T @ np.tanh(0.5 * (A @ x))

    def hessvec(x, v):
        u = A @ x
        # d/du tanh(u/2) = (1 - tanh^2(u/2)) / 2
        w = 0.5 * (1.0 - np.tanh(0.5 * u) ** 2)
        return A.T @ (w * (A @ v))

    meta = ObjectiveMeta(L=L, sigma=sigma, f_star=f_star, B_l=f_star)
    return ObjectiveHandle(dim=d, value_fn=value, grad_fn=gradient, hvp_fn=hessvec,
                           meta=meta, x_star=np.zeros(d), name=name)


def random_logistic_sum(d: int, m: int, seed: int, row_norm: float = 1.0) -> ObjectiveHandle:
    rng = np.random.default_rng(seed)
    A = rng.standard_normal((m, d))
    A *= row_norm / np.linalg.norm(A, axis=1, keepdims=True)
    return logistic_sum(A)


def pseudo_huber(d: int, scale: float = 1.0, width: float = 1.0) -> ObjectiveHandle:
    """``scale * width^2 (sqrt(1 + ||x||^2/width^2) - 1)``.

    Quadratic near the origin and linear far away: ``L = scale`` and
    ``sigma = scale * width`` (a supremum, never attained).
    """
    c, w2 = float(scale), float(width) ** 2

    def value(x):
        return c * w2 * (math.sqrt(1.0 + float(x @ x) / w2) - 1.0)

    def gradient(x):
        return c * x / math.sqrt(1.0 + float(x @ x) / w2)

    def hessvec(x, v):
        r = math.sqrt(1.0 + float(x @ x) / w2)
        return c * (v / r - x * float(x @ v) / (w2 * r ** 3))

    meta = ObjectiveMeta(L=c, sigma=c * float(width), f_star=0.0, B_l=0.0)
    return ObjectiveHandle(dim=d, value_fn=value, grad_fn=gradient, hvp_fn=hessvec,
                           meta=meta, x_star=np.zeros(d), name="pseudo_huber")


def gaussian_well(d: int, depth: float = 1.0, width: float = 1.0) -> ObjectiveHandle:
    """``-depth * exp(-||x||^2 / (2 width^2))``: non-convex, bounded above and below.

    Hessian eigenvalues range over ``[-2 depth e^{-3/2}/width^2, depth/width^2]``.
    """
    c, w2 = float(depth), float(width) ** 2

    def value(x):
        return -c * math.exp(-0.5 * float(x @ x) / w2)

    def gradient(x):
        return (c / w2) * math.exp(-0.5 * float(x @ x) / w2) * x

    def hessvec(x, v):
        e = math.exp(-0.5 * float(x @ x) / w2)
        return (c * e / w2) * (v - x * float(x @ v) / w2)

    meta = ObjectiveMeta(L=c / w2, sigma=c * math.exp(-0.5) / math.sqrt(w2), f_star=-c,
                         B_l=-c, B_u=0.0)
    return ObjectiveHandle(dim=d, value_fn=value, grad_fn=gradient, hvp_fn=hessvec,
                           meta=meta, x_star=np.zeros(d), name="gaussian_well")


def _scaled(base: ObjectiveHandle, c: float, name: str) -> ObjectiveHandle:
    meta = ObjectiveMeta(L=c * base.meta.L, sigma=c * base.meta.sigma, f_star=c * base.meta.f_star,
                         sigma_estimated=base.meta.sigma_estimated, note=base.meta.note)
    hv = None
    if base.hvp_fn is not None:
        def hv(x, v):
            return c * base.hvp_fn(x, v)
    return ObjectiveHandle(dim=base.dim, value_fn=lambda x: c * base.value_fn(x),
                           grad_fn=lambda x: c * base.grad_fn(x), hvp_fn=hv, meta=meta,
                           x_star=base.x_star, name=name)


def scaled_finite_sum(base: ObjectiveHandle, scales: Sequence[float]) -> FiniteSumObjective:
    """Components ``f_p = c_p * base`` with every ``c_p > 0``.

    All component gradients are positive multiples of one vector, so they agree
    in sign at every point.
    """
    scales = [float(c) for c in scales]
    if not scales or min(scales) <= 0:
        raise ValueError("scales must be non-empty and strictly positive")
    comps = [_scaled(base, c, f"{base.name}[{p}]") for p, c in enumerate(scales)]
    cbar = sum(scales) / len(scales)
    meta = ObjectiveMeta(L=cbar * base.meta.L, sigma=cbar * base.meta.sigma,
                         f_star=cbar * base.meta.f_star, note="mean of scaled components")
    return FiniteSumObjective(comps, meta=meta, x_star=base.x_star, name=f"scaled_sum({base.name})")


def _shifted(base: ObjectiveHandle, shift: np.ndarray, name: str) -> ObjectiveHandle:
    hv = None
    if base.hvp_fn is not None:
        def hv(x, v):
            return base.hvp_fn(x - shift, v)
    return ObjectiveHandle(dim=base.dim, value_fn=lambda x: base.value_fn(x - shift),
                           grad_fn=lambda x: base.grad_fn(x - shift), hvp_fn=hv, meta=base.meta,
                           x_star=shift + base.x_star, name=name)


def symmetric_shifted_sum(base: ObjectiveHandle, shifts) -> FiniteSumObjective:
    """Components ``base(x - s)`` and ``base(x + s)`` for every shift ``s``.

    For an even, convex ``base`` with minimiser 0 the mean is even and convex,
    so the origin is a minimiser. Component gradients generally disagree in
    sign between the two copies, which violates the sign condition.
    """
    shifts = np.atleast_2d(np.asarray(shifts, dtype=float))
    if shifts.shape[1] != base.dim:
        raise ValueError("shifts must have base.dim columns")
    comps = []
    for i, s in enumerate(shifts):
        comps.append(_shifted(base, s, f"{base.name}[+{i}]"))
        comps.append(_shifted(base, -s, f"{base.name}[-{i}]"))
    origin = np.zeros(base.dim)
    f_star = sum(c.value_fn(origin) for c in comps) / len(comps)
    meta = ObjectiveMeta(L=base.meta.L, sigma=base.meta.sigma, f_star=f_star,
                         note="mean of symmetrically shifted copies")
    return FiniteSumObjective(comps, meta=meta, x_star=origin, name=f"shifted_sum({base.name})")


def _registry_quadratic(p):
    if "A" in p:
        A = np.asarray(p["A"], dtype=float)
    else:
        A = np.diag(np.asarray(p.get("diag", [1.0] * int(p.get("dim", 2))), dtype=float))
    return quadratic(A, box_radius=float(p.get("box_radius", 1.0)))


def _registry_logistic(p):
    if "A" in p:
        return logistic_sum(p["A"])
    return random_logistic_sum(int(p.get("dim", 10)), int(p.get("rows", 10)), int(p.get("seed", 0)),
                               float(p.get("row_norm", 1.0)))


def _registry_scaled_sum(p):
    base = build_objective(p.get("base", {"name": "pseudo_huber", "dim": 10}))
    if "scales" in p:
        scales = p["scales"]
    else:
        rng = np.random.default_rng(int(p.get("seed", 0)))
        lo, hi = p.get("scale_range", [0.5, 1.5])
        scales = rng.uniform(lo, hi, int(p.get("k", 10)))
    return scaled_finite_sum(base, scales)


def _registry_shifted_sum(p):
    base = build_objective(p.get("base", {"name": "pseudo_huber", "dim": 1}))
    return symmetric_shifted_sum(base, p.get("shifts", [[1.0] * base.dim]))


REGISTRY: Dict[str, Callable[[dict], object]] = {
    "quadratic": _registry_quadratic,
    "half_norm_squared": lambda p: half_norm_squared(int(p.get("dim", 1)), float(p.get("box_radius", 1.0))),
    "logistic_sum": _registry_logistic,
    "pseudo_huber": lambda p: pseudo_huber(int(p.get("dim", 2)), float(p.get("scale", 1.0)),
                                           float(p.get("width", 1.0))),
    "gaussian_well": lambda p: gaussian_well(int(p.get("dim", 2)), float(p.get("depth", 1.0)),
                                             float(p.get("width", 1.0))),
    "scaled_sum": _registry_scaled_sum,
    "shifted_sum": _registry_shifted_sum,
}


def build_objective(spec: dict):
    """Build a benchmark from ``{"name": ..., **params}``."""
    spec = dict(spec)
    name = spec.pop("name", None)
    if name not in REGISTRY:
        raise KeyError(f"unknown objective {name!r}; known: {sorted(REGISTRY)}")
    return REGISTRY[name](spec)
