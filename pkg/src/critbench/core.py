"""Objectives, gradient oracles and Hessian-vector products.

An :class:`ObjectiveHandle` bundles a value function, its gradient, an optional
analytic Hessian-vector product and the metadata (``L``, ``sigma``, ``f_star``)
that the step-size budgets in :mod:`critbench.schedules` consume.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence

import numpy as np

Vector = np.ndarray

GRAD_FD_STEP = 1e-5
HVP_FD_STEP = 1e-4


class DimensionError(ValueError):
    pass


@dataclass(frozen=True)
class ObjectiveMeta:
    """Smoothness constant, gradient bound and optimal value of an objective.

    ``sigma_estimated`` marks a gradient bound obtained by probing rather than
    by a closed form; budgets built on such a bound are advisory only.
    """

    L: float
    sigma: float
    f_star: float
    B_l: Optional[float] = None
    B_u: Optional[float] = None
    sigma_estimated: bool = False
    note: str = ""

    def __post_init__(self):
        if not self.L > 0:
            raise ValueError(f"L must be positive, got {self.L}")
        if not self.sigma > 0:
            raise ValueError(f"sigma must be positive, got {self.sigma}")
        if self.B_l is not None and self.B_l > self.f_star:
            raise ValueError("B_l exceeds f_star")
        if self.B_u is not None and self.B_u < self.f_star:
            raise ValueError("B_u is below f_star")

    def to_dict(self) -> dict:
        return {
            "L": self.L,
            "sigma": self.sigma,
            "f_star": self.f_star,
            "B_l": self.B_l,
            "B_u": self.B_u,
            "sigma_estimated": self.sigma_estimated,
            "note": self.note,
        }


@dataclass(frozen=True)
class ObjectiveHandle:
    dim: int
    value_fn: Callable[[Vector], float]
    grad_fn: Callable[[Vector], Vector]
    meta: ObjectiveMeta
    hvp_fn: Optional[Callable[[Vector, Vector], Vector]] = None
    x_star: Optional[Vector] = None
    name: str = ""

    def __post_init__(self):
        if self.dim < 1:
            raise ValueError("dim must be a positive integer")


@dataclass(frozen=True)
class FiniteSumObjective:
    """``f = (1/k) sum_p f_p`` over components sharing one dimension."""

    components: tuple
    mean: ObjectiveHandle = field(init=False)
    sigma_f: float = field(init=False)

    def __init__(self, components: Sequence[ObjectiveHandle], meta: Optional[ObjectiveMeta] = None,
                 x_star: Optional[Vector] = None, name: str = ""):
        comps = tuple(components)
        if not comps:
            raise ValueError("a finite sum needs at least one component")
        dim = comps[0].dim
        if any(c.dim != dim for c in comps):
            raise DimensionError("components must share dim")
        k = len(comps)

        def value(x):
            return sum(c.value_fn(x) for c in comps) / k

        def gradient(x):
            return sum(c.grad_fn(x) for c in comps) / k

        hvp_fn = None
        if all(c.hvp_fn is not None for c in comps):
            def hvp_fn(x, v):
                return sum(c.hvp_fn(x, v) for c in comps) / k

        if meta is None:
            raise ValueError("finite sums need explicit metadata for the mean")
        object.__setattr__(self, "components", comps)
        object.__setattr__(self, "sigma_f", max(c.meta.sigma for c in comps))
        object.__setattr__(self, "mean", ObjectiveHandle(
            dim=dim, value_fn=value, grad_fn=gradient, hvp_fn=hvp_fn,
            meta=meta, x_star=x_star, name=name))

    @property
    def k(self) -> int:
        return len(self.components)

    @property
    def dim(self) -> int:
        return self.mean.dim


def _check_dim(obj: ObjectiveHandle, *vectors: Vector) -> None:
    for v in vectors:
        if np.shape(v) != (obj.dim,):
            raise DimensionError(f"expected a vector of length {obj.dim}, got shape {np.shape(v)}")


def eval(obj: ObjectiveHandle, x: Vector) -> float:  # noqa: A001 - public name
    x = np.asarray(x, dtype=float)
    _check_dim(obj, x)
    return float(obj.value_fn(x))


def grad(obj: ObjectiveHandle, x: Vector) -> Vector:
    x = np.asarray(x, dtype=float)
    _check_dim(obj, x)
    return np.asarray(obj.grad_fn(x), dtype=float)


def hvp(obj: ObjectiveHandle, x: Vector, v: Vector) -> Vector:
    """Hessian-vector product ``H(x) v``.

    Uses the analytic product when the handle carries one; otherwise a central
    difference of gradients with step ``1e-4 / max(1, ||v||)``.
    """
    x = np.asarray(x, dtype=float)
    v = np.asarray(v, dtype=float)
    _check_dim(obj, x, v)
    if obj.hvp_fn is not None:
        return np.asarray(obj.hvp_fn(x, v), dtype=float)
    return fd_hvp(obj.grad_fn, x, v)


def fd_hvp(grad_fn: Callable[[Vector], Vector], x: Vector, v: Vector, step: float = HVP_FD_STEP) -> Vector:
    if not np.any(v):
        return np.zeros_like(x)
    h = step / max(1.0, float(np.linalg.norm(v)))
    return (grad_fn(x + h * v) - grad_fn(x - h * v)) / (2.0 * h)


def fd_grad(value_fn: Callable[[Vector], float], x: Vector, step: Optional[float] = None) -> Vector:
    """Central finite-difference gradient with step ``1e-5 (1 + ||x||_inf)``."""
    x = np.asarray(x, dtype=float)
    h = GRAD_FD_STEP * (1.0 + np.max(np.abs(x))) if step is None else step
    g = np.empty_like(x)
    e = np.zeros_like(x)
    for i in range(x.size):
        e[i] = h
        g[i] = (value_fn(x + e) - value_fn(x - e)) / (2.0 * h)
        e[i] = 0.0
    return g


def sample_stochastic_gradient(fsum: FiniteSumObjective, x: Vector, rng: np.random.Generator) -> Vector:
    """Gradient of one component drawn uniformly at random."""
    x = np.asarray(x, dtype=float)
    _check_dim(fsum.mean, x)
    p = int(rng.integers(fsum.k))
    return np.asarray(fsum.components[p].grad_fn(x), dtype=float)


def sign(v: Vector) -> np.ndarray:
    # sign(0) = +1
    return np.where(np.asarray(v) >= 0, 1, -1)


@dataclass(frozen=True)
class SignViolation:
    point: Vector
    coord: int
    p: int
    q: int


def check_sign_condition(fsum: FiniteSumObjective, points: Sequence[Vector]):
    """Check that all component gradients share a coordinatewise sign pattern.

    Returns ``(True, None)`` or ``(False, SignViolation)`` for the first
    violation found. Component indices in the witness are 1-based.
    """
    if len(points) == 0:
        raise ValueError("need at least one point")
    for x in points:
        x = np.asarray(x, dtype=float)
        signs = np.array([sign(c.grad_fn(x)) for c in fsum.components])
        ref = signs[0]
        bad = np.nonzero(np.any(signs != ref, axis=1))[0]
        if bad.size:
            q = int(bad[0])
            coord = int(np.nonzero(signs[q] != ref)[0][0])
            return False, SignViolation(point=x.copy(), coord=coord, p=1, q=q + 1)
    return True, None


# -- audits -----------------------------------------------------------------

def smoothness_slack(obj: ObjectiveHandle, x: Vector, y: Vector) -> float:
    """``f(x) + <g(x), y-x> + L/2 ||y-x||^2 - f(y)``; non-negative for L-smooth f."""
    d = y - x
    upper = obj.value_fn(x) + float(obj.grad_fn(x) @ d) + 0.5 * obj.meta.L * float(d @ d)
    return upper - obj.value_fn(y)


def audit_smoothness(obj: ObjectiveHandle, rng: np.random.Generator, n_pairs: int = 1000,
                     radius: float = 1.0) -> float:
    """Smallest smoothness slack over random pairs in ``[-radius, radius]^d``."""
    worst = np.inf
    for _ in range(n_pairs):
        x = rng.uniform(-radius, radius, obj.dim)
        y = rng.uniform(-radius, radius, obj.dim)
        worst = min(worst, smoothness_slack(obj, x, y))
    return worst


def max_grad_norm(obj: ObjectiveHandle, points: Sequence[Vector]) -> float:
    return max(float(np.linalg.norm(obj.grad_fn(np.asarray(p, dtype=float)))) for p in points)
