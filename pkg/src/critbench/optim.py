"""NAG, RMSProp and ADAM as single-step state transitions, plus a run loop.

All three steps read one gradient from ``grad_oracle(x)`` and return a new
:class:`OptimizerState`; inputs are never mutated. RMSProp starts its
accumulator at ``v_0 = 0``, not at the all-ones vector some frameworks use.
"""
from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field, replace
from typing import Callable, List, Optional, Sequence

import numpy as np

from .core import ObjectiveHandle
from .schedules import StepKind, StepRule

GradOracle = Callable[[np.ndarray], np.ndarray]


class Method(str, enum.Enum):
    NAG = "NAG"
    RMSPROP = "RMSPROP"
    ADAM = "ADAM"


@dataclass(frozen=True)
class OptimizerConfig:
    method: Method
    alpha_rule: StepRule
    mu: float = 0.0
    beta1: float = 0.0
    beta2: float = 0.0
    xi: float = 0.0

    def __post_init__(self):
        object.__setattr__(self, "method", Method(self.method))
        if isinstance(self.alpha_rule, (int, float)):
            object.__setattr__(self, "alpha_rule", StepRule.constant(float(self.alpha_rule)))
        for name in ("mu", "beta1", "beta2"):
            val = getattr(self, name)
            if not 0 <= val < 1:
                raise ValueError(f"{name} must lie in [0, 1), got {val}")
        if self.xi < 0:
            raise ValueError(f"xi must be non-negative, got {self.xi}")
        if self.method is Method.ADAM and not self.xi > 0:
            raise ValueError("ADAM needs xi > 0")

    def to_dict(self) -> dict:
        return {"method": self.method.value, "alpha_rule": self.alpha_rule.to_dict(), "mu": self.mu,
                "beta1": self.beta1, "beta2": self.beta2, "xi": self.xi}

    @classmethod
    def from_dict(cls, d: dict) -> "OptimizerConfig":
        d = dict(d)
        rule = d.pop("alpha_rule")
        rule = StepRule.constant(float(rule)) if isinstance(rule, (int, float)) else StepRule.from_dict(rule)
        return cls(alpha_rule=rule, **d)


@dataclass(frozen=True)
class OptimizerState:
    """Iterate ``x_t`` with accumulators. For NAG, ``v`` holds the velocity."""

    x: np.ndarray
    m: np.ndarray
    v: np.ndarray
    t: int = 1
    last_alpha: float = math.nan

    @classmethod
    def initial(cls, x1) -> "OptimizerState":
        x1 = np.array(x1, dtype=float)
        return cls(x=x1, m=np.zeros_like(x1), v=np.zeros_like(x1), t=1)


def penrose_sqrt_inv_apply(v, g) -> np.ndarray:
    """Apply ``diag(v)^{-1/2}`` with zero entries mapped to zero."""
    v = np.asarray(v, dtype=float)
    g = np.asarray(g, dtype=float)
    if np.any(v < 0):
        raise ValueError("penrose square-root inverse needs v >= 0")
    out = np.zeros(np.broadcast(v, g).shape)
    pos = v > 0
    np.divide(g, np.sqrt(v), out=out, where=pos)
    return out


def nag_step(state: OptimizerState, cfg: OptimizerConfig, grad_oracle: GradOracle) -> OptimizerState:
    if cfg.method is not Method.NAG:
        raise ValueError("nag_step needs a NAG config")
    g = grad_oracle(state.x)
    alpha = cfg.alpha_rule(state.t, g)
    v = cfg.mu * state.v + g
    x = state.x - alpha * (g + cfg.mu * v)
    return replace(state, x=x, v=v, t=state.t + 1, last_alpha=alpha)


def rmsprop_step(state: OptimizerState, cfg: OptimizerConfig, grad_oracle: GradOracle) -> OptimizerState:
    if cfg.method is not Method.RMSPROP:
        raise ValueError("rmsprop_step needs an RMSPROP config")
    g = grad_oracle(state.x)
    alpha = cfg.alpha_rule(state.t, g)
    v = cfg.beta2 * state.v + (1 - cfg.beta2) * (g * g + cfg.xi)
    x = state.x - alpha * penrose_sqrt_inv_apply(v, g)
    return replace(state, x=x, v=v, t=state.t + 1, last_alpha=alpha)


def adam_step(state: OptimizerState, cfg: OptimizerConfig, grad_oracle: GradOracle) -> OptimizerState:
    if cfg.method is not Method.ADAM:
        raise ValueError("adam_step needs an ADAM config")
    g = grad_oracle(state.x)
    alpha = cfg.alpha_rule(state.t, g)
    m = cfg.beta1 * state.m + (1 - cfg.beta1) * g
    v = cfg.beta2 * state.v + (1 - cfg.beta2) * g * g
    # xi sits outside the square root here, unlike RMSProp
    x = state.x - alpha * m / (np.sqrt(v) + cfg.xi)
    return replace(state, x=x, m=m, v=v, t=state.t + 1, last_alpha=alpha)


STEPS = {Method.NAG: nag_step, Method.RMSPROP: rmsprop_step, Method.ADAM: adam_step}


def step(state: OptimizerState, cfg: OptimizerConfig, grad_oracle: GradOracle) -> OptimizerState:
    return STEPS[cfg.method](state, cfg, grad_oracle)


def default_config(method, alpha, **kw) -> OptimizerConfig:
    """Config with the usual framework defaults for the unspecified parameters."""
    method = Method(method)
    if method is Method.ADAM:
        kw.setdefault("beta1", 0.9)
        kw.setdefault("beta2", 0.999)
        kw.setdefault("xi", 1e-8)
        rule = StepRule(StepKind.BIAS_CORRECTED, alpha=alpha, beta1=kw["beta1"], beta2=kw["beta2"])
    elif method is Method.RMSPROP:
        kw.setdefault("beta2", 0.9)
        kw.setdefault("xi", 1e-10)
        rule = StepRule.constant(alpha)
    else:
        kw.setdefault("mu", 0.9)
        rule = StepRule.constant(alpha)
    return OptimizerConfig(method=method, alpha_rule=rule, **kw)


# -- run loop ---------------------------------------------------------------

@dataclass
class TraceRecord:
    t: int
    f: float
    grad_norm: float
    alpha: float = math.nan
    lambda_min: float = math.nan
    f_test: float = math.nan
    min_grad_norm: float = math.nan


@dataclass(frozen=True)
class StopRule:
    """Stop after ``max_steps`` iterates or at the first ``||grad|| <= eps``; ``eps < 0`` never stops early."""

    max_steps: float = 10 ** 5
    eps: float = 0.0


@dataclass
class RunResult:
    state: OptimizerState
    trace: List[TraceRecord]
    status: str  # "hit", "max_steps" or "diverged"
    hit_time: Optional[int] = None
    message: str = ""
    audits: dict = field(default_factory=dict)

    @property
    def min_grad_norm(self) -> float:
        return min((r.grad_norm for r in self.trace), default=math.nan)


class StepHook:
    """Called after every step; may annotate the trace row just written."""

    def on_record(self, record: TraceRecord, state: OptimizerState) -> None:
        pass

    def on_step(self, before: OptimizerState, after: OptimizerState, cfg: OptimizerConfig) -> None:
        pass

    def summary(self) -> dict:
        return {}


class PreconditionerAudit(StepHook):
    """Check RMSProp's diagonal preconditioner against its worst-case bounds.

    With gradient norms at most ``sigma`` and ``xi > 0`` every entry of
    ``V_t^{-1/2}`` lies in ``[1/sqrt(sigma^2+xi), 1/sqrt((1-beta2) xi)]``.
    """

    def __init__(self, sigma: float, rtol: float = 1e-12):
        self.sigma = sigma
        self.rtol = rtol
        self.violations = 0
        self.checked = 0
        self.first_violation = None

    def on_step(self, before, after, cfg):
        if cfg.method is not Method.RMSPROP or cfg.xi <= 0:
            return
        lo = 1.0 / math.sqrt(self.sigma ** 2 + cfg.xi)
        hi = 1.0 / math.sqrt((1 - cfg.beta2) * cfg.xi)
        entries = penrose_sqrt_inv_apply(after.v, np.ones_like(after.v))
        bad = (entries < lo * (1 - self.rtol)) | (entries > hi * (1 + self.rtol))
        self.checked += 1
        if np.any(bad):
            self.violations += 1
            if self.first_violation is None:
                self.first_violation = (before.t, float(entries.min()), float(entries.max()))

    def summary(self):
        return {"preconditioner_checked": self.checked, "preconditioner_violations": self.violations,
                "preconditioner_first_violation": self.first_violation}


class IterateRecorder(StepHook):
    """Keep every visited iterate (for post-hoc sign-condition audits)."""

    def __init__(self):
        self.points: List[np.ndarray] = []

    def on_record(self, record, state):
        self.points.append(state.x.copy())


def run(state0: OptimizerState, cfg: OptimizerConfig, obj: ObjectiveHandle, stop: StopRule,
        grad_oracle: Optional[GradOracle] = None, hooks: Sequence[StepHook] = (),
        test_value: Optional[Callable[[np.ndarray], float]] = None,
        eval_every: int = 1) -> RunResult:
    """Iterate ``cfg``'s step until ``t > T`` or ``||grad f(x_t)|| <= eps``.

    The stopping test always uses the full gradient of ``obj``, even when
    ``grad_oracle`` is stochastic. Each trace row describes ``x_t`` and the step
    length used to leave it. With ``eval_every > 1`` only every k-th iterate
    (and the first) is evaluated and tested.
    """
    step_fn = STEPS[cfg.method]
    oracle = grad_oracle if grad_oracle is not None else obj.grad_fn
    state = state0
    trace: List[TraceRecord] = []
    best = math.inf
    T = stop.max_steps
    status, hit_time, message = "max_steps", None, ""
    # divergence is detected and reported below, so overflow warnings are noise
    with np.errstate(over="ignore", invalid="ignore"):
        while state.t <= T:
            evaluate = (state.t - state0.t) % eval_every == 0 or state.t == T
            rec = None
            if evaluate:
                try:
                    f = obj.value_fn(state.x)
                    gn = float(np.linalg.norm(obj.grad_fn(state.x)))
                except FloatingPointError:
                    f = gn = math.nan
                if not (math.isfinite(f) and math.isfinite(gn)):
                    trace.append(TraceRecord(state.t, f, gn, min_grad_norm=best))
                    status, message = "diverged", f"non-finite objective or gradient at t={state.t}"
                    break
                best = min(best, gn)
                rec = TraceRecord(state.t, f, gn, min_grad_norm=best)
                if test_value is not None:
                    rec.f_test = test_value(state.x)
                trace.append(rec)
                for h in hooks:
                    h.on_record(rec, state)
                if gn <= stop.eps:
                    status, hit_time = "hit", state.t
                    break
            if state.t >= T:
                break
            try:
                new = step_fn(state, cfg, oracle)
            except FloatingPointError as exc:
                status, message = "diverged", f"step t={state.t}: {exc}"
                break
            if rec is not None:
                rec.alpha = new.last_alpha
            if not np.all(np.isfinite(new.x)):
                status, message = "diverged", f"non-finite iterate after step t={state.t}"
                state = new
                break
            for h in hooks:
                h.on_step(state, new, cfg)
            state = new
    audits = {}
    for h in hooks:
        audits.update(h.summary())
    return RunResult(state=state, trace=trace, status=status, hit_time=hit_time, message=message,
                     audits=audits)
