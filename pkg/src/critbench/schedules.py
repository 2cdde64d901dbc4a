"""Step-size rules and iteration budgets that guarantee approximate criticality.

Each ``*_budget`` function turns objective metadata into a :class:`TheoremBudget`:
a step rule, an iteration cap ``T`` and the target ``epsilon``. Running the
matching optimizer for ``T`` steps under the rule is guaranteed to visit an
``epsilon``-critical point when the metadata is exact.
"""
from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .core import ObjectiveMeta


class StepKind(str, enum.Enum):
    CONSTANT = "constant"
    INV_SQRT = "inv_sqrt"
    ADAM_THEOREM = "adam_theorem"
    BIAS_CORRECTED = "bias_corrected"


@dataclass(frozen=True)
class StepRule:
    """A step-size schedule ``alpha_t``.

    ``adam_theorem`` depends on the current gradient and needs ``L``,
    ``epsilon``, ``sigma`` and ``beta1``; ``bias_corrected`` needs both betas.
    """

    kind: StepKind
    alpha: float = 0.0
    beta1: float = 0.0
    beta2: float = 0.0
    L: float = 1.0
    epsilon: float = 1.0
    sigma: float = 1.0

    def __post_init__(self):
        object.__setattr__(self, "kind", StepKind(self.kind))

    def __call__(self, t: int, g: Optional[np.ndarray] = None) -> float:
        if t < 1:
            raise ValueError("step index starts at 1")
        k = self.kind
        if k is StepKind.CONSTANT:
            return self.alpha
        if k is StepKind.INV_SQRT:
            return rmsprop_noshift_alpha(t, self.alpha)
        if k is StepKind.BIAS_CORRECTED:
            return adam_bias_corrected_alpha(self.alpha, self.beta1, self.beta2, t)
        if g is None:
            raise ValueError("the ADAM theorem step needs the current gradient")
        return adam_theorem_alpha(float(g @ g), t, self.L, self.beta1, self.epsilon, self.sigma)

    def to_dict(self) -> dict:
        return {"kind": self.kind.value, "alpha": self.alpha, "beta1": self.beta1, "beta2": self.beta2,
                "L": self.L, "epsilon": self.epsilon, "sigma": self.sigma}

    @classmethod
    def from_dict(cls, d: dict) -> "StepRule":
        return cls(**d)

    @classmethod
    def constant(cls, alpha: float) -> "StepRule":
        return cls(StepKind.CONSTANT, alpha=alpha)


class TheoremId(str, enum.Enum):
    RMS_DET = "RMS_DET"
    RMS_STOCH = "RMS_STOCH"
    RMS_NOSHIFT = "RMS_NOSHIFT"
    ADAM_DET = "ADAM_DET"


@dataclass(frozen=True)
class TheoremBudget:
    theorem_id: TheoremId
    epsilon: float
    alpha_rule: StepRule
    T: float  # int, or inf when the rate constant is unknown
    derived: dict = field(default_factory=dict)
    already_critical: bool = False

    @property
    def method(self) -> str:
        return "ADAM" if self.theorem_id is TheoremId.ADAM_DET else "RMSPROP"

    @property
    def stochastic(self) -> bool:
        return self.theorem_id is TheoremId.RMS_STOCH

    def to_dict(self) -> dict:
        return {
            "theorem_id": self.theorem_id.value,
            "epsilon": self.epsilon,
            "alpha_rule": self.alpha_rule.to_dict(),
            "T": self.T if math.isfinite(self.T) else "inf",
            "derived": dict(self.derived),
            "already_critical": self.already_critical,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "TheoremBudget":
        T = d["T"]
        return cls(theorem_id=TheoremId(d["theorem_id"]), epsilon=float(d["epsilon"]),
                   alpha_rule=StepRule.from_dict(d["alpha_rule"]),
                   T=math.inf if T == "inf" else int(T), derived=dict(d.get("derived", {})),
                   already_critical=bool(d.get("already_critical", False)))


def _gap(meta: ObjectiveMeta, f_x: float) -> float:
    gap = f_x - meta.f_star
    if gap < 0:
        raise ValueError(f"starting value {f_x} lies below f_star={meta.f_star}")
    return gap


def _ceil_budget(raw: float) -> int:
    # absorb representation error so that an exact integer is not bumped up
    r = round(raw)
    if abs(raw - r) <= 1e-9 * max(1.0, abs(raw)):
        return max(1, int(r))
    return max(1, math.ceil(raw))


def _check_common(beta2: float, xi: float, eps: float):
    if not 0 <= beta2 < 1:
        raise ValueError("beta2 must lie in [0, 1)")
    if not xi > 0:
        raise ValueError("xi must be strictly positive")
    if not eps > 0:
        raise ValueError("epsilon must be strictly positive")


def rmsprop_det_budget(meta: ObjectiveMeta, f_x1: float, beta2: float, xi: float, eps: float) -> TheoremBudget:
    """Constant-step deterministic RMSProp.

    ``alpha = (1-beta2) xi / (L sqrt(sigma^2 + xi))`` and
    ``T = ceil(2 L (sigma^2 + xi) (f(x1) - f*) / ((1-beta2) xi eps^2))``.
    """
    _check_common(beta2, xi, eps)
    gap = _gap(meta, f_x1)
    L, s2 = meta.L, meta.sigma ** 2
    alpha = (1 - beta2) * xi / (L * math.sqrt(s2 + xi))
    raw = 2 * L * (s2 + xi) * gap / ((1 - beta2) * xi * eps ** 2)
    derived = {
        "delta2": 1.0 / (2.0 * math.sqrt(s2 + xi)),
        "mu_min": 1.0 / math.sqrt(s2 + xi),
        "mu_max": 1.0 / math.sqrt((1 - beta2) * xi),
        "xi": xi, "beta2": beta2, "L": L, "sigma": meta.sigma, "gap": gap, "T_real": raw,
    }
    return TheoremBudget(TheoremId.RMS_DET, eps, StepRule.constant(alpha), _ceil_budget(raw), derived,
                         already_critical=gap == 0)


def rmsprop_stoch_budget(meta: ObjectiveMeta, sigma_f: float, f_x1: float, beta2: float, xi: float,
                         eps: float) -> TheoremBudget:
    """Constant-step stochastic RMSProp on a sign-consistent finite sum.

    ``T = ceil(2 L sigma_f^2 (sigma_f^2 + xi) (f(x1) - f*) / ((1-beta2) xi eps^4))`` and
    ``alpha = sqrt(2 xi (1-beta2) (f(x1) - f*) / (sigma_f^2 L)) / sqrt(T)``.
    The guarantee is on ``min_t E ||grad f(x_t)||^2 <= eps^2``.
    """
    _check_common(beta2, xi, eps)
    if not sigma_f > 0:
        raise ValueError("sigma_f must be strictly positive")
    gap = _gap(meta, f_x1)
    L, s2 = meta.L, sigma_f ** 2
    raw = 2 * L * s2 * (s2 + xi) * gap / ((1 - beta2) * xi * eps ** 4)
    T = _ceil_budget(raw)
    alpha = math.sqrt(2 * xi * (1 - beta2) * gap / (s2 * L)) / math.sqrt(T)
    derived = {
        "mu_min": 1.0 / math.sqrt(s2 + xi),
        "mu_max": 1.0 / math.sqrt((1 - beta2) * xi),
        "xi": xi, "beta2": beta2, "L": L, "sigma_f": sigma_f, "gap": gap, "T_real": raw,
    }
    return TheoremBudget(TheoremId.RMS_STOCH, eps, StepRule.constant(alpha), T, derived,
                         already_critical=gap == 0)


def rmsprop_noshift_alpha(t: int, alpha0: float) -> float:
    if t < 1:
        raise ValueError("t must be >= 1")
    return alpha0 / math.sqrt(t)


def rmsprop_noshift_budget(meta: ObjectiveMeta, alpha0: float, eps: float) -> TheoremBudget:
    """RMSProp with ``xi = 0`` and ``alpha_t = alpha0 / sqrt(t)``.

    Only an ``O(1/eps^4)`` rate is known, with no explicit constant, so ``T`` is
    infinite and runs report the observed hitting time.
    """
    if meta.B_l is None or meta.B_u is None:
        raise ValueError("the no-shift variant needs an objective bounded above and below")
    if not eps > 0:
        raise ValueError("epsilon must be strictly positive")
    rule = StepRule(StepKind.INV_SQRT, alpha=alpha0)
    return TheoremBudget(TheoremId.RMS_NOSHIFT, eps, rule, math.inf,
                         {"xi": 0.0, "alpha0": alpha0, "B_l": meta.B_l, "B_u": meta.B_u})


def adam_theorem_alpha(g_norm_sq: float, t: int, L: float, beta1: float, eps: float, sigma: float) -> float:
    return g_norm_sq / (L * (1 - beta1 ** t) ** 2) * 4 * eps / (3 * (eps + 2 * sigma) ** 2)


def adam_theorem_params(meta: ObjectiveMeta, f_x2: float, eps: float, beta2: float = 0.999) -> TheoremBudget:
    """Deterministic ADAM with ``beta1 = eps/(eps + 2 sigma)`` and ``xi = 2 sigma``.

    The step is gradient dependent,
    ``alpha_t = ||g_t||^2 / (L (1-beta1^t)^2) * 4 eps / (3 (eps + 2 sigma)^2)``,
    and ``T = ceil(9 L sigma^2 (f(x2) - f*) / eps^6)``.
    """
    if not eps > 0:
        raise ValueError("epsilon must be strictly positive")
    if not 0 <= beta2 < 1:
        raise ValueError("beta2 must lie in [0, 1)")
    gap = _gap(meta, f_x2)
    L, sigma = meta.L, meta.sigma
    beta1 = eps / (eps + 2 * sigma)
    xi = 2 * sigma
    raw = 9 * L * sigma ** 2 * gap / eps ** 6
    rule = StepRule(StepKind.ADAM_THEOREM, beta1=beta1, beta2=beta2, L=L, epsilon=eps, sigma=sigma)
    derived = {
        "beta1": beta1, "beta2": beta2, "xi": xi, "theta1": 1.0, "theta2": sigma,
        "beta1_bound": eps / (eps + sigma),
        "xi_bound": sigma ** 2 * beta1 / (-beta1 * sigma + eps * (1 - beta1)),
        "mu_min": 1.0 / (xi + sigma),
        "mu_max": 1.0 / xi,
        "L": L, "sigma": sigma, "gap": gap, "T_real": raw,
    }
    return TheoremBudget(TheoremId.ADAM_DET, eps, rule, _ceil_budget(raw), derived,
                         already_critical=gap == 0)


def adam_bias_corrected_alpha(alpha: float, beta1: float, beta2: float, t: int) -> float:
    if t < 1:
        raise ValueError("t must be >= 1")
    return alpha * math.sqrt(1 - beta2 ** t) / (1 - beta1 ** t)


def adam_optimal_step(g, m, v, xi: float, L: float) -> float:
    """Step length minimising the smoothness upper bound along the ADAM direction.

    ``<g, P m> / (L ||P m||^2)`` with ``P = (diag(sqrt v) + xi I)^{-1}``. A
    diagnostic; the default ADAM rules never use it.
    """
    pm = np.asarray(m, dtype=float) / (np.sqrt(np.asarray(v, dtype=float)) + xi)
    denom = L * float(pm @ pm)
    if denom == 0:
        return 0.0
    return float(np.asarray(g, dtype=float) @ pm) / denom
