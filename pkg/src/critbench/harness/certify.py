"""Run an optimizer under a theorem budget and report whether the guarantee held."""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import List, Optional

import numpy as np

from .. import core, schedules
from ..optim import OptimizerState, RunResult, adam_step
from ..schedules import TheoremBudget, TheoremId
from .config import ExperimentConfig
from .experiment import budget_optimizer_config, build_problem, job_rngs, run_job, start_point


@dataclass
class CertReport:
    theorem_id: str
    epsilon: float
    T: float
    hit: bool
    hit_time: Optional[int]
    advisory: bool
    truncated: bool
    min_grad_curve: List[float] = field(default_factory=list)
    decrease_audit: Optional[dict] = None
    preconditioner_audit: Optional[dict] = None
    sign_condition_violated: bool = False
    sign_witness: Optional[dict] = None
    stochastic: Optional[dict] = None
    diagnostics: str = ""
    budget: dict = field(default_factory=dict)

    @property
    def certified(self) -> bool:
        return self.hit and not self.advisory and not self.sign_condition_violated

    def to_dict(self) -> dict:
        return {k: getattr(self, k) for k in self.__dataclass_fields__} | {"certified": self.certified}


def initial_point(cfg: ExperimentConfig, seed_index: int = 0) -> np.ndarray:
    problem = build_problem(cfg)
    init_rng, _ = job_rngs(cfg.seed, seed_index)
    return start_point(cfg, problem, init_rng)


def adam_second_iterate(meta, grad_fn, x1, eps: float, beta2: float = 0.999) -> np.ndarray:
    """``x_2`` under the ADAM theorem rule; it does not depend on ``f(x_2)``."""
    beta1 = eps / (eps + 2 * meta.sigma)
    rule = schedules.StepRule(schedules.StepKind.ADAM_THEOREM, beta1=beta1, beta2=beta2, L=meta.L,
                              epsilon=eps, sigma=meta.sigma)
    from ..optim import Method, OptimizerConfig

    cfg = OptimizerConfig(Method.ADAM, rule, beta1=beta1, beta2=beta2, xi=2 * meta.sigma)
    return adam_step(OptimizerState.initial(x1), cfg, grad_fn).x


def make_budget(cfg: ExperimentConfig, x1: Optional[np.ndarray] = None) -> TheoremBudget:
    if cfg.budget is None:
        raise ValueError("config has no budget section")
    b = cfg.budget
    problem = build_problem(cfg)
    obj = problem.obj
    x1 = initial_point(cfg) if x1 is None else x1
    eps = float(b["epsilon"])
    beta2 = float(b.get("beta2", 0.9))
    theorem = b["theorem"]
    if theorem == "RMS_NOSHIFT":
        return schedules.rmsprop_noshift_budget(obj.meta, float(b.get("alpha0", 0.1)), eps)
    if theorem == "ADAM_DET":
        beta2 = float(b.get("beta2", 0.999))
        x_ref = adam_second_iterate(obj.meta, obj.grad_fn, x1, eps, beta2)
    else:
        x_ref = x1
    f_ref = _reference_value(obj, x_ref, b.get("gap_bound"))
    if theorem == "RMS_DET":
        return schedules.rmsprop_det_budget(obj.meta, f_ref, beta2, float(b.get("xi", 1.0)), eps)
    if theorem == "RMS_STOCH":
        if problem.fsum is None:
            raise ValueError("the stochastic budget needs a finite-sum objective")
        return schedules.rmsprop_stoch_budget(obj.meta, problem.fsum.sigma_f, f_ref, beta2,
                                              float(b.get("xi", 1.0)), eps)
    return schedules.adam_theorem_params(obj.meta, f_ref, eps, beta2)


def _reference_value(obj, x, gap_bound) -> float:
    """``f(x)``, or ``f* + gap_bound`` when a valid upper bound on the gap is supplied.

    The budgets only need an upper bound on ``f(x) - f*``; a bound larger than
    the measured gap gives a longer, still valid, budget.
    """
    f = core.eval(obj, x)
    if gap_bound is None:
        return f
    gap = f - obj.meta.f_star
    if gap > float(gap_bound) * (1 + 1e-12):
        raise ValueError(f"gap_bound {gap_bound} is below the measured gap {gap:.6g}")
    return obj.meta.f_star + float(gap_bound)


def decrease_audit(result: RunResult, delta2: float, alpha: float) -> dict:
    """Check ``f(x_{t+1}) - f(x_t) <= -delta2 * alpha * ||grad f(x_t)||^2`` along a trace."""
    worst = math.inf
    violations = 0
    first = None
    tr = result.trace
    for a, b in zip(tr, tr[1:]):
        if b.t != a.t + 1:
            continue
        bound = -delta2 * alpha * a.grad_norm ** 2
        slack = bound - (b.f - a.f)
        tol = 1e-9 * (1 + abs(a.f))
        worst = min(worst, slack)
        if slack < -tol:
            violations += 1
            if first is None:
                first = a.t
    return {"checked": max(len(tr) - 1, 0), "violations": violations, "worst_slack": worst,
            "first_violation_t": first}


def certify_budget(budget: TheoremBudget, cfg: ExperimentConfig, slack: Optional[float] = None) -> CertReport:
    """Run ``cfg``'s objective under ``budget`` and check the guarantee.

    Deterministic budgets require ``min_{t<=T} ||grad f(x_t)|| <= eps``. The
    stochastic budget averages ``||grad f(x_t)||^2`` over ``cfg.seeds`` and
    requires its minimum to be at most ``slack * eps^2``; visited iterates are
    audited for the sign condition. Runs are capped at ``cfg.max_steps``.
    """
    problem = build_problem(cfg)
    meta = problem.obj.meta
    # no explicit iteration count exists for the no-shift variant
    advisory = meta.sigma_estimated or budget.theorem_id is TheoremId.RMS_NOSHIFT
    opt = budget_optimizer_config(budget)
    cap = min(budget.T, cfg.max_steps)
    truncated = budget.T > cfg.max_steps
    eps = budget.epsilon
    base = dict(theorem_id=budget.theorem_id.value, epsilon=eps, T=budget.T, advisory=advisory,
                truncated=truncated, budget=budget.to_dict())

    if budget.theorem_id is not TheoremId.RMS_STOCH:
        x1 = initial_point(cfg)
        res = run_job(cfg, opt, 0, max_steps=cap, eps=eps, x1=x1, audit_sigma=meta.sigma)
        report = CertReport(hit=res.status == "hit", hit_time=res.hit_time,
                            min_grad_curve=[r.min_grad_norm for r in res.trace], diagnostics=res.message,
                            **base)
        if budget.theorem_id is TheoremId.RMS_DET and cfg.batch == "full":
            report.decrease_audit = decrease_audit(res, budget.derived["delta2"], budget.alpha_rule.alpha)
        if "preconditioner_checked" in res.audits:
            report.preconditioner_audit = {k: v for k, v in res.audits.items() if k.startswith("preconditioner")}
        return report

    if problem.fsum is None:
        raise ValueError("the stochastic budget needs a finite-sum objective")
    slack = float(cfg.certify.get("slack", 2.0)) if slack is None else slack
    x1 = initial_point(cfg)
    stoch_cfg = cfg if cfg.batch != "full" else cfg.replace(batch=1)
    curves, violations, witness, diag = [], 0, None, []
    pre_checked = pre_bad = 0
    for s in cfg.seeds:
        res = run_job(stoch_cfg, opt, s, max_steps=cap, eps=0.0, x1=x1, audit_sigma=problem.fsum.sigma_f,
                      record_iterates=True)
        if res.status == "diverged":
            diag.append(f"seed {s}: {res.message}")
        curves.append([r.grad_norm ** 2 for r in res.trace])
        ok, w = core.check_sign_condition(problem.fsum, res.audits.pop("visited_points"))
        if not ok:
            violations += 1
            if witness is None:
                witness = {"seed": s, "point": w.point.tolist(), "coord": w.coord, "p": w.p, "q": w.q}
        pre_checked += res.audits.get("preconditioner_checked", 0)
        pre_bad += res.audits.get("preconditioner_violations", 0)
    n = min(len(c) for c in curves)
    mean_curve = np.mean([c[:n] for c in curves], axis=0)
    best = float(np.min(mean_curve))
    hit_idx = np.nonzero(mean_curve <= slack * eps ** 2)[0]
    hit = bool(hit_idx.size) and not diag
    running = np.minimum.accumulate(np.sqrt(mean_curve))
    return CertReport(hit=hit, hit_time=int(hit_idx[0]) + 1 if hit_idx.size else None,
                      min_grad_curve=running.tolist(), sign_condition_violated=violations > 0,
                      sign_witness=witness,
                      stochastic={"seeds": list(cfg.seeds), "slack": slack, "min_mean_sq_grad": best,
                                  "threshold": slack * eps ** 2, "seeds_with_sign_violations": violations},
                      preconditioner_audit={"preconditioner_checked": pre_checked,
                                            "preconditioner_violations": pre_bad},
                      diagnostics="; ".join(diag), **base)
