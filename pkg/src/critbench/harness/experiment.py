"""Turn an :class:`ExperimentConfig` into objectives, start points, oracles and runs."""
from __future__ import annotations

import json
import math
from dataclasses import dataclass
from typing import Dict, Optional, Sequence

import numpy as np

from .. import core
from ..autoenc import Shape, autoencoder_objective, batch_loss, glorot_init, minibatch_oracle
from ..autoenc.data import read_idx_images, train_test_split
from ..benchmarks import build_objective
from ..core import FiniteSumObjective, ObjectiveHandle
from ..optim import (IterateRecorder, Method, OptimizerConfig, OptimizerState, PreconditionerAudit, RunResult,
                     StopRule, run)
from ..schedules import StepKind, StepRule, TheoremBudget
from ..spectrum import MinEigTracker
from .config import ExperimentConfig

DATA_KEY = (0xDA7A, 0)

# Defaults applied when an optimizer spec leaves a parameter out.
DEFAULTS = {
    "NAG": {"mu": 0.9},
    "RMSPROP": {"beta2": 0.9, "xi": 1e-10},
    "ADAM": {"beta1": 0.9, "beta2": 0.999, "xi": 1e-8},
}


@dataclass
class Problem:
    obj: ObjectiveHandle
    fsum: Optional[FiniteSumObjective] = None
    shape: Optional[Shape] = None
    train: Optional[np.ndarray] = None
    test: Optional[np.ndarray] = None

    def test_value(self):
        if self.test is None:
            return None
        shape, Z = self.shape, self.test
        return lambda x: batch_loss(shape, x, Z)


def job_rngs(master: int, seed_index: int):
    """Independent (init, oracle) generators for one job."""
    ss = np.random.SeedSequence(entropy=master, spawn_key=(seed_index,))
    init, oracle = ss.spawn(2)
    return np.random.default_rng(init), np.random.default_rng(oracle)


_PROBLEMS: Dict[str, Problem] = {}


def build_problem(cfg: ExperimentConfig) -> Problem:
    key = json.dumps([cfg.objective, cfg.seed], sort_keys=True, default=str)
    if key not in _PROBLEMS:
        _PROBLEMS[key] = _build_problem(cfg.objective, cfg.seed)
    return _PROBLEMS[key]


def _build_problem(spec: dict, master: int) -> Problem:
    if spec["name"] != "autoencoder":
        built = build_objective(spec)
        if isinstance(built, FiniteSumObjective):
            return Problem(obj=built.mean, fsum=built)
        return Problem(obj=built)
    data_rng = np.random.default_rng(np.random.SeedSequence(entropy=master, spawn_key=DATA_KEY))
    data = spec.get("data", {"kind": "synthetic"})
    if data["kind"] == "idx":
        crop = int(data.get("crop", 0))
        train = read_idx_images(data["train"], crop)[: int(spec.get("n_train", 5500))]
        test = read_idx_images(data["test"], crop)[: int(spec.get("n_test", 1000))] if "test" in data else None
    else:
        side = int(spec.get("side", 10))
        train, test = train_test_split(data_rng, side, int(spec.get("n_train", 5500)),
                                       int(spec.get("n_test", 1000)))
    shape = Shape(int(spec["ell"]), train.shape[1], int(spec["h"]))
    obj = autoencoder_objective(shape, train, rng=data_rng)
    return Problem(obj=obj, shape=shape, train=train, test=test)


def start_point(cfg: ExperimentConfig, problem: Problem, rng: np.random.Generator) -> np.ndarray:
    x0 = cfg.x0
    kind = x0.get("kind", "normal")
    if kind == "point":
        x = np.asarray(x0["value"], dtype=float)
        if x.shape == ():
            x = np.full(problem.obj.dim, float(x))
        return x
    if kind == "glorot" or (problem.shape is not None and kind == "normal"):
        if problem.shape is None:
            raise ValueError("glorot start points need an autoencoder objective")
        s = problem.shape
        return glorot_init(rng, s.ell, s.d, s.h).flat
    return float(x0.get("scale", 1.0)) * rng.standard_normal(problem.obj.dim)


def optimizer_config(spec: dict) -> OptimizerConfig:
    method = spec["method"]
    params = dict(DEFAULTS[method])
    params.update({k: spec[k] for k in ("mu", "beta1", "beta2", "xi") if k in spec})
    alpha = float(spec["alpha"])
    rule = spec.get("rule", "default")
    if rule == "default":
        rule = "bias_corrected" if method == "ADAM" else "constant"
    step = StepRule(StepKind(rule), alpha=alpha, beta1=params.get("beta1", 0.0), beta2=params.get("beta2", 0.0))
    keep = {"NAG": ("mu",), "RMSPROP": ("beta2", "xi"), "ADAM": ("beta1", "beta2", "xi")}[method]
    return OptimizerConfig(method=Method(method), alpha_rule=step, **{k: params[k] for k in keep})


def budget_optimizer_config(budget: TheoremBudget) -> OptimizerConfig:
    d = budget.derived
    if budget.theorem_id.value == "ADAM_DET":
        return OptimizerConfig(Method.ADAM, budget.alpha_rule, beta1=d["beta1"], beta2=d["beta2"], xi=d["xi"])
    return OptimizerConfig(Method.RMSPROP, budget.alpha_rule, beta2=d.get("beta2", 0.0), xi=d["xi"])


def gradient_oracle(cfg: ExperimentConfig, problem: Problem, rng: np.random.Generator):
    if cfg.batch == "full":
        return None
    n = int(cfg.batch)
    if problem.fsum is not None:
        fs = problem.fsum
        if n == 1:
            return lambda x: core.sample_stochastic_gradient(fs, x, rng)

        def oracle(x):
            idx = rng.integers(fs.k, size=n)
            return sum(fs.components[i].grad_fn(x) for i in idx) / n

        return oracle
    if problem.shape is not None:
        return minibatch_oracle(problem.shape, problem.train, n, rng)
    raise ValueError("mini-batches need a finite-sum or autoencoder objective")


def run_job(cfg: ExperimentConfig, opt: OptimizerConfig, seed_index: int, max_steps=None, eps=None,
            x1: Optional[np.ndarray] = None, extra_hooks: Sequence = (), audit_sigma: Optional[float] = None,
            record_iterates: bool = False) -> RunResult:
    """One seeded run. Hooks for lambda_min tracking and audits are attached per config."""
    problem = build_problem(cfg)
    init_rng, oracle_rng = job_rngs(cfg.seed, seed_index)
    if x1 is None:
        x1 = start_point(cfg, problem, init_rng)
    hooks = list(extra_hooks)
    if cfg.lambda_stride:
        hooks.append(MinEigTracker(problem.obj, cfg.lambda_stride, seed=cfg.seed))
    if audit_sigma is not None and opt.method is Method.RMSPROP and opt.xi > 0:
        hooks.append(PreconditionerAudit(audit_sigma))
    recorder = None
    if record_iterates:
        recorder = IterateRecorder()
        hooks.append(recorder)
    stop = StopRule(max_steps=cfg.max_steps if max_steps is None else max_steps,
                    eps=cfg.eps if eps is None else eps)
    result = run(OptimizerState.initial(x1), opt, problem.obj, stop,
                 grad_oracle=gradient_oracle(cfg, problem, oracle_rng), hooks=hooks,
                 test_value=problem.test_value(), eval_every=cfg.eval_every)
    if recorder is not None:
        result.audits["visited_points"] = recorder.points
    return result


def final_train_loss(result: RunResult) -> float:
    f = result.trace[-1].f if result.trace else math.nan
    if result.status == "diverged" or not math.isfinite(f):
        return math.inf
    return f
