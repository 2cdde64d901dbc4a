"""Experiment configuration: loading, validation and serialization.

Configs are YAML (or JSON) documents. A trace sidecar written by
:func:`critbench.harness.io.write_sidecar` is itself a valid config source, so
every run can be regenerated from its own metadata.
"""
from __future__ import annotations

import copy
import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Dict, List, Optional

import yaml

METHODS = ("NAG", "RMSPROP", "ADAM")
THEOREMS = ("RMS_DET", "RMS_STOCH", "RMS_NOSHIFT", "ADAM_DET")


class ConfigError(ValueError):
    """Invalid configuration; ``where`` names the field or source line."""

    def __init__(self, message: str, where: str = ""):
        super().__init__(f"{where}: {message}" if where else message)
        self.where = where


@dataclass
class ExperimentConfig:
    objective: Dict[str, Any]
    optimizer: Dict[str, Any] = field(default_factory=dict)
    budget: Optional[Dict[str, Any]] = None
    batch: Any = "full"
    max_steps: int = 10 ** 5
    eps: float = 0.0
    seed: int = 0
    seeds: List[int] = field(default_factory=lambda: [0])
    lambda_stride: Any = None
    eval_every: int = 1
    x0: Dict[str, Any] = field(default_factory=lambda: {"kind": "normal", "scale": 1.0})
    out: str = "out"
    grid: Optional[Dict[str, Any]] = None
    xi_sweep: Optional[Dict[str, Any]] = None
    compare: Optional[List[Dict[str, Any]]] = None
    certify: Dict[str, Any] = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {
            "objective": copy.deepcopy(self.objective),
            "optimizer": copy.deepcopy(self.optimizer),
            "budget": copy.deepcopy(self.budget),
            "batch": self.batch,
            "max_steps": self.max_steps,
            "eps": self.eps,
            "seed": self.seed,
            "seeds": list(self.seeds),
            "lambda_stride": self.lambda_stride,
            "eval_every": self.eval_every,
            "x0": copy.deepcopy(self.x0),
            "out": self.out,
            "grid": copy.deepcopy(self.grid),
            "xi_sweep": copy.deepcopy(self.xi_sweep),
            "compare": copy.deepcopy(self.compare),
            "certify": copy.deepcopy(self.certify),
        }

    def replace(self, **changes) -> "ExperimentConfig":
        d = self.to_dict()
        d.update(changes)
        return from_dict(d)


def _require(cond: bool, message: str, where: str):
    if not cond:
        raise ConfigError(message, where)


def _number(d: dict, key: str, where: str, lo=None, hi=None, lo_open=False, hi_open=False):
    if key not in d:
        return
    val = d[key]
    _require(isinstance(val, (int, float)) and not isinstance(val, bool), f"expected a number, got {val!r}",
             f"{where}.{key}")
    if lo is not None:
        _require(val > lo if lo_open else val >= lo, f"must be {'>' if lo_open else '>='} {lo}", f"{where}.{key}")
    if hi is not None:
        _require(val < hi if hi_open else val <= hi, f"must be {'<' if hi_open else '<='} {hi}", f"{where}.{key}")


def validate_optimizer(opt: dict, where: str = "optimizer") -> None:
    _require(isinstance(opt, dict), "expected a mapping", where)
    method = opt.get("method")
    _require(method in METHODS, f"method must be one of {METHODS}, got {method!r}", f"{where}.method")
    _number(opt, "alpha", where, lo=0, lo_open=True)
    for key in ("mu", "beta1", "beta2"):
        _number(opt, key, where, lo=0, hi=1, hi_open=True)
    _number(opt, "xi", where, lo=0, lo_open=(method == "ADAM"))
    if "alpha" not in opt:
        raise ConfigError("missing step size", f"{where}.alpha")
    rule = opt.get("rule", "default")
    _require(rule in ("default", "constant", "inv_sqrt", "bias_corrected"),
             f"unknown step rule {rule!r}", f"{where}.rule")


def validate(cfg: ExperimentConfig) -> None:
    obj = cfg.objective
    _require(isinstance(obj, dict) and "name" in obj, "needs a 'name'", "objective")
    if obj["name"] == "autoencoder":
        for key in ("ell", "h"):
            _require(isinstance(obj.get(key), int) and obj[key] >= 1, "must be a positive integer",
                     f"objective.{key}")
        data = obj.get("data", {"kind": "synthetic"})
        _require(data.get("kind") in ("synthetic", "idx"), "data.kind must be synthetic or idx",
                 "objective.data.kind")
        if data.get("kind") == "idx":
            _require("train" in data, "idx data needs a 'train' path", "objective.data.train")
    else:
        from ..benchmarks import REGISTRY

        _require(obj["name"] in REGISTRY, f"unknown objective; known: {sorted(REGISTRY) + ['autoencoder']}",
                 "objective.name")
    if cfg.budget is not None:
        _require(isinstance(cfg.budget, dict), "expected a mapping", "budget")
        _require(cfg.budget.get("theorem") in THEOREMS, f"theorem must be one of {THEOREMS}", "budget.theorem")
        _number(cfg.budget, "epsilon", "budget", lo=0, lo_open=True)
        _require("epsilon" in cfg.budget, "missing", "budget.epsilon")
        _number(cfg.budget, "beta2", "budget", lo=0, hi=1, hi_open=True)
        _number(cfg.budget, "gap_bound", "budget", lo=0)
        _number(cfg.budget, "xi", "budget", lo=0, lo_open=cfg.budget.get("theorem") != "RMS_NOSHIFT")
    elif cfg.compare is None:
        validate_optimizer(cfg.optimizer)
    if cfg.compare is not None:
        _require(isinstance(cfg.compare, list) and cfg.compare, "needs a non-empty list", "compare")
        for i, opt in enumerate(cfg.compare):
            validate_optimizer(opt, f"compare[{i}]")
    _require(cfg.batch == "full" or (isinstance(cfg.batch, int) and cfg.batch >= 1),
             "must be 'full' or a positive integer", "batch")
    _require(isinstance(cfg.max_steps, int) and cfg.max_steps >= 1, "must be a positive integer", "max_steps")
    _require(isinstance(cfg.eps, (int, float)) and cfg.eps >= 0, "must be a non-negative number", "eps")
    _require(isinstance(cfg.seed, int), "must be an integer", "seed")
    _require(isinstance(cfg.seeds, list) and cfg.seeds and all(isinstance(s, int) for s in cfg.seeds),
             "must be a non-empty list of integers", "seeds")
    _require(cfg.lambda_stride is None or (isinstance(cfg.lambda_stride, int) and cfg.lambda_stride >= 1),
             "must be null or a positive integer", "lambda_stride")
    _require(isinstance(cfg.eval_every, int) and cfg.eval_every >= 1, "must be a positive integer", "eval_every")
    _require(isinstance(cfg.x0, dict) and cfg.x0.get("kind") in ("normal", "point", "glorot"),
             "x0.kind must be normal, point or glorot", "x0")
    if cfg.grid is not None:
        axes = cfg.grid.get("axes")
        _require(isinstance(axes, dict) and axes, "needs a non-empty 'axes' mapping", "grid.axes")
        _require("alpha" in axes, "needs a step-size axis 'alpha'", "grid.axes")
        if cfg.grid.get("interior", True):
            _require(len(axes["alpha"]) >= 3, "needs at least 3 step sizes with the interior rule",
                     "grid.axes.alpha")
    if cfg.xi_sweep is not None:
        vals = cfg.xi_sweep.get("values")
        _require(isinstance(vals, list) and vals, "needs a non-empty 'values' list", "xi_sweep.values")


KNOWN_KEYS = set(ExperimentConfig.__dataclass_fields__)


def from_dict(d: dict) -> ExperimentConfig:
    if not isinstance(d, dict):
        raise ConfigError("top level must be a mapping")
    if "config" in d and "objective" not in d:
        d = d["config"]  # a run sidecar
    unknown = set(d) - KNOWN_KEYS
    if unknown:
        raise ConfigError(f"unknown keys {sorted(unknown)}", "config")
    if "objective" not in d:
        raise ConfigError("missing", "objective")
    cfg = ExperimentConfig(**copy.deepcopy(d))
    if cfg.lambda_stride is not None and isinstance(cfg.lambda_stride, float) and math.isinf(cfg.lambda_stride):
        cfg.lambda_stride = None
    validate(cfg)
    return cfg


def load(path) -> ExperimentConfig:
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise ConfigError(str(exc), str(path)) from exc
    try:
        if path.suffix == ".json":
            data = json.loads(text)
        else:
            data = yaml.safe_load(text)
    except json.JSONDecodeError as exc:
        raise ConfigError(exc.msg, f"{path}:{exc.lineno}:{exc.colno}") from exc
    except yaml.YAMLError as exc:
        mark = getattr(exc, "problem_mark", None)
        where = f"{path}:{mark.line + 1}:{mark.column + 1}" if mark is not None else str(path)
        raise ConfigError(getattr(exc, "problem", None) or str(exc), where) from exc
    return from_dict(data)


def dump(cfg: ExperimentConfig, path) -> None:
    Path(path).write_text(yaml.safe_dump(cfg.to_dict(), sort_keys=True))
