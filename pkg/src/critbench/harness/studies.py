"""Multi-run studies: single runs, xi sweeps, optimizer comparisons and grid search."""
from __future__ import annotations

import math
from pathlib import Path
from typing import Dict, List, Optional

from ..optim import RunResult
from .config import ExperimentConfig
from .experiment import final_train_loss, optimizer_config, run_job
from .grid import GridResult, GridSpec, grid_search
from .io import emit_plots, single_curve_plot, write_json, write_sidecar, write_trace


def _label(spec: dict) -> str:
    m = spec["method"]
    if m == "ADAM":
        return f"ADAM b1={spec.get('beta1', 0.9)}"
    if m == "NAG":
        return f"NAG mu={spec.get('mu', 0.9)}"
    return f"RMSProp b2={spec.get('beta2', 0.9)}"


def _slug(label: str) -> str:
    return "".join(ch if ch.isalnum() or ch in ".-" else "_" for ch in label)


def run_seeds(cfg: ExperimentConfig, spec: dict, out: Optional[Path] = None, name: str = "run",
              budget: Optional[dict] = None) -> List[RunResult]:
    """Run ``spec`` once per seed index; write ``<name>_seed<k>.csv`` plus a sidecar when ``out`` is given."""
    opt = optimizer_config(spec)
    results = []
    for s in cfg.seeds:
        res = run_job(cfg, opt, s)
        results.append(res)
        if out is not None:
            sub_cfg = cfg.replace(optimizer=spec, seeds=[s], compare=None, grid=None, xi_sweep=None)
            write_trace(res.trace, out / f"{name}_seed{s}.csv")
            write_sidecar(out / f"{name}_seed{s}.json", sub_cfg.to_dict(), s, budget,
                          {"status": res.status, "hit_time": res.hit_time, "message": res.message})
    return results


def xi_sweep(cfg: ExperimentConfig, xi_values: List[float], out: Optional[Path] = None,
             retune: Optional[bool] = None) -> List[dict]:
    """One run per xi; by default other hyperparameters stay fixed.

    With ``retune`` the step size is re-tuned per xi by the grid in
    ``cfg.grid`` (or ``cfg.xi_sweep['grid']``).
    """
    sweep = cfg.xi_sweep or {}
    retune = bool(sweep.get("retune", False)) if retune is None else retune
    method = cfg.optimizer.get("method")
    if method not in ("RMSPROP", "ADAM"):
        raise ValueError("xi sweeps need an RMSPROP or ADAM optimizer")
    rows, curves = [], {}
    for xi in xi_values:
        spec = dict(cfg.optimizer, xi=float(xi))
        if retune:
            grid_spec = sweep.get("grid") or cfg.grid
            if grid_spec is None:
                raise ValueError("retuning needs a grid")
            gres = run_grid(cfg.replace(optimizer=spec), GridSpec.from_dict(grid_spec))
            spec.update(gres.best)
        label = f"xi={xi:g}"
        res = run_seeds(cfg.replace(seeds=cfg.seeds[:1]), spec, out, name=f"xi_{_slug(f'{xi:g}')}")[0]
        last = res.trace[-1]
        rows.append({"xi": xi, "alpha": spec["alpha"], "status": res.status, "final_f": last.f,
                     "final_f_test": last.f_test, "final_grad_norm": last.grad_norm,
                     "min_grad_norm": res.min_grad_norm})
        curves[label] = res.trace
    if out is not None:
        emit_plots(curves, out / "xi_sweep", title=f"{method}: effect of xi")
        write_json({"rows": rows, "retune": retune}, out / "xi_sweep_table.json")
    return rows


def _final(trace, attr):
    vals = [getattr(r, attr) for r in trace if math.isfinite(getattr(r, attr))]
    return vals[-1] if vals else math.nan


def compare(cfg: ExperimentConfig, out: Optional[Path] = None) -> dict:
    """Overlay several optimizers on one problem (train loss, test loss, gradient norm)."""
    specs = cfg.compare or []
    curves, rows = {}, []
    for spec in specs:
        label = _label(spec)
        res = run_seeds(cfg.replace(seeds=cfg.seeds[:1]), spec, out, name=_slug(label))[0]
        curves[label] = res.trace
        rows.append({"label": label, "status": res.status, "final_f": _final(res.trace, "f"),
                     "final_f_test": _final(res.trace, "f_test"),
                     "final_grad_norm": _final(res.trace, "grad_norm"), "min_grad_norm": res.min_grad_norm})
    summary = {"rows": rows, "observations": observations(rows)}
    if out is not None:
        figs = emit_plots(curves, out / "compare", title=cfg.objective.get("name", ""))
        summary["figure"] = str(figs["svg"].name)
        summary["panels"] = figs["panels"]
        write_json(summary, out / "compare_summary.json")
    summary["curves"] = curves
    return summary


def observations(rows: List[dict]) -> dict:
    """Which optimizer ends lowest on each metric, and whether the usual patterns appeared.

    The patterns are reported, never asserted: ADAM with beta1=0.99 reaching the
    lowest training/test loss, and NAG reaching the lowest gradient norm.
    """
    def argmin(key):
        ok = [r for r in rows if math.isfinite(r[key])]
        return min(ok, key=lambda r: r[key])["label"] if ok else None

    best = {k: argmin(k) for k in ("final_f", "final_f_test", "final_grad_norm")}
    return {
        "lowest": best,
        "adam_099_lowest_train_loss": best["final_f"] == "ADAM b1=0.99",
        "adam_099_lowest_test_loss": best["final_f_test"] == "ADAM b1=0.99",
        "nag_lowest_grad_norm": (best["final_grad_norm"] or "").startswith("NAG"),
    }


def run_grid(cfg: ExperimentConfig, grid: GridSpec, out: Optional[Path] = None) -> GridResult:
    """Grid search over ``cfg.optimizer`` using seed index ``cfg.seeds[0]`` for every cell.

    Every cell shares the start point and mini-batch stream of that seed, so
    the outcome does not depend on cell order.
    """
    seed = cfg.seeds[0]

    def evaluate(cell: Dict[str, float]) -> float:
        spec = dict(cfg.optimizer, **cell)
        return final_train_loss(run_job(cfg, optimizer_config(spec), seed))

    result = grid_search(grid, evaluate)
    if out is not None:
        write_json({"best": result.best, "best_loss": result.best_loss, "extensions": result.extensions,
                    "interior": result.interior, "alpha_axis": result.alpha_axis, "table": result.table,
                    "config": cfg.to_dict()}, out / "grid_results.json")
        series = {}
        for row in result.table:
            key = ", ".join(f"{k}={v:g}" for k, v in sorted(row.items()) if k not in ("alpha", "loss"))
            series.setdefault(key or "loss", []).append((row["alpha"], row["loss"]))
        plot = {k: sorted(v) for k, v in series.items()}
        single_curve_plot(plot, out / "grid.svg", "final training loss", logx=True)
    return result
