"""Trace CSVs, metadata sidecars and figure files."""
from __future__ import annotations

import csv
import json
import math
from pathlib import Path
from typing import Dict, List, Optional, Sequence

from ..optim import TraceRecord

TRACE_COLUMNS = ("t", "f", "grad_norm", "alpha", "lambda_min", "f_test")


class OutputError(OSError):
    pass


def _fmt(value) -> str:
    if value is None:
        return ""
    if isinstance(value, int):
        return str(value)
    if math.isnan(value):
        return ""
    return "%.17g" % value


def write_trace(trace: Sequence[TraceRecord], path) -> Path:
    """CSV with header ``t,f,grad_norm,alpha,lambda_min,f_test``; absent values are empty cells."""
    path = Path(path)
    try:
        path.parent.mkdir(parents=True, exist_ok=True)
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(TRACE_COLUMNS)
            for r in trace:
                w.writerow([_fmt(getattr(r, c)) for c in TRACE_COLUMNS])
    except OSError as exc:
        raise OutputError(f"cannot write trace {path}: {exc}") from exc
    return path


def read_trace(path) -> List[TraceRecord]:
    out = []
    with open(path, newline="") as fh:
        for row in csv.DictReader(fh):
            vals = {c: (float(row[c]) if row[c] != "" else math.nan) for c in TRACE_COLUMNS[1:]}
            out.append(TraceRecord(t=int(row["t"]), **vals))
    return out


def _jsonable(obj):
    if isinstance(obj, float) and not math.isfinite(obj):
        return str(obj)
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if hasattr(obj, "tolist"):
        return _jsonable(obj.tolist())
    return obj


def write_json(data, path) -> Path:
    path = Path(path)
    try:
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_text(json.dumps(_jsonable(data), indent=2, sort_keys=True) + "\n")
    except OSError as exc:
        raise OutputError(f"cannot write {path}: {exc}") from exc
    return path


def write_sidecar(path, config: dict, seed_index: int, budget: Optional[dict] = None,
                  extra: Optional[dict] = None) -> Path:
    """JSON metadata next to a trace: full config, seed and budget constants."""
    meta = {"config": config, "seed": config.get("seed"), "seed_index": seed_index, "budget": budget}
    if extra:
        meta.update(extra)
    return write_json(meta, path)


# -- figures ----------------------------------------------------------------

PANELS = (("f", "train loss"), ("f_test", "test loss"), ("grad_norm", "gradient norm"))


def _pyplot():
    import matplotlib

    matplotlib.use("Agg")
    matplotlib.rcParams["svg.hashsalt"] = "critbench"
    matplotlib.rcParams["svg.fonttype"] = "none"
    import matplotlib.pyplot as plt

    return plt


def write_figure_data(traces: Dict[str, Sequence[TraceRecord]], path) -> Path:
    """Long-format CSV ``label,t,f,f_test,grad_norm`` with every curve of a figure."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["label", "t", "f", "f_test", "grad_norm"])
        for label, trace in traces.items():
            for r in trace:
                w.writerow([label, r.t, _fmt(r.f), _fmt(r.f_test), _fmt(r.grad_norm)])
    return path


def emit_plots(traces: Dict[str, Sequence[TraceRecord]], path, title: str = "") -> Dict[str, Path]:
    """Three log-scale panels (train loss, test loss, gradient norm) vs iteration.

    Writes ``<path>.csv`` with the curve data and ``<path>.svg``. The returned
    ``panels`` maps each panel title to its number of curves.
    """
    path = Path(path)
    data = write_figure_data(traces, path.with_suffix(".csv"))
    plt = _pyplot()
    fig, axes = plt.subplots(1, len(PANELS), figsize=(15, 4))
    for ax, (col, name) in zip(axes, PANELS):
        for label, trace in traces.items():
            pts = [(r.t, getattr(r, col)) for r in trace
                   if math.isfinite(getattr(r, col)) and getattr(r, col) > 0]
            if pts:
                ax.plot([p[0] for p in pts], [p[1] for p in pts], label=label)
            else:
                ax.plot([], [], label=label)
        ax.set_yscale("log")
        ax.set_xlabel("iteration")
        ax.set_ylabel(name)
        ax.set_title(name)
    axes[0].legend(fontsize="small")
    if title:
        fig.suptitle(title)
    fig.tight_layout()
    panels = {name: len(ax.get_lines()) for ax, (_, name) in zip(axes, PANELS)}
    svg = path.with_suffix(".svg")
    try:
        fig.savefig(svg, format="svg", metadata={"Date": None, "Creator": None})
    except OSError as exc:
        raise OutputError(f"cannot write figure {svg}: {exc}") from exc
    finally:
        plt.close(fig)
    return {"data": data, "svg": svg, "panels": panels}


def single_curve_plot(series: Dict[str, Sequence[tuple]], path, ylabel: str, logy: bool = True,
                      logx: bool = False) -> Path:
    """One-panel SVG of ``label -> [(x, y), ...]``."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    plt = _pyplot()
    fig, ax = plt.subplots(figsize=(6, 4))
    for label, pts in series.items():
        pts = [p for p in pts if math.isfinite(p[1])]
        ax.plot([p[0] for p in pts], [p[1] for p in pts], marker=".", label=label)
    if logx:
        ax.set_xscale("log")
    if logy:
        ax.set_yscale("log")
    ax.set_ylabel(ylabel)
    ax.legend(fontsize="small")
    fig.tight_layout()
    fig.savefig(path, format="svg", metadata={"Date": None, "Creator": None})
    plt.close(fig)
    return path
