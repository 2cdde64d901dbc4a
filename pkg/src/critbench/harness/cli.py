"""Command-line entry point.

    critbench run      --config exp.yaml [--seed N] [--out DIR]
    critbench grid     --config exp.yaml
    critbench certify  --config exp.yaml [--strict]
    critbench xi-sweep --config exp.yaml
    critbench spectrum --config exp.yaml [--stride S]
    critbench compare  --config exp.yaml

Exit codes: 0 success, 1 configuration/usage error, 2 run failure,
3 certificate miss under ``--strict``.
"""
from __future__ import annotations

import argparse
import logging
import math
import sys
from pathlib import Path
from typing import List, Optional

from .certify import certify_budget, make_budget
from .config import ConfigError, ExperimentConfig, load
from .grid import GridError, GridSpec
from .io import OutputError, single_curve_plot, write_json
from .studies import compare, run_grid, run_seeds, xi_sweep

log = logging.getLogger("critbench")

EXIT_OK, EXIT_CONFIG, EXIT_RUN, EXIT_MISS = 0, 1, 2, 3


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        raise UsageError(f"{self.prog}: error: {message}")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="critbench", description="Convergence-to-criticality testbed for NAG, RMSProp and ADAM.")
    sub = parser.add_subparsers(dest="command", parser_class=_Parser)
    for name, help_text in [("run", "run the configured optimizer for every seed"),
                            ("grid", "step-size grid search with edge extension"),
                            ("certify", "run under a theorem budget and check the guarantee"),
                            ("xi-sweep", "one run per xi value"),
                            ("spectrum", "run while tracking the smallest Hessian eigenvalue"),
                            ("compare", "overlay several optimizers in one 3-panel figure")]:
        p = sub.add_parser(name, help=help_text)
        p.add_argument("--config", required=True, type=Path)
        p.add_argument("--seed", type=int, default=None, help="override the master seed")
        p.add_argument("--out", type=Path, default=None, help="override the output directory")
        p.add_argument("-v", "--verbose", action="store_true")
        if name == "certify":
            p.add_argument("--strict", action="store_true", help="exit 3 when the certificate misses")
        if name == "spectrum":
            p.add_argument("--stride", type=int, default=None)
    return parser


def _cmd_run(cfg: ExperimentConfig, out: Path, args) -> int:
    results = run_seeds(cfg, cfg.optimizer, out)
    for s, r in zip(cfg.seeds, results):
        last = r.trace[-1]
        print(f"seed {s}: {r.status} t={last.t} f={last.f:.6g} |grad|={last.grad_norm:.3g}")
    return EXIT_RUN if any(r.status == "diverged" for r in results) else EXIT_OK


def _cmd_grid(cfg: ExperimentConfig, out: Path, args) -> int:
    if cfg.grid is None:
        raise ConfigError("missing", "grid")
    res = run_grid(cfg, GridSpec.from_dict(cfg.grid), out)
    print(f"best {res.best} loss={res.best_loss:.6g} interior={res.interior} extensions={res.extensions}")
    return EXIT_OK


def _cmd_certify(cfg: ExperimentConfig, out: Path, args) -> int:
    budget = make_budget(cfg)
    report = certify_budget(budget, cfg)
    write_json(report.to_dict(), out / "certificate.json")
    curve = [(t + 1, v) for t, v in enumerate(report.min_grad_curve) if v > 0 and math.isfinite(v)]
    if curve:
        single_curve_plot({"min-so-far gradient norm": curve}, out / "certificate.svg", "min gradient norm")
    state = "CERTIFIED" if report.certified else ("ADVISORY HIT" if report.hit else "MISS")
    print(f"{budget.theorem_id.value}: {state} eps={budget.epsilon:g} T={budget.T} hit_time={report.hit_time}")
    if report.sign_condition_violated:
        print("sign condition violated on visited iterates; certificate void")
    if args.strict and not report.certified:
        return EXIT_MISS
    return EXIT_OK


def _cmd_xi_sweep(cfg: ExperimentConfig, out: Path, args) -> int:
    if cfg.xi_sweep is None:
        raise ConfigError("missing", "xi_sweep")
    rows = xi_sweep(cfg, cfg.xi_sweep["values"], out)
    for row in rows:
        print(f"xi={row['xi']:g}: f={row['final_f']:.6g} |grad|={row['final_grad_norm']:.3g}")
    return EXIT_OK


def _cmd_spectrum(cfg: ExperimentConfig, out: Path, args) -> int:
    stride = args.stride or cfg.lambda_stride or max(1, cfg.max_steps // 10)
    cfg = cfg.replace(lambda_stride=stride)
    results = run_seeds(cfg, cfg.optimizer, out, name="spectrum")
    series = {f"seed {s}": [(r.t, r.lambda_min) for r in res.trace if not math.isnan(r.lambda_min)]
              for s, res in zip(cfg.seeds, results)}
    single_curve_plot(series, out / "lambda_min.svg", "smallest Hessian eigenvalue", logy=False)
    for label, pts in series.items():
        print(label + ": " + ", ".join(f"t={t}:{v:.4g}" for t, v in pts))
    return EXIT_OK


def _cmd_compare(cfg: ExperimentConfig, out: Path, args) -> int:
    if not cfg.compare:
        raise ConfigError("missing", "compare")
    summary = compare(cfg, out)
    for row in summary["rows"]:
        print(f"{row['label']:>16}: train={row['final_f']:.5g} test={row['final_f_test']:.5g} "
              f"|grad|={row['final_grad_norm']:.3g}")
    print("observations:", summary["observations"])
    return EXIT_OK


COMMANDS = {"run": _cmd_run, "grid": _cmd_grid, "certify": _cmd_certify, "xi-sweep": _cmd_xi_sweep,
            "spectrum": _cmd_spectrum, "compare": _cmd_compare}


def main(argv: Optional[List[str]] = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except UsageError as exc:
        print(exc, file=sys.stderr)
        return EXIT_CONFIG
    except SystemExit as exc:  # --help
        return EXIT_OK if exc.code in (0, None) else EXIT_CONFIG
    if args.command is None:
        parser.print_help(sys.stderr)
        return EXIT_CONFIG
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        cfg = load(args.config)
        if args.seed is not None:
            cfg = cfg.replace(seed=args.seed)
        if args.out is not None:
            cfg = cfg.replace(out=str(args.out))
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    out = Path(cfg.out)
    try:
        return COMMANDS[args.command](cfg, out, args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (GridError, OutputError, FloatingPointError, ValueError, KeyError) as exc:
        log.debug("run failure", exc_info=True)
        print(f"run failed: {exc}", file=sys.stderr)
        return EXIT_RUN


if __name__ == "__main__":
    sys.exit(main())
