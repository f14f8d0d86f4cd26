"""Command-line entry point.

Subcommands
-----------
simulate      divergence ensembles, rate fits, and decay envelopes over a sweep
structure     ergodicity / observability / Poincare report for a model
backward-map  dual decay diagnostics and backward-map estimators
verify        built-in deterministic and statistical check suites

Exit codes: 0 success, 1 configuration error, 2 numerical failure,
3 verification failure.
"""

from __future__ import annotations

import argparse
import os
import sys

from .config import (
    PRESET_NAMES,
    load_config,
    model_for_sweep_value,
    preset_config,
)
from .errors import ConfigError, FilterLabError
from .model import load_model
from .pipeline import (
    resolve_out_dir,
    run_backward_map,
    run_simulate,
    run_structure,
    write_report,
)
from .verify import run_verify

__all__ = ["main", "build_parser"]

EXIT_OK = 0
EXIT_CONFIG = 1
EXIT_NUMERICAL = 2
EXIT_VERIFY = 3


class _Parser(argparse.ArgumentParser):
    """Parser whose usage errors surface as configuration errors."""

    def error(self, message):
        raise ConfigError(message)


def _add_experiment_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", metavar="PATH", help="JSON experiment configuration")
    p.add_argument(
        "--preset", choices=PRESET_NAMES, help="built-in experiment configuration"
    )
    p.add_argument("--seed", type=int, default=None, help="override the master seed")
    p.add_argument(
        "--workers", type=int, default=None, help="override the worker count"
    )
    p.add_argument(
        "--out",
        metavar="DIR",
        default=None,
        help="output directory (default: config, then $FILTERLAB_OUT, then cwd)",
    )


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="filterlab", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True, metavar="COMMAND")

    p_sim = sub.add_parser("simulate", help="run the divergence sweep pipeline")
    _add_experiment_flags(p_sim)
    p_sim.add_argument(
        "--plot-data",
        action="store_true",
        help="also write (t, log chi2) fit-window points per sweep value",
    )
    p_sim.set_defaults(func=_cmd_simulate)

    p_struct = sub.add_parser("structure", help="report structural diagnostics")
    p_struct.add_argument("--model", metavar="PATH", help="model JSON file")
    p_struct.add_argument(
        "--preset", choices=PRESET_NAMES, help="use a preset's base model"
    )
    p_struct.add_argument("--out", metavar="DIR", default=None)
    p_struct.set_defaults(func=_cmd_structure)

    p_dual = sub.add_parser(
        "backward-map", help="dual variance-decay diagnostics and estimators"
    )
    _add_experiment_flags(p_dual)
    p_dual.set_defaults(func=_cmd_backward_map)

    p_ver = sub.add_parser("verify", help="run the built-in verification suites")
    p_ver.add_argument("--seed", type=int, default=0, help="master seed")
    p_ver.add_argument(
        "--size",
        type=int,
        default=100,
        help="ensemble size for statistical checks (0 = deterministic only)",
    )
    p_ver.add_argument("--out", metavar="DIR", default=None)
    p_ver.set_defaults(func=_cmd_verify)
    return parser


def _load_experiment(args) -> "ExperimentConfig":
    if bool(args.config) == bool(args.preset):
        raise ConfigError("exactly one of --config or --preset is required")
    cfg = load_config(args.config) if args.config else preset_config(args.preset)
    overrides = {}
    if args.seed is not None:
        overrides["master_seed"] = args.seed
    if args.workers is not None:
        overrides["workers"] = args.workers
    return cfg.with_overrides(**overrides) if overrides else cfg


def _cmd_simulate(args) -> int:
    cfg = _load_experiment(args)
    out = resolve_out_dir(args.out, cfg.out_dir)
    report = run_simulate(cfg, out_dir=out, plot_data=args.plot_data)
    for entry in report["sweep"]:
        fit = entry["rate_fit"]
        if fit is not None:
            rate_txt = f"rate {fit['rate']:.4f} +- {fit['stderr']:.4f}"
        else:
            rate_txt = entry["note"]
        print(
            f"[{entry['tag']}] chi2(0) = {entry['chi2_initial']:.6f}, "
            f"chi2(T) = {entry['chi2_terminal_mean']:.4e}; {rate_txt}"
        )
    failed = sorted(k for k, v in report["checks"].items() if not v)
    for name in failed:
        print(f"consistency check failed: {name}", file=sys.stderr)
    print(f"report: {os.path.join(out, 'report_simulate.json')}")
    return EXIT_NUMERICAL if failed else EXIT_OK


def _cmd_structure(args) -> int:
    if bool(args.model) == bool(args.preset):
        raise ConfigError("exactly one of --model or --preset is required")
    if args.model:
        model = load_model(args.model, allow_noiseless=True)
    else:
        model = model_for_sweep_value(preset_config(args.preset), None)
    out = resolve_out_dir(args.out)
    payload = run_structure(model, out)["structure"]
    print(f"ergodic: {payload['ergodic']}")
    print(f"observable dimension: {payload['observable_dim']} of {payload['d']}")
    mu_txt = ", ".join(f"{v:.6f}" for v in payload["invariant_measure"])
    note = payload["invariant_note"]
    print(f"invariant measure: ({mu_txt}){' [' + note + ']' if note else ''}")
    pi = payload["classical_pi"]
    if "constant" in pi:
        print(f"classical Poincare constant: {pi['constant']:.8f}")
    else:
        print(f"classical Poincare constant skipped: {pi['skipped']}")
    print(f"report: {os.path.join(out, 'report_structure.json')}")
    return EXIT_OK


def _cmd_backward_map(args) -> int:
    cfg = _load_experiment(args)
    out = resolve_out_dir(args.out, cfg.out_dir)
    report = run_backward_map(cfg, out_dir=out)
    for entry in report["diagnostics"]:
        r_txt = "n/a" if entry["r_T"] is None else f"{entry['r_T']:.4f}"
        print(
            f"[T = {entry['T']:g}] var_nu(y0) = {entry['var_nu_y0']:.4e} "
            f"+- {entry['var_nu_y0_se']:.1e}, R_T = {r_txt} "
            f"(a_lower = {entry['a_lower']:.4f})"
        )
    for kind, est in report["estimates"].items():
        print(
            f"{kind}: nu(y0) = {est['nu_mean']:.5f} +- {est['nu_mean_se']:.5f} "
            f"at T = {est['T']:g}"
        )
    print(f"report: {os.path.join(out, 'report_backward_map.json')}")
    return EXIT_OK


def _cmd_verify(args) -> int:
    report = run_verify(master_seed=args.seed, size=args.size)
    out = resolve_out_dir(args.out)
    write_report(report, out, "report_verify.json")
    for check in report["checks"]:
        mark = "ok  " if check["passed"] else "FAIL"
        print(f"[{mark}] {check['name']}: {check['detail']}")
    print(
        f"{report['n_checks'] - report['n_failed']}/{report['n_checks']} checks passed "
        f"in {report['wall_clock_s']:.1f} s"
    )
    print(f"report: {os.path.join(out, 'report_verify.json')}")
    return EXIT_OK if report["passed"] else EXIT_VERIFY


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        return args.func(args)
    except ConfigError as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except FilterLabError as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL


if __name__ == "__main__":
    sys.exit(main())
