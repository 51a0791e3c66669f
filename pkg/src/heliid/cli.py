"""Command-line interface: synth, identify, compare, export.

Exit codes: 0 success, 1 usage error, 2 data error.  All randomness is pinned
by --seed, so reruns with the same arguments reproduce the same artifacts.
"""

from __future__ import annotations

import argparse
import json
import sys
from dataclasses import replace
from pathlib import Path

from . import harness, model, optimizers, signals
from .fitness import FitnessConfig
from .signals import LogParseError


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(message)


def _build_parser() -> _Parser:
    parser = _Parser(prog="heliid", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    synth = sub.add_parser("synth", help="generate a synthetic 3-2-1-1 flight log")
    synth.add_argument("--truth", default="builtin:hover",
                       help="'builtin:hover' or a JSON file of parameter values")
    synth.add_argument("--noise", type=float, default=0.01,
                       help="measurement noise as a fraction of channel RMS")
    synth.add_argument("--duration", type=float, default=30.0, help="seconds")
    synth.add_argument("--rate", type=float, default=100.0, help="sample rate, Hz")
    synth.add_argument("--amplitude", type=float, default=0.1, help="stick amplitude")
    synth.add_argument("--seed", type=int, default=0)
    synth.add_argument("--flap-as-printed", action="store_true",
                       help="use the published asymmetric flap signs (unstable)")
    synth.add_argument("--out", required=True, help="output CSV path")

    ident = sub.add_parser("identify", help="estimate the 40 parameters from a log")
    ident.add_argument("--data", required=True, help="input CSV log")
    ident.add_argument("--method", choices=harness.METHODS, default="iwo")
    ident.add_argument("--trials", type=int, default=10)
    ident.add_argument("--iters", type=int, default=200,
                       help="iterations/generations for iwo and ga")
    ident.add_argument("--seed", type=int, default=0)
    ident.add_argument("--split", type=float, default=0.5,
                       help="training fraction of the record")
    ident.add_argument("--free-zeros", action="store_true",
                       help="search the hover-zero parameters instead of pinning them")
    ident.add_argument("--flap-as-printed", action="store_true")
    ident.add_argument("--out", required=True, help="output directory")

    comp = sub.add_parser("compare", help="tabulate validation rho per method")
    comp.add_argument("--data", required=True)
    comp.add_argument("--methods", default="iwo,ga,pem",
                      help="comma-separated subset of iwo,ga,pem")
    comp.add_argument("--trials", type=int, default=1)
    comp.add_argument("--iters", type=int, default=200)
    comp.add_argument("--seed", type=int, default=0)
    comp.add_argument("--split", type=float, default=0.5)
    comp.add_argument("--flap-as-printed", action="store_true")
    comp.add_argument("--out", required=True, help="output directory")

    export = sub.add_parser("export", help="write t,measured,simulated CSVs")
    export.add_argument("--model", required=True,
                        help="report.json or a flat {name: value} JSON file")
    export.add_argument("--data", required=True)
    export.add_argument("--flap-as-printed", action="store_true")
    export.add_argument("--out", required=True, help="output directory")

    return parser


def _load_truth(spec: str) -> model.ParameterSet:
    if spec == "builtin:hover":
        return model.TRUTH_HOVER
    return _load_params(spec)


def _load_params(path: str) -> model.ParameterSet:
    try:
        payload = json.loads(Path(path).read_text(encoding="utf-8"))
    except (OSError, json.JSONDecodeError) as exc:
        raise LogParseError(f"cannot read parameter file {path}: {exc}") from exc
    if "best_parameters" in payload:
        payload = payload["best_parameters"]
    unknown = set(payload) - set(model.PARAM_NAMES)
    if unknown:
        raise LogParseError(f"unknown parameters in {path}: {sorted(unknown)}")
    try:
        return model.ParameterSet(**{k: float(v) for k, v in payload.items()})
    except (TypeError, ValueError) as exc:
        raise LogParseError(f"bad parameter values in {path}: {exc}") from exc


def _optimizer_for(method: str, iters: int):
    cfg = harness.default_optimizer_config(method)
    if method == "iwo":
        return replace(cfg, iter_max=iters)
    if method == "ga":
        return replace(cfg, generations=iters)
    return cfg


def _cmd_synth(args) -> int:
    truth = _load_truth(args.truth)
    log = harness.synthesize_flight(
        params=truth,
        duration_s=args.duration,
        sample_rate_hz=args.rate,
        amplitude=args.amplitude,
        noise_fraction=args.noise,
        rng_seed=args.seed,
        flap_sign_symmetric=not args.flap_as_printed,
    )
    signals.save_log(log, args.out)
    print(f"wrote {log.n_samples} samples to {args.out}")
    return 0


def _cmd_identify(args) -> int:
    data = signals.load_log(args.data)
    space = optimizers.SearchSpace.around_truth(free_zeros=args.free_zeros)
    cfg = harness.ExperimentConfig(
        data=data,
        method=args.method,
        trials=args.trials,
        split_fraction=args.split,
        seed=args.seed,
        optimizer_config=_optimizer_for(args.method, args.iters),
        space=space,
        fitness_config=FitnessConfig(flap_sign_symmetric=not args.flap_as_printed),
    )
    report = harness.run_experiment(cfg)
    paths = harness.write_report(report, args.out)
    print(f"best training cost {report.best_cost:.6g}")
    for state, rho in report.validation_rho.items():
        shown = "undef" if rho is None else f"{rho:.4f}"
        print(f"validation rho[{state}] = {shown}")
    print(f"report: {paths['report']}")
    return 0


def _cmd_compare(args) -> int:
    data = signals.load_log(args.data)
    methods = tuple(m.strip() for m in args.methods.split(",") if m.strip())
    for m in methods:
        if m not in harness.METHODS:
            raise UsageError(f"unknown method {m!r}")
    cfg = harness.ExperimentConfig(
        data=data,
        trials=args.trials,
        split_fraction=args.split,
        seed=args.seed,
        fitness_config=FitnessConfig(flap_sign_symmetric=not args.flap_as_printed),
    )
    # each method gets size-matched iteration budgets from --iters
    table_cells = {}
    reports = {}
    for m in methods:
        mcfg = replace(cfg, method=m, optimizer_config=_optimizer_for(m, args.iters))
        report = harness.run_experiment(mcfg)
        reports[m] = report
        table_cells[m] = {
            s: report.validation_rho.get(s) for s in harness.COMPARISON_STATES
        }
    table = harness.ComparisonTable(
        states=harness.COMPARISON_STATES, methods=methods, cells=table_cells,
        reports=reports,
    )
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    (out / "comparison.csv").write_text(table.to_csv(), encoding="utf-8")
    (out / "comparison.txt").write_text(table.to_text(), encoding="utf-8")
    print(table.to_text(), end="")
    return 0


def _cmd_export(args) -> int:
    params = _load_params(args.model)
    data = signals.load_log(args.data)
    written = harness.export_timeseries(
        params, data, args.out,
        fitness_config=FitnessConfig(flap_sign_symmetric=not args.flap_as_printed),
    )
    print(f"wrote {len(written)} state CSVs to {args.out}")
    return 0


_COMMANDS = {
    "synth": _cmd_synth,
    "identify": _cmd_identify,
    "compare": _cmd_compare,
    "export": _cmd_export,
}


def main(argv=None) -> int:
    parser = _build_parser()
    try:
        args = parser.parse_args(argv)
    except UsageError as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        return 1
    try:
        return _COMMANDS[args.command](args)
    except UsageError as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        return 1
    except (LogParseError, ValueError, OSError, RuntimeError) as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
