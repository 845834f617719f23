"""Command-line entry point ``shiftgof``.

Exit codes: 0 success, 2 invalid input or configuration, 3 numerical failure.
"""
from __future__ import annotations

import argparse
import dataclasses
import json
import sys
from pathlib import Path as FsPath

from .errors import ConditionError, ConfigError, DomainError, NumericalError, TableError
from .estimators import mde_shift, mle_shift
from .experiments import ExperimentConfig, reproduce_ou_figures, run_power_study, run_size_study
from .gof import cvm_edf, cvm_kernel, cvm_lte, decide, ks_statistics
from .law import build_law
from .limits import (
    GridSpec,
    LimitSampleBatch,
    estimate_quantiles,
    merge_batches,
    simulate_limit,
)
from .limits import load_table
from .models import get_model
from .simulate import InitRule, STATIONARY, Path, simulate_path

EXIT_OK, EXIT_CONFIG, EXIT_NUMERIC = 0, 2, 3


def _params(items: list[str] | None) -> dict:
    out = {}
    for item in items or []:
        key, sep, value = item.partition("=")
        if not sep:
            raise ConfigError(f"--param expects key=value, got {item!r}")
        out[key] = float(value)
    return out


def _model(args):
    try:
        return get_model(args.model, **_params(args.param))
    except TypeError as exc:
        raise ConfigError(str(exc)) from exc


def _floats(text: str) -> list[float]:
    return [float(t) for t in text.split(",") if t.strip()]


def _emit(obj) -> None:
    print(json.dumps(obj, indent=2))


def _out(args, name: str) -> FsPath:
    d = FsPath(args.out_dir)
    d.mkdir(parents=True, exist_ok=True)
    return d / name


def _target(name: str) -> FsPath:
    """An explicitly named output file; its directory is created if needed."""
    dest = FsPath(name)
    dest.parent.mkdir(parents=True, exist_ok=True)
    return dest


def cmd_simulate(args) -> int:
    model = _model(args)
    init = STATIONARY if args.x0 is None else InitRule.fixed(args.x0)
    path = simulate_path(model, args.theta0, args.T, args.dt, args.seed, init)
    dest = _target(args.dump_path) if args.dump_path else _out(args, "path.csv")
    path.to_csv(dest)
    _emit({"path": str(dest), "n_steps": path.n_steps, "T": path.T, "seed": args.seed})
    return EXIT_OK


def cmd_estimate(args) -> int:
    model = _model(args)
    path = Path.from_csv(args.path)
    if args.method == "mle":
        est = mle_shift(path, model)
    else:
        est = mde_shift(path, model, build_law(model))
    if args.curve:
        _target(args.curve).write_text(
            "theta,objective\n" + "".join(f"{t!r},{v!r}\n" for t, v in est.objective_curve.tolist()))
    _emit({"method": est.method, "theta_hat": est.theta_hat, "boundary_hit": est.boundary_hit})
    return EXIT_OK


_CVM = {"delta_lte": cvm_lte, "delta_edf": cvm_edf, "mu_kernel": cvm_kernel}


def cmd_test(args) -> int:
    model = _model(args)
    law = build_law(model)
    path = Path.from_csv(args.path)
    if args.kind in _CVM:
        report = _CVM[args.kind](path, model, law)
        if args.table:
            report = decide(report, load_table(args.table), args.epsilon)
        out = report.to_dict()
        out["tail_bound"] = report.tail_bound
    else:
        if args.table:
            raise ConfigError("Kolmogorov-Smirnov statistics have no tabulated limit law")
        omega, Omega = ks_statistics(path, model, law)
        out = (omega if args.kind == "ks_lte" else Omega).to_dict()
    _emit(out)
    return EXIT_OK


def cmd_law_export(args) -> int:
    law = build_law(_model(args))
    dest = _target(args.out) if args.out else _out(args, f"law_{law.model_ref}.csv")
    law.export_csv(dest)
    _emit({"file": str(dest), "G": law.G, "fisher_information": law.I})
    return EXIT_OK


def cmd_limits_simulate(args) -> int:
    model = _model(args)
    law = build_law(model)
    y_grid = GridSpec.parse(args.y_grid) if args.y_grid else None
    x_grid = GridSpec.parse(args.x_grid) if args.x_grid else None
    batch = simulate_limit(args.kind, law, args.n, args.seed, y_grid, x_grid, start=args.start, threads=args.threads)
    dest = _target(args.out) if args.out else _out(args, f"batch_{model.ref}_{args.kind}.txt")
    batch.save(dest)
    _emit({"file": str(dest), "kind": batch.kind, "n_mc": batch.n_mc, "mean": float(batch.samples.mean())})
    return EXIT_OK


def cmd_limits_quantiles(args) -> int:
    batch = merge_batches([LimitSampleBatch.load(p) for p in args.inputs])
    table = estimate_quantiles(batch, _floats(args.eps), min_tail=args.min_tail)
    if args.out:
        table.save(_target(args.out))
    print("epsilon,threshold")
    for e, t in zip(table.epsilons, table.thresholds):
        print(f"{float(e)!r},{float(t)!r}")
    return EXIT_OK


def _study_config(args) -> ExperimentConfig:
    config = ExperimentConfig.from_toml(args.config)
    overrides = {}
    if args.threads != 1:
        overrides["threads"] = args.threads
    if args.seed_given:
        overrides["seed"] = args.seed
    if args.out_dir_given:
        overrides["output_dir"] = args.out_dir
    return dataclasses.replace(config, **overrides)


def cmd_study(args) -> int:
    config = _study_config(args)
    run = run_size_study if args.study == "size" else run_power_study
    report = run(config)
    _emit({
        "study": report.study,
        "output_dir": config.output_dir,
        "rates": [
            {"scenario": r.scenario.name, "statistic": s, "epsilon": e, "rate": v[2], "ci": [v[3], v[4]]}
            for r in report.results for (s, e), v in sorted(r.rates.items())
        ],
    })
    return EXIT_OK


def cmd_figures_ou(args) -> int:
    batches = {}
    for kind, given in (("delta", args.delta), ("Delta", args.Delta)):
        if given:
            batches[kind] = LimitSampleBatch.load(given)
        elif args.simulate:
            batches[kind] = simulate_limit(kind, build_law(get_model("ou")), args.simulate, args.seed,
                                           threads=args.threads)
        else:
            raise ConfigError(f"missing {kind!r} batch: pass --{kind} FILE or --simulate N")
        if batches[kind].model_ref != "ou":
            raise ConfigError(f"{kind!r} batch is for model {batches[kind].model_ref!r}, not 'ou'")
    files = reproduce_ou_figures(batches["delta"], batches["Delta"], args.out_dir)
    _emit({k: str(v) for k, v in files.items()})
    return EXIT_OK


def _model_args(p: argparse.ArgumentParser) -> None:
    p.add_argument("--model", default="ou", help="registered drift family (ou, cubic, tanh-damped)")
    p.add_argument("--param", action="append", metavar="KEY=VALUE", help="family parameter; repeatable")


class _Tracked(argparse.Action):
    """Store the value and remember that the flag was given explicitly."""

    def __call__(self, parser, namespace, values, option_string=None):
        setattr(namespace, self.dest, values)
        setattr(namespace, f"{self.dest}_given", True)


def build_parser() -> argparse.ArgumentParser:
    def global_flags(defaults: bool) -> argparse.ArgumentParser:
        # subcommands accept the global flags too, but must not reset values given before them
        g = argparse.ArgumentParser(add_help=False)
        d = (lambda v: v) if defaults else (lambda v: argparse.SUPPRESS)
        g.add_argument("--seed", type=int, default=d(1), action=_Tracked)
        g.add_argument("--threads", type=int, default=d(1))
        g.add_argument("--out-dir", default=d("."), action=_Tracked)
        return g

    common = global_flags(False)
    parser = argparse.ArgumentParser(prog="shiftgof", description=__doc__, parents=[global_flags(True)])
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("simulate", parents=[common], help="simulate one trajectory under the null")
    _model_args(p)
    p.add_argument("--theta0", type=float, default=0.0)
    p.add_argument("--T", type=float, default=200.0)
    p.add_argument("--dt", type=float, default=0.01)
    p.add_argument("--x0", type=float, help="fixed initial value (default: stationary draw)")
    p.add_argument("--dump-path", help="output CSV (default: OUT_DIR/path.csv)")
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("estimate", parents=[common], help="estimate the shift from a path file")
    _model_args(p)
    p.add_argument("--method", choices=("mle", "mde"), default="mle")
    p.add_argument("--path", required=True)
    p.add_argument("--curve", help="write the objective curve (theta,objective) to this CSV")
    p.set_defaults(func=cmd_estimate)

    p = sub.add_parser("test", parents=[common], help="compute a statistic and optionally decide")
    _model_args(p)
    p.add_argument("--kind", choices=("delta_lte", "delta_edf", "mu_kernel", "ks_lte", "ks_edf"), default="delta_lte")
    p.add_argument("--path", required=True)
    p.add_argument("--table")
    p.add_argument("--epsilon", type=float, default=0.05)
    p.set_defaults(func=cmd_test)

    p = sub.add_parser("law", parents=[common], help="invariant law utilities")
    law_sub = p.add_subparsers(dest="law_command", required=True)
    q = law_sub.add_parser("export", parents=[common], help="write x,f,F on the law grid")
    _model_args(q)
    q.add_argument("--out")
    q.set_defaults(func=cmd_law_export)

    p = sub.add_parser("limits", parents=[common], help="Monte Carlo of the limit laws")
    lim_sub = p.add_subparsers(dest="limits_command", required=True)
    q = lim_sub.add_parser("simulate", parents=[common], help="draw a batch of limit samples")
    _model_args(q)
    q.add_argument("--kind", choices=("delta", "Delta", "mu"), required=True)
    q.add_argument("--n", type=int, default=100_000)
    q.add_argument("--start", type=int, default=0, help="first replicate index (for shards)")
    q.add_argument("--y-grid", help="lo:hi:h for the Wiener grid")
    q.add_argument("--x-grid", help="lo:hi:h for the outer integral")
    q.add_argument("--out")
    q.set_defaults(func=cmd_limits_simulate)
    q = lim_sub.add_parser("quantiles", parents=[common], help="threshold table from one or more shards")
    q.add_argument("--in", dest="inputs", nargs="+", required=True)
    q.add_argument("--eps", default="0.01,0.05,0.1")
    q.add_argument("--min-tail", type=int, default=100)
    q.add_argument("--out")
    q.set_defaults(func=cmd_limits_quantiles)

    p = sub.add_parser("study", parents=[common], help="size or power study from a TOML config")
    p.add_argument("study", choices=("size", "power"))
    p.add_argument("--config", required=True)
    p.set_defaults(func=cmd_study)

    p = sub.add_parser("figures", parents=[common], help="figure data")
    fig_sub = p.add_subparsers(dest="figure", required=True)
    q = fig_sub.add_parser("ou", parents=[common], help="density and threshold curves for the OU null")
    q.add_argument("--delta", help="saved 'delta' limit batch")
    q.add_argument("--Delta", help="saved 'Delta' limit batch")
    q.add_argument("--simulate", type=int, metavar="N", help="simulate missing batches with N samples")
    q.set_defaults(func=cmd_figures_ou)
    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    for name in ("seed", "out_dir"):
        setattr(args, f"{name}_given", getattr(args, f"{name}_given", False))
    try:
        return args.func(args)
    except (ConfigError, DomainError, TableError, ConditionError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except NumericalError as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC


if __name__ == "__main__":
    sys.exit(main())
