"""Command-line interface: simulate, fit, compare, replicate, align-pe.

Simulation parameters come from built-in defaults, overridden by an
optional flat key=value config file, overridden by explicit flags.  The
seed falls back to the PEXSIM_SEED environment variable when neither a
flag nor a config entry supplies one.

Exit codes: 0 success, 2 input/schema error, 3 numerical failure,
4 I/O error.
"""

from __future__ import annotations

import argparse
import dataclasses
import os
import sys
from pathlib import Path

from .core import NumericalError, ValidationError
from .dataio import (
    read_dataset,
    write_aligned_pe_table,
    write_dataset,
    write_fit_table,
)
from .design import aligned_pe_estimate, standard_spec
from .gee import fit_gee
from .lmm import fit_lmm
from .report import (
    render_comparison_text,
    render_fit_text,
    render_replication_text,
    run_comparison,
    run_replication,
    save_coefficient_scatter,
    save_trajectory_figure,
    write_comparison_tables,
    write_replication_raw,
    write_replication_summary,
)
from .simulate import SimulationConfig, simulate_cohorts

EXIT_OK = 0
EXIT_INPUT = 2
EXIT_NUMERICAL = 3
EXIT_IO = 4

_WORKING = {"ind": "independence", "exch": "exchangeable"}

_SIM_FIELDS = {f.name: f.type for f in dataclasses.fields(SimulationConfig)}


def _parse_float_list(text: str) -> tuple[float, ...]:
    text = text.strip()
    if not text:
        return ()
    return tuple(float(tok) for tok in text.split(","))


def read_config_file(path: str | Path) -> dict[str, str]:
    """Flat key=value lines; '#' starts a comment, blank lines ignored."""
    entries: dict[str, str] = {}
    for lineno, raw in enumerate(Path(path).read_text(encoding="utf-8").splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ValidationError(f"{path}:{lineno}: expected key=value, got {raw!r}")
        key, value = line.split("=", 1)
        entries[key.strip()] = value.strip()
    return entries


def _coerce_sim_value(key: str, value: str):
    if key in ("pe_beta5", "cohort_baseline_ages", "educ_range"):
        return _parse_float_list(value)
    if key in ("pe_beta6_dx", "pe_beta7_age"):
        vec = _parse_float_list(value)
        return vec or None
    if key == "beta4":
        return _parse_float_list(value)
    if key in ("n_per_cohort", "n_visits", "seed"):
        return int(value)
    return float(value)


def build_sim_config(args: argparse.Namespace) -> SimulationConfig:
    """Defaults < config file < CLI flags, then validate."""
    values: dict = {}
    if getattr(args, "config", None):
        for key, raw in read_config_file(args.config).items():
            if key not in _SIM_FIELDS:
                raise ValidationError(f"unknown config key {key!r}")
            values[key] = _coerce_sim_value(key, raw)

    flag_map = {
        "n_per_cohort": args.n_per_cohort,
        "n_visits": args.n_visits,
        "cohort_baseline_ages": args.cohort_ages,
        "pe_beta5": args.pe_beta5,
        "pe_beta6_dx": args.pe_by_dx_beta,
        "pe_beta7_age": args.pe_by_age_beta,
        "sigma2": args.sigma2,
        "rho": args.rho,
    }
    for key, val in flag_map.items():
        if val is not None:
            values[key] = val
    if getattr(args, "no_pe", False):
        values["pe_beta5"] = ()
        values["pe_beta6_dx"] = None
        values["pe_beta7_age"] = None

    values["seed"] = resolve_seed(args, values.get("seed"))
    return SimulationConfig(**values)


def resolve_seed(args: argparse.Namespace, config_seed=None) -> int:
    if getattr(args, "seed", None) is not None:
        return args.seed
    if config_seed is not None:
        return int(config_seed)
    env = os.environ.get("PEXSIM_SEED")
    if env is not None:
        try:
            return int(env)
        except ValueError as exc:
            raise ValidationError(f"PEXSIM_SEED must be an integer, got {env!r}") from exc
    return 0


def _add_sim_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", help="flat key=value config file")
    p.add_argument("--n-per-cohort", type=int, dest="n_per_cohort")
    p.add_argument("--n-visits", type=int, dest="n_visits")
    p.add_argument("--cohort-ages", type=_parse_float_list, dest="cohort_ages",
                   metavar="A1,A2,...")
    p.add_argument("--pe-beta5", type=_parse_float_list, dest="pe_beta5",
                   metavar="L2,L3,...", help="practice levels by visit; empty disables")
    p.add_argument("--pe-by-dx-beta", type=_parse_float_list, dest="pe_by_dx_beta",
                   metavar="D2,D3,...")
    p.add_argument("--pe-by-age-beta", type=_parse_float_list, dest="pe_by_age_beta",
                   metavar="G2,G3,...")
    p.add_argument("--no-pe", action="store_true", help="disable injected practice effects")
    p.add_argument("--sigma2", type=float)
    p.add_argument("--rho", type=float)


def _add_model_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--spec", choices=("no-pe", "pe", "pe-by-dx", "pe-by-age"),
                   default="no-pe")
    p.add_argument("--age-coding", choices=("linear", "binned"), default="linear")
    p.add_argument("--engine", choices=("lmm", "gee"), default="gee")
    p.add_argument("--working", choices=("ind", "exch"), default="exch")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="pexsim",
        description="Longitudinal cohort simulation and practice-effect-aware estimation.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("simulate", help="generate a synthetic cohort dataset CSV")
    _add_sim_flags(p)
    p.add_argument("--seed", type=int)
    p.add_argument("--out", required=True, help="output dataset CSV path")
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("fit", help="fit one model to a dataset CSV")
    p.add_argument("--data", required=True)
    p.add_argument("--days-column", help="ingest days-based timing via this column")
    _add_model_flags(p)
    p.add_argument("--out", help="write the fitted table CSV here")
    p.set_defaults(func=cmd_fit)

    p = sub.add_parser("compare", help="four-fit battery with figures and verdict")
    p.add_argument("--data", required=True)
    p.add_argument("--days-column")
    p.add_argument("--age-coding", choices=("linear", "binned"), default="linear")
    p.add_argument("--working", choices=("ind", "exch"), default="exch")
    p.add_argument("--out", required=True, help="output directory")
    p.set_defaults(func=cmd_compare)

    p = sub.add_parser("replicate", help="repeated simulate-and-fit bias/coverage study")
    _add_sim_flags(p)
    _add_model_flags(p)
    p.add_argument("--seed", type=int)
    p.add_argument("--reps", type=int, default=100)
    p.add_argument("--out", required=True, help="output directory")
    p.set_defaults(func=cmd_replicate)

    p = sub.add_parser("align-pe", help="aligned first-reassessment practice estimate")
    p.add_argument("--data", required=True)
    p.add_argument("--days-column")
    p.add_argument("--bin-width", type=float, default=5.0)
    p.add_argument("--out", help="write the per-bin CSV here")
    p.set_defaults(func=cmd_align_pe)

    return parser


def _check_paths_distinct(*paths) -> None:
    seen = set()
    for p in paths:
        if p is None:
            continue
        resolved = str(Path(p))
        if resolved in seen:
            raise ValidationError(f"input and output paths must differ: {p}")
        seen.add(resolved)


def cmd_simulate(args: argparse.Namespace) -> int:
    config = build_sim_config(args)
    dataset = simulate_cohorts(config)
    write_dataset(dataset, args.out)
    print(
        f"wrote {dataset.n_records} rows for {dataset.n_subjects} subjects "
        f"(seed {config.seed}) to {args.out}"
    )
    return EXIT_OK


def cmd_fit(args: argparse.Namespace) -> int:
    _check_paths_distinct(args.data, args.out)
    dataset = read_dataset(args.data, days_column=args.days_column)
    spec = standard_spec(args.spec, args.age_coding)
    if args.engine == "gee":
        fit = fit_gee(dataset, spec, working=_WORKING[args.working])
    else:
        fit = fit_lmm(dataset, spec)
    print(render_fit_text(fit, title=f"{args.engine} fit, spec={args.spec}"))
    if args.out:
        write_fit_table(fit, args.out)
        print(f"table written to {args.out}")
    return EXIT_OK


def cmd_compare(args: argparse.Namespace) -> int:
    _check_paths_distinct(args.data, args.out)
    dataset = read_dataset(args.data, days_column=args.days_column)
    if dataset.max_visits < 3:
        raise ValidationError("compare needs a dataset with at least 3 visits")
    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)
    report = run_comparison(dataset, age_coding=args.age_coding,
                            working=_WORKING[args.working])
    print(render_comparison_text(report))
    write_comparison_tables(report, out_dir)
    try:
        save_coefficient_scatter(report, out_dir / "lme_vs_gee.svg")
        save_trajectory_figure(dataset, report, out_dir / "trajectories.svg")
    except ValueError as exc:
        print(f"figure skipped: {exc}")
    print(f"report written to {out_dir}")
    return EXIT_OK


def cmd_replicate(args: argparse.Namespace) -> int:
    if args.reps < 2:
        raise ValidationError("--reps must be >= 2")
    config = build_sim_config(args)
    spec = standard_spec(args.spec, args.age_coding)
    result = run_replication(
        config, spec, engine=args.engine, working=_WORKING[args.working],
        n_reps=args.reps,
    )
    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)
    write_replication_raw(result, out_dir / "replicate_raw.csv")
    write_replication_summary(result, out_dir / "replicate_summary.csv")
    print(render_replication_text(result))
    print(f"replication tables written to {out_dir}")
    return EXIT_OK


def cmd_align_pe(args: argparse.Namespace) -> int:
    _check_paths_distinct(args.data, args.out)
    dataset = read_dataset(args.data, days_column=args.days_column)
    bins = aligned_pe_estimate(dataset, age_bin_width=args.bin_width)
    print(f"{'age bin':>14}  {'estimate':>10}  {'n_reassess':>10}  {'n_baseline':>10}")
    for b in bins:
        est = "--" if b.pe_estimate is None else f"{b.pe_estimate:.5f}"
        print(f"[{b.age_lo:5.1f},{b.age_hi:5.1f})  {est:>10}  {b.n_reassess:>10}  {b.n_baseline:>10}")
    if args.out:
        write_aligned_pe_table(bins, args.out)
        print(f"table written to {args.out}")
    return EXIT_OK


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except ValidationError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT
    except NumericalError as exc:
        print(f"numerical error: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL
    except OSError as exc:
        print(f"i/o error: {exc}", file=sys.stderr)
        return EXIT_IO
    except ValueError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT


if __name__ == "__main__":
    sys.exit(main())
