"""Command-line interface.

Subcommands: ``fit`` (full pipeline), ``replicates`` (generate/export
replicate weights), ``svymean`` (design-based weighted means with
linearization and replication SEs), ``simulate`` (coverage studies), and
``export`` (long-format pairs data from a saved result).

Exit codes: 0 success, 2 configuration error, 3 data error, 4 numerical
failure.
"""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys

import numpy as np
import pandas as pd

from . import pipeline
from .design import SurveyDesign, build_replicates
from .errors import ConfigurationError, SvyBayesError
from .pipeline import (
    build_fit_config,
    config_keys,
    export_pairs_data,
    read_config_file,
    svymean_table,
)
from .sampler import SamplerControl
from .simulate import SimScenario, coverage_study

log = logging.getLogger("svybayes")

_SCENARIO_KEYS = {
    "family": str,
    "theta0": lambda v: tuple(float(x) for x in v.split(",")),
    "population_size": int,
    "n_covariates": int,
    "scheme": str,
    "sample_size": int,
    "size_formula": str,
    "n_strata": int,
    "strata_by": str,
    "n_clusters": int,
    "select_clusters": int,
    "replications": int,
    "nominal": float,
    "seed": int,
    "rep_method": str,
    "n_replicates": int,
    "h_estimate": str,
    "alpha_prior": float,
    "sampler.chains": int,
    "sampler.iter": int,
    "sampler.warmup": int,
    "sampler.thin": int,
    "sampler.algorithm": str,
    "sampler.max_leapfrog": int,
}


def _apply_threads_env():
    """SVYBAYES_THREADS caps BLAS thread pools for reproducible timing."""
    threads = os.environ.get("SVYBAYES_THREADS")
    if threads:
        for var in ("OMP_NUM_THREADS", "OPENBLAS_NUM_THREADS",
                    "MKL_NUM_THREADS"):
            os.environ.setdefault(var, threads)


def _add_config_overrides(parser: argparse.ArgumentParser):
    parser.add_argument("--config", help="flat key = value config file")
    group = parser.add_argument_group("config overrides")
    for key in config_keys():
        group.add_argument(f"--{key}", dest=key, metavar="VALUE")


def _collect_mapping(args: argparse.Namespace) -> dict:
    mapping = {}
    if args.config:
        mapping.update(read_config_file(args.config))
    for key in config_keys():
        value = getattr(args, key, None)
        if value is not None:
            mapping[key] = value
    return mapping


def _cmd_fit(args) -> int:
    mapping = _collect_mapping(args)
    config = build_fit_config(mapping)
    if config.sampler.seed is None:
        raise ConfigurationError("--seed is required (or set seed in the config)")
    result = pipeline.fit(config)
    pd.set_option("display.width", 120)
    print(result.summary.to_string(index=False))
    deff = dict(zip(result.adjustment.names, result.adjustment.deff))
    print("\ndesign effects:")
    for name, value in deff.items():
        print(f"  {name}: {value:.4f}")
    if config.output_dir:
        print(f"\nresults written to {config.output_dir}")
    return 0


def _cmd_replicates(args) -> int:
    frame = pd.read_csv(args.data)
    design = SurveyDesign.from_frame(
        frame, weight=args.weight, psu=args.psu, stratum=args.stratum,
        fpc=args.fpc, nest=args.nest,
    )
    if args.normalize:
        design = design.normalized()
    if args.method == "mrbbootstrap" and args.seed is None:
        raise ConfigurationError("--seed is required for mrbbootstrap")
    rep = build_replicates(design, method=args.method,
                           n_replicates=args.replicates, seed=args.seed)
    wpath, mpath = rep.to_files(args.out)
    print(f"wrote {wpath} ({rep.n_replicates} replicates) and {mpath}")
    return 0


def _cmd_svymean(args) -> int:
    frame = pd.read_csv(args.data)
    design = SurveyDesign.from_frame(
        frame, weight=args.weight, psu=args.psu, stratum=args.stratum,
        fpc=args.fpc, nest=args.nest,
    )
    if args.normalize:
        design = design.normalized()
    rep = None
    if args.replication:
        if args.method == "mrbbootstrap" and args.seed is None:
            raise ConfigurationError("--seed is required for mrbbootstrap")
        rep = build_replicates(design, method=args.method,
                               n_replicates=args.replicates, seed=args.seed)
    table = svymean_table(design, [v.strip() for v in args.vars.split(",")],
                          rep_design=rep, lonely=args.lonely)
    print(table.to_string(index=False))
    if args.out:
        table.to_csv(args.out, index=False)
    return 0


def _cmd_simulate(args) -> int:
    mapping = read_config_file(args.scenario) if args.scenario else {}
    for item in args.set or []:
        key, _, value = item.partition("=")
        mapping[key.strip()] = value.strip()
    kwargs = {}
    sampler_kwargs = {}
    for key, raw in mapping.items():
        if key not in _SCENARIO_KEYS:
            raise ConfigurationError(f"unknown scenario key {key!r}")
        value = _SCENARIO_KEYS[key](raw)
        if key.startswith("sampler."):
            sampler_kwargs[key.split(".", 1)[1]] = value
        else:
            kwargs[key] = value
    scenario = SimScenario(**kwargs)
    if sampler_kwargs:
        base = {**scenario.sampler.__dict__, **sampler_kwargs}
        scenario.sampler = SamplerControl(**base)
    result = coverage_study(scenario)
    print(result.coverage.to_string(index=False))
    print(f"\nmean design effect: {result.mean_deff:.3f}  "
          f"failures: {result.failures}/{result.replications}")
    if args.out:
        os.makedirs(args.out, exist_ok=True)
        result.records.to_csv(os.path.join(args.out, "coverage.csv"), index=False)
        payload = {
            "coverage": result.coverage.to_dict(orient="records"),
            "mean_deff": result.mean_deff,
            "failures": result.failures,
            "replications": result.replications,
        }
        with open(os.path.join(args.out, "summary.json"), "w") as fh:
            json.dump(payload, fh, indent=2)
        print(f"results written to {args.out}")
    return 0


def _cmd_export(args) -> int:
    frames = {}
    for series in ("unadjusted", "adjusted"):
        path = os.path.join(args.result, f"draws_{series}.csv")
        if not os.path.exists(path):
            raise ConfigurationError(f"saved result is missing {path}")
        frames[series] = pd.read_csv(path).drop(columns=["chain"])
    available = list(frames["unadjusted"].columns)
    names = [v.strip() for v in args.vars.split(",")] if args.vars else available
    missing = [n for n in names if n not in available]
    if missing:
        raise ConfigurationError(
            f"unknown parameter(s) {missing}; available: {available}"
        )
    blocks = []
    for series, frame in frames.items():
        for name in names:
            blocks.append(pd.DataFrame({
                "draw": np.arange(len(frame)),
                "parameter": name,
                "value": frame[name].to_numpy(),
                "series": series,
            }))
    table = pd.concat(blocks, ignore_index=True)
    table.to_csv(args.out, index=False)
    print(f"wrote {len(table)} rows to {args.out}")
    return 0


def _add_design_flags(parser):
    parser.add_argument("--data", required=True, help="input CSV with a header row")
    parser.add_argument("--weight", required=True)
    parser.add_argument("--psu")
    parser.add_argument("--stratum")
    parser.add_argument("--fpc")
    parser.add_argument("--nest", action="store_true")
    parser.add_argument("--normalize", action=argparse.BooleanOptionalAction,
                        default=True, help="rescale weights to mean 1")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="svybayes",
        description="Survey-weighted Bayesian models with design-effect "
                    "adjusted posteriors",
    )
    parser.add_argument("-v", "--verbose", action="store_true",
                        help="log pipeline stages and timings")
    sub = parser.add_subparsers(dest="command", required=True)

    p_fit = sub.add_parser("fit", help="run the full fit pipeline")
    _add_config_overrides(p_fit)
    p_fit.set_defaults(func=_cmd_fit)

    p_rep = sub.add_parser("replicates", help="generate and export replicate weights")
    _add_design_flags(p_rep)
    p_rep.add_argument("--method", default="mrbbootstrap",
                       choices=["mrbbootstrap", "jk1", "jkn"])
    p_rep.add_argument("--replicates", type=int, default=100)
    p_rep.add_argument("--seed", type=int)
    p_rep.add_argument("--out", required=True, help="output file prefix")
    p_rep.set_defaults(func=_cmd_replicates)

    p_mean = sub.add_parser("svymean", help="weighted means with design-based SEs")
    _add_design_flags(p_mean)
    p_mean.add_argument("--vars", required=True, help="comma-separated columns")
    p_mean.add_argument("--replication", action="store_true",
                        help="also compute replication SEs")
    p_mean.add_argument("--method", default="jkn",
                        choices=["mrbbootstrap", "jk1", "jkn"])
    p_mean.add_argument("--replicates", type=int, default=100)
    p_mean.add_argument("--seed", type=int)
    p_mean.add_argument("--lonely", default="error",
                        choices=["error", "center_grand"])
    p_mean.add_argument("--out", help="also write the table to this CSV")
    p_mean.set_defaults(func=_cmd_svymean)

    p_sim = sub.add_parser("simulate", help="run a coverage study")
    p_sim.add_argument("--scenario", help="scenario config file")
    p_sim.add_argument("--set", action="append", metavar="KEY=VALUE",
                       help="override a scenario key")
    p_sim.add_argument("--out", help="output directory for coverage.csv + summary.json")
    p_sim.set_defaults(func=_cmd_simulate)

    p_exp = sub.add_parser("export", help="pairs data from a saved result")
    p_exp.add_argument("--result", required=True, help="saved result directory")
    p_exp.add_argument("--vars", help="comma-separated parameter subset")
    p_exp.add_argument("--out", required=True, help="output CSV path")
    p_exp.set_defaults(func=_cmd_export)
    return parser


def main(argv=None) -> int:
    _apply_threads_env()
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(
        level=logging.INFO if args.verbose else logging.WARNING,
        format="%(levelname)s %(name)s: %(message)s",
    )
    try:
        return args.func(args)
    except SvyBayesError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return exc.exit_code
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 3


if __name__ == "__main__":
    sys.exit(main())
