"""End-to-end fit pipeline, result summaries, and file I/O.

``fit`` executes: load data -> normalize weights -> build design ->
replicate weights -> sample the pseudo-posterior -> estimate H and J ->
square-root matrices -> adjust draws -> summarize, logging each stage
with timings. Configuration lives in a flat ``key = value`` text file
(dotted keys for grouping); every key can be overridden from the CLI.
"""

from __future__ import annotations

import json
import logging
import os
import time
from dataclasses import dataclass, field

import numpy as np
import pandas as pd

from .adjust import AdjustmentResult, adjust_draws, estimate_H, estimate_J
from .design import (
    ReplicateDesign,
    SurveyDesign,
    build_replicates,
    expand_variable,
    ht_mean,
    replicate_covariance,
    tl_variance_mean,
)
from .errors import (
    ConfigurationError,
    DataError,
    InsufficientDrawsError,
    NotFoundError,
)
from .models import BernoulliLogit, MultinomialGamma, NormalLinear
from .sampler import DrawsMatrix, SamplerControl, mcmc_diagnostics, sample_pseudo_posterior

log = logging.getLogger("svybayes")

__all__ = [
    "DesignSpec",
    "ModelSpec",
    "ReplicationControl",
    "FitConfig",
    "FitResult",
    "fit",
    "summarize",
    "export_pairs_data",
    "save_result",
    "read_config_file",
    "build_family",
]

DEFAULT_PROBS = (0.025, 0.25, 0.5, 0.75, 0.975)


@dataclass
class DesignSpec:
    """Column names describing the survey design inside the data table."""

    weight: str = ""
    psu: str | None = None
    stratum: str | None = None
    fpc: str | None = None
    nest: bool = False


@dataclass
class ModelSpec:
    """Model family plus the columns it consumes.

    ``predictors`` are numeric columns; an intercept column of ones is
    prepended unless ``intercept`` is false. For ``multinomial_gamma`` the
    response is a categorical column expanded to one-hot indicators.
    """

    family: str = ""
    response: str = ""
    predictors: tuple[str, ...] = ()
    intercept: bool = True
    alpha: tuple[float, ...] | float = 1.0
    sigma_df: float = 3.0
    sigma_scale: float | None = None


@dataclass
class ReplicationControl:
    method: str = "mrbbootstrap"
    replicates: int = 100
    seed: int | None = None
    centering: str = "replicate_mean"
    files_prefix: str | None = None


@dataclass
class FitConfig:
    """Everything needed to run the fit pipeline."""

    data_path: str = ""
    design: DesignSpec = field(default_factory=DesignSpec)
    model: ModelSpec = field(default_factory=ModelSpec)
    sampler: SamplerControl = field(default_factory=SamplerControl)
    replication: ReplicationControl = field(default_factory=ReplicationControl)
    h_estimate: str = "mcmc"
    h_max_draws: int = 200
    j_centering: str = "full_sample"
    matrix_sqrt: str = "eigen"
    normalize: bool = True
    output_dir: str | None = None
    report_params: tuple[str, ...] | None = None
    probs: tuple[float, ...] = DEFAULT_PROBS
    seed: int | None = None


def _parse_bool(value: str) -> bool:
    v = value.strip().lower()
    if v in ("true", "1", "yes", "on"):
        return True
    if v in ("false", "0", "no", "off"):
        return False
    raise ConfigurationError(f"expected a boolean, got {value!r}")


def _parse_list(value: str) -> tuple[str, ...]:
    return tuple(v.strip() for v in value.split(",") if v.strip())


def read_config_file(path: str) -> dict:
    """Parse a flat ``key = value`` config file.

    Blank lines and ``#`` comments are ignored; keys may contain dots for
    grouping (``sampler.iter = 2000``). Values stay strings; coercion
    happens when the config object is built.
    """
    if not os.path.exists(path):
        raise NotFoundError(f"config file {path!r} not found")
    out = {}
    with open(path) as fh:
        for lineno, raw in enumerate(fh, 1):
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise ConfigurationError(f"{path}:{lineno}: expected 'key = value'")
            key, _, value = line.partition("=")
            out[key.strip()] = value.strip()
    return out


# key -> (setter path, coercion); used both by config parsing and to
# auto-generate CLI flags of the same names
_CONFIG_SCHEMA = {
    "data": ("data_path", str),
    "output_dir": ("output_dir", str),
    "seed": ("seed", int),
    "normalize_weights": ("normalize", _parse_bool),
    "report_params": ("report_params", _parse_list),
    "probs": ("probs", lambda v: tuple(float(x) for x in _parse_list(v))),
    "h_estimate": ("h_estimate", str),
    "h_max_draws": ("h_max_draws", int),
    "j_centering": ("j_centering", str),
    "matrix_sqrt": ("matrix_sqrt", str),
    "design.weight": ("design.weight", str),
    "design.psu": ("design.psu", str),
    "design.stratum": ("design.stratum", str),
    "design.fpc": ("design.fpc", str),
    "design.nest": ("design.nest", _parse_bool),
    "model.family": ("model.family", str),
    "model.response": ("model.response", str),
    "model.predictors": ("model.predictors", _parse_list),
    "model.intercept": ("model.intercept", _parse_bool),
    "model.alpha": ("model.alpha", lambda v: tuple(float(x) for x in _parse_list(v))),
    "model.sigma_df": ("model.sigma_df", float),
    "model.sigma_scale": ("model.sigma_scale", float),
    "sampler.chains": ("sampler.chains", int),
    "sampler.iter": ("sampler.iter", int),
    "sampler.warmup": ("sampler.warmup", int),
    "sampler.thin": ("sampler.thin", int),
    "sampler.seed": ("sampler.seed", int),
    "sampler.algorithm": ("sampler.algorithm", str),
    "sampler.target_accept": ("sampler.target_accept", float),
    "sampler.max_leapfrog": ("sampler.max_leapfrog", int),
    "sampler.init": ("sampler.init", lambda v: tuple(float(x) for x in _parse_list(v))),
    "replication.method": ("replication.method", str),
    "replication.replicates": ("replication.replicates", int),
    "replication.seed": ("replication.seed", int),
    "replication.centering": ("replication.centering", str),
    "replication.files_prefix": ("replication.files_prefix", str),
}


def config_keys() -> list[str]:
    return sorted(_CONFIG_SCHEMA)


def build_fit_config(mapping: dict) -> FitConfig:
    """Coerce a flat string mapping (from file and/or CLI) to FitConfig."""
    config = FitConfig()
    for key, raw in mapping.items():
        if key not in _CONFIG_SCHEMA:
            raise ConfigurationError(f"unknown config key {key!r}")
        if raw is None or raw == "":
            continue
        path, coerce = _CONFIG_SCHEMA[key]
        try:
            value = coerce(raw) if isinstance(raw, str) else raw
        except (ValueError, TypeError) as exc:
            raise ConfigurationError(f"bad value for {key!r}: {raw!r}") from exc
        target = config
        *parents, attr = path.split(".")
        for p in parents:
            target = getattr(target, p)
        setattr(target, attr, value)
    # master seed feeds sampler and replication unless set explicitly
    if config.seed is not None:
        if config.sampler.seed is None:
            config.sampler.seed = config.seed
        if config.replication.seed is None:
            config.replication.seed = config.seed + 1
    return config


def _design_matrix(frame: pd.DataFrame, spec: ModelSpec):
    cols = []
    if spec.intercept:
        cols.append(np.ones(len(frame)))
    for pred in spec.predictors:
        if pred not in frame.columns:
            raise ConfigurationError(f"predictor column {pred!r} not found in data")
        col = frame[pred]
        if col.isna().any():
            raise DataError(f"missing values in predictor column {pred!r}")
        if not pd.api.types.is_numeric_dtype(col):
            raise ConfigurationError(f"predictor column {pred!r} must be numeric")
        cols.append(col.to_numpy(dtype=float))
    if not cols:
        raise ConfigurationError("model has no predictors and no intercept")
    X = np.column_stack(cols)
    offset = 2 if spec.intercept else 1
    names = [f"b{j + offset}_{p}" for j, p in enumerate(spec.predictors)]
    if spec.intercept:
        names = ["b1"] + names
    return X, tuple(names)


def build_family(frame: pd.DataFrame, spec: ModelSpec, weights: np.ndarray):
    """Construct the configured model family from the data table."""
    if spec.response not in frame.columns:
        raise ConfigurationError(f"response column {spec.response!r} not found in data")
    if frame[spec.response].isna().any():
        raise DataError(f"missing values in response column {spec.response!r}")
    if spec.family == "normal_linear":
        X, names = _design_matrix(frame, spec)
        y = frame[spec.response].to_numpy(dtype=float)
        return NormalLinear(X, y, weights, sigma_prior_df=spec.sigma_df,
                            sigma_prior_scale=spec.sigma_scale, coef_names=names)
    if spec.family == "bernoulli_logit":
        X, names = _design_matrix(frame, spec)
        y = frame[spec.response].to_numpy(dtype=float)
        return BernoulliLogit(X, y, weights, coef_names=names)
    if spec.family == "multinomial_gamma":
        indicators = expand_variable(frame, spec.response)
        Y = indicators.to_numpy(dtype=float)
        alpha = spec.alpha
        if isinstance(alpha, tuple) and len(alpha) == 1:
            alpha = alpha[0]
        return MultinomialGamma(Y, weights, alpha=alpha)
    raise ConfigurationError(f"unknown model family {spec.family!r}")


@dataclass
class FitResult:
    """Everything produced by one pipeline run."""

    config: FitConfig
    design: SurveyDesign
    rep_design: ReplicateDesign
    family: object
    draws: DrawsMatrix
    adjustment: AdjustmentResult
    summary: pd.DataFrame
    diagnostics: pd.DataFrame
    timings: dict


class _Stage:
    """Context manager that logs timing and tags errors with the stage."""

    def __init__(self, name: str, timings: dict):
        self.name = name
        self.timings = timings

    def __enter__(self):
        self.t0 = time.perf_counter()
        log.info("stage %s: start", self.name)
        return self

    def __exit__(self, exc_type, exc, tb):
        elapsed = time.perf_counter() - self.t0
        self.timings[self.name] = elapsed
        if exc is None:
            log.info("stage %s: done in %.3fs", self.name, elapsed)
        elif exc.args and isinstance(exc.args[0], str):
            exc.args = (f"[{self.name}] {exc.args[0]}",) + exc.args[1:]
        return False


def fit(config: FitConfig) -> FitResult:
    """Run the full estimation-and-adjustment pipeline."""
    timings: dict = {}

    with _Stage("load_data", timings):
        if not config.data_path:
            raise ConfigurationError("no data path configured")
        if not os.path.exists(config.data_path):
            raise ConfigurationError(f"data file {config.data_path!r} not found")
        frame = pd.read_csv(config.data_path)

    with _Stage("build_design", timings):
        if not config.design.weight:
            raise ConfigurationError("design.weight is required")
        design = SurveyDesign.from_frame(
            frame,
            weight=config.design.weight,
            psu=config.design.psu,
            stratum=config.design.stratum,
            fpc=config.design.fpc,
            nest=config.design.nest,
        )
        if config.normalize:
            design = design.normalized()

    with _Stage("build_model", timings):
        family = build_family(design.rows, config.model, design.base_weight)

    with _Stage("replicates", timings):
        rc = config.replication
        if rc.files_prefix:
            rep_design = ReplicateDesign.from_files(design, rc.files_prefix)
        else:
            if rc.method == "mrbbootstrap" and rc.seed is None:
                raise ConfigurationError(
                    "replication.seed (or a master seed) is required for "
                    "mrbbootstrap replicates"
                )
            rep_design = build_replicates(
                design, method=rc.method, n_replicates=rc.replicates,
                seed=rc.seed, centering=rc.centering,
            )

    with _Stage("sample", timings):
        if config.sampler.seed is None:
            raise ConfigurationError("a sampler seed is required (set seed=...)")
        draws = sample_pseudo_posterior(family, config.sampler)

    with _Stage("estimate_h", timings):
        H = estimate_H(family, draws, method=config.h_estimate,
                       max_hessian_draws=config.h_max_draws)

    with _Stage("estimate_j", timings):
        theta_bar = draws.values.mean(axis=0)
        J = estimate_J(family, rep_design, theta_bar,
                       centering=config.j_centering)

    with _Stage("adjust", timings):
        adjustment = adjust_draws(draws, H, J, method=config.matrix_sqrt,
                                  space=family.space)

    with _Stage("summarize", timings):
        summary = summarize(adjustment, probs=config.probs,
                            params=config.report_params)
        diagnostics = mcmc_diagnostics(draws)

    result = FitResult(config=config, design=design, rep_design=rep_design,
                       family=family, draws=draws, adjustment=adjustment,
                       summary=summary, diagnostics=diagnostics,
                       timings=timings)
    if config.output_dir:
        with _Stage("save", timings):
            save_result(result, config.output_dir)
    return result


def _series_frames(result: AdjustmentResult):
    if result.adjusted_con is not None:
        return (
            ("unadjusted", result.unadjusted_con),
            ("adjusted", result.adjusted_con),
        )
    names = list(result.names)
    return (
        ("unadjusted", pd.DataFrame(result.draws.values, columns=names)),
        ("adjusted", pd.DataFrame(result.adjusted_unc, columns=names)),
    )


def _select_params(available, params):
    if params is None:
        return list(available)
    missing = [p for p in params if p not in available]
    if missing:
        raise NotFoundError(
            f"unknown parameter(s) {missing}; available: {list(available)}"
        )
    return list(params)


def summarize(result: AdjustmentResult, probs=DEFAULT_PROBS,
              params=None) -> pd.DataFrame:
    """Per-parameter mean, sd, and quantiles for both draw series.

    Quantiles use linear interpolation of order statistics. ``params``
    restricts reporting (adjustment always covers all parameters).
    """
    frames = _series_frames(result)
    if frames[0][1].shape[0] < 2:
        raise InsufficientDrawsError("need at least 2 draws to summarize")
    keep = _select_params(frames[0][1].columns, params)
    rows = []
    for series, frame in frames:
        for name in keep:
            vals = frame[name].to_numpy()
            row = {
                "parameter": name,
                "series": series,
                "mean": float(vals.mean()),
                "sd": float(vals.std(ddof=1)),
            }
            for p in probs:
                row[f"q{100 * p:g}"] = float(np.quantile(vals, p))
            rows.append(row)
    return pd.DataFrame(rows)


def export_pairs_data(result: AdjustmentResult, varnames=None) -> pd.DataFrame:
    """Long-format draws for external pairs plotting.

    One row per draw x parameter x series, with columns ``draw``,
    ``parameter``, ``value``, ``series``.
    """
    frames = _series_frames(result)
    keep = _select_params(frames[0][1].columns, varnames)
    blocks = []
    for series, frame in frames:
        m = frame.shape[0]
        for name in keep:
            blocks.append(pd.DataFrame({
                "draw": np.arange(m),
                "parameter": name,
                "value": frame[name].to_numpy(),
                "series": series,
            }))
    return pd.concat(blocks, ignore_index=True)


def _matrix_frame(mat, names):
    return pd.DataFrame(np.asarray(mat), index=list(names), columns=list(names))


def save_result(result: FitResult, outdir: str) -> None:
    """Write the saved-result directory: draws and matrices as CSV plus a
    summary JSON (posterior mean, design effects, condition numbers)."""
    os.makedirs(outdir, exist_ok=True)
    adj = result.adjustment
    frames = dict(_series_frames(adj))
    for series, frame in frames.items():
        out = frame.copy()
        out.insert(0, "chain", adj.draws.chain_id)
        out.to_csv(os.path.join(outdir, f"draws_{series}.csv"), index=False)
    result.draws.to_frame().to_csv(
        os.path.join(outdir, "draws_unconstrained.csv"), index=False
    )
    names = adj.names
    for label, mat in (("H", adj.H_hat), ("J", adj.J_hat),
                       ("R1", adj.R1), ("R2", adj.R2)):
        _matrix_frame(mat, names).to_csv(os.path.join(outdir, f"{label}.csv"))
    result.summary.to_csv(os.path.join(outdir, "summary_table.csv"), index=False)
    chain_stats = [
        {k: (v.tolist() if isinstance(v, np.ndarray) else v) for k, v in cs.items()}
        for cs in result.draws.stats.get("chains", [])
    ]
    payload = {
        "theta_bar": dict(zip(names, adj.theta_bar.tolist())),
        "deff": dict(zip(names, adj.deff.tolist())),
        "flags": adj.flags,
        "timings": result.timings,
        "sampler": {"algorithm": result.draws.stats.get("algorithm"),
                    "chains": chain_stats},
        "diagnostics": result.diagnostics.replace([np.inf, -np.inf], None)
        .where(pd.notna(result.diagnostics), None)
        .to_dict(orient="index"),
    }
    with open(os.path.join(outdir, "summary.json"), "w") as fh:
        json.dump(payload, fh, indent=2, default=float)


def svymean_table(design: SurveyDesign, variables, rep_design=None,
                  lonely: str = "error") -> pd.DataFrame:
    """Weighted means with linearization and (optionally) replication SEs.

    The replication SE applies the design's scale constants to the
    replicate Hajek means of each variable.
    """
    rows = []
    for var in variables:
        means = ht_mean(design, var)
        tl = tl_variance_mean(design, var, lonely=lonely)
        rep_se = {}
        if rep_design is not None:
            cols = expand_variable(design.rows, var)
            stats = np.empty((rep_design.n_replicates, cols.shape[1]))
            for k in range(rep_design.n_replicates):
                w = rep_design.rep_weights[:, k]
                wsum = w.sum()
                stats[k] = [float(w @ cols[c].to_numpy()) / wsum for c in cols]
            cov = replicate_covariance(stats, means.to_numpy(), rep_design)
            rep_se = dict(zip(means.index, np.sqrt(np.diag(cov))))
        for name in means.index:
            rows.append({
                "statistic": name,
                "mean": means[name],
                "se_linearization": tl[name],
                "se_replication": rep_se.get(name, np.nan),
            })
    return pd.DataFrame(rows)
