"""Complex survey designs, replicate weights, and design-based estimators.

A :class:`SurveyDesign` describes strata, primary sampling units (PSUs)
and base weights for an analysis table. :func:`build_replicates` turns it
into a :class:`ReplicateDesign` (half-sample bootstrap or jackknife), and
:func:`replicate_covariance` implements the between-replicate variance
formula shared by all methods. :func:`ht_mean` and
:func:`tl_variance_mean` are closed-form weighted-mean estimators used as
oracles for checking model-based results.

All types are immutable after construction and operations are pure, so
everything here is safe to call concurrently.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import pandas as pd

from .errors import (
    DataError,
    DegenerateStratumError,
    InvalidArgumentError,
    InvalidWeightsError,
    NotFoundError,
)

__all__ = [
    "SurveyDesign",
    "ReplicateDesign",
    "normalize_weights",
    "build_replicates",
    "replicate_covariance",
    "ht_mean",
    "tl_variance_mean",
    "expand_variable",
]


def normalize_weights(raw) -> np.ndarray:
    """Rescale weights to mean 1 (so they sum to the sample size).

    Raises :class:`InvalidWeightsError` for nonpositive or non-finite
    input. Relative ordering is preserved.
    """
    w = np.asarray(raw, dtype=float)
    if w.ndim != 1 or w.size == 0:
        raise InvalidWeightsError("weights must be a nonempty 1-D array")
    if not np.all(np.isfinite(w)) or np.any(w <= 0):
        raise InvalidWeightsError("weights must be positive and finite")
    return w / w.mean()


@dataclass(frozen=True)
class SurveyDesign:
    """Per-unit strata/PSU/weight description plus the analysis table.

    Rows of ``psu_id`` and ``stratum_id`` are string labels; with
    ``nest=True`` PSU labels are interpreted within strata and are
    qualified internally. ``fpc`` maps stratum label to the population PSU
    count for that stratum.
    """

    rows: pd.DataFrame
    psu_id: np.ndarray
    stratum_id: np.ndarray
    base_weight: np.ndarray
    fpc: dict | None = None
    nest: bool = False

    def __post_init__(self):
        n = len(self.rows)
        for name in ("psu_id", "stratum_id", "base_weight"):
            if len(getattr(self, name)) != n:
                raise InvalidArgumentError(f"{name} must have one entry per row")
        w = np.asarray(self.base_weight, dtype=float)
        if not np.all(np.isfinite(w)) or np.any(w <= 0):
            raise InvalidWeightsError("base weights must be positive and finite")
        object.__setattr__(self, "base_weight", w)
        psu = np.asarray(self.psu_id).astype(str)
        strat = np.asarray(self.stratum_id).astype(str)
        if self.nest:
            psu = np.char.add(np.char.add(strat, "|"), psu)
        else:
            mapping = {}
            for p, h in zip(psu, strat):
                if mapping.setdefault(p, h) != h:
                    raise DataError(
                        f"PSU {p!r} appears in multiple strata; use nest=True "
                        "if PSU labels repeat across strata"
                    )
        object.__setattr__(self, "psu_id", psu)
        object.__setattr__(self, "stratum_id", strat)
        if self.fpc is not None:
            for h, count in self.strata_psu_counts().items():
                if h not in self.fpc:
                    raise DataError(f"fpc missing for stratum {h!r}")
                if self.fpc[h] < count:
                    raise DataError(
                        f"fpc for stratum {h!r} ({self.fpc[h]}) is smaller than "
                        f"the number of sampled PSUs ({count})"
                    )

    @classmethod
    def from_frame(cls, df: pd.DataFrame, *, weight: str, psu: str | None = None,
                   stratum: str | None = None, fpc: str | None = None,
                   nest: bool = False) -> "SurveyDesign":
        """Build a design from named columns of ``df``.

        ``psu=None`` treats every row as its own PSU; ``stratum=None``
        puts everything in a single stratum. An ``fpc`` column must be
        constant within stratum.
        """
        for col in (weight, psu, stratum, fpc):
            if col is not None and col not in df.columns:
                raise NotFoundError(f"column {col!r} not found in data")
        n = len(df)
        if n == 0:
            raise DataError("data table is empty")
        weights = df[weight].to_numpy(dtype=float)
        psu_id = df[psu].to_numpy() if psu else np.arange(n)
        stratum_id = df[stratum].to_numpy() if stratum else np.repeat("_all", n)
        referenced = [c for c in (weight, psu, stratum, fpc) if c is not None]
        if df[referenced].isna().any().any():
            bad = [c for c in referenced if df[c].isna().any()]
            raise DataError(f"missing values in design columns {bad}")
        fpc_map = None
        if fpc is not None:
            fpc_map = {}
            strat_str = np.asarray(stratum_id).astype(str)
            for h in np.unique(strat_str):
                vals = np.unique(df[fpc].to_numpy()[strat_str == h])
                if len(vals) != 1:
                    raise DataError(f"fpc is not constant within stratum {h!r}")
                fpc_map[h] = float(vals[0])
        return cls(rows=df.reset_index(drop=True), psu_id=psu_id,
                   stratum_id=stratum_id, base_weight=weights, fpc=fpc_map,
                   nest=nest)

    @property
    def n(self) -> int:
        return len(self.rows)

    def strata(self) -> list[str]:
        return sorted(set(self.stratum_id.tolist()))

    def strata_psu_counts(self) -> dict:
        out = {}
        for h in self.strata():
            mask = self.stratum_id == h
            out[h] = len(set(self.psu_id[mask].tolist()))
        return out

    def psu_indices(self) -> dict:
        """Stratum -> {psu label -> row index array}, labels sorted."""
        out = {}
        for h in self.strata():
            mask = self.stratum_id == h
            idx = np.flatnonzero(mask)
            psus = self.psu_id[mask]
            groups = {}
            for p in sorted(set(psus.tolist())):
                groups[p] = idx[psus == p]
            out[h] = groups
        return out

    def normalized(self) -> "SurveyDesign":
        """Same design with weights rescaled to mean 1."""
        # nest=False: PSU labels were already stratum-qualified at
        # construction, re-nesting would double the prefix
        return SurveyDesign(rows=self.rows, psu_id=self.psu_id,
                            stratum_id=self.stratum_id,
                            base_weight=normalize_weights(self.base_weight),
                            fpc=self.fpc, nest=False)


@dataclass(frozen=True)
class ReplicateDesign:
    """Base design plus an n x K replicate-weight matrix.

    ``overall_scale`` (C) and ``rep_scales`` (r_k) feed the
    between-replicate variance formula
    ``C * sum_k r_k (t_k - c)(t_k - c)^T``; ``centering`` selects whether
    ``c`` is the supplied full-sample statistic or the replicate mean.
    """

    base: SurveyDesign
    rep_weights: np.ndarray
    method: str
    overall_scale: float
    rep_scales: np.ndarray
    centering: str = "replicate_mean"
    seed: int | None = None

    def __post_init__(self):
        rw = np.asarray(self.rep_weights, dtype=float)
        if rw.ndim != 2 or rw.shape[0] != self.base.n or rw.shape[1] < 1:
            raise InvalidArgumentError(
                f"rep_weights must be n x K with n={self.base.n}, got {rw.shape}"
            )
        if not np.all(np.isfinite(rw)) or np.any(rw < 0):
            raise InvalidWeightsError("replicate weights must be nonnegative and finite")
        object.__setattr__(self, "rep_weights", rw)
        rs = np.asarray(self.rep_scales, dtype=float)
        if rs.shape != (rw.shape[1],) or np.any(rs <= 0):
            raise InvalidArgumentError("rep_scales must be K positive reals")
        object.__setattr__(self, "rep_scales", rs)
        if self.overall_scale <= 0:
            raise InvalidArgumentError("overall_scale must be positive")
        if self.centering not in ("full_sample", "replicate_mean"):
            raise InvalidArgumentError(f"unknown centering {self.centering!r}")

    @property
    def n_replicates(self) -> int:
        return self.rep_weights.shape[1]

    def to_files(self, prefix: str) -> tuple[str, str]:
        """Write ``<prefix>_weights.csv`` and ``<prefix>_meta.txt``.

        The sidecar is a flat ``key = value`` file recording method, K,
        scales, centering, and seed.
        """
        wpath, mpath = f"{prefix}_weights.csv", f"{prefix}_meta.txt"
        cols = {f"rep{k + 1}": self.rep_weights[:, k] for k in range(self.n_replicates)}
        pd.DataFrame(cols).to_csv(wpath, index=False)
        with open(mpath, "w") as fh:
            fh.write(f"method = {self.method}\n")
            fh.write(f"replicates = {self.n_replicates}\n")
            fh.write(f"overall_scale = {float(self.overall_scale)!r}\n")
            fh.write("rep_scales = " + ",".join(repr(float(v)) for v in self.rep_scales) + "\n")
            fh.write(f"centering = {self.centering}\n")
            fh.write(f"seed = {'' if self.seed is None else self.seed}\n")
        return wpath, mpath

    @classmethod
    def from_files(cls, base: SurveyDesign, prefix: str) -> "ReplicateDesign":
        wpath, mpath = f"{prefix}_weights.csv", f"{prefix}_meta.txt"
        rep = pd.read_csv(wpath).to_numpy(dtype=float)
        meta = {}
        with open(mpath) as fh:
            for line in fh:
                line = line.strip()
                if not line or line.startswith("#"):
                    continue
                key, _, value = line.partition("=")
                meta[key.strip()] = value.strip()
        seed = meta.get("seed", "")
        return cls(
            base=base,
            rep_weights=rep,
            method=meta.get("method", "custom"),
            overall_scale=float(meta["overall_scale"]),
            rep_scales=np.array([float(v) for v in meta["rep_scales"].split(",")]),
            centering=meta.get("centering", "replicate_mean"),
            seed=int(seed) if seed else None,
        )


def _require_min_psus(counts: dict, minimum: int, method: str):
    bad = {h: c for h, c in counts.items() if c < minimum}
    if bad:
        raise DegenerateStratumError(
            f"method {method!r} needs at least {minimum} PSUs per stratum; "
            f"offending strata: {sorted(bad)}"
        )


def build_replicates(design: SurveyDesign, method: str = "mrbbootstrap",
                     n_replicates: int = 100, seed: int | None = None,
                     centering: str = "replicate_mean") -> ReplicateDesign:
    """Generate replicate weights from a survey design.

    Methods
    -------
    mrbbootstrap
        For each replicate and stratum with ``n_h`` PSUs, keep a uniform
        half sample of ``m_h = floor(n_h / 2)`` PSUs and multiply their
        units' weights by ``n_h / m_h`` (others get 0). ``r_k = 1``,
        ``C = 1/K``. Requires a ``seed``.
    jk1
        Leave one PSU out across the whole sample; survivors are scaled
        by ``K/(K-1)``. ``K`` equals the total PSU count, ``C = (K-1)/K``,
        ``r_k = 1``.
    jkn
        Stratified leave-one-PSU-out: survivors in the same stratum are
        scaled by ``n_h/(n_h-1)``, other strata untouched; ``K`` equals
        the total PSU count, ``r_k = (n_h-1)/n_h``, ``C = 1``.

    For the jackknife methods ``n_replicates`` is ignored (``K`` is fixed
    by the PSU counts).
    """
    counts = design.strata_psu_counts()
    groups = design.psu_indices()
    n = design.n
    w = design.base_weight

    if method == "mrbbootstrap":
        if n_replicates < 1:
            raise InvalidArgumentError("n_replicates must be >= 1")
        if seed is None:
            raise InvalidArgumentError("mrbbootstrap requires a seed")
        _require_min_psus(counts, 2, method)
        K = int(n_replicates)
        rep = np.zeros((n, K))
        # independent substream per replicate: columns can be generated in
        # parallel and are order-independent
        children = np.random.SeedSequence(seed).spawn(K)
        for k in range(K):
            rng = np.random.default_rng(children[k])
            col = np.zeros(n)
            for h in design.strata():
                psus = list(groups[h])
                n_h = len(psus)
                m_h = n_h // 2
                chosen = rng.choice(n_h, size=m_h, replace=False)
                mult = n_h / m_h
                for j in chosen:
                    col[groups[h][psus[j]]] = mult
            rep[:, k] = col * w
        return ReplicateDesign(base=design, rep_weights=rep, method=method,
                               overall_scale=1.0 / K, rep_scales=np.ones(K),
                               centering=centering, seed=seed)

    if method == "jk1":
        all_psus = [(h, p) for h in design.strata() for p in groups[h]]
        K = len(all_psus)
        if K < 2:
            raise DegenerateStratumError("jk1 needs at least 2 PSUs in total")
        rep = np.tile((w * K / (K - 1))[:, None], (1, K))
        for k, (h, p) in enumerate(all_psus):
            rep[groups[h][p], k] = 0.0
        return ReplicateDesign(base=design, rep_weights=rep, method=method,
                               overall_scale=(K - 1) / K, rep_scales=np.ones(K),
                               centering=centering, seed=seed)

    if method == "jkn":
        _require_min_psus(counts, 2, method)
        all_psus = [(h, p) for h in design.strata() for p in groups[h]]
        K = len(all_psus)
        rep = np.tile(w[:, None], (1, K))
        scales = np.empty(K)
        for k, (h, p) in enumerate(all_psus):
            n_h = counts[h]
            stratum_rows = np.flatnonzero(design.stratum_id == h)
            rep[stratum_rows, k] = w[stratum_rows] * n_h / (n_h - 1)
            rep[groups[h][p], k] = 0.0
            scales[k] = (n_h - 1) / n_h
        return ReplicateDesign(base=design, rep_weights=rep, method=method,
                               overall_scale=1.0, rep_scales=scales,
                               centering=centering, seed=seed)

    raise InvalidArgumentError(f"unknown replication method {method!r}")


def replicate_covariance(rep_stats, center_stat, rep_design,
                         denominator: str = "standard") -> np.ndarray:
    """Between-replicate covariance ``C * sum_k r_k (t_k - c)(t_k - c)^T``.

    ``rep_design`` supplies the scale constants and centering mode; any
    object with ``overall_scale``, ``rep_scales`` and ``centering``
    attributes works. ``denominator="k_minus_d"`` divides by ``(K - d)/K``
    instead of using the per-method constants' implicit ``K`` (an
    alternative normalizing convention; ``standard`` reproduces the usual
    survey-software results).
    """
    t = np.atleast_2d(np.asarray(rep_stats, dtype=float))
    K, d = t.shape
    if K < 2:
        raise InvalidArgumentError("need at least 2 replicates")
    c = np.asarray(center_stat, dtype=float).reshape(-1)
    if c.shape != (d,):
        raise InvalidArgumentError(
            f"center_stat has dimension {c.shape}, expected ({d},)"
        )
    r = np.asarray(rep_design.rep_scales, dtype=float)
    if r.shape != (K,):
        raise InvalidArgumentError(f"rep_scales has length {r.size}, expected {K}")
    if rep_design.centering == "replicate_mean":
        c = t.mean(axis=0)
    dev = t - c
    cov = rep_design.overall_scale * (dev.T * r) @ dev
    if denominator == "k_minus_d":
        if K <= d:
            raise InvalidArgumentError("k_minus_d denominator needs K > d")
        cov = cov * K / (K - d)
    elif denominator != "standard":
        raise InvalidArgumentError(f"unknown denominator {denominator!r}")
    return 0.5 * (cov + cov.T)


def expand_variable(frame: pd.DataFrame, variable: str) -> pd.DataFrame:
    """Numeric columns pass through; categoricals expand to one indicator
    per level (sorted label order), named ``<variable><level>``."""
    if variable not in frame.columns:
        raise NotFoundError(f"column {variable!r} not found in data")
    col = frame[variable]
    if col.isna().any():
        raise DataError(f"missing values in column {variable!r}")
    if pd.api.types.is_numeric_dtype(col) and not isinstance(
        col.dtype, pd.CategoricalDtype
    ):
        return pd.DataFrame({variable: col.to_numpy(dtype=float)})
    levels = sorted(map(str, col.unique()))
    vals = col.astype(str)
    return pd.DataFrame(
        {f"{variable}{lev}": (vals == lev).to_numpy(dtype=float) for lev in levels}
    )


def ht_mean(design: SurveyDesign, variable: str) -> pd.Series:
    """Hajek weighted mean ``sum(w_i y_i) / sum(w_i)`` per component."""
    cols = expand_variable(design.rows, variable)
    w = design.base_weight
    return pd.Series(
        {name: float(w @ cols[name].to_numpy()) / float(w.sum()) for name in cols}
    )


def tl_variance_mean(design: SurveyDesign, variable: str,
                     lonely: str = "error") -> pd.Series:
    """Taylor-linearization standard error of the Hajek mean.

    Unit residuals ``w_i (y_i - yhat) / sum(w)`` are aggregated to PSU
    totals; the between-PSU variance within each stratum carries an
    ``n_h/(n_h - 1)`` factor and, when an fpc is present, a
    ``(1 - n_h/N_h)`` factor. ``lonely`` controls single-PSU strata:
    ``"error"`` raises, ``"center_grand"`` centers lonely PSUs at the
    grand mean of all PSU totals.
    """
    if lonely not in ("error", "center_grand"):
        raise InvalidArgumentError(f"unknown lonely-PSU handling {lonely!r}")
    cols = expand_variable(design.rows, variable)
    w = design.base_weight
    wsum = float(w.sum())
    means = {name: float(w @ cols[name].to_numpy()) / wsum for name in cols}
    groups = design.psu_indices()
    counts = design.strata_psu_counts()

    lonely_strata = [h for h, c in counts.items() if c < 2]
    if lonely_strata and lonely == "error":
        raise DegenerateStratumError(
            f"single-PSU strata {sorted(lonely_strata)}; pass "
            "lonely='center_grand' to use the grand-mean fallback"
        )

    variances = dict.fromkeys(cols, 0.0)
    for name in cols:
        y = cols[name].to_numpy()
        z = w * (y - means[name]) / wsum
        psu_totals = {
            h: np.array([z[idx].sum() for idx in groups[h].values()])
            for h in groups
        }
        grand = (
            np.mean(np.concatenate([t for t in psu_totals.values()]))
            if lonely_strata
            else 0.0
        )
        total = 0.0
        for h, totals in psu_totals.items():
            n_h = counts[h]
            fpc_factor = 1.0
            if design.fpc is not None:
                fpc_factor = max(0.0, 1.0 - n_h / design.fpc[h])
            if n_h == 1:
                total += fpc_factor * float((totals[0] - grand) ** 2)
            else:
                dev = totals - totals.mean()
                total += fpc_factor * n_h / (n_h - 1) * float(dev @ dev)
        variances[name] = total
    return pd.Series({name: float(np.sqrt(v)) for name, v in variances.items()})
