"""Weighted model families: log pseudo-posterior densities, analytic
gradients, and constrained/unconstrained parameter transforms.

The log pseudo-posterior is the weighted log-likelihood
``sum_i w_i * l_i(theta)`` plus the log prior plus the log Jacobian of the
constraining transform, all as a function of the unconstrained parameter
vector. Additive constants that do not depend on the parameters (e.g. the
half-Student-t truncation normalizer) are dropped, so reported log
densities are defined up to a constant.

Gradients are analytic; finite differences are used only as test oracles.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.special import gammaln

from . import _kernels
from .errors import InvalidArgumentError

__all__ = [
    "TransformBlock",
    "DerivedQuantity",
    "ParameterSpace",
    "ModelFamily",
    "NormalLinear",
    "BernoulliLogit",
    "MultinomialGamma",
    "default_sigma_prior_scale",
]


@dataclass(frozen=True)
class TransformBlock:
    """One contiguous block of parameters sharing a transform.

    ``kind`` is ``"identity"`` or ``"log_positive"``; for the latter the
    unconstrained coordinate is the log of the constrained one.
    """

    kind: str
    names: tuple[str, ...]

    def __post_init__(self):
        if self.kind not in ("identity", "log_positive"):
            raise InvalidArgumentError(f"unknown transform kind {self.kind!r}")

    @property
    def dim(self) -> int:
        return len(self.names)


@dataclass(frozen=True)
class DerivedQuantity:
    """A derived output recomputed from one constrained block.

    ``formula`` tags the computation: ``"simplex_share"`` divides the block
    by its sum, ``"log"`` takes elementwise logs.
    """

    names: tuple[str, ...]
    block: int
    formula: str


@dataclass(frozen=True)
class ParameterSpace:
    """Ordered transform blocks plus derived-quantity descriptors."""

    blocks: tuple[TransformBlock, ...]
    derived: tuple[DerivedQuantity, ...] = ()

    @property
    def dim(self) -> int:
        return sum(b.dim for b in self.blocks)

    @property
    def names(self) -> list[str]:
        """Constrained parameter names, block order."""
        return [n for b in self.blocks for n in b.names]

    @property
    def unconstrained_names(self) -> list[str]:
        out = []
        for b in self.blocks:
            prefix = "log_" if b.kind == "log_positive" else ""
            out.extend(prefix + n for n in b.names)
        return out

    @property
    def output_names(self) -> list[str]:
        """Constrained names followed by derived names."""
        out = self.names
        for dq in self.derived:
            out.extend(dq.names)
        return out

    def _block_slices(self):
        start = 0
        for b in self.blocks:
            yield b, slice(start, start + b.dim)
            start += b.dim

    def to_unconstrained(self, theta_con: np.ndarray) -> np.ndarray:
        theta_con = np.asarray(theta_con, dtype=float)
        if theta_con.shape[-1] != self.dim:
            raise InvalidArgumentError(
                f"expected {self.dim} constrained values, got {theta_con.shape[-1]}"
            )
        out = np.array(theta_con, dtype=float, copy=True)
        for b, sl in self._block_slices():
            if b.kind == "log_positive":
                vals = out[..., sl]
                if np.any(vals <= 0):
                    raise InvalidArgumentError(
                        f"nonpositive value in log_positive block {b.names}"
                    )
                out[..., sl] = np.log(vals)
        return out

    def to_constrained(self, theta_unc: np.ndarray) -> np.ndarray:
        """Constrained base parameters (no derived quantities)."""
        theta_unc = np.asarray(theta_unc, dtype=float)
        if theta_unc.shape[-1] != self.dim:
            raise InvalidArgumentError(
                f"expected {self.dim} unconstrained values, got {theta_unc.shape[-1]}"
            )
        out = np.array(theta_unc, dtype=float, copy=True)
        for b, sl in self._block_slices():
            if b.kind == "log_positive":
                out[..., sl] = np.exp(out[..., sl])
        return out

    def constrain_draws(self, draws_unc: np.ndarray) -> np.ndarray:
        """Constrained plus derived quantities, vectorized over draw rows."""
        draws_unc = np.atleast_2d(np.asarray(draws_unc, dtype=float))
        con = self.to_constrained(draws_unc)
        parts = [con]
        slices = dict(enumerate(sl for _, sl in self._block_slices()))
        for dq in self.derived:
            block_vals = con[..., slices[dq.block]]
            if dq.formula == "simplex_share":
                parts.append(block_vals / block_vals.sum(axis=-1, keepdims=True))
            elif dq.formula == "log":
                parts.append(np.log(block_vals))
            else:
                raise InvalidArgumentError(f"unknown derived formula {dq.formula!r}")
        return np.concatenate(parts, axis=-1)

    def log_jacobian(self, theta_unc: np.ndarray) -> float:
        """Log |d constrained / d unconstrained| at ``theta_unc``."""
        total = 0.0
        for b, sl in self._block_slices():
            if b.kind == "log_positive":
                total += float(np.sum(theta_unc[sl]))
        return total

    def grad_log_jacobian(self, theta_unc: np.ndarray) -> np.ndarray:
        g = np.zeros(self.dim)
        for b, sl in self._block_slices():
            if b.kind == "log_positive":
                g[sl] = 1.0
        return g


def _check_weights(weights, n):
    w = np.ascontiguousarray(weights, dtype=float)
    if w.shape != (n,):
        raise InvalidArgumentError(f"weights must have length {n}, got shape {w.shape}")
    if not np.all(np.isfinite(w)) or np.any(w < 0):
        raise InvalidArgumentError("weights must be finite and nonnegative")
    return w


def _check_theta(theta, d):
    theta = np.ascontiguousarray(theta, dtype=float)
    if theta.shape != (d,):
        raise InvalidArgumentError(
            f"parameter vector must have length {d}, got shape {theta.shape}"
        )
    if not np.all(np.isfinite(theta)):
        raise InvalidArgumentError("parameter vector must be finite")
    return theta


class ModelFamily:
    """Shared interface for the weighted model families.

    Subclasses set ``space`` and implement ``_loglik_grad`` (weighted
    likelihood part) and ``_prior_logp_grad``. Evaluation is pure:
    instances are immutable after construction and safe to share across
    workers.
    """

    space: ParameterSpace
    weights: np.ndarray

    @property
    def n_params(self) -> int:
        return self.space.dim

    @property
    def n_obs(self) -> int:
        return self.weights.size

    def _loglik_grad(self, theta_unc, weights):
        raise NotImplementedError

    def _prior_logp_grad(self, theta_unc):
        raise NotImplementedError

    def _jacobian_cache(self):
        # constant across evaluations; computed once per family
        try:
            return self._jac_mask, self._jac_grad
        except AttributeError:
            mask = np.zeros(self.space.dim, dtype=bool)
            for b, sl in self.space._block_slices():
                if b.kind == "log_positive":
                    mask[sl] = True
            self._jac_mask = mask
            self._jac_grad = mask.astype(float)
            return mask, self._jac_grad

    def logp_and_grad(self, theta_unc, weights=None):
        """Log pseudo-posterior and its gradient at ``theta_unc``.

        ``weights`` replaces the stored survey weights (used for replicate
        scores); prior and Jacobian terms are always included. Log-scale
        coordinates beyond exp-overflow range yield ``-inf`` (treated as a
        rejection by the sampler).
        """
        theta_unc = _check_theta(theta_unc, self.n_params)
        mask, jac_grad = self._jacobian_cache()
        has_log_blocks = bool(mask.any())
        if has_log_blocks and np.any(np.abs(theta_unc[mask]) > 300.0):
            return -np.inf, np.zeros(self.n_params)
        if weights is None:
            w = self.weights
        else:
            w = _check_weights(weights, self.n_obs)
        ll, gl = self._loglik_grad(theta_unc, w)
        lp, gp = self._prior_logp_grad(theta_unc)
        lj = float(theta_unc[mask].sum()) if has_log_blocks else 0.0
        return ll + lp + lj, gl + gp + jac_grad

    def log_density(self, theta_unc, weights=None) -> float:
        return self.logp_and_grad(theta_unc, weights)[0]

    def grad(self, theta_unc, weights=None) -> np.ndarray:
        return self.logp_and_grad(theta_unc, weights)[1]

    def default_init(self) -> np.ndarray:
        """Starting point on the unconstrained scale."""
        raise NotImplementedError


def default_sigma_prior_scale(y: np.ndarray) -> float:
    """Data-driven scale for the half-Student-t prior on sigma.

    1.4826 times the median absolute deviation of the response, rounded to
    one decimal, floored at 2.5.
    """
    y = np.asarray(y, dtype=float)
    mad = float(np.median(np.abs(y - np.median(y))))
    return max(2.5, round(1.4826 * mad, 1))


def _coef_names(p, given):
    if given is None:
        return tuple(f"b{j + 1}" for j in range(p))
    given = tuple(given)
    if len(given) != p:
        raise InvalidArgumentError(f"expected {p} coefficient names, got {len(given)}")
    return given


def _check_design_matrix(X, y):
    X = np.ascontiguousarray(X, dtype=float)
    y = np.ascontiguousarray(y, dtype=float)
    if X.ndim != 2:
        raise InvalidArgumentError("X must be a 2-D design matrix")
    if y.shape != (X.shape[0],):
        raise InvalidArgumentError("y length must match the rows of X")
    if not (np.all(np.isfinite(X)) and np.all(np.isfinite(y))):
        raise InvalidArgumentError("X and y must be finite")
    return X, y


class NormalLinear(ModelFamily):
    """Weighted Gaussian linear regression.

    Parameters are ``(beta, sigma)`` with a flat prior on the
    coefficients and a half-Student-t(df, 0, scale) prior on ``sigma``;
    ``sigma`` is sampled on the log scale. When ``sigma_prior_scale`` is
    omitted it is derived from the response via
    :func:`default_sigma_prior_scale`.
    """

    def __init__(self, X, y, weights, *, sigma_prior_df=3.0,
                 sigma_prior_scale=None, coef_names=None):
        X, y = _check_design_matrix(X, y)
        self.X, self.y = X, y
        self.weights = _check_weights(weights, X.shape[0])
        if np.any(self.weights <= 0):
            raise InvalidArgumentError("survey weights must be positive")
        if sigma_prior_df <= 0:
            raise InvalidArgumentError("sigma_prior_df must be positive")
        self.sigma_prior_df = float(sigma_prior_df)
        if sigma_prior_scale is None:
            sigma_prior_scale = default_sigma_prior_scale(y)
        if sigma_prior_scale <= 0:
            raise InvalidArgumentError("sigma_prior_scale must be positive")
        self.sigma_prior_scale = float(sigma_prior_scale)
        names = _coef_names(X.shape[1], coef_names)
        self.space = ParameterSpace(
            blocks=(
                TransformBlock("identity", names),
                TransformBlock("log_positive", ("sigma",)),
            )
        )

    def _loglik_grad(self, theta_unc, w):
        beta = theta_unc[:-1]
        sigma = float(np.exp(theta_unc[-1]))
        return _kernels.normal_loglik_grad(self.X, self.y, w, beta, sigma)

    def _prior_logp_grad(self, theta_unc):
        # flat on beta; half-Student-t kernel on sigma (constants dropped)
        nu, phi = self.sigma_prior_df, self.sigma_prior_scale
        sigma2 = float(np.exp(2.0 * theta_unc[-1]))
        denom = nu * phi**2 + sigma2
        lp = -0.5 * (nu + 1.0) * np.log1p(sigma2 / (nu * phi**2))
        g = np.zeros(self.n_params)
        g[-1] = -(nu + 1.0) * sigma2 / denom
        return float(lp), g

    def default_init(self) -> np.ndarray:
        init = np.zeros(self.n_params)
        sd = float(np.std(self.y))
        init[-1] = np.log(sd) if sd > 0 else 0.0
        return init


class BernoulliLogit(ModelFamily):
    """Weighted logistic regression with a flat (improper) prior."""

    def __init__(self, X, y, weights, *, coef_names=None):
        X, y = _check_design_matrix(X, y)
        if not np.all((y == 0) | (y == 1)):
            raise InvalidArgumentError("response must be 0/1")
        self.X, self.y = X, y
        self.weights = _check_weights(weights, X.shape[0])
        if np.any(self.weights <= 0):
            raise InvalidArgumentError("survey weights must be positive")
        names = _coef_names(X.shape[1], coef_names)
        self.space = ParameterSpace(blocks=(TransformBlock("identity", names),))

    def _loglik_grad(self, theta_unc, w):
        return _kernels.logit_loglik_grad(self.X, self.y, w, theta_unc)

    def _prior_logp_grad(self, theta_unc):
        return 0.0, np.zeros(self.n_params)

    def default_init(self) -> np.ndarray:
        return np.zeros(self.n_params)


class MultinomialGamma(ModelFamily):
    """Weighted one-trial multinomial with independent Gamma(alpha, 1)
    priors on the unnormalized category rates.

    The simplex of category probabilities is a derived quantity
    ``theta_k = lambda_k / sum(lambda)``, along with ``loglam = log(lambda)``.
    Only one-hot indicator rows are accepted.
    """

    def __init__(self, Y, weights, *, alpha=1.0, category_names=None):
        Y = np.ascontiguousarray(Y, dtype=float)
        if Y.ndim != 2 or Y.shape[1] < 2:
            raise InvalidArgumentError("Y must be an n x K indicator matrix, K >= 2")
        if not np.all((Y == 0) | (Y == 1)) or not np.all(Y.sum(axis=1) == 1):
            raise InvalidArgumentError("Y rows must be one-hot indicators")
        self.Y = Y
        n, K = Y.shape
        self.weights = _check_weights(weights, n)
        if np.any(self.weights <= 0):
            raise InvalidArgumentError("survey weights must be positive")
        alpha = np.broadcast_to(np.asarray(alpha, dtype=float), (K,)).copy()
        if np.any(alpha <= 0):
            raise InvalidArgumentError("alpha must be positive")
        self.alpha = alpha
        # weighted category totals are sufficient for density and gradient
        self._counts = Y.T @ self.weights
        self._wtotal = float(self.weights.sum())
        if category_names is None:
            lam_names = tuple(f"lambda{k + 1}" for k in range(K))
            theta_names = tuple(f"theta{k + 1}" for k in range(K))
            loglam_names = tuple(f"loglam{k + 1}" for k in range(K))
        else:
            category_names = tuple(category_names)
            if len(category_names) != K:
                raise InvalidArgumentError(f"expected {K} category names")
            lam_names = tuple(f"lambda_{c}" for c in category_names)
            theta_names = tuple(f"theta_{c}" for c in category_names)
            loglam_names = tuple(f"loglam_{c}" for c in category_names)
        self.space = ParameterSpace(
            blocks=(TransformBlock("log_positive", lam_names),),
            derived=(
                DerivedQuantity(theta_names, 0, "simplex_share"),
                DerivedQuantity(loglam_names, 0, "log"),
            ),
        )

    def _suff_stats(self, w):
        if w is self.weights:
            return self._counts, self._wtotal
        return self.Y.T @ w, float(w.sum())

    def _loglik_grad(self, theta_unc, w):
        counts, wtotal = self._suff_stats(w)
        lam = np.exp(theta_unc)
        theta = lam / lam.sum()
        ll = float(counts @ theta_unc) - wtotal * float(np.log(lam.sum()))
        grad = counts - wtotal * theta
        return ll, grad

    def _prior_logp_grad(self, theta_unc):
        lam = np.exp(theta_unc)
        lp = float(np.sum((self.alpha - 1.0) * theta_unc - lam - gammaln(self.alpha)))
        return lp, (self.alpha - 1.0) - lam

    def default_init(self) -> np.ndarray:
        return np.zeros(self.n_params)
