"""Curvature adjustment of pseudo-posterior draws.

Estimates the negative Hessian H of the log pseudo-posterior and the
replication-based covariance J of the weighted score, forms square-root
matrices R1, R2 with ``R1' R1 = H^-1 J H^-1`` and ``R2' R2 = H^-1``, and
maps each draw through ``(theta_m - theta_bar) R2^-1 R1 + theta_bar``.
The diagonal ratio of the two sandwich matrices is reported as a
per-parameter design effect.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field

import numpy as np
import pandas as pd
import scipy.linalg

from .design import ReplicateDesign, replicate_covariance
from .errors import (
    AdjustmentError,
    DecompositionError,
    InsufficientDrawsError,
    InsufficientReplicatesError,
    InvalidArgumentError,
    NumericalError,
)
from .sampler import DrawsMatrix

__all__ = [
    "AdjustmentResult",
    "estimate_H",
    "score_at",
    "estimate_J",
    "sqrt_spd",
    "adjust_draws",
]

EIGEN_CLIP_RATIO = 1e-10


def _fd_hessian(family, theta, step_scale=1e-5):
    """Negative Hessian of the log pseudo-posterior by central finite
    differences of the analytic gradient, symmetrized."""
    d = theta.size
    A = np.empty((d, d))
    for j in range(d):
        h = step_scale * max(1.0, abs(theta[j]))
        up, dn = theta.copy(), theta.copy()
        up[j] += h
        dn[j] -= h
        g_up = family.grad(up)
        g_dn = family.grad(dn)
        A[:, j] = (g_up - g_dn) / (2.0 * h)
    if not np.all(np.isfinite(A)):
        raise NumericalError(f"non-finite Hessian entries at theta={theta}")
    return -0.5 * (A + A.T)


def estimate_H(family, draws: DrawsMatrix, method: str = "mcmc",
               max_hessian_draws: int = 200,
               step_scale: float = 1e-5) -> np.ndarray:
    """Estimate H, the negative Hessian of the log pseudo-posterior.

    ``method="mcmc"`` averages per-draw Hessians over a uniformly thinned
    subsample of at most ``max_hessian_draws`` draws (slower, more likely
    positive definite); ``method="plugin"`` evaluates once at the
    posterior mean. A non-positive-definite result is returned with a
    warning; repair happens in :func:`sqrt_spd`.
    """
    if draws.n_draws < 2:
        raise InsufficientDrawsError("need at least 2 draws to estimate H")
    if method == "plugin":
        theta_bar = draws.values.mean(axis=0)
        H = _fd_hessian(family, theta_bar, step_scale)
    elif method == "mcmc":
        m = draws.n_draws
        take = min(m, max_hessian_draws)
        idx = np.unique(np.linspace(0, m - 1, take).round().astype(int))
        H = np.zeros((draws.n_params, draws.n_params))
        for i in idx:
            try:
                H += _fd_hessian(family, draws.values[i], step_scale)
            except NumericalError as exc:
                raise NumericalError(f"draw {i}: {exc}") from exc
        H /= len(idx)
    else:
        raise InvalidArgumentError(f"unknown H method {method!r}")
    if np.linalg.eigvalsh(H).min() <= 0:
        warnings.warn("estimated H is not positive definite")
    return H


def score_at(family, theta_bar, replicate_weights) -> np.ndarray:
    """Gradient of the log pseudo-posterior at ``theta_bar`` with the
    survey weights replaced by one replicate column.

    The prior and Jacobian gradients are included; they are the same for
    every replicate, so they cancel in the replicate covariance.
    """
    return family.grad(theta_bar, weights=np.asarray(replicate_weights, dtype=float))


def estimate_J(family, rep_design: ReplicateDesign, theta_bar,
               centering: str = "full_sample",
               denominator: str = "standard") -> np.ndarray:
    """Replication estimate of J, the covariance of the weighted score.

    Evaluates :func:`score_at` for every replicate column and applies
    :func:`replicate_covariance`, centered by default at the full-sample
    score (``centering="replicate_mean"`` switches to the replicate
    mean).
    """
    K = rep_design.n_replicates
    d = np.asarray(theta_bar).size
    if K < 2:
        raise InsufficientReplicatesError("need at least 2 replicates to estimate J")
    if K < d:
        warnings.warn(f"only {K} replicates for {d} parameters; J may be singular")
    scores = np.empty((K, d))
    for k in range(K):
        scores[k] = score_at(family, theta_bar, rep_design.rep_weights[:, k])
    center = score_at(family, theta_bar, rep_design.base.base_weight)
    meta = _CenteringOverride(rep_design, centering)
    return replicate_covariance(scores, center, meta, denominator=denominator)


@dataclass(frozen=True)
class _CenteringOverride:
    design: ReplicateDesign
    centering: str

    @property
    def overall_scale(self):
        return self.design.overall_scale

    @property
    def rep_scales(self):
        return self.design.rep_scales


def sqrt_spd(A, method: str = "eigen") -> np.ndarray:
    """Matrix square root R with ``R' R = A`` for symmetric PSD ``A``.

    ``eigen`` forms ``R = Lambda^(1/2) Q'`` from the eigendecomposition,
    clipping eigenvalues below ``1e-10 * lambda_max`` to that floor;
    ``cholesky`` returns the upper-triangular factor and requires strict
    positive definiteness.
    """
    A = np.asarray(A, dtype=float)
    if A.ndim != 2 or A.shape[0] != A.shape[1]:
        raise InvalidArgumentError("A must be square")
    if not np.allclose(A, A.T, atol=1e-8 * max(1.0, np.abs(A).max())):
        raise InvalidArgumentError("A must be symmetric")
    if method == "eigen":
        lam, Q = np.linalg.eigh(0.5 * (A + A.T))
        lam_max = lam.max()
        if lam_max <= 0:
            if np.abs(lam).max() < 1e-290:
                return np.zeros_like(A)  # exactly-zero input (degenerate J)
            raise DecompositionError("matrix has no positive eigenvalues")
        lam = np.maximum(lam, EIGEN_CLIP_RATIO * lam_max)
        return np.sqrt(lam)[:, None] * Q.T
    if method == "cholesky":
        try:
            return scipy.linalg.cholesky(0.5 * (A + A.T), lower=False)
        except scipy.linalg.LinAlgError as exc:
            raise DecompositionError(
                "Cholesky failed on a non-positive-definite matrix; "
                "use method='eigen'"
            ) from exc
    raise InvalidArgumentError(f"unknown sqrt method {method!r}")


@dataclass(frozen=True)
class AdjustmentResult:
    """Outputs of the curvature adjustment.

    ``adjusted_unc`` holds the transformed unconstrained draws;
    ``adjusted_con`` / ``unadjusted_con`` hold constrained plus derived
    quantities per draw when a parameter space was supplied. ``deff`` is
    the per-parameter ratio of sandwich to posterior variances.
    """

    theta_bar: np.ndarray
    H_hat: np.ndarray
    J_hat: np.ndarray
    R1: np.ndarray
    R2: np.ndarray
    adjusted_unc: np.ndarray
    deff: np.ndarray
    names: tuple[str, ...]
    draws: DrawsMatrix
    adjusted_con: pd.DataFrame | None = None
    unadjusted_con: pd.DataFrame | None = None
    output_names: tuple[str, ...] = ()
    flags: dict = field(default_factory=dict)


def adjust_draws(draws: DrawsMatrix, H_hat, J_hat, method: str = "eigen",
                 space=None) -> AdjustmentResult:
    """Apply the curvature adjustment to a draws matrix.

    Each draw row is mapped through ``(theta - theta_bar) T + theta_bar``
    with ``T = R2^-1 R1`` computed by triangular/linear solve rather than
    explicit inversion. When ``space`` is given, constrained and derived
    quantities are recomputed per adjusted draw.
    """
    if draws.n_draws < 2:
        raise InsufficientDrawsError("need at least 2 draws to adjust")
    H = np.asarray(H_hat, dtype=float)
    J = np.asarray(J_hat, dtype=float)
    d = draws.n_params
    if H.shape != (d, d) or J.shape != (d, d):
        raise InvalidArgumentError("H and J must be d x d for d parameters")

    lam, Q = np.linalg.eigh(0.5 * (H + H.T))
    lam_max = lam.max()
    if lam_max <= 0:
        raise AdjustmentError("H has no positive eigenvalues; cannot invert")
    clipped = int(np.sum(lam < EIGEN_CLIP_RATIO * lam_max))
    lam = np.maximum(lam, EIGEN_CLIP_RATIO * lam_max)
    cond_H = float(lam_max / lam.min())
    if clipped and cond_H >= 1.0 / EIGEN_CLIP_RATIO:
        warnings.warn(
            f"H required eigenvalue repair ({clipped} of {d}); "
            f"condition number {cond_H:.3e}"
        )
    H_inv = (Q / lam) @ Q.T
    sandwich = H_inv @ J @ H_inv

    R1 = sqrt_spd(sandwich, method)
    R2 = sqrt_spd(H_inv, method)
    try:
        T = scipy.linalg.solve(R2, R1)
    except scipy.linalg.LinAlgError as exc:
        raise AdjustmentError(
            f"R2 is singular (condition number of H: {cond_H:.3e})"
        ) from exc

    theta_bar = draws.values.mean(axis=0)
    centered = draws.values - theta_bar
    adjusted = centered @ T + theta_bar

    var_sandwich = np.diag(sandwich).copy()
    var_post = np.diag(H_inv).copy()
    deff = var_sandwich / var_post
    if np.all(np.abs(J) <= 1e-12 * max(np.abs(H).max(), 1.0)):
        warnings.warn(
            "J is numerically zero (replicate scores constant); "
            "adjusted draws collapse to the posterior mean"
        )

    adjusted_con = unadjusted_con = None
    output_names: tuple[str, ...] = ()
    if space is not None:
        output_names = tuple(space.output_names)
        adjusted_con = pd.DataFrame(
            space.constrain_draws(adjusted), columns=list(output_names)
        )
        unadjusted_con = pd.DataFrame(
            space.constrain_draws(draws.values), columns=list(output_names)
        )

    return AdjustmentResult(
        theta_bar=theta_bar,
        H_hat=H,
        J_hat=J,
        R1=R1,
        R2=R2,
        adjusted_unc=adjusted,
        deff=deff,
        names=draws.names,
        draws=draws,
        adjusted_con=adjusted_con,
        unadjusted_con=unadjusted_con,
        output_names=output_names,
        flags={"cond_H": cond_H, "eigenvalues_clipped": clipped},
    )
