"""MCMC sampling on the unconstrained log pseudo-posterior.

The default sampler is Hamiltonian Monte Carlo with a jittered number of
leapfrog steps: the step size is tuned during warmup by dual averaging
(target acceptance 0.8) and a diagonal mass matrix is estimated from the
middle of the warmup phase. An adaptive random-walk Metropolis sampler is
available as a robustness fallback (``algorithm="rwm"``).

Chains derive independent substreams from the seed, so results are
bit-reproducible and chain order does not matter.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import pandas as pd
from scipy.special import ndtri
from scipy.stats import rankdata

from .errors import (
    InitializationError,
    InsufficientDrawsError,
    InvalidArgumentError,
    NumericalError,
)

__all__ = [
    "SamplerControl",
    "DrawsMatrix",
    "sample_pseudo_posterior",
    "mcmc_diagnostics",
]


@dataclass
class SamplerControl:
    """Chain and adaptation settings.

    ``iter`` counts total iterations per chain including ``warmup``;
    post-warmup draws are thinned by ``thin``. ``max_leapfrog`` bounds the
    jittered leapfrog trajectory length (each iteration draws a length
    uniformly from 1..max_leapfrog).
    """

    chains: int = 1
    iter: int = 2000
    warmup: int = 1000
    thin: int = 1
    seed: int | None = None
    algorithm: str = "hmc"
    target_accept: float = 0.8
    init_step_size: float | None = None
    max_leapfrog: int = 32
    init: tuple[float, ...] | None = None
    init_jitter: float = 1.0
    adapt_mass: bool = True

    def __post_init__(self):
        if self.chains < 1 or self.iter < 1 or self.thin < 1:
            raise InvalidArgumentError("chains, iter and thin must be positive")
        if not 0 <= self.warmup < self.iter:
            raise InvalidArgumentError("warmup must satisfy 0 <= warmup < iter")
        if self.algorithm not in ("hmc", "rwm"):
            raise InvalidArgumentError(f"unknown algorithm {self.algorithm!r}")
        if not 0 < self.target_accept < 1:
            raise InvalidArgumentError("target_accept must be in (0, 1)")
        if self.max_leapfrog < 1:
            raise InvalidArgumentError("max_leapfrog must be >= 1")

    @property
    def draws_per_chain(self) -> int:
        return len(range(self.warmup, self.iter, self.thin))


@dataclass(frozen=True)
class DrawsMatrix:
    """Post-warmup, thinned unconstrained draws (M x d) with labels."""

    values: np.ndarray
    names: tuple[str, ...]
    chain_id: np.ndarray
    stats: dict = field(default_factory=dict)

    def __post_init__(self):
        v = np.asarray(self.values, dtype=float)
        if v.ndim != 2 or v.shape[1] != len(self.names):
            raise InvalidArgumentError("values must be M x d matching names")
        if not np.all(np.isfinite(v)):
            raise NumericalError("draws contain non-finite values")
        object.__setattr__(self, "values", v)
        object.__setattr__(self, "names", tuple(self.names))
        cid = np.asarray(self.chain_id, dtype=int)
        if cid.shape != (v.shape[0],):
            raise InvalidArgumentError("chain_id must have one entry per draw")
        object.__setattr__(self, "chain_id", cid)

    @property
    def n_draws(self) -> int:
        return self.values.shape[0]

    @property
    def n_params(self) -> int:
        return self.values.shape[1]

    def to_frame(self) -> pd.DataFrame:
        df = pd.DataFrame(self.values, columns=list(self.names))
        df.insert(0, "chain", self.chain_id)
        return df


def _checked_logp_grad(family, theta, where):
    logp, grad = family.logp_and_grad(theta)
    if np.isfinite(logp) and not np.all(np.isfinite(grad)):
        raise NumericalError(f"non-finite gradient during {where} at theta={theta}")
    return logp, grad


def _find_initial_point(family, ctrl, rng):
    if ctrl.init is not None:
        base = np.asarray(ctrl.init, dtype=float)
        if base.shape != (family.n_params,):
            raise InvalidArgumentError(
                f"init must have {family.n_params} values, got {base.size}"
            )
    else:
        base = np.asarray(family.default_init(), dtype=float)
    jitter = ctrl.init_jitter
    for _attempt in range(100):
        theta = base + jitter * rng.uniform(-1, 1, base.size)
        logp, grad = family.logp_and_grad(theta)
        if np.isfinite(logp) and np.all(np.isfinite(grad)):
            return theta, logp, grad
    raise InitializationError(
        "no finite initial log density after 100 jitter attempts"
    )


def _leapfrog(family, theta, rho, grad, eps, n_steps, inv_metric):
    """Returns (theta, rho, logp, grad) or None on a divergent trajectory."""
    rho = rho + 0.5 * eps * grad
    for step in range(n_steps):
        theta = theta + eps * inv_metric * rho
        logp, grad = family.logp_and_grad(theta)
        if not np.isfinite(logp):
            return None
        if not np.all(np.isfinite(grad)):
            raise NumericalError(
                f"non-finite gradient during integration at theta={theta}"
            )
        rho = rho + (eps if step < n_steps - 1 else 0.5 * eps) * grad
    return theta, rho, logp, grad


def _kinetic(rho, inv_metric):
    return 0.5 * float(rho @ (inv_metric * rho))


def _find_reasonable_step_size(family, theta, logp, grad, rng, inv_metric):
    eps = 1.0
    rho = rng.normal(0.0, np.sqrt(1.0 / inv_metric))
    h0 = logp - _kinetic(rho, inv_metric)

    def accept_prob(eps):
        out = _leapfrog(family, theta, rho, grad, eps, 1, inv_metric)
        if out is None:
            return 0.0
        _, rho1, logp1, _ = out
        return float(np.exp(min(0.0, logp1 - _kinetic(rho1, inv_metric) - h0)))

    alpha = accept_prob(eps)
    while alpha == 0.0 and eps > 1e-10:
        eps *= 0.5
        alpha = accept_prob(eps)
    direction = 1.0 if alpha > 0.5 else -1.0
    for _ in range(50):
        eps_next = eps * 2.0**direction
        if not 1e-10 < eps_next < 1e6:
            break
        alpha = accept_prob(eps_next)
        if (direction > 0 and alpha <= 0.5) or (direction < 0 and alpha >= 0.5):
            break
        eps = eps_next
    return eps


class _DualAveraging:
    """Nesterov dual averaging on log step size (gamma=0.05, t0=10,
    kappa=0.75)."""

    def __init__(self, eps0, target):
        self.mu = np.log(10.0 * eps0)
        self.target = target
        self.log_eps = np.log(eps0)
        self.log_eps_bar = np.log(eps0)
        self.h_bar = 0.0
        self.t = 0

    def update(self, accept_prob):
        self.t += 1
        frac = 1.0 / (self.t + 10.0)
        self.h_bar = (1 - frac) * self.h_bar + frac * (self.target - accept_prob)
        self.log_eps = self.mu - np.sqrt(self.t) / 0.05 * self.h_bar
        eta = self.t**-0.75
        self.log_eps_bar = eta * self.log_eps + (1 - eta) * self.log_eps_bar
        return float(np.exp(self.log_eps))

    @property
    def adapted(self) -> float:
        return float(np.exp(self.log_eps_bar))


def _regularized_variance(draws):
    n = draws.shape[0]
    var = draws.var(axis=0, ddof=1) if n > 1 else np.ones(draws.shape[1])
    var = (n / (n + 5.0)) * var + 1e-3 * (5.0 / (n + 5.0))
    return np.maximum(var, 1e-10)


def _run_hmc_chain(family, ctrl, rng):
    d = family.n_params
    theta, logp, grad = _find_initial_point(family, ctrl, rng)
    inv_metric = np.ones(d)
    eps = ctrl.init_step_size or _find_reasonable_step_size(
        family, theta, logp, grad, rng, inv_metric
    )
    da = _DualAveraging(eps, ctrl.target_accept)

    warmup = ctrl.warmup
    # middle window of warmup used to estimate the diagonal mass matrix
    use_mass = ctrl.adapt_mass and warmup >= 200
    win_lo, win_hi = int(0.3 * warmup), int(0.8 * warmup)
    window = []

    kept = np.empty((ctrl.draws_per_chain, d))
    kept_i = 0
    accept_sum, accept_n = 0.0, 0
    divergences = 0

    for it in range(ctrl.iter):
        rho = rng.normal(0.0, np.sqrt(1.0 / inv_metric))
        n_steps = int(rng.integers(1, ctrl.max_leapfrog + 1))
        h0 = logp - _kinetic(rho, inv_metric)
        out = _leapfrog(family, theta, rho, grad, eps, n_steps, inv_metric)
        if out is None:
            alpha = 0.0
            divergences += 1
        else:
            theta_new, rho_new, logp_new, grad_new = out
            h1 = logp_new - _kinetic(rho_new, inv_metric)
            alpha = float(np.exp(min(0.0, h1 - h0)))
            if rng.uniform() < alpha:
                theta, logp, grad = theta_new, logp_new, grad_new

        if it < warmup:
            eps = da.update(alpha)
            if use_mass and win_lo <= it < win_hi:
                window.append(theta.copy())
            if use_mass and it == win_hi - 1:
                inv_metric = _regularized_variance(np.asarray(window))
                eps = _find_reasonable_step_size(
                    family, theta, logp, grad, rng, inv_metric
                )
                da = _DualAveraging(eps, ctrl.target_accept)
            if it == warmup - 1:
                eps = da.adapted
        else:
            accept_sum += alpha
            accept_n += 1
            if (it - warmup) % ctrl.thin == 0:
                kept[kept_i] = theta
                kept_i += 1

    stats = {
        "accept_rate": accept_sum / max(accept_n, 1),
        "step_size": eps,
        "divergences": divergences,
        "inv_metric": inv_metric,
    }
    return kept, stats


def _run_rwm_chain(family, ctrl, rng):
    d = family.n_params
    theta, logp, _ = _find_initial_point(family, ctrl, rng)
    scale = 2.38 / np.sqrt(d)
    chol = np.eye(d)
    mean = theta.copy()
    cov = np.eye(d)
    count = 1

    kept = np.empty((ctrl.draws_per_chain, d))
    kept_i = 0
    accept_sum, accept_n = 0.0, 0

    for it in range(ctrl.iter):
        prop = theta + scale * (chol @ rng.normal(size=d))
        logp_prop = family.log_density(prop)
        alpha = float(np.exp(min(0.0, logp_prop - logp))) if np.isfinite(logp_prop) else 0.0
        if rng.uniform() < alpha:
            theta, logp = prop, logp_prop

        if it < ctrl.warmup:
            # running covariance plus Robbins-Monro scale tuning
            count += 1
            delta = theta - mean
            mean = mean + delta / count
            cov = cov + (np.outer(delta, theta - mean) - cov) / count
            scale *= np.exp((alpha - 0.3) / (it + 1) ** 0.6)
            if it % 50 == 49:
                try:
                    chol = np.linalg.cholesky(cov + 1e-9 * np.eye(d))
                except np.linalg.LinAlgError:
                    chol = np.eye(d)
        else:
            accept_sum += alpha
            accept_n += 1
            if (it - ctrl.warmup) % ctrl.thin == 0:
                kept[kept_i] = theta
                kept_i += 1

    stats = {"accept_rate": accept_sum / max(accept_n, 1), "step_size": scale}
    return kept, stats


def sample_pseudo_posterior(family, ctrl: SamplerControl) -> DrawsMatrix:
    """Draw MCMC samples whose stationary distribution is the weighted
    pseudo-posterior of ``family``.

    Deterministic given ``ctrl.seed``; warmup draws are discarded and
    per-chain acceptance statistics are attached to the result.
    """
    if ctrl.seed is None:
        raise InvalidArgumentError("a seed is required for sampling")
    runner = _run_hmc_chain if ctrl.algorithm == "hmc" else _run_rwm_chain
    streams = np.random.SeedSequence(ctrl.seed).spawn(ctrl.chains)
    blocks, chain_ids, chain_stats = [], [], []
    for c in range(ctrl.chains):
        draws, stats = runner(family, ctrl, np.random.default_rng(streams[c]))
        blocks.append(draws)
        chain_ids.append(np.full(draws.shape[0], c))
        chain_stats.append(stats)
    values = np.vstack(blocks)
    names = tuple(family.space.unconstrained_names)
    return DrawsMatrix(
        values=values,
        names=names,
        chain_id=np.concatenate(chain_ids),
        stats={"chains": chain_stats, "algorithm": ctrl.algorithm},
    )


def _split_chains(draws: DrawsMatrix):
    """Each chain split in half; drops one draw from odd-length chains."""
    out = []
    for c in np.unique(draws.chain_id):
        vals = draws.values[draws.chain_id == c]
        m = vals.shape[0]
        half = m // 2
        if half < 1:
            raise InsufficientDrawsError("chains too short to split")
        out.append(vals[m - 2 * half : m - half])
        out.append(vals[m - half :])
    return np.stack(out)  # (n_seq, len, d)


def _rank_normalize(x):
    r = rankdata(x.reshape(-1)).reshape(x.shape)
    return ndtri((r - 0.375) / (x.size + 0.25))


def _split_rhat(seqs):
    n_seq, length, _ = seqs.shape
    means = seqs.mean(axis=1)
    vars_ = seqs.var(axis=1, ddof=1)
    W = vars_.mean(axis=0)
    B = length * means.var(axis=0, ddof=1)
    var_plus = W * (length - 1) / length + B / length
    with np.errstate(divide="ignore", invalid="ignore"):
        return np.sqrt(var_plus / W)


def _autocov(x):
    """Autocovariance by FFT, biased normalization (divides by n)."""
    n = x.size
    xc = x - x.mean()
    size = int(2 ** np.ceil(np.log2(2 * n)))
    f = np.fft.rfft(xc, size)
    acov = np.fft.irfft(f * np.conjugate(f), size)[:n].real
    return acov / n


def _ess_param(seqs_1d):
    """Effective sample size for one parameter across split chains.

    Combined autocorrelations are summed in adjacent pairs and the sum is
    truncated at the first negative pair (Geyer's initial positive
    sequence).
    """
    n_seq, length = seqs_1d.shape
    acovs = np.stack([_autocov(s) for s in seqs_1d])
    chain_vars = seqs_1d.var(axis=1, ddof=1)
    W = chain_vars.mean()
    mean_acov = acovs.mean(axis=0)
    var_plus = W * (length - 1) / length
    if n_seq > 1:
        var_plus += seqs_1d.mean(axis=1).var(ddof=1)
    if var_plus <= 0:
        return np.nan
    rho = 1.0 - (W - mean_acov) / var_plus
    rho[0] = 1.0
    # sum adjacent pairs (rho_2m + rho_2m+1), truncated at the first
    # negative pair, pairs forced nonincreasing
    pair_sum = 0.0
    prev = np.inf
    for t in range(0, length - 1, 2):
        pair = rho[t] + rho[t + 1]
        if pair < 0:
            break
        pair = min(pair, prev)
        pair_sum += pair
        prev = pair
    tau = max(2.0 * pair_sum - 1.0, 1.0 / np.log10(max(n_seq * length, 10)))
    return float(n_seq * length / tau)


def mcmc_diagnostics(draws: DrawsMatrix) -> pd.DataFrame:
    """Per-parameter split-Rhat (rank normalized) and effective sample size.

    Returns a frame indexed by parameter name with columns ``rhat``,
    ``ess`` and ``degenerate``. Zero-variance parameters are flagged
    degenerate instead of producing errors.
    """
    if draws.n_draws < 4:
        raise InsufficientDrawsError("need at least 4 draws for diagnostics")
    seqs = _split_chains(draws)
    d = draws.n_params
    rhat = np.full(d, np.nan)
    ess = np.full(d, np.nan)
    degenerate = np.zeros(d, dtype=bool)
    for j in range(d):
        s = seqs[:, :, j]
        pooled_var = s.var()
        if pooled_var == 0:
            degenerate[j] = True
            continue
        if np.all(s.var(axis=1) == 0):
            # constant within every chain but not across chains
            degenerate[j] = True
            rhat[j] = np.inf
            continue
        z = _rank_normalize(s)
        rhat[j] = _split_rhat(z[:, :, None])[0]
        ess[j] = _ess_param(s)
    return pd.DataFrame(
        {"rhat": rhat, "ess": ess, "degenerate": degenerate},
        index=list(draws.names),
    )
