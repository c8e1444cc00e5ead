"""NumPy reference implementations of the weighted-likelihood kernels.

These are the fallback backend when the compiled extension is not
available, and the ground truth the compiled kernels are tested against.
Each kernel returns the weighted log-likelihood and its gradient with
respect to the *unconstrained* parameters; prior and Jacobian terms are
added by the model layer.
"""

import numpy as np

LOG_2PI = float(np.log(2.0 * np.pi))


def normal_loglik_grad(X, y, w, beta, sigma):
    """Weighted Gaussian regression log-likelihood and gradient.

    Returns ``(ll, grad)`` where ``grad`` has length ``p + 1``: the first
    ``p`` entries differentiate with respect to the coefficients, the last
    with respect to ``log(sigma)``.
    """
    resid = y - X @ beta
    z2 = (resid / sigma) ** 2
    ll = -0.5 * float(w @ (z2 + LOG_2PI)) - np.log(sigma) * float(np.sum(w))
    grad = np.empty(beta.size + 1)
    grad[:-1] = X.T @ (w * resid) / sigma**2
    grad[-1] = float(w @ (z2 - 1.0))
    return ll, grad


def logit_loglik_grad(X, y, w, beta):
    """Weighted Bernoulli-logit log-likelihood and gradient in ``beta``."""
    mu = X @ beta
    # one exp per row: softplus and expit both from exp(-|mu|)
    emu = np.exp(-np.abs(mu))
    softplus = np.maximum(mu, 0.0) + np.log1p(emu)
    p = np.where(mu >= 0, 1.0 / (1.0 + emu), emu / (1.0 + emu))
    ll = float(w @ (y * mu - softplus))
    grad = X.T @ (w * (y - p))
    return ll, grad
