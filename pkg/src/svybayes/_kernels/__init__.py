"""Weighted-likelihood kernels with backend selection at import time.

The compiled Cython extension is preferred when present; otherwise the
NumPy reference implementation is used. Set ``SVYBAYES_PURE_PYTHON=1`` to
force the fallback (useful for debugging and benchmarking).
"""

import os

from . import _ref

BACKEND = "python"

if os.environ.get("SVYBAYES_PURE_PYTHON", "").strip() in ("", "0"):
    try:
        from ._core import logit_loglik_grad, normal_loglik_grad

        BACKEND = "compiled"
    except ImportError:
        from ._ref import logit_loglik_grad, normal_loglik_grad
else:
    from ._ref import logit_loglik_grad, normal_loglik_grad


def backend_info() -> str:
    """Human-readable description of the active kernel backend."""
    return f"svybayes kernels: {BACKEND}"


__all__ = ["BACKEND", "backend_info", "logit_loglik_grad", "normal_loglik_grad", "_ref"]
