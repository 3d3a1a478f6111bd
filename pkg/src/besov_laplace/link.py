"""Logistic link and its inverse."""

import numpy as np

from .errors import DomainError

__all__ = ["logistic", "logit", "log_logistic", "softplus"]


def logistic(z):
    """Overflow-safe ``exp(z) / (1 + exp(z))``."""
    z = np.asarray(z, dtype=float)
    out = np.empty_like(z)
    pos = z >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-z[pos]))
    ez = np.exp(z[~pos])
    out[~pos] = ez / (1.0 + ez)
    return out if out.ndim else float(out)


def logit(f):
    """Inverse of :func:`logistic`; ``f`` must lie strictly inside (0, 1)."""
    f = np.asarray(f, dtype=float)
    if not np.all((f > 0.0) & (f < 1.0)):
        raise DomainError(
            "logit needs probabilities strictly inside (0, 1); the surface touches 0 or 1",
            field="f",
        )
    out = np.log(f) - np.log1p(-f)
    return out if out.ndim else float(out)


def softplus(z):
    """``log(1 + exp(z))`` without overflow."""
    z = np.asarray(z, dtype=float)
    return np.maximum(z, 0.0) + np.log1p(np.exp(-np.abs(z)))


def log_logistic(z):
    """``log H(z) = -log(1 + exp(-z))``."""
    return -np.logaddexp(0.0, -np.asarray(z, dtype=float))
