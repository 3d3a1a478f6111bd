"""MAP estimation and whitened pCN posterior sampling.

The MAP under the Laplace prior solves a weighted-l1 logistic regression,

    minimize  -loglik(beta) + sum_q |beta_q| / s_q,

by proximal gradient with optional FISTA momentum.  Posterior sampling runs
preconditioned Crank-Nicolson on a standard-normal latent ``xi`` with
``beta_q = s_q * G(xi_q)`` and ``G`` the normal-to-Laplace quantile
transport, so the proposal is reversible for the prior and only the
likelihood enters the acceptance ratio.
"""

import logging
import math
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse.linalg as spla
from scipy.special import log_ndtr, ndtr, ndtri_exp

from .errors import ConfigurationError, UsageError
from .link import logistic, softplus
from .prior import prior_scales
from .wavelet import CoefficientVector

__all__ = [
    "MapOptions",
    "MapResult",
    "ChainOptions",
    "ChainResult",
    "soft_threshold",
    "map_estimate",
    "whiten",
    "unwhiten",
    "run_pcn",
    "posterior_mean",
]

log = logging.getLogger(__name__)

LOG2 = math.log(2.0)


def soft_threshold(x, t):
    """``sign(x) * max(|x| - t, 0)``; ``|x| == t`` maps to 0."""
    if np.any(np.asarray(t) < 0):
        raise ConfigurationError("threshold must be non-negative", field="t")
    x = np.asarray(x, dtype=float)
    out = np.sign(x) * np.maximum(np.abs(x) - t, 0.0)
    return out if out.ndim else float(out)


@dataclass(frozen=True)
class MapOptions:
    max_iters: int = 5000
    tol: float = 1e-8
    step_policy: str = "backtracking"
    accelerate: bool = True
    kkt_tol: float = 1e-7

    def __post_init__(self):
        if not self.tol > 0:
            raise ConfigurationError(f"MAP tol={self.tol} must be positive", field="tol")
        if self.max_iters < 1:
            raise ConfigurationError("max_iters must be >= 1", field="max_iters")
        if self.step_policy not in ("backtracking", "fixed"):
            raise ConfigurationError(
                f"step policy {self.step_policy!r} not in ('backtracking', 'fixed')",
                field="step_policy",
            )


@dataclass
class MapResult:
    values: np.ndarray
    objective: float
    converged: bool
    iterations: int
    index: np.ndarray
    basis: object = None
    history: list = field(default_factory=list, repr=False)

    @property
    def coefficients(self):
        return _embed(self.values, self.index, self.basis)


def _embed(values, index, basis):
    full = np.zeros(basis.size)
    full[index] = values
    return CoefficientVector(full, basis)


def _scales_for(prior, cache):
    return prior_scales(prior, cache.basis)[cache.index]


class _Target:
    """Log-likelihood and penalty pieces shared by the optimizer and sampler."""

    def __init__(self, dataset, cache, prior):
        self.cache = cache
        self.B = cache.matrix
        self.Bt = cache.matrix_t
        self.y = dataset.Y.astype(float)
        self.n = dataset.n
        self.scales = _scales_for(prior, cache)
        self.family = prior.family

    def loglik(self, beta):
        if self.n == 0:
            return 0.0
        z = self.B @ beta
        return float(self.y @ z - softplus(z).sum())

    def neg_loglik_and_grad(self, beta):
        if self.n == 0:
            return 0.0, np.zeros_like(beta)
        z = self.B @ beta
        f = float(softplus(z).sum() - self.y @ z)
        return f, self.Bt @ (logistic(z) - self.y)

    def penalty(self, beta):
        if self.family == "laplace":
            return float(np.sum(np.abs(beta) / self.scales))
        return float(0.5 * np.sum((beta / self.scales) ** 2))

    def prox(self, v, t):
        if self.family == "laplace":
            return soft_threshold(v, t / self.scales)
        return v / (1.0 + t / self.scales**2)

    def optimality_gap(self, beta, grad):
        """Largest violation of the first-order conditions (``grad`` of -loglik)."""
        if self.family == "gaussian":
            return float(np.max(np.abs(grad + beta / self.scales**2), initial=0.0))
        tau = 1.0 / self.scales
        nz = beta != 0.0
        at_zero = np.maximum(np.abs(grad[~nz]) - tau[~nz], 0.0)
        off_zero = np.abs(grad[nz] + np.sign(beta[nz]) * tau[nz])
        return float(max(np.max(at_zero, initial=0.0), np.max(off_zero, initial=0.0)))

    def log_prior(self, beta):
        if self.family == "laplace":
            return -self.penalty(beta) - float(np.sum(np.log(2.0 * self.scales)))
        return -self.penalty(beta) - float(np.sum(np.log(math.sqrt(2 * math.pi) * self.scales)))

    def gram_bound(self):
        """Largest eigenvalue of ``B^T B``."""
        B = self.B
        if B.shape[0] == 0:
            return 0.0
        if min(B.shape) <= 200:
            dense = B.toarray()
            return float(np.linalg.eigvalsh(dense.T @ dense)[-1])
        op = spla.LinearOperator(
            (B.shape[1], B.shape[1]), matvec=lambda v: self.Bt @ (B @ v), dtype=float
        )
        v0 = np.ones(B.shape[1])
        val = spla.eigsh(op, k=1, which="LA", v0=v0, tol=1e-6, return_eigenvectors=False)
        return float(val[0]) * 1.01


def map_estimate(dataset, cache, prior, opts=None, init=None):
    """Posterior mode under the Laplace (or Gaussian) prior.

    Returns a :class:`MapResult`; ``converged`` is False if ``max_iters``
    was reached first.
    """
    opts = opts or MapOptions()
    tgt = _Target(dataset, cache, prior)
    P = cache.n_cols
    x = np.zeros(P) if init is None else np.array(init, dtype=float)
    if tgt.n == 0 and init is None:
        return MapResult(x, 0.0, True, 0, cache.index, cache.basis)

    lip = tgt.gram_bound() / 4.0
    t = 4.0 / tgt.gram_bound() if lip > 0 else 1.0

    fx, gx = tgt.neg_loglik_and_grad(x)
    Fx = fx + tgt.penalty(x)
    y, fy, gy = x, fx, gx
    momentum = 1.0
    history = [Fx]
    converged = False
    it = 0
    small = 0
    for it in range(1, opts.max_iters + 1):
        while True:
            z = tgt.prox(y - t * gy, t)
            fz, gz = tgt.neg_loglik_and_grad(z)
            if opts.step_policy == "fixed":
                break
            diff = z - y
            if fz <= fy + gy @ diff + (diff @ diff) / (2.0 * t) + 1e-12 * abs(fy):
                break
            t *= 0.5
        Fz = fz + tgt.penalty(z)
        if Fz > Fx and opts.accelerate and y is not x:
            # function-value restart: drop momentum and retry from x
            y, fy, gy = x, fx, gx
            momentum = 1.0
            continue
        rel = abs(Fx - Fz) / max(1.0, abs(Fz))
        if opts.accelerate:
            m_next = 0.5 * (1.0 + math.sqrt(1.0 + 4.0 * momentum**2))
            y = z + ((momentum - 1.0) / m_next) * (z - x)
            momentum = m_next
            fy, gy = tgt.neg_loglik_and_grad(y)
        else:
            y, fy, gy = z, fz, gz
        x, fx, gx, Fx = z, fz, gz, Fz
        history.append(Fx)
        small = small + 1 if rel <= opts.tol else 0
        if small >= 3 and tgt.optimality_gap(x, gx) <= opts.kkt_tol:
            converged = True
            break
    if not converged:
        log.warning("MAP did not converge in %d iterations", opts.max_iters)
    return MapResult(x, Fx, converged, it, cache.index, cache.basis, history)


def _transport(xi):
    """Standard normal to standard Laplace, ``G = F_Laplace^{-1} o Phi``."""
    a = np.abs(xi)
    # log(ndtr) keeps full relative accuracy until ndtr nears underflow
    with np.errstate(divide="ignore"):
        lp = np.log(ndtr(-a))
    far = a > 30.0
    if far.any():
        lp[far] = log_ndtr(-a[far])
    return np.sign(xi) * (-LOG2 - lp)


def _transport_inv(z):
    a = np.abs(z)
    return np.sign(z) * -ndtri_exp(-LOG2 - a)


def _scales_and_family(prior, basis=None, scales=None):
    if scales is None:
        scales = prior_scales(prior, basis)
    return np.asarray(scales, dtype=float), prior.family


def whiten(coeffs, prior, scales=None):
    """Latent Gaussian coordinates ``xi`` of a coefficient vector."""
    basis = coeffs.basis if isinstance(coeffs, CoefficientVector) else None
    values = coeffs.values if isinstance(coeffs, CoefficientVector) else np.asarray(coeffs, float)
    s, fam = _scales_and_family(prior, basis, scales)
    if fam == "gaussian":
        return values / s
    return _transport_inv(values / s)


def unwhiten(xi, prior, basis=None, scales=None):
    """Coefficients ``s * G(xi)``; a :class:`CoefficientVector` when ``basis`` is given."""
    s, fam = _scales_and_family(prior, basis, scales)
    xi = np.asarray(xi, dtype=float)
    values = s * (xi if fam == "gaussian" else _transport(xi))
    if basis is not None and values.ndim == 1:
        return CoefficientVector(values, basis, prior.alpha)
    return values


@dataclass(frozen=True)
class ChainOptions:
    n_iters: int = 50_000
    burn_in: int = 10_000
    thin: int = 10
    step: float = 0.2
    adapt: bool = True
    seed: int = 0
    target_accept: float = 0.3

    def __post_init__(self):
        if not 0.0 < self.step < 1.0:
            raise ConfigurationError(f"pCN step {self.step} must lie in (0, 1)", field="step")
        if not 0 <= self.burn_in < self.n_iters:
            raise ConfigurationError(
                f"burn_in={self.burn_in} must be below n_iters={self.n_iters}", field="burn_in"
            )
        if self.thin < 1:
            raise ConfigurationError("thin must be >= 1", field="thin")
        if not 0.0 < self.target_accept < 1.0:
            raise ConfigurationError("target_accept must lie in (0, 1)", field="target_accept")


@dataclass
class ChainResult:
    draws: np.ndarray
    acceptance_rate: float
    log_posterior: np.ndarray
    step: float
    index: np.ndarray
    basis: object
    all_rejected: bool = False
    init: str = "zero"

    def __len__(self):
        return self.draws.shape[0]

    def draw(self, i):
        return _embed(self.draws[i], self.index, self.basis)

    @property
    def failed(self):
        return self.all_rejected or not np.all(np.isfinite(self.draws))


ADAPT_WINDOW = 50
STEP_BOUNDS = (1e-4, 0.995)


def run_pcn(dataset, cache, prior, opts=None, init=None, map_opts=None):
    """Whitened preconditioned Crank-Nicolson sampler.

    Parameters
    ----------
    init : array-like, "map", "zero" or None
        Starting coefficients.  ``None`` / ``"map"`` starts at the MAP when it
        converges and at zero otherwise.
    """
    opts = opts or ChainOptions()
    tgt = _Target(dataset, cache, prior)
    s = tgt.scales
    P = cache.n_cols
    gaussian = prior.family == "gaussian"

    def to_beta(xi):
        return s * (xi if gaussian else _transport(xi))

    start = "zero"
    if init is None or (isinstance(init, str) and init == "map"):
        xi = np.zeros(P)
        if tgt.n > 0:
            res = map_estimate(dataset, cache, prior, map_opts)
            if res.converged:
                xi = whiten(res.values, prior, scales=s)
                start = "map"
    elif isinstance(init, str) and init == "zero":
        xi = np.zeros(P)
    else:
        xi = whiten(np.asarray(init, dtype=float), prior, scales=s)
        start = "given"

    rng = np.random.default_rng(opts.seed)
    step = opts.step
    rho = math.sqrt(1.0 - step**2)
    beta = to_beta(xi)
    latent, y = cache.latent, tgt.y
    has_data = tgt.n > 0
    ll = tgt.loglik(beta)

    n_keep = len(range(opts.burn_in, opts.n_iters, opts.thin))
    draws = np.empty((n_keep, P))
    trace = np.empty(n_keep)
    kept = 0
    accepted_post = 0
    window_acc = 0
    n_windows = 0
    for it in range(opts.n_iters):
        prop = rho * xi + step * rng.standard_normal(P)
        beta_prop = to_beta(prop)
        if has_data:
            z = latent(beta_prop)
            ll_prop = float(y @ z - softplus(z).sum())
        else:
            ll_prop = 0.0
        log_u = math.log(rng.random())
        if math.isfinite(ll_prop) and log_u < ll_prop - ll:
            xi, beta, ll = prop, beta_prop, ll_prop
            acc = True
        else:
            acc = False
        if it < opts.burn_in:
            if opts.adapt:
                window_acc += acc
                if (it + 1) % ADAPT_WINDOW == 0:
                    n_windows += 1
                    rate = window_acc / ADAPT_WINDOW
                    gain = 2.0 / math.sqrt(n_windows)
                    lo = math.log(step / (1.0 - step)) + gain * (rate - opts.target_accept)
                    step = min(max(1.0 / (1.0 + math.exp(-lo)), STEP_BOUNDS[0]), STEP_BOUNDS[1])
                    rho = math.sqrt(1.0 - step**2)
                    window_acc = 0
            continue
        accepted_post += acc
        if (it - opts.burn_in) % opts.thin == 0:
            draws[kept] = beta
            trace[kept] = ll + tgt.log_prior(beta)
            kept += 1
    n_post = opts.n_iters - opts.burn_in
    rate = accepted_post / n_post
    all_rejected = accepted_post == 0
    if all_rejected:
        log.warning("pCN chain rejected every proposal after burn-in (step=%.3g)", step)
    return ChainResult(draws, rate, trace, step, cache.index, cache.basis, all_rejected, start)


def posterior_mean(chain, basis=None, level=None):
    """Coefficient-wise posterior mean ``W_bar`` and ``f_bar = H(W_bar)`` on a grid.

    ``f_bar`` is the link applied to the synthesized mean latent (not the mean
    of the linked draws), evaluated at the midpoints of the level-``level``
    grid (default: the basis grid).
    """
    if chain is None or len(chain) == 0:
        raise UsageError("posterior mean of an empty chain")
    basis = basis or chain.basis
    w_bar = _embed(chain.draws.mean(axis=0), chain.index, basis)
    pts = basis.grid_points(level)
    f_bar = logistic(basis.design_matrix(pts) @ w_bar.values)
    return w_bar, f_bar
