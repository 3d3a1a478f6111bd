"""Rescaled Besov-Laplace and Gaussian wavelet-series priors.

A draw has coefficients ``s_l * Z_lr`` with ``Z_lr`` iid standard Laplace
(density ``exp(-|z|) / 2``) or standard normal and

    s_l = n**(-d / (2 alpha + d)) * 2**(-l (alpha - d/2)),

constant in ``r`` within a level.  ``n = 1`` gives the non-rescaled prior.
"""

import math
from dataclasses import dataclass

import numpy as np

from .errors import ConfigurationError, DomainError
from .wavelet import CoefficientVector, build_basis

__all__ = [
    "PriorSpec",
    "BesovNormQuery",
    "SmallBallResult",
    "default_truncation",
    "rescaling_factor",
    "contraction_rate",
    "prior_scales",
    "sample_prior",
    "sample_prior_values",
    "laplace_quantile",
    "besov_norm",
    "small_ball_estimate",
    "RegularityResult",
    "draw_regularity",
]

FAMILIES = ("laplace", "gaussian")
MAX_DEFAULT_LEVEL = 12


def default_truncation(n, d=1):
    """``min(ceil(log2(n) / d), 12)``, at least 1."""
    if n <= 1:
        return 1
    return int(max(1, min(math.ceil(math.log2(n) / d), MAX_DEFAULT_LEVEL)))


@dataclass(frozen=True)
class PriorSpec:
    family: str = "laplace"
    alpha: float = 1.5
    d: int = 1
    n: int = 1
    L: int = None

    def __post_init__(self):
        fam = str(self.family).lower()
        if fam not in FAMILIES:
            raise ConfigurationError(
                f"prior family {self.family!r} not in {FAMILIES}", field="family"
            )
        object.__setattr__(self, "family", fam)
        if self.d not in (1, 2):
            raise ConfigurationError(f"dimension d={self.d} not supported", field="d")
        if not self.alpha > self.d:
            raise ConfigurationError(
                f"alpha must exceed d (alpha={self.alpha}, d={self.d}); "
                "the rescaled (alpha - d)-regular prior needs alpha > d",
                field="alpha",
            )
        if int(self.n) != self.n or self.n < 1:
            raise ConfigurationError(f"n={self.n} must be a positive integer", field="n")
        L = default_truncation(self.n, self.d) if self.L is None else self.L
        if int(L) != L or L < 1:
            raise ConfigurationError(f"truncation level L={L} must be >= 1", field="L")
        object.__setattr__(self, "L", int(L))

    def with_n(self, n):
        return PriorSpec(self.family, self.alpha, self.d, n, self.L)


@dataclass(frozen=True)
class BesovNormQuery:
    alpha: float
    p: float = 1.0
    q: float = 1.0
    d: int = 1

    def __post_init__(self):
        if not (self.p >= 1 and self.q >= 1):
            raise ConfigurationError(
                f"Besov exponents need p, q >= 1 (got p={self.p}, q={self.q})", field="p"
            )
        if self.alpha < 0:
            raise ConfigurationError(f"smoothness alpha={self.alpha} must be >= 0", field="alpha")


@dataclass(frozen=True)
class SmallBallResult:
    epsilon: float
    p_hat: float
    stderr: float
    n_mc: int


def rescaling_factor(alpha, d, n):
    """Global prior shrinkage ``n**(-d / (2 alpha + d))``."""
    return float(n) ** (-d / (2.0 * alpha + d))


def contraction_rate(alpha, d, n):
    """Minimax rate ``n**(-alpha / (2 alpha + d))``."""
    return float(n) ** (-alpha / (2.0 * alpha + d))


def _check_basis(spec, basis):
    if basis is None:
        return build_basis("haar", spec.d, spec.L)
    if basis.L != spec.L or basis.d != spec.d:
        raise ConfigurationError(
            f"basis {basis} does not match prior truncation L={spec.L}, d={spec.d}",
            field="L",
        )
    return basis


def prior_scales(spec, basis=None):
    """Per-coefficient prior scales, aligned with the basis index."""
    basis = _check_basis(spec, basis)
    lev = basis.weight_levels.astype(float)
    return rescaling_factor(spec.alpha, spec.d, spec.n) * 2.0 ** (
        -lev * (spec.alpha - spec.d / 2.0)
    )


def sample_prior_values(spec, basis, size=None, rng=None):
    """Raw coefficient draws of shape ``(size, P)`` (or ``(P,)``)."""
    basis = _check_basis(spec, basis)
    rng = np.random.default_rng(rng)
    shape = (basis.size,) if size is None else (size, basis.size)
    if spec.family == "laplace":
        z = rng.laplace(0.0, 1.0, size=shape)
    else:
        z = rng.standard_normal(size=shape)
    return z * prior_scales(spec, basis)


def sample_prior(spec, basis=None, seed=None):
    """One prior draw as a :class:`CoefficientVector`; deterministic given ``seed``."""
    basis = _check_basis(spec, basis)
    return CoefficientVector(sample_prior_values(spec, basis, rng=seed), basis, spec.alpha)


def laplace_quantile(u):
    """Inverse CDF of the standard Laplace law."""
    u = np.asarray(u, dtype=float)
    if not np.all((u > 0.0) & (u < 1.0)):
        raise DomainError("Laplace quantile needs 0 < u < 1", field="u")
    out = np.where(u < 0.5, np.log(2.0 * u), -np.log(2.0 * (1.0 - u)))
    return out if out.ndim else float(out)


def _besov_norm_values(values, weight_levels, d, query, max_level=None):
    values = np.asarray(values, dtype=float)
    top = int(weight_levels.max()) if max_level is None else int(max_level)
    exponent = query.alpha - d / query.p + d / 2.0
    per_level = []
    for l in range(1, top + 1):
        block = np.abs(values[..., weight_levels == l])
        if math.isinf(query.p):
            inner = block.max(axis=-1)
        else:
            inner = (block**query.p).sum(axis=-1) ** (1.0 / query.p)
        per_level.append(2.0 ** (l * exponent) * inner)
    per_level = np.stack(per_level, axis=-1)
    if math.isinf(query.q):
        return per_level.max(axis=-1)
    return (per_level**query.q).sum(axis=-1) ** (1.0 / query.q)


def besov_norm(coeffs, query, max_level=None):
    """Truncated Besov ``B^alpha_{pq}`` norm of a coefficient vector.

    Only levels up to the basis truncation (or ``max_level``) enter the sum;
    the coarse block counts as level 1.  ``coeffs`` may also be a
    ``(values, basis)`` pair with ``values`` of shape ``(..., P)``.
    """
    if isinstance(coeffs, CoefficientVector):
        values, basis = coeffs.values, coeffs.basis
    else:
        values, basis = coeffs
    if query.d != basis.d:
        raise ConfigurationError(f"query d={query.d} != basis d={basis.d}", field="d")
    if max_level is not None and not 1 <= max_level <= basis.L:
        raise ConfigurationError(f"max_level={max_level} outside 1..{basis.L}", field="max_level")
    out = _besov_norm_values(values, basis.weight_levels, basis.d, query, max_level)
    return float(out) if np.ndim(out) == 0 else out


def small_ball_estimate(spec, epsilon, n_mc=10_000, seed=0, basis=None, chunk=2_000):
    """Monte Carlo estimate of ``P(sup_grid |W| <= epsilon)`` for the non-rescaled prior.

    Draws are generated in chunks; chunk ``i`` uses the seed sequence
    ``(seed, i)`` so the estimate does not depend on how chunks are scheduled.
    """
    if not epsilon >= 0:
        raise ConfigurationError(f"epsilon={epsilon} must be >= 0", field="epsilon")
    if n_mc < 1000:
        raise ConfigurationError(f"n_mc={n_mc} must be at least 1000", field="n_mc")
    base = spec.with_n(1)
    basis = _check_basis(base, basis)
    hits = 0
    done = 0
    i = 0
    while done < n_mc:
        m = min(chunk, n_mc - done)
        rng = np.random.default_rng([int(seed), i])
        draws = sample_prior_values(base, basis, size=m, rng=rng)
        grid = basis.synthesis(draws).reshape(m, -1)
        hits += int(np.count_nonzero(np.abs(grid).max(axis=1) <= epsilon))
        done += m
        i += 1
    p = hits / n_mc
    return SmallBallResult(float(epsilon), p, math.sqrt(p * (1.0 - p) / n_mc), int(n_mc))


@dataclass(frozen=True)
class RegularityResult:
    alpha_prime: float
    L_lo: int
    L_hi: int
    median_lo: float
    median_hi: float
    median_rel_change: float
    n_draws: int

    @property
    def growth(self):
        return self.median_hi / self.median_lo


def draw_regularity(spec, alpha_prime, L_lo=8, L_hi=10, n_draws=200, seed=0, family="haar"):
    """Truncated ``B^{alpha'}_{11}`` norms of non-rescaled draws at two truncation levels.

    Each draw is generated at ``L_hi`` and its norm is evaluated with levels up
    to ``L_lo`` and up to ``L_hi``; the relative change is
    ``|N_hi - N_lo| / N_lo`` per draw, summarized by its median.
    """
    if not 1 <= L_lo < L_hi:
        raise ConfigurationError(f"need 1 <= L_lo < L_hi (got {L_lo}, {L_hi})", field="L_lo")
    base = PriorSpec(spec.family, spec.alpha, spec.d, 1, L_hi)
    basis = build_basis(family, spec.d, L_hi)
    draws = sample_prior_values(base, basis, size=n_draws, rng=seed)
    q = BesovNormQuery(alpha_prime, 1, 1, spec.d)
    lo = besov_norm((draws, basis), q, max_level=L_lo)
    hi = besov_norm((draws, basis), q)
    rel = np.abs(hi - lo) / lo
    return RegularityResult(
        float(alpha_prime), L_lo, L_hi, float(np.median(lo)), float(np.median(hi)),
        float(np.median(rel)), int(n_draws),
    )
