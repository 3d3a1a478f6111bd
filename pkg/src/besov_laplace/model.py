"""Ground truths, data simulation and the logistic log-likelihood in coefficient space."""

from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigurationError, ShapeError
from .link import log_logistic, logistic, softplus
from .prior import BesovNormQuery, besov_norm
from .wavelet import CoefficientVector, build_basis, synthesize_at

__all__ = [
    "TruthFunction",
    "MuSpec",
    "Dataset",
    "DesignCache",
    "make_truth",
    "simulate",
    "build_cache",
    "log_likelihood",
    "grad_log_likelihood",
    "DEFAULT_SPIKES",
]

# (center, half-width, height) of triangular spikes in the latent surface
DEFAULT_SPIKES = ((0.3, 0.1, 2.0), (0.7, 0.05, -2.0))
TRUTH_NAMES = ("spiky-piecewise-linear", "smooth-bump", "custom-coefficients")
CHECK_LEVEL = {1: 14, 2: 8}


@dataclass(frozen=True, eq=False)
class TruthFunction:
    """A classification surface ``f0 = H(w0)`` bounded inside ``[delta, 1 - delta]``."""

    name: str
    latent: object  # callable: (m, d) points -> (m,) latent values
    d: int = 1
    delta: float = 0.05
    params: dict = field(default_factory=dict)

    def w0(self, points):
        pts = np.asarray(points, dtype=float)
        if pts.ndim == 1:
            pts = pts[:, None] if self.d == 1 else pts[None, :]
        return np.asarray(self.latent(pts), dtype=float)

    def f0(self, points):
        return logistic(self.w0(points))

    def grid(self, level):
        m = 2**level
        t = (np.arange(m) + 0.5) / m
        if self.d == 1:
            return t[:, None]
        x1, x2 = np.meshgrid(t, t, indexing="ij")
        return np.column_stack([x1.ravel(), x2.ravel()])

    def coefficients(self, basis, oversample=4):
        """Wavelet coefficients of ``w0`` in ``basis``.

        Midpoint samples are transformed on a grid ``oversample`` levels finer
        than the basis grid (at least ``2**14`` points per axis for ``d = 1``)
        and the expansion is truncated to the levels of ``basis``.
        """
        fine_level = max(basis.L + oversample, CHECK_LEVEL[self.d] - 1)
        fine = build_basis(basis.wavelet_name, self.d, fine_level)
        samples = self.w0(fine.grid_points()).reshape(fine.grid_shape)
        return CoefficientVector(fine.analysis(samples)[: basis.size], basis)

    def besov_norm(self, alpha, L=10, family="db4"):
        """Truncated ``B^alpha_{11}`` norm of ``w0`` up to level ``L``.

        A smooth wavelet is used by default because Haar coefficients of
        sloped segments do not decay fast enough for ``alpha >= 1``.
        """
        coeffs = self.coefficients(build_basis(family, self.d, L))
        return besov_norm(coeffs, BesovNormQuery(alpha, 1, 1, self.d))


def _spiky(params, d):
    background = float(params.get("background", 0.0))
    spikes = params.get("spikes", DEFAULT_SPIKES)
    spikes = [tuple(s) for s in spikes]
    for s in spikes:
        if len(s) != 3 or s[1] <= 0:
            raise ConfigurationError(
                f"spike {s} must be (center, half_width > 0, height)", field="spikes"
            )

    def latent(pts):
        out = np.full(pts.shape[0], background)
        for center, hw, height in spikes:
            c = np.broadcast_to(np.asarray(center, dtype=float), (d,))
            dist = np.sqrt(((pts - c) ** 2).sum(axis=1))
            out += height * np.maximum(0.0, 1.0 - dist / hw)
        return out

    return latent, {"background": background, "spikes": [list(s) for s in spikes]}


def _bump(params, d):
    background = float(params.get("background", 0.0))
    height = float(params.get("height", 1.0))
    width = float(params.get("width", 0.15))
    center = params.get("center", 0.5)
    if width <= 0:
        raise ConfigurationError(f"bump width {width} must be positive", field="width")

    def latent(pts):
        c = np.broadcast_to(np.asarray(center, dtype=float), (d,))
        r2 = ((pts - c) ** 2).sum(axis=1)
        return background + height * np.exp(-0.5 * r2 / width**2)

    return latent, {"background": background, "height": height, "width": width, "center": center}


def make_truth(name="spiky-piecewise-linear", params=None, d=1):
    """Build a :class:`TruthFunction` and check the clamp on a fine grid.

    Parameters
    ----------
    name : {"spiky-piecewise-linear", "smooth-bump", "custom-coefficients"}
    params : dict
        ``delta`` plus shape controls: ``background`` and ``spikes`` (list of
        ``(center, half_width, height)``) for the spiky truth; ``background``,
        ``height``, ``width``, ``center`` for the bump; ``coefficients`` (a
        :class:`CoefficientVector`) for custom truths.
    """
    params = dict(params or {})
    delta = float(params.pop("delta", 0.05))
    if not 0.0 < delta < 0.5:
        raise ConfigurationError(f"clamp delta={delta} must lie in (0, 1/2)", field="delta")
    if name == "spiky-piecewise-linear":
        latent, resolved = _spiky(params, d)
    elif name == "smooth-bump":
        latent, resolved = _bump(params, d)
    elif name == "custom-coefficients":
        coeffs = params.get("coefficients")
        if not isinstance(coeffs, CoefficientVector):
            raise ConfigurationError(
                "custom-coefficients truth needs a CoefficientVector 'coefficients'",
                field="coefficients",
            )
        d = coeffs.d

        def latent(pts):
            return synthesize_at(coeffs.basis, coeffs, pts)

        resolved = {"basis": repr(coeffs.basis)}
    else:
        raise ConfigurationError(f"unknown truth {name!r}; expected one of {TRUTH_NAMES}", field="truth")
    resolved["delta"] = delta
    truth = TruthFunction(name, latent, d, delta, resolved)
    f = truth.f0(truth.grid(CHECK_LEVEL[d]))
    lo, hi = float(f.min()), float(f.max())
    if lo < delta or hi > 1.0 - delta:
        raise ConfigurationError(
            f"truth f0 ranges over [{lo:.4f}, {hi:.4f}], outside [delta, 1 - delta] "
            f"with delta={delta}",
            field="delta",
        )
    return truth


@dataclass(frozen=True)
class MuSpec:
    """Covariate law: uniform, or piecewise constant on an equal-width cell grid.

    For ``d = 2`` the densities are given as a ``k x k`` nested list.
    """

    kind: str = "uniform"
    densities: tuple = None

    def __post_init__(self):
        if self.kind not in ("uniform", "piecewise"):
            raise ConfigurationError(f"unknown covariate law {self.kind!r}", field="mu")
        if self.kind == "piecewise":
            dens = np.asarray(self.densities, dtype=float)
            if dens.size == 0 or not np.all(np.isfinite(dens)) or dens.min() <= 0:
                raise ConfigurationError(
                    "piecewise density values must be finite and strictly positive",
                    field="mu.densities",
                )
            if dens.ndim == 2 and dens.shape[0] != dens.shape[1]:
                raise ConfigurationError("2-d density grid must be square", field="mu.densities")
            if abs(dens.mean() - 1.0) > 1e-9:
                raise ConfigurationError(
                    f"piecewise density integrates to {dens.mean():.6g}, not 1",
                    field="mu.densities",
                )

    @property
    def bounds(self):
        if self.kind == "uniform":
            return 1.0, 1.0
        dens = np.asarray(self.densities, dtype=float)
        return float(dens.min()), float(dens.max())

    def to_dict(self):
        out = {"kind": self.kind}
        if self.kind == "piecewise":
            out["densities"] = np.asarray(self.densities, dtype=float).tolist()
        return out

    @classmethod
    def from_dict(cls, spec):
        if spec is None or spec == "uniform":
            return cls()
        if isinstance(spec, MuSpec):
            return spec
        dens = spec.get("densities")
        return cls(spec.get("kind", "uniform"), None if dens is None else _as_tuple(dens))

    def sample(self, n, d, rng):
        if self.kind == "uniform":
            return rng.random((n, d))
        dens = np.asarray(self.densities, dtype=float)
        if dens.ndim != d:
            raise ConfigurationError(
                f"density grid has {dens.ndim} axes but d={d}", field="mu.densities"
            )
        k = dens.shape[0]
        if d == 1:
            # exact inverse CDF of the piecewise-linear distribution function
            cdf = np.concatenate([[0.0], np.cumsum(dens) / k])
            u = rng.random(n) * cdf[-1]
            cell = np.clip(np.searchsorted(cdf, u, side="right") - 1, 0, k - 1)
            x = (cell + (u - cdf[cell]) * k / dens[cell]) / k
            return np.clip(x, 0.0, 1.0)[:, None]
        mass = dens.ravel() / dens.sum()
        cell = rng.choice(mass.size, size=n, p=mass)
        i, j = np.divmod(cell, k)
        off = rng.random((n, 2))
        return np.column_stack([(i + off[:, 0]) / k, (j + off[:, 1]) / k])


def _as_tuple(x):
    if isinstance(x, (list, tuple, np.ndarray)):
        return tuple(_as_tuple(v) for v in x)
    return float(x)


@dataclass(frozen=True, eq=False)
class Dataset:
    X: np.ndarray
    Y: np.ndarray
    mu: MuSpec = MuSpec()

    def __post_init__(self):
        X = np.asarray(self.X, dtype=float)
        if X.ndim == 1:
            X = X[:, None]
        Y = np.asarray(self.Y).astype(np.int8)
        if X.shape[0] != Y.shape[0] or Y.ndim != 1:
            raise ShapeError(f"{X.shape[0]} covariates but {Y.shape} labels")
        if X.size and (X.min() < 0.0 or X.max() > 1.0):
            raise ConfigurationError("covariates must lie in the unit cube", field="X")
        if not np.all((Y == 0) | (Y == 1)):
            raise ConfigurationError("labels must be 0 or 1", field="Y")
        X.setflags(write=False)
        Y.setflags(write=False)
        object.__setattr__(self, "X", X)
        object.__setattr__(self, "Y", Y)

    @property
    def n(self):
        return self.Y.shape[0]

    @property
    def d(self):
        return self.X.shape[1]

    @classmethod
    def empty(cls, d=1):
        return cls(np.zeros((0, d)), np.zeros(0, dtype=np.int8))


def simulate(truth, mu=None, n=100, seed=None):
    """Draw ``X_i ~ mu`` and ``Y_i | X_i ~ Bernoulli(f0(X_i))``."""
    mu = MuSpec.from_dict(mu)
    if int(n) != n or n < 1:
        raise ConfigurationError(f"sample size n={n} must be >= 1", field="n")
    rng = np.random.default_rng(seed)
    X = mu.sample(int(n), truth.d, rng)
    Y = (rng.random(int(n)) < truth.f0(X)).astype(np.int8)
    return Dataset(X, Y, mu)


@dataclass(frozen=True, eq=False)
class DesignCache:
    """Sparse basis evaluations ``psi_q(X_i)`` for the active columns ``index``.

    For full one-dimensional bases ``latent`` skips the sparse product: it
    synthesizes the expansion on the evaluation grid with the fast inverse
    transform and reads off (Haar) or linearly interpolates (Daubechies) the
    values at the covariates, which is the same linear map.
    """

    matrix: object
    basis: object
    index: np.ndarray
    points: np.ndarray = None

    @property
    def n_cols(self):
        return self.matrix.shape[1]

    def restrict(self, columns):
        columns = np.asarray(columns, dtype=np.int64)
        return DesignCache(self.matrix[:, columns].tocsr(), self.basis, self.index[columns])

    @property
    def matrix_t(self):
        t = self.__dict__.get("_mt")
        if t is None:
            t = self.matrix.T.tocsr()
            object.__setattr__(self, "_mt", t)
        return t

    @property
    def _grid_map(self):
        gm = self.__dict__.get("_gm", False)
        if gm is False:
            gm = None
            b = self.basis
            full = self.index.size == b.size and np.array_equal(self.index, np.arange(b.size))
            if full and b.d == 1 and self.points is not None and self.points.shape[0] > 0:
                x = self.points[:, 0]
                if b.family == "haar":
                    M = 2**b.grid_level
                    k = np.minimum(np.floor(x * M).astype(np.int64), M - 1)
                    gm = (b.grid_level, k, None, None)
                else:
                    M = 2**b.refine_level
                    t = x * M - 0.5
                    fl = np.floor(t)
                    i0 = fl.astype(np.int64) % M
                    gm = (b.refine_level, i0, (i0 + 1) % M, t - fl)
            object.__setattr__(self, "_gm", gm)
        return gm

    def latent(self, values):
        """Latent values ``w(X_i)`` for coefficient values on the active columns."""
        gm = self._grid_map
        if gm is None:
            return self.matrix @ values
        level, i0, i1, theta = gm
        grid = self.basis.synthesis(values, level)
        if i1 is None:
            return grid[i0]
        return grid[i0] + theta * (grid[i1] - grid[i0])


def build_cache(basis, dataset, columns=None):
    mat = basis.design_matrix(dataset.X) if dataset.n else _empty_design(basis)
    cache = DesignCache(mat, basis, np.arange(basis.size), dataset.X)
    return cache if columns is None else cache.restrict(columns)


def _empty_design(basis):
    import scipy.sparse as sp

    return sp.csr_matrix((0, basis.size))


def _values(coeffs, cache):
    v = coeffs.values if isinstance(coeffs, CoefficientVector) else np.asarray(coeffs, dtype=float)
    if isinstance(coeffs, CoefficientVector) and cache.n_cols != coeffs.basis.size:
        v = v[cache.index]
    if v.shape != (cache.n_cols,):
        raise ShapeError(f"coefficient length {v.shape} != design width {cache.n_cols}")
    return v


def loglik_latent(z, y):
    """Bernoulli-logistic log-likelihood at latent values ``z``."""
    return float(np.dot(y, z) - softplus(z).sum())


def log_likelihood(coeffs, cache, dataset):
    """``sum_i Y_i log H(w(X_i)) + (1 - Y_i) log(1 - H(w(X_i)))``."""
    if dataset.n == 0:
        return 0.0
    z = cache.latent(_values(coeffs, cache))
    y = dataset.Y
    return float(np.sum(np.where(y == 1, log_logistic(z), log_logistic(-z))))


def grad_log_likelihood(coeffs, cache, dataset):
    """Score ``sum_i (Y_i - H(w(X_i))) psi_lr(X_i)`` as a :class:`CoefficientVector`.

    Components outside the active columns of ``cache`` are zero.
    """
    full = np.zeros(cache.basis.size)
    if dataset.n:
        z = cache.matrix @ _values(coeffs, cache)
        full[cache.index] = cache.matrix_t @ (dataset.Y - logistic(z))
    return CoefficientVector(full, cache.basis)
