"""Orthonormal wavelet bases on the unit cube and their transforms.

Index convention
----------------
A basis truncated at level ``L`` lives on a dyadic grid with ``2**(L+1)``
points per axis and is a complete orthonormal system there.  Its elements
are grouped as

* a *coarse block* (label ``l = 0``) holding the scaling function and the
  coarsest wavelets, ``2**d`` elements in total.  For prior weights and
  Besov norms the coarse block is treated as part of level 1;
* wavelet levels ``l = 1..L``; level ``l`` holds the wavelets of support
  width ``2**-l``: ``2**l`` of them for ``d = 1`` and ``3 * 4**l`` (three
  orientations folded into ``r``) for ``d = 2``.

Positions ``r`` are 1-based within each level.  Grid values are taken at
cell midpoints ``(i + 1/2) / 2**J``.

Haar functions are evaluated in closed form.  Daubechies functions are
periodized; pointwise values come from the cascade (dyadic refinement) at
resolution ``2**R`` with ``R = max(14, L + 1)`` and linear interpolation
between refinement nodes.
"""

import warnings
from dataclasses import dataclass
from functools import cached_property

import numpy as np
import pywt
import scipy.sparse as sp

from .errors import ConfigurationError, DomainError, ShapeError

__all__ = [
    "WaveletBasis",
    "CoefficientVector",
    "build_basis",
    "evaluate_basis",
    "forward_transform",
    "inverse_transform",
    "synthesize_at",
]

MIN_REFINE_LEVEL = 14
FAMILIES = ("haar", "daubechies")


def _pywt_quiet(fn, *args, **kwargs):
    # pywt warns when the level exceeds the filter-length bound; with
    # periodization the transform is still exactly orthogonal.
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", UserWarning)
        return fn(*args, **kwargs)


class WaveletBasis:
    """Truncated orthonormal wavelet basis on ``[0, 1]**d``.

    Parameters
    ----------
    family : {"haar", "daubechies"}
    d : int
        Dimension, 1 or 2.
    L : int
        Finest wavelet level kept.
    order : int, optional
        Number of vanishing moments for the Daubechies family (``>= 2``).
    """

    def __init__(self, family="haar", d=1, L=8, order=None):
        family = str(family).lower()
        if family not in FAMILIES:
            raise ConfigurationError(
                f"unsupported wavelet family {family!r}; expected one of {FAMILIES}",
                field="family",
            )
        if d not in (1, 2):
            raise ConfigurationError(f"dimension d={d} not supported; use 1 or 2", field="d")
        if int(L) != L or L < 1:
            raise ConfigurationError(f"truncation level L={L} must be a positive integer", field="L")
        if family == "haar":
            order = 1
        else:
            order = 4 if order is None else int(order)
            if order < 2:
                raise ConfigurationError(
                    f"Daubechies order must be >= 2, got {order}", field="order"
                )
        self.family = family
        self.d = int(d)
        self.L = int(L)
        self.order = order
        self.grid_level = self.L + 1
        self.refine_level = max(MIN_REFINE_LEVEL, self.grid_level)
        self._build_index()

    def __repr__(self):
        name = "haar" if self.family == "haar" else f"daubechies-{self.order}"
        return f"WaveletBasis({name}, d={self.d}, L={self.L})"

    def __eq__(self, other):
        if not isinstance(other, WaveletBasis):
            return NotImplemented
        return self.key == other.key

    def __hash__(self):
        return hash(self.key)

    def __getstate__(self):
        return {"family": self.family, "d": self.d, "L": self.L, "order": self.order}

    def __setstate__(self, state):
        self.__init__(**state)

    @property
    def key(self):
        return (self.family, self.d, self.L, self.order)

    @property
    def wavelet_name(self):
        return "haar" if self.family == "haar" else f"db{self.order}"

    @property
    def grid_shape(self):
        return (2**self.grid_level,) * self.d

    @property
    def grid_size(self):
        return 2 ** (self.grid_level * self.d)

    @property
    def size(self):
        """Total number of basis elements (coarse block included)."""
        return self.grid_size

    @property
    def n_coarse(self):
        return 2**self.d

    @property
    def n_wavelets(self):
        """Number of elements at levels ``1..L``."""
        return self.size - self.n_coarse

    def level_count(self, l):
        if l == 0:
            return self.n_coarse
        return 2**l if self.d == 1 else 3 * 4**l

    def _build_index(self):
        labels, positions = [], []
        self._level_slices = {}
        start = 0
        for l in range(0, self.L + 1):
            m = self.level_count(l)
            self._level_slices[l] = slice(start, start + m)
            labels.append(np.full(m, l))
            positions.append(np.arange(1, m + 1))
            start += m
        self.labels = np.concatenate(labels)
        self.positions = np.concatenate(positions)
        # coarse block shares the level-1 weight
        self.weight_levels = np.maximum(self.labels, 1)
        for arr in (self.labels, self.positions, self.weight_levels):
            arr.setflags(write=False)

    def level_slice(self, l):
        if l not in self._level_slices:
            raise DomainError(f"level l={l} outside 0..{self.L}", field="l")
        return self._level_slices[l]

    def flat_index(self, l, r):
        sl = self.level_slice(l)
        m = sl.stop - sl.start
        if not 1 <= r <= m:
            raise DomainError(f"position r={r} outside 1..{m} at level {l}", field="r")
        return sl.start + r - 1

    def grid_points(self, level=None):
        """Cell midpoints of the dyadic grid at ``level`` (default: the basis grid).

        Returns an array of shape ``(2**(level*d), d)``; for ``d = 2`` the
        first coordinate varies slowest.
        """
        level = self.grid_level if level is None else int(level)
        m = 2**level
        t = (np.arange(m) + 0.5) / m
        if self.d == 1:
            return t[:, None]
        x1, x2 = np.meshgrid(t, t, indexing="ij")
        return np.column_stack([x1.ravel(), x2.ravel()])

    # -- flat vector <-> pywt coefficient lists -------------------------------

    def _to_pywt(self, flat, extra_levels=0):
        flat = np.asarray(flat, dtype=float)
        lead = flat.shape[:-1]
        out = []
        if self.d == 1:
            out.append(flat[..., 0:1])
            out.append(flat[..., 1:2])
            for l in range(1, self.L + 1):
                out.append(flat[..., self.level_slice(l)])
            for l in range(self.L + 1, self.L + 1 + extra_levels):
                out.append(np.zeros(lead + (2**l,)))
            return out
        out.append(flat[..., 0:1].reshape(lead + (1, 1)))
        out.append(tuple(flat[..., i : i + 1].reshape(lead + (1, 1)) for i in (1, 2, 3)))
        for l in range(1, self.L + 1):
            blk = flat[..., self.level_slice(l)]
            m = 4**l
            out.append(
                tuple(blk[..., o * m : (o + 1) * m].reshape(lead + (2**l, 2**l)) for o in range(3))
            )
        for l in range(self.L + 1, self.L + 1 + extra_levels):
            z = np.zeros(lead + (2**l, 2**l))
            out.append((z, z, z))
        return out

    def _from_pywt(self, coeffs):
        if self.d == 1:
            return np.concatenate(coeffs, axis=-1)
        lead = coeffs[0].shape[:-2]
        parts = [coeffs[0].reshape(lead + (-1,))]
        for detail in coeffs[1:]:
            parts.extend(c.reshape(lead + (-1,)) for c in detail)
        return np.concatenate(parts, axis=-1)

    def analysis(self, samples):
        """Batched forward transform: grid samples ``(..., *grid_shape)`` to ``(..., size)``."""
        samples = np.asarray(samples, dtype=float)
        if samples.shape[samples.ndim - self.d :] != self.grid_shape:
            raise ShapeError(
                f"samples of shape {samples.shape} do not end with grid shape {self.grid_shape}"
            )
        if self.d == 1:
            c = _pywt_quiet(
                pywt.wavedec, samples, self.wavelet_name, mode="periodization",
                level=self.grid_level, axis=-1,
            )
        else:
            c = _pywt_quiet(
                pywt.wavedec2, samples, self.wavelet_name, mode="periodization",
                level=self.grid_level, axes=(-2, -1),
            )
        return self._from_pywt(c) / np.sqrt(self.grid_size)

    def synthesis(self, flat, level=None):
        """Batched inverse transform onto the grid at ``level >= L + 1``."""
        level = self.grid_level if level is None else int(level)
        if level < self.grid_level:
            raise ShapeError(
                f"grid level {level} is coarser than the basis grid level {self.grid_level}"
            )
        flat = np.asarray(flat, dtype=float)
        if flat.shape[-1] != self.size:
            raise ShapeError(f"coefficient length {flat.shape[-1]} != basis size {self.size}")
        c = self._to_pywt(flat, extra_levels=level - self.grid_level)
        if self.d == 1:
            out = _pywt_quiet(pywt.waverec, c, self.wavelet_name, mode="periodization", axis=-1)
        else:
            out = _pywt_quiet(
                pywt.waverec2, c, self.wavelet_name, mode="periodization", axes=(-2, -1)
            )
        return out * np.sqrt(2 ** (level * self.d))

    # -- pointwise evaluation --------------------------------------------------

    @cached_property
    def _templates(self):
        """Cascade values of the k = 0 scaling function / wavelet per level."""
        R = self.refine_level
        M = 2**R
        out = {}
        for j in range(0, self.L + 1):
            for kind in ("phi", "psi"):
                if kind == "phi":
                    c = [np.zeros(2**j)] + [np.zeros(2**i) for i in range(j, R)]
                    c[0][0] = 1.0
                else:
                    c = [np.zeros(2**j), np.zeros(2**j)] + [np.zeros(2**i) for i in range(j + 1, R)]
                    c[1][0] = 1.0
                t = _pywt_quiet(pywt.waverec, c, self.wavelet_name, mode="periodization")
                t = t * np.sqrt(M)
                nz = np.flatnonzero(t != 0.0)
                if nz.size == M:
                    a, w = 0, M
                else:
                    z0 = int(np.flatnonzero(t == 0.0)[0])
                    p = (nz - z0) % M
                    a, w = (z0 + int(p.min())) % M, int(p.max() - p.min()) + 1
                out[kind, j] = (t, a, w)
        return out

    def _eval_1d(self, kind, j, x):
        """Values of the level-``j`` functions at points ``x``.

        Returns ``(k, v)`` of shape ``(m, c)``: candidate translations and
        function values (zeros allowed).
        """
        nk = 2**j
        if self.family == "haar":
            s = x * nk
            k = np.minimum(np.floor(s).astype(np.int64), nk - 1)
            amp = 2.0 ** (j / 2)
            if kind == "phi":
                v = np.full(x.shape, amp)
            else:
                v = np.where(s - k < 0.5, amp, -amp)
            return k[:, None], v[:, None]
        t_vals, a, w = self._templates[kind, j]
        M = t_vals.size
        step = M // nk
        t = x * M - 0.5
        fl = np.floor(t)
        theta = (t - fl)[:, None]
        i0 = fl.astype(np.int64) % M
        v0 = (i0 - a + 1) % M
        k0 = v0 // step
        ncand = min(w // step + 1, nk)
        k = (k0[:, None] - np.arange(ncand)[None, :]) % nk
        u = (i0[:, None] - k * step) % M
        vals = (1.0 - theta) * t_vals[u] + theta * t_vals[(u + 1) % M]
        return k, vals

    def design_matrix(self, points):
        """Sparse matrix ``B[i, q] = psi_q(points[i])`` in CSR form."""
        pts = _as_points(points, self.d)
        m = pts.shape[0]
        rows, cols, vals = [], [], []
        if self.d == 1:
            x = pts[:, 0]
            blocks = [("phi", 0, 0), ("psi", 0, 1)]
            blocks += [("psi", j, 2**j) for j in range(1, self.L + 1)]
            for kind, j, off in blocks:
                k, v = self._eval_1d(kind, j, x)
                rows.append(np.repeat(np.arange(m), k.shape[1]))
                cols.append((off + k).ravel())
                vals.append(v.ravel())
        else:
            x1, x2 = pts[:, 0], pts[:, 1]
            kinds = [("psi", "phi"), ("phi", "psi"), ("psi", "psi")]
            blocks = [(("phi", "phi"), 0, 0)]
            blocks += [(kinds[o], 0, 1 + o) for o in range(3)]
            for j in range(1, self.L + 1):
                blocks += [(kinds[o], j, 4**j + o * 4**j) for o in range(3)]
            for (ka, kb), j, off in blocks:
                k1, v1 = self._eval_1d(ka, j, x1)
                k2, v2 = self._eval_1d(kb, j, x2)
                c = off + k1[:, :, None] * 2**j + k2[:, None, :]
                v = v1[:, :, None] * v2[:, None, :]
                rows.append(np.repeat(np.arange(m), c.shape[1] * c.shape[2]))
                cols.append(c.ravel())
                vals.append(v.ravel())
        rows, cols, vals = np.concatenate(rows), np.concatenate(cols), np.concatenate(vals)
        keep = vals != 0.0
        mat = sp.csr_matrix((vals[keep], (rows[keep], cols[keep])), shape=(m, self.size))
        mat.sort_indices()
        return mat


def _as_points(points, d):
    pts = np.asarray(points, dtype=float)
    if pts.ndim == 0:
        pts = pts.reshape(1, 1)
    elif pts.ndim == 1:
        pts = pts[:, None] if d == 1 else pts[None, :]
    if pts.ndim != 2 or pts.shape[1] != d:
        raise ShapeError(f"points of shape {np.shape(points)} are not {d}-dimensional")
    if not np.all(np.isfinite(pts)) or pts.min(initial=0.0) < 0.0 or pts.max(initial=0.0) > 1.0:
        raise DomainError("points must lie in the unit cube [0, 1]^d", field="x")
    return pts


@dataclass(frozen=True, eq=False)
class CoefficientVector:
    """Flat array of wavelet coefficients tied to a basis.

    ``alpha`` is optional metadata (the regularity the vector was drawn or
    fitted under).
    """

    values: np.ndarray
    basis: WaveletBasis
    alpha: float = None

    def __post_init__(self):
        v = np.array(self.values, dtype=float)
        if v.shape != (self.basis.size,):
            raise ShapeError(f"coefficient shape {v.shape} != ({self.basis.size},)")
        if not np.all(np.isfinite(v)):
            raise DomainError("coefficients must be finite", field="values")
        v.setflags(write=False)
        object.__setattr__(self, "values", v)

    @property
    def d(self):
        return self.basis.d

    @property
    def L(self):
        return self.basis.L

    def __len__(self):
        return self.values.size

    def __getitem__(self, lr):
        l, r = lr
        return self.values[self.basis.flat_index(l, r)]

    def level(self, l):
        return self.values[self.basis.level_slice(l)]

    @classmethod
    def zeros(cls, basis, alpha=None):
        return cls(np.zeros(basis.size), basis, alpha)

    @classmethod
    def unit(cls, basis, l, r):
        v = np.zeros(basis.size)
        v[basis.flat_index(l, r)] = 1.0
        return cls(v, basis)

    def replace(self, values):
        return CoefficientVector(values, self.basis, self.alpha)


def build_basis(family="haar", d=1, L=8, order=None):
    """Construct a :class:`WaveletBasis`.

    ``family`` may also be given as ``"db<k>"`` / ``"daubechies-<k>"``.
    """
    fam = str(family).lower()
    for prefix in ("daubechies-", "daubechies", "db"):
        if fam.startswith(prefix) and fam[len(prefix):].isdigit():
            order = int(fam[len(prefix):])
            fam = "daubechies"
            break
    return WaveletBasis(fam, d, L, order)


def evaluate_basis(basis, l, r, x):
    """Value of the basis element ``(l, r)`` at the point ``x``."""
    q = basis.flat_index(l, r)
    row = basis.design_matrix(_as_points(x, basis.d)[:1])
    return float(row[0, q])


def forward_transform(basis, samples):
    """Coefficients of the grid function ``samples`` (values at cell midpoints)."""
    samples = np.asarray(samples, dtype=float)
    if samples.shape != basis.grid_shape:
        if samples.size == basis.grid_size and samples.ndim == 1:
            samples = samples.reshape(basis.grid_shape)
        else:
            raise ShapeError(
                f"expected samples of shape {basis.grid_shape}, got {samples.shape}"
            )
    return CoefficientVector(basis.analysis(samples), basis)


def inverse_transform(basis, coeffs, level=None):
    """Grid values of ``sum coeffs * psi`` at the midpoints of the level-``level`` grid."""
    if isinstance(coeffs, CoefficientVector):
        if coeffs.basis != basis:
            raise ShapeError(f"coefficients belong to {coeffs.basis}, not {basis}")
        coeffs = coeffs.values
    return basis.synthesis(coeffs, level)


def synthesize_at(basis, coeffs, x):
    """Evaluate ``sum coeffs * psi`` at one point or an ``(m, d)`` array of points."""
    if isinstance(coeffs, CoefficientVector):
        if coeffs.basis != basis:
            raise ShapeError(f"coefficients belong to {coeffs.basis}, not {basis}")
        coeffs = coeffs.values
    coeffs = np.asarray(coeffs, dtype=float)
    if coeffs.shape != (basis.size,):
        raise ShapeError(f"coefficient length {coeffs.shape} != ({basis.size},)")
    x_arr = np.asarray(x, dtype=float)
    single = x_arr.ndim == 0 or (x_arr.ndim == 1 and basis.d == 2 and x_arr.size == 2)
    out = basis.design_matrix(x_arr) @ coeffs
    return float(out[0]) if single else out
