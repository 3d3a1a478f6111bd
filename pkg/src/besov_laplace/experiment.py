"""Desk-scale contraction-rate studies.

Each cell of the ``(n, replicate)`` grid simulates data from a fixed truth,
fits the n-rescaled prior, and records the L2 error of the estimated
classification surface on a fine midpoint grid.  Medians across replicates
are regressed on ``log n`` and compared with the minimax slope
``-alpha / (2 alpha + d)``.
"""

import logging
import math
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field, replace

import numpy as np

from .errors import ConfigurationError, NumericError, ShapeError, StudyError
from .inference import ChainOptions, MapOptions, map_estimate, posterior_mean, run_pcn
from .link import logistic
from .model import MuSpec, build_cache, make_truth, simulate
from .prior import PriorSpec, contraction_rate
from .wavelet import build_basis

__all__ = [
    "RateStudyConfig",
    "RateStudyResult",
    "CellResult",
    "l2_error",
    "fit_slope",
    "cell_seed",
    "run_cell",
    "run_rate_study",
    "compare_priors",
]

log = logging.getLogger(__name__)

MAX_EXCLUDED_FRACTION = 0.2
ESTIMATORS = ("posterior-mean", "map")


@dataclass(frozen=True)
class RateStudyConfig:
    alpha: float = 1.5
    d: int = 1
    truth: str = "spiky-piecewise-linear"
    truth_params: dict = field(default_factory=dict)
    n_grid: tuple = (256, 1024, 4096, 16384)
    replicates: int = 10
    seed: int = 0
    estimator: str = "posterior-mean"
    family: str = "laplace"
    wavelet: str = "db4"
    G: int = 12
    L: int = None
    mu: dict = None
    chain: ChainOptions = ChainOptions()
    map_opts: MapOptions = MapOptions()
    workers: int = 1

    def __post_init__(self):
        grid = tuple(int(n) for n in self.n_grid)
        if len(grid) < 3 or any(b <= a for a, b in zip(grid, grid[1:])) or grid[0] < 1:
            raise ConfigurationError(
                f"n_grid {grid} must hold at least 3 strictly increasing sizes", field="n_grid"
            )
        object.__setattr__(self, "n_grid", grid)
        if self.replicates < 3:
            raise ConfigurationError("replicates must be >= 3", field="replicates")
        if self.estimator not in ESTIMATORS:
            raise ConfigurationError(
                f"estimator {self.estimator!r} not in {ESTIMATORS}", field="estimator"
            )
        if self.G < (10 if self.d == 1 else 5):
            raise ConfigurationError(f"error grid level G={self.G} too coarse", field="G")
        PriorSpec(self.family, self.alpha, self.d, 1, self.L)

    @property
    def reference_slope(self):
        return -self.alpha / (2.0 * self.alpha + self.d)


@dataclass
class CellResult:
    n: int
    replicate: int
    error: float
    estimator: str
    family: str
    seed: int
    failed: bool = False
    acceptance: float = float("nan")
    step: float = float("nan")
    seconds: float = 0.0


@dataclass
class RateStudyResult:
    config: RateStudyConfig
    cells: list
    summary: list
    slope: float
    intercept: float
    r2: float
    excluded: int

    @property
    def reference_slope(self):
        return self.config.reference_slope

    @property
    def medians(self):
        return np.array([row["median"] for row in self.summary])

    def errors(self, n):
        return np.array([c.error for c in self.cells if c.n == n and not c.failed])


def l2_error(f_hat, f0, G=None):
    """Midpoint-rule ``L2([0,1]^d)`` distance between two grid functions."""
    f_hat = np.asarray(f_hat, dtype=float).ravel()
    f0 = np.asarray(f0, dtype=float).ravel()
    if f_hat.shape != f0.shape:
        raise ShapeError(f"grid functions differ in size: {f_hat.size} vs {f0.size}")
    if G is not None:
        size = f0.size
        d = round(math.log2(size) / G) if size > 1 else 1
        if 2 ** (G * d) != size:
            raise ShapeError(f"{size} grid values do not form a 2^{G}-point dyadic grid")
    return float(np.sqrt(np.mean((f_hat - f0) ** 2)))


def fit_slope(log_n, log_err):
    """Ordinary least squares of ``log_err`` on ``log_n``: ``(slope, intercept, R^2)``."""
    x = np.asarray(log_n, dtype=float)
    y = np.asarray(log_err, dtype=float)
    if x.shape != y.shape or x.ndim != 1 or x.size < 3:
        raise ShapeError("fit_slope needs two equal-length sequences of at least 3 values")
    if np.ptp(x) == 0:
        raise NumericError("all abscissae are equal; slope undefined")
    # centred normal equations: constant y gives a slope of exactly 0
    xc, yc = x - x.mean(), y - y.mean()
    slope = float(xc @ yc) / float(xc @ xc)
    intercept = y.mean() - slope * x.mean()
    resid = y - (slope * x + intercept)
    ss_tot = float(np.sum((y - y.mean()) ** 2))
    r2 = 1.0 if ss_tot == 0 else 1.0 - float(resid @ resid) / ss_tot
    return float(slope), float(intercept), float(r2)


def cell_seed(master, n, replicate):
    """Integer seed of one ``(n, replicate)`` cell; independent of the prior family."""
    return int(np.random.SeedSequence([int(master), int(n), int(replicate)]).generate_state(1)[0])


def run_cell(config, n, replicate):
    """Simulate, fit and score one cell of a rate study."""
    t0 = time.perf_counter()
    seed = cell_seed(config.seed, n, replicate)
    truth = make_truth(config.truth, config.truth_params, config.d)
    data = simulate(truth, MuSpec.from_dict(config.mu), n, seed)
    prior = PriorSpec(config.family, config.alpha, config.d, n, config.L)
    basis = build_basis(config.wavelet, config.d, prior.L)
    cache = build_cache(basis, data)
    acc = step = float("nan")
    failed = False
    if config.estimator == "map":
        res = map_estimate(data, cache, prior, config.map_opts)
        w = res.coefficients.values
        failed = not res.converged
    else:
        chain_seed = int(np.random.SeedSequence([seed, 1]).generate_state(1)[0])
        chain = run_pcn(
            data, cache, prior, replace(config.chain, seed=chain_seed), map_opts=config.map_opts
        )
        w = posterior_mean(chain, basis)[0].values
        acc, step, failed = chain.acceptance_rate, chain.step, chain.failed
    pts = basis.grid_points(config.G)
    f_hat = logistic(basis.design_matrix(pts) @ w)
    err = l2_error(f_hat, truth.f0(pts), config.G)
    if not math.isfinite(err):
        failed = True
    return CellResult(
        n, replicate, err, config.estimator, config.family, seed, failed, acc, step,
        time.perf_counter() - t0,
    )


def _run_cell_args(args):
    return run_cell(*args)


def _run_cells(config, jobs):
    if config.workers <= 1:
        return [run_cell(config, n, r) for n, r in jobs]
    with ProcessPoolExecutor(max_workers=config.workers) as pool:
        return list(pool.map(_run_cell_args, [(config, n, r) for n, r in jobs]))


def summarize(config, cells):
    excluded = sum(c.failed for c in cells)
    if excluded > MAX_EXCLUDED_FRACTION * len(cells):
        raise StudyError(
            f"{excluded} of {len(cells)} replicates failed (limit {MAX_EXCLUDED_FRACTION:.0%})"
        )
    summary = []
    for n in config.n_grid:
        errs = np.array([c.error for c in cells if c.n == n and not c.failed])
        if errs.size == 0:
            raise StudyError(f"every replicate at n={n} failed")
        med = float(np.median(errs))
        rate = contraction_rate(config.alpha, config.d, n)
        summary.append(
            {
                "n": n,
                "median": med,
                "iqr_lo": float(np.percentile(errs, 25)),
                "iqr_hi": float(np.percentile(errs, 75)),
                "rate_ref": rate,
                "ratio": med / rate,
                "count": int(errs.size),
            }
        )
    slope, intercept, r2 = fit_slope(
        np.log([row["n"] for row in summary]), np.log([row["median"] for row in summary])
    )
    return RateStudyResult(config, cells, summary, slope, intercept, r2, excluded)


def run_rate_study(config):
    """Run every ``(n, replicate)`` cell and fit the log-log error slope."""
    jobs = [(n, r) for n in config.n_grid for r in range(config.replicates)]
    cells = _run_cells(config, jobs)
    cells.sort(key=lambda c: (c.n, c.replicate))
    for c in cells:
        if c.failed:
            log.warning("replicate %d at n=%d failed and is excluded", c.replicate, c.n)
    return summarize(config, cells)


@dataclass
class Comparison:
    rows: list
    slopes: dict
    studies: dict

    def table(self):
        return self.rows


def compare_priors(config, families=("laplace", "gaussian")):
    """Run the same study (same seeds) under each prior family.

    The output is descriptive: per-``n`` median errors and fitted slopes for
    every family.
    """
    studies = {fam: run_rate_study(replace(config, family=fam)) for fam in families}
    rows = []
    for i, n in enumerate(config.n_grid):
        for fam in families:
            row = dict(studies[fam].summary[i])
            rows.append({"n": n, "family": fam, "median": row["median"],
                         "iqr_lo": row["iqr_lo"], "iqr_hi": row["iqr_hi"]})
    slopes = {fam: studies[fam].slope for fam in families}
    return Comparison(rows, slopes, studies)


def config_to_dict(config):
    out = asdict(config)
    out["n_grid"] = list(config.n_grid)
    return out
