"""Acceptance gate.  Each test prints one ``CRITERION k: PASS|FAIL ...`` line."""

import json
import math
import time
from types import SimpleNamespace

import numpy as np
import pytest
from scipy.special import ndtri

from besov_laplace.cli import SUBCOMMANDS, main
from besov_laplace.experiment import RateStudyConfig, fit_slope, l2_error, run_rate_study
from besov_laplace.inference import (
    ChainOptions,
    map_estimate,
    posterior_mean,
    run_pcn,
    soft_threshold,
    unwhiten,
    whiten,
)
from besov_laplace.link import logistic, logit
from besov_laplace.model import (
    Dataset,
    build_cache,
    grad_log_likelihood,
    log_likelihood,
    make_truth,
    simulate,
)
from besov_laplace.prior import (
    BesovNormQuery,
    PriorSpec,
    besov_norm,
    draw_regularity,
    laplace_quantile,
    prior_scales,
    rescaling_factor,
    sample_prior,
    sample_prior_values,
    small_ball_estimate,
)
from besov_laplace.wavelet import (
    CoefficientVector,
    build_basis,
    evaluate_basis,
    forward_transform,
    inverse_transform,
    synthesize_at,
)

from test_inference import GRID_MAP, TINY_MEAN, kkt_violation, random_instance, tiny_problem


@pytest.fixture
def report(capsys):
    def emit(k, ok, detail):
        with capsys.disabled():
            print(f"\nCRITERION {k}: {'PASS' if ok else 'FAIL'} {detail}")
        return ok

    return emit


class TestAcceptance:
    def test_criterion_1_rate_slope(self, report):
        cfg = RateStudyConfig()
        t0 = time.perf_counter()
        res = run_rate_study(cfg)
        med = res.medians
        ok_slope = abs(res.slope - cfg.reference_slope) <= 0.15
        ok_dec = bool(np.all(np.diff(med[-3:]) < 0))
        ok = report(
            1, ok_slope and ok_dec,
            f"slope={res.slope:.4f} ref={cfg.reference_slope} medians={np.round(med, 5).tolist()} "
            f"excluded={res.excluded} seconds={time.perf_counter() - t0:.0f}",
        )
        assert ok

    def test_criterion_2_sampler_quadrature(self, report):
        b, data, cache, prior = tiny_problem()
        t0 = time.perf_counter()
        chain = run_pcn(data, cache, prior, ChainOptions(n_iters=60_000, burn_in=10_000, thin=5,
                                                         seed=3))
        secs = time.perf_counter() - t0
        dev = np.abs(chain.draws.mean(axis=0) - np.array(TINY_MEAN)).max()
        ok = report(2, dev <= 0.05 and secs < 60, f"max|mean-oracle|={dev:.4f} seconds={secs:.1f}")
        assert ok

    def test_criterion_3_prior_reproduction(self, report):
        b = build_basis("haar", 1, 6)
        data = Dataset.empty()
        prior = PriorSpec("laplace", 1.5, 1, 256, 6)
        chain = run_pcn(data, build_cache(b, data), prior,
                        ChainOptions(n_iters=110_000, burn_in=10_000, thin=1, seed=5))
        ratio = chain.draws / prior_scales(prior, b)
        worst_abs = worst_var = 0.0
        for l in range(0, b.L + 1):
            block = ratio[:, b.level_slice(l)]
            worst_abs = max(worst_abs, abs(np.abs(block).mean() - 1.0))
            worst_var = max(worst_var, abs(block.var() / 2.0 - 1.0))
        ok = report(
            3, worst_abs < 0.05 and worst_var < 0.05,
            f"draws={len(chain)} max_rel_dev E|b|/s={worst_abs:.4f} var/2s^2={worst_var:.4f}",
        )
        assert ok

    def test_criterion_4_map_optimality(self, report):
        worst = 0.0
        for seed in range(20):
            data, cache, prior = random_instance(seed)
            res = map_estimate(data, cache, prior)
            g = grad_log_likelihood(res.coefficients, cache, data).values
            tau = 1.0 / prior_scales(prior, cache.basis)
            v = kkt_violation(res.values, g, tau) if res.converged else math.inf
            worst = max(worst, v)
        b = build_basis("haar", 1, 1)
        data = Dataset(np.linspace(0.01, 0.99, 50), np.r_[np.ones(38), np.zeros(12)])
        cache = build_cache(b, data, columns=[0])
        grid_dev = max(
            abs(map_estimate(data, cache, PriorSpec("laplace", 1.5, 1, n, 1)).values[0] - ref)
            for n, ref in GRID_MAP.items()
        )
        ok = report(4, worst <= 1e-6 and grid_dev <= 2e-4,
                    f"max KKT violation={worst:.2e} grid deviation={grid_dev:.2e}")
        assert ok

    def test_criterion_5_numerics(self, report):
        failures = [name for name, ok in _numerics_checks() if not ok]
        ok = report(5, not failures, f"failed={failures}")
        assert ok

    def test_criterion_6_draw_regularity(self, report):
        spec = PriorSpec("laplace", 2.0, 1)
        lo = draw_regularity(spec, spec.alpha - spec.d - 0.25, n_draws=200)
        hi = draw_regularity(spec, spec.alpha + 0.25, n_draws=200)
        ok = report(
            6, lo.median_rel_change < 0.05 and hi.growth >= 2.0,
            f"alpha'={lo.alpha_prime} rel_change={lo.median_rel_change:.4f} (<0.05); "
            f"alpha'={hi.alpha_prime} growth={hi.growth:.3f} (>=2)",
        )
        assert ok

    def test_criterion_7_cli_determinism(self, report, tmp_path):
        fast = {"n": 200, "n_iters": 1500, "burn_in": 300, "n_mc": 1000, "regularity_draws": 10,
                "n_grid": [64, 128, 256], "replicates": 3, "seed": 11}
        differing = []
        for sub in SUBCOMMANDS:
            cfg = tmp_path / f"{sub}.json"
            cfg.write_text(json.dumps({"subcommand": sub, **fast}))
            outs = []
            for k in range(2):
                out = tmp_path / f"{sub}-{k}"
                assert main(["--config", str(cfg), "--workers", "1", "--out-dir", str(out)]) == 0
                outs.append({p.name: p.read_bytes() for p in sorted(out.glob("*.csv"))})
            if not outs[0] or outs[0] != outs[1]:
                differing.append(sub)
        ok = report(7, not differing, f"subcommands={len(SUBCOMMANDS)} differing={differing}")
        assert ok


def _numerics_checks():
    rng = np.random.default_rng(0)
    checks = []

    # wavelet round trip and Parseval
    rt = pars = 0.0
    for fam in ("haar", "db2", "db4"):
        for d, L in ((1, 8), (2, 4)):
            b = build_basis(fam, d, L)
            x = rng.normal(size=b.grid_size)
            rt = max(rt, np.abs(inverse_transform(b, forward_transform(b, x)).ravel() - x).max())
            c = rng.normal(size=b.size)
            grid = inverse_transform(b, c)
            pars = max(pars, abs(np.sum(grid**2) / b.grid_size - np.sum(c**2)))
    checks += [("round trip", rt <= 1e-10), ("parseval", pars <= 1e-8)]

    # gradient finite differences
    b = build_basis("db4", 1, 3)
    data = simulate(make_truth(), None, 80, seed=5)
    cache = build_cache(b, data)
    worst = 0.0
    for _ in range(5):
        c = rng.normal(size=b.size)
        g = grad_log_likelihood(c, cache, data).values
        e = np.eye(b.size) * 1e-5
        fd = np.array([(log_likelihood(c + e[q], cache, data) - log_likelihood(c - e[q], cache, data))
                       / 2e-5 for q in range(b.size)])
        worst = max(worst, np.linalg.norm(fd - g) / max(1.0, np.linalg.norm(g)))
    checks.append(("gradient fd", worst <= 1e-6))

    f = np.linspace(1e-12, 1 - 1e-12, 10_001)
    checks.append(("logit round trip", np.abs(logistic(logit(f)) - f).max() <= 1e-14))

    # closed-form examples
    h3 = build_basis("haar", 1, 3)
    checks.append(("haar L=3 cardinality", h3.n_wavelets == 14))
    h1 = build_basis("haar", 1, 1)
    checks.append(("haar L=1 cardinality", h1.level_count(1) == 2))
    psi = [evaluate_basis(h1, 1, 1, x) for x in (0.05, 0.2, 0.3, 0.45)]
    checks.append(("haar normalization", psi == [2**0.5, 2**0.5, -(2**0.5), -(2**0.5)]))
    checks.append(("outside support", evaluate_basis(h1, 1, 1, 0.75) == 0.0))
    const = forward_transform(h3, np.full(h3.grid_size, 0.7)).values
    checks.append(("constant samples", np.all(const[h3.level_slice(2).start:] == 0.0)))
    unit = CoefficientVector.unit(h3, 2, 3)
    samples = inverse_transform(h3, unit)
    checks.append(("unit analysis", np.abs(forward_transform(h3, samples).values - unit.values).max()
                   <= 1e-10))
    pts = h3.grid_points()
    ref = np.array([evaluate_basis(h3, 2, 3, x) for x in pts.ravel()])
    checks.append(("unit synthesis", np.abs(samples.ravel() - ref).max() <= 1e-10))
    checks.append(("zero synthesis", np.all(inverse_transform(h3, CoefficientVector.zeros(h3)) == 0.0)))
    checks.append(("zero evaluation", np.all(synthesize_at(h3, CoefficientVector.zeros(h3), pts) == 0.0)))
    checks.append(("single unit evaluation", synthesize_at(h3, unit, np.array([0.6]))[0]
                   == evaluate_basis(h3, 2, 3, 0.6)))
    s = prior_scales(PriorSpec("laplace", 2.0, 1, 1024, 1), build_basis("haar", 1, 1))
    checks.append(("rescaled scale", abs(s[-1] - 0.25 * 2**-1.5) <= 1e-15))
    s1 = prior_scales(PriorSpec("laplace", 2.0, 1, 1, 4), build_basis("haar", 1, 4))
    lev = build_basis("haar", 1, 4).weight_levels
    checks.append(("non-rescaled scale", np.allclose(s1, 2.0 ** (-lev * 1.5), rtol=1e-15)))
    eps = 1024 ** -0.4
    checks.append(("rescaling identity", abs(rescaling_factor(2, 1, 1024) - 1 / (1024 * eps**2)) <= 1e-15))
    # L=1: both coefficients share the level-1 scale, so 5e4 draws give 1e5 unit Laplace values
    z = (sample_prior_values(PriorSpec("laplace", 2.0, 1, 1, 1), build_basis("haar", 1, 1),
                             size=50_000, rng=1) / 2**-1.5).ravel()
    checks.append(("laplace moments", abs(np.abs(z).mean() - 1) <= 0.02 and abs(z.var() - 2) <= 0.05))
    a = sample_prior(PriorSpec("laplace", 2.0, 1, 1, 4), None, seed=9)
    bb = sample_prior(PriorSpec("laplace", 2.0, 1, 1, 4), None, seed=9)
    checks.append(("prior determinism", a.values.tobytes() == bb.values.tobytes()))
    checks.append(("laplace quantile", laplace_quantile(0.5) == 0.0
                   and abs(laplace_quantile(0.75) - math.log(2)) <= 1e-15
                   and abs(laplace_quantile(0.25) + math.log(2)) <= 1e-15))
    hb = build_basis("haar", 1, 2)
    q2 = BesovNormQuery(2.0)
    checks.append(("besov one term", abs(besov_norm(CoefficientVector.unit(hb, 1, 1), q2) - 2**1.5) <= 1e-12))
    checks.append(("besov zero", besov_norm(CoefficientVector.zeros(hb), q2) == 0.0))
    two = CoefficientVector.unit(hb, 1, 1).values + CoefficientVector.unit(hb, 2, 1).values
    checks.append(("besov two terms", abs(besov_norm(CoefficientVector(two, hb), BesovNormQuery(1.0))
                                          - (2**0.5 + 2)) <= 1e-12))
    spec = PriorSpec("laplace", 2.0, 1, 1, 4)
    checks.append(("small ball large", small_ball_estimate(spec, 1e6, n_mc=1000).p_hat == 1.0))
    checks.append(("small ball zero", small_ball_estimate(spec, 0.0, n_mc=1000).p_hat == 0.0))
    checks.append(("logistic values", logistic(0.0) == 0.5 and abs(logistic(math.log(3)) - 0.75) <= 1e-15))
    checks.append(("logistic symmetry", all(abs(logistic(-t) - (1 - logistic(t))) <= 1e-15
                                            for t in (1.0, 10.0, 100.0))))
    checks.append(("logit values", logit(0.5) == 0.0 and abs(logit(0.75) - math.log(3)) <= 1e-15))
    flat = make_truth("smooth-bump", {"height": 0.0})
    checks.append(("flat truth", np.all(flat.f0(np.linspace(0, 1, 101)) == 0.5)))
    apex = make_truth().f0(np.array([0.3]))[0]
    checks.append(("spike apex", abs(apex - logistic(2.0)) <= 1e-15 and abs(apex - 0.880797) <= 1e-6))
    big = simulate(flat, None, 10_000, seed=0)
    checks.append(("balanced labels", abs(big.Y.mean() - 0.5) <= 0.015))
    d1, d2 = simulate(make_truth(), None, 300, seed=2), simulate(make_truth(), None, 300, seed=2)
    checks.append(("simulate determinism", d1.X.tobytes() == d2.X.tobytes()
                   and d1.Y.tobytes() == d2.Y.tobytes()))
    hb2 = build_basis("haar", 1, 2)
    one = Dataset(np.array([[0.4]]), np.array([1]))
    checks.append(("single observation", abs(log_likelihood(CoefficientVector.zeros(hb2),
                                                            build_cache(hb2, one), one)
                                             - math.log(0.5)) <= 1e-15))
    checks.append(("zero coefficients", abs(log_likelihood(np.zeros(b.size), cache, data)
                                            - 80 * math.log(0.5)) <= 1e-12))
    c = rng.normal(size=b.size)
    syn = SimpleNamespace(n=data.n, Y=logistic(cache.latent(c)))
    checks.append(("score identity", np.abs(grad_log_likelihood(c, cache, syn).values).max() <= 1e-12))
    xs = np.array([0.1, 0.2, 0.8, 0.9])
    sym = Dataset(xs, np.array([1, 0, 1, 0]))
    gz = grad_log_likelihood(CoefficientVector.zeros(h3), build_cache(h3, sym), sym)
    checks.append(("scaling gradient", gz[(0, 1)] == np.sum((sym.Y - 0.5) * 1.0)))
    checks.append(("soft threshold", soft_threshold(3, 1) == 2 and soft_threshold(-3, 1) == -2
                   and soft_threshold(0.5, 1) == 0))
    empty = Dataset.empty()
    res = map_estimate(empty, build_cache(h3, empty), PriorSpec("laplace", 1.5, 1, 1, 3))
    checks.append(("empty MAP", res.converged and np.all(res.values == 0.0)))
    pr = PriorSpec("laplace", 1.5, 1, 1, 3)
    checks.append(("whiten zero", np.all(unwhiten(np.zeros(h3.size), pr, h3).values == 0.0)))
    ps = prior_scales(pr, h3)
    xi = np.full(h3.size, ndtri(0.75))
    checks.append(("quantile chaining", np.allclose(unwhiten(xi, pr, h3).values, ps * math.log(2),
                                                    rtol=1e-14)))
    ch1 = run_pcn(empty, build_cache(h3, empty), pr, ChainOptions(n_iters=2000, burn_in=500, seed=4))
    ch2 = run_pcn(empty, build_cache(h3, empty), pr, ChainOptions(n_iters=2000, burn_in=500, seed=4))
    checks.append(("chain determinism", ch1.draws.tobytes() == ch2.draws.tobytes()))
    checks.append(("whiten round trip", np.allclose(whiten(unwhiten(xi, pr, h3), pr), xi)))
    ch1.draws[:] = ps
    checks.append(("identical draws mean", np.allclose(posterior_mean(ch1, h3)[0].values, ps)))
    ch1.draws[:] = np.where(np.arange(len(ch1))[:, None] % 2 == 0, 1.0, -1.0) * ps
    f_bar = posterior_mean(ch1, h3)[1]
    checks.append(("symmetric draws surface", np.allclose(f_bar, 0.5, atol=1e-15)))
    x = (np.arange(2**12) + 0.5) / 2**12
    checks.append(("l2 identical", l2_error(x, x, 12) == 0.0))
    checks.append(("l2 constants", abs(l2_error(np.full(2**10, 0.3), np.full(2**10, 0.5), 10) - 0.2)
                   <= 1e-15))
    checks.append(("l2 sine", abs(l2_error(np.sin(2 * np.pi * x), 0 * x, 12) - 2**-0.5) <= 1e-6))
    ns = np.array([256.0, 1024, 4096, 16384])
    checks.append(("exact line slope", abs(fit_slope(np.log(ns), np.log(ns**-0.375))[0] + 0.375) <= 1e-12))
    sl, ic, r2 = fit_slope([0, 1, 2], [0, -1, -2])
    checks.append(("three points", sl == -1 and ic == 0 and r2 == 1))
    checks.append(("constant y", fit_slope([0, 1, 2, 3], [2, 2, 2, 2])[0] == 0.0))
    checks.append(("reference slope", RateStudyConfig().reference_slope == -0.375))
    return checks
