"""Command-line front end.

Usage::

    besov-laplace SUBCOMMAND [--config FILE] [--key value ...]

Configuration is a flat JSON object; command-line flags override file
values.  Every run writes ``resolved-config.json`` (all fields, defaults
filled) and ``manifest.json`` next to its CSV and SVG artifacts.
"""

import argparse
import datetime as _dt
import json
import logging
import math
import os
import platform
import sys
import time
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import io
from .errors import BesovError, ConfigurationError, UsageError
from .experiment import RateStudyConfig, compare_priors, l2_error, run_rate_study
from .inference import ChainOptions, MapOptions, map_estimate, posterior_mean, run_pcn
from .link import logistic
from .model import MuSpec, build_cache, make_truth, simulate
from .plot import rate_plot
from .prior import PriorSpec, draw_regularity, sample_prior, small_ball_estimate
from .wavelet import build_basis

log = logging.getLogger(__name__)

SUBCOMMANDS = (
    "sample-prior",
    "simulate",
    "fit-map",
    "fit-mcmc",
    "rate-study",
    "compare-priors",
    "diagnostics",
)
FIXED_N_COMMANDS = ("sample-prior", "simulate", "diagnostics")
OUTPUT_ROOT_ENV = "BESOV_LAPLACE_OUTPUT_ROOT"

# key -> (default, kind)
SCHEMA = {
    "subcommand": (None, "str"),
    "seed": (0, "int"),
    "alpha": (1.5, "float"),
    "d": (1, "int"),
    "n": (1024, "int"),
    "L": (None, "int?"),
    "family": ("laplace", "str"),
    "wavelet": (None, "str?"),
    "truth": ("spiky-piecewise-linear", "str"),
    "truth_params": ({}, "json"),
    "mu": (None, "json"),
    "data": (None, "str?"),
    "G": (12, "int"),
    "map_max_iters": (5000, "int"),
    "map_tol": (1e-8, "float"),
    "map_kkt_tol": (1e-7, "float"),
    "map_step_policy": ("backtracking", "str"),
    "map_accelerate": (True, "bool"),
    "n_iters": (50_000, "int"),
    "burn_in": (10_000, "int"),
    "thin": (10, "int"),
    "step": (0.2, "float"),
    "adapt": (True, "bool"),
    "target_accept": (0.3, "float"),
    "init": ("map", "str"),
    "n_grid": ([256, 1024, 4096, 16384], "ints"),
    "replicates": (10, "int"),
    "estimator": ("posterior-mean", "str"),
    "families": (["laplace", "gaussian"], "strs"),
    "epsilons": ([1.0, 0.5, 0.25], "floats"),
    "n_mc": (10_000, "int"),
    "regularity_draws": (200, "int"),
    "alpha_primes": (None, "floats?"),
    "L_lo": (8, "int"),
    "L_hi": (10, "int"),
    "out_dir": (None, "str?"),
    "workers": (None, "int?"),
}


@dataclass
class RunConfig:
    values: dict
    explicit: set = field(default_factory=set)

    def __getattr__(self, key):
        try:
            return self.__dict__["values"][key]
        except KeyError:
            raise AttributeError(key) from None

    @property
    def prior(self):
        return PriorSpec(self.family, self.alpha, self.d, self.n, self.L)

    @property
    def map_opts(self):
        return MapOptions(
            self.map_max_iters, self.map_tol, self.map_step_policy, self.map_accelerate,
            self.map_kkt_tol,
        )

    @property
    def chain_opts(self):
        return ChainOptions(
            self.n_iters, self.burn_in, self.thin, self.step, self.adapt, self.seed,
            self.target_accept,
        )

    def study(self, family=None):
        return RateStudyConfig(
            alpha=self.alpha, d=self.d, truth=self.truth, truth_params=self.truth_params,
            n_grid=tuple(self.n_grid), replicates=self.replicates, seed=self.seed,
            estimator=self.estimator, family=family or self.family, wavelet=self.wavelet,
            G=self.G, L=self.L, mu=self.mu, chain=self.chain_opts, map_opts=self.map_opts,
            workers=self.workers,
        )


def _convert(key, value, kind):
    """Coerce a JSON or command-line value to the schema kind."""
    optional = kind.endswith("?")
    kind = kind.rstrip("?")
    if value is None:
        if optional or kind == "json":
            return None
        raise ConfigurationError(f"{key} must not be null", field=key)
    try:
        if kind in ("int", "float"):
            if isinstance(value, bool):
                raise ValueError
            if isinstance(value, str):
                value = float(value) if kind == "float" else int(value)
            if kind == "int":
                if float(value) != int(value):
                    raise ValueError
                return int(value)
            out = float(value)
            if not math.isfinite(out):
                raise ValueError
            return out
        if kind == "bool":
            if isinstance(value, str):
                if value.lower() not in ("true", "false", "1", "0"):
                    raise ValueError
                return value.lower() in ("true", "1")
            if not isinstance(value, bool):
                raise ValueError
            return value
        if kind == "str":
            if not isinstance(value, str):
                raise ValueError
            return value
        if kind in ("ints", "floats", "strs"):
            if isinstance(value, str):
                value = [v for v in value.split(",") if v.strip()]
            if not isinstance(value, (list, tuple)):
                raise ValueError
            sub = {"ints": "int", "floats": "float", "strs": "str"}[kind]
            return [_convert(key, v.strip() if isinstance(v, str) else v, sub) for v in value]
        if kind == "json":
            if isinstance(value, str):
                value = json.loads(value)
            if not isinstance(value, dict):
                raise ValueError
            return value
    except (ValueError, TypeError, json.JSONDecodeError):
        pass
    raise ConfigurationError(f"{key}={value!r} is not a valid {kind}", field=key)


def _read_file(path):
    path = Path(path)
    if not path.is_file():
        raise ConfigurationError(f"config file {path} does not exist", field="config")
    try:
        data = json.loads(path.read_text())
    except json.JSONDecodeError as exc:
        raise ConfigurationError(f"config file {path} is not valid JSON: {exc}", field="config")
    if not isinstance(data, dict):
        raise ConfigurationError(f"config file {path} must hold a JSON object", field="config")
    return data


def _check(cond, key, message):
    if not cond:
        raise ConfigurationError(message, field=key)


def _validate(cfg):
    v = cfg.values
    _check(v["subcommand"] in SUBCOMMANDS, "subcommand",
           f"subcommand must be one of {', '.join(SUBCOMMANDS)}")
    _check(v["seed"] >= 0, "seed", "seed must be >= 0")
    _check(v["d"] in (1, 2), "d", "d must be 1 or 2")
    _check(v["alpha"] > v["d"], "alpha",
           "alpha must exceed d: the rescaled Besov-Laplace prior requires alpha > d")
    _check(v["n"] >= 1, "n", "n must be >= 1")
    _check(v["L"] is None or 1 <= v["L"] <= 16, "L", "L must lie in 1..16")
    _check(v["G"] >= (10 if v["d"] == 1 else 5), "G", "G must be >= 10 (d=1) or >= 5 (d=2)")
    _check(v["replicates"] >= 3, "replicates", "replicates must be >= 3")
    _check(v["n_mc"] >= 1000, "n_mc", "n_mc must be >= 1000")
    _check(all(e >= 0 for e in v["epsilons"]) and v["epsilons"], "epsilons",
           "epsilons must be a non-empty list of non-negative radii")
    _check(v["regularity_draws"] >= 1, "regularity_draws", "regularity_draws must be >= 1")
    _check(1 <= v["L_lo"] < v["L_hi"] <= 14, "L_lo", "need 1 <= L_lo < L_hi <= 14")
    _check(v["workers"] >= 1, "workers", "workers must be >= 1")
    _check(v["init"] in ("map", "zero"), "init", "init must be 'map' or 'zero'")
    _check(v["data"] is None or Path(v["data"]).is_file(), "data",
           f"data file {v['data']} does not exist")
    # delegate the remaining checks to the module constructors
    cfg.prior
    cfg.map_opts
    cfg.chain_opts
    MuSpec.from_dict(v["mu"])
    make_truth(v["truth"], v["truth_params"], v["d"])
    build_basis(v["wavelet"], v["d"], 1)
    if v["subcommand"] in ("rate-study", "compare-priors"):
        cfg.study()
        for fam in v["families"]:
            PriorSpec(fam, v["alpha"], v["d"], 1)


def parse_config(path=None, overrides=None):
    """Merge defaults, a JSON file and flag overrides into a validated :class:`RunConfig`."""
    values = {k: d for k, (d, _) in SCHEMA.items()}
    explicit = set()
    layers = []
    if path is not None:
        layers.append(_read_file(path))
    if overrides:
        layers.append(overrides)
    for layer in layers:
        for key, raw in layer.items():
            if key not in SCHEMA:
                raise ConfigurationError(f"unknown configuration key {key!r}", field=key)
            values[key] = _convert(key, raw, SCHEMA[key][1])
            explicit.add(key)
    if values["wavelet"] is None:
        studies = ("rate-study", "compare-priors")
        values["wavelet"] = "db4" if values["subcommand"] in studies else "haar"
    if values["workers"] is None:
        values["workers"] = os.cpu_count() or 1
    if values["alpha_primes"] is None:
        values["alpha_primes"] = [values["alpha"] - values["d"] - 0.25, values["alpha"] + 0.25]
    cfg = RunConfig(values, explicit)
    _validate(cfg)
    if values["subcommand"] in FIXED_N_COMMANDS:
        # fits and studies derive L from the realized sample size instead
        values["L"] = cfg.prior.L
    return cfg


def resolve_out_dir(cfg, now=None):
    if cfg.out_dir:
        return Path(cfg.out_dir)
    root = Path(os.environ.get(OUTPUT_ROOT_ENV, "runs"))
    now = now or _dt.datetime.now()
    return root / f"{now.strftime('%Y%m%dT%H%M%S')}-seed{cfg.seed}"


def _write_json(path, data):
    path.write_text(json.dumps(data, indent=2, sort_keys=True) + "\n")


def _versions():
    import scipy
    import pywt

    from . import __version__

    return {
        "besov_laplace": __version__,
        "python": platform.python_version(),
        "numpy": np.__version__,
        "scipy": scipy.__version__,
        "pywavelets": pywt.__version__,
    }


# ---- subcommands -------------------------------------------------------------


def _dataset(cfg, out):
    truth = make_truth(cfg.truth, cfg.truth_params, cfg.d)
    if cfg.data:
        return io.read_dataset(cfg.data, cfg.mu), None
    return simulate(truth, MuSpec.from_dict(cfg.mu), cfg.n, cfg.seed), truth


def cmd_sample_prior(cfg, out):
    prior = cfg.prior
    basis = build_basis(cfg.wavelet, cfg.d, prior.L)
    draw = sample_prior(prior, basis, cfg.seed)
    io.write_coefficients(out / "coefficients.csv", draw)
    io.write_grid(out / "draw-grid.csv", basis.grid_points(), basis.synthesis(draw.values))
    return {"L": prior.L, "size": basis.size}


def cmd_simulate(cfg, out):
    truth = make_truth(cfg.truth, cfg.truth_params, cfg.d)
    data = simulate(truth, MuSpec.from_dict(cfg.mu), cfg.n, cfg.seed)
    io.write_dataset(out / "dataset.csv", data)
    io.write_truth(out / "truth.csv", truth, truth.grid(cfg.G if cfg.d == 1 else min(cfg.G, 8)))
    return {"n": data.n, "positives": int(data.Y.sum())}


def _grid_outputs(cfg, out, name, basis, w, truth):
    level = cfg.G if cfg.d == 1 else min(cfg.G, 8)
    pts = basis.grid_points(level)
    f_hat = logistic(basis.design_matrix(pts) @ w)
    extra = {}
    info = {}
    if truth is not None:
        f0 = truth.f0(pts)
        extra["f0"] = f0
        info["l2_error"] = l2_error(f_hat, f0)
    io.write_grid(out / name, pts, f_hat, extra)
    return info


def cmd_fit_map(cfg, out):
    data, truth = _dataset(cfg, out)
    prior = cfg.prior.with_n(data.n)
    basis = build_basis(cfg.wavelet, cfg.d, prior.L)
    cache = build_cache(basis, data)
    res = map_estimate(data, cache, prior, cfg.map_opts)
    coeffs = res.coefficients
    io.write_coefficients(out / "map-coefficients.csv", coeffs)
    info = _grid_outputs(cfg, out, "map-grid.csv", basis, coeffs.values, truth)
    info.update(objective=res.objective, converged=res.converged, iterations=res.iterations)
    io.write_rows(out / "map-summary.csv", list(info), [list(info.values())])
    return info


def cmd_fit_mcmc(cfg, out):
    data, truth = _dataset(cfg, out)
    prior = cfg.prior.with_n(data.n)
    basis = build_basis(cfg.wavelet, cfg.d, prior.L)
    cache = build_cache(basis, data)
    chain = run_pcn(data, cache, prior, cfg.chain_opts, init=cfg.init, map_opts=cfg.map_opts)
    w_bar, _ = posterior_mean(chain, basis)
    io.write_chain(out / "chain.csv", chain)
    io.write_coefficients(out / "posterior-mean.csv", w_bar)
    info = _grid_outputs(cfg, out, "posterior-grid.csv", basis, w_bar.values, truth)
    lp = chain.log_posterior
    info.update(
        n_draws=len(chain), acceptance_rate=chain.acceptance_rate, step=chain.step,
        init=chain.init, logpost_q05=float(np.quantile(lp, 0.05)),
        logpost_median=float(np.median(lp)), logpost_q95=float(np.quantile(lp, 0.95)),
        failed=chain.failed,
    )
    io.write_rows(out / "chain-summary.csv", list(info), [list(info.values())])
    return info


def _cell_rows(cells):
    return [[c.n, c.replicate, c.error, c.estimator, c.family, c.seed] for c in cells]


RESULT_HEADER = ["n", "replicate", "error", "estimator", "family", "seed"]
SUMMARY_HEADER = ["n", "median", "iqr_lo", "iqr_hi", "rate_ref"]


def cmd_rate_study(cfg, out):
    res = run_rate_study(cfg.study())
    io.write_rows(out / "results.csv", RESULT_HEADER, _cell_rows(res.cells))
    io.write_rows(out / "summary.csv", SUMMARY_HEADER + ["ratio", "count"],
                  [[row[k] for k in SUMMARY_HEADER + ["ratio", "count"]] for row in res.summary])
    io.write_rows(
        out / "slope.csv", ["slope", "intercept", "r2", "reference_slope", "excluded"],
        [[res.slope, res.intercept, res.r2, res.reference_slope, res.excluded]],
    )
    svg = rate_plot(
        [r["n"] for r in res.summary], [r["median"] for r in res.summary], res.slope,
        res.intercept, res.reference_slope,
        title=f"{cfg.family} prior, alpha={cfg.alpha:g}, {cfg.estimator}",
        iqr=[(r["iqr_lo"], r["iqr_hi"]) for r in res.summary],
    )
    (out / "rate-plot.svg").write_text(svg)
    return {"slope": res.slope, "reference_slope": res.reference_slope, "excluded": res.excluded}


def cmd_compare_priors(cfg, out):
    comp = compare_priors(cfg.study(), tuple(cfg.families))
    rows = [[r[k] for k in ("n", "family", "median", "iqr_lo", "iqr_hi")] for r in comp.rows]
    io.write_rows(out / "comparison.csv", ["n", "family", "median", "iqr_lo", "iqr_hi"], rows)
    cells = [c for fam in cfg.families for c in comp.studies[fam].cells]
    io.write_rows(out / "results.csv", RESULT_HEADER, _cell_rows(cells))
    io.write_rows(
        out / "slopes.csv", ["family", "slope", "intercept", "r2"],
        [[f, comp.studies[f].slope, comp.studies[f].intercept, comp.studies[f].r2]
         for f in cfg.families],
    )
    return {"slopes": comp.slopes}


def cmd_diagnostics(cfg, out):
    prior = cfg.prior
    basis = build_basis(cfg.wavelet, cfg.d, prior.L)
    rows = []
    for i, eps in enumerate(cfg.epsilons):
        seed = int(np.random.SeedSequence([cfg.seed, i]).generate_state(1)[0])
        r = small_ball_estimate(prior, eps, cfg.n_mc, seed=seed, basis=basis)
        rows.append([r.epsilon, r.p_hat, r.stderr, r.n_mc])
    io.write_rows(out / "small-ball.csv", ["epsilon", "p_hat", "stderr", "n_mc"], rows)
    reg = []
    for ap in cfg.alpha_primes:
        r = draw_regularity(prior, ap, cfg.L_lo, cfg.L_hi, cfg.regularity_draws, cfg.seed,
                            cfg.wavelet)
        reg.append([r.alpha_prime, r.L_lo, r.L_hi, r.median_lo, r.median_hi,
                    r.median_rel_change, r.n_draws])
    io.write_rows(
        out / "regularity.csv",
        ["alpha_prime", "L_lo", "L_hi", "median_norm_lo", "median_norm_hi",
         "median_rel_change", "n_draws"],
        reg,
    )
    return {"L": prior.L}


COMMANDS = {
    "sample-prior": cmd_sample_prior,
    "simulate": cmd_simulate,
    "fit-map": cmd_fit_map,
    "fit-mcmc": cmd_fit_mcmc,
    "rate-study": cmd_rate_study,
    "compare-priors": cmd_compare_priors,
    "diagnostics": cmd_diagnostics,
}


def dispatch(cfg, argv=None):
    """Run the configured subcommand and write its artifacts; returns the output directory."""
    out = resolve_out_dir(cfg)
    try:
        out.mkdir(parents=True, exist_ok=True)
        probe = out / ".write-test"
        probe.write_text("")
        probe.unlink()
    except OSError as exc:
        raise ConfigurationError(f"output directory {out} is not writable: {exc}",
                                 field="out_dir")
    _write_json(out / "resolved-config.json", cfg.values)
    t0 = time.perf_counter()
    started = _dt.datetime.now(_dt.timezone.utc).isoformat()
    info = COMMANDS[cfg.subcommand](cfg, out)
    manifest = {
        "subcommand": cfg.subcommand,
        "seed": cfg.seed,
        "started": started,
        "seconds": time.perf_counter() - t0,
        "versions": _versions(),
        "argv": list(argv) if argv is not None else None,
        "files": sorted(p.name for p in out.iterdir() if p.name != "manifest.json"),
        "result": info,
    }
    _write_json(out / "manifest.json", manifest)
    return out


def _flag_name(key):
    return "--" + key.replace("_", "-")


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(message, field="argv")


def build_parser():
    p = _Parser(
        prog="besov-laplace",
        allow_abbrev=False,
        description="Bayesian binary classification with Besov-Laplace wavelet priors.",
    )
    p.add_argument("subcommand", nargs="?", choices=SUBCOMMANDS)
    p.add_argument("--config", help="JSON configuration file")
    p.add_argument("-v", "--verbose", action="store_true")
    for key, (default, kind) in SCHEMA.items():
        if key == "subcommand":
            continue
        flags = [_flag_name(key)]
        if "_" in key:
            flags.append("--" + key)
        p.add_argument(*flags, dest=key, default=argparse.SUPPRESS, metavar=kind.upper(),
                       help=f"default: {json.dumps(default)}")
    return p


def main(argv=None):
    argv = sys.argv[1:] if argv is None else list(argv)
    parser = build_parser()
    try:
        ns = parser.parse_args(argv)
    except UsageError as exc:
        print(_error_line(exc.code, exc.field, str(exc)), file=sys.stderr)
        return 2
    except SystemExit as exc:
        return int(exc.code or 0)
    opts = vars(ns)
    logging.basicConfig(
        level=logging.INFO if opts.pop("verbose") else logging.WARNING,
        format="%(levelname)s %(name)s: %(message)s",
    )
    path = opts.pop("config")
    sub = opts.pop("subcommand")
    if sub is not None:
        opts["subcommand"] = sub
    try:
        cfg = parse_config(path, opts)
        if cfg.subcommand is None:
            raise UsageError("no subcommand given", field="subcommand")
        out = dispatch(cfg, argv)
    except BesovError as exc:
        print(_error_line(exc.code, exc.field, str(exc)), file=sys.stderr)
        return 2 if isinstance(exc, (ConfigurationError, UsageError)) else 1
    except Exception as exc:  # noqa: BLE001
        print(_error_line("internal.error", None, f"{type(exc).__name__}: {exc}"), file=sys.stderr)
        return 1
    print(str(out))
    return 0


def _error_line(code, fld, message):
    return "error " + json.dumps({"code": code, "field": fld, "message": message}, sort_keys=True)


if __name__ == "__main__":
    sys.exit(main())
