import json

import pytest

from besov_laplace.cli import SUBCOMMANDS, main, parse_config
from besov_laplace.errors import ConfigurationError

FAST = {
    "n": 200,
    "n_iters": 1500,
    "burn_in": 300,
    "n_mc": 1000,
    "regularity_draws": 10,
    "n_grid": [64, 128, 256],
    "replicates": 3,
    "estimator": "map",
    "workers": 1,
}


def write(tmp_path, cfg, name="cfg.json"):
    path = tmp_path / name
    path.write_text(json.dumps(cfg))
    return path


def csv_bytes(directory):
    return {p.name: p.read_bytes() for p in sorted(directory.glob("*.csv"))}


class TestParseConfig:
    def test_minimal_file(self, tmp_path):
        path = write(tmp_path, {"subcommand": "sample-prior", "alpha": 2, "d": 1, "n": 1, "L": 8,
                                "seed": 7})
        cfg = parse_config(path)
        assert cfg.alpha == 2.0 and cfg.L == 8 and cfg.seed == 7
        assert cfg.family == "laplace" and cfg.wavelet == "haar" and cfg.G == 12
        assert cfg.workers >= 1

    def test_alpha_not_above_d(self, tmp_path):
        path = write(tmp_path, {"subcommand": "sample-prior", "alpha": 1, "d": 1, "n": 1})
        with pytest.raises(ConfigurationError) as exc:
            parse_config(path)
        assert exc.value.field == "alpha" and "alpha must exceed d" in str(exc.value)

    def test_unknown_key(self, tmp_path):
        path = write(tmp_path, {"subcommand": "simulate", "alpah": 2})
        with pytest.raises(ConfigurationError) as exc:
            parse_config(path)
        assert exc.value.field == "alpah" and "alpah" in str(exc.value)

    def test_flag_overrides_file(self, tmp_path):
        path = write(tmp_path, {"subcommand": "rate-study", "n_grid": [10, 20, 40]})
        cfg = parse_config(path, {"n_grid": "256,1024,4096"})
        assert cfg.n_grid == [256, 1024, 4096]
        assert cfg.wavelet == "db4"

    @pytest.mark.parametrize(
        "override, fld",
        [({"n_grid": "256,128,512"}, "n_grid"), ({"replicates": 2}, "replicates"),
         ({"step": 1.5}, "step"), ({"burn_in": 60_000}, "burn_in"), ({"seed": -1}, "seed"),
         ({"n": "ten"}, "n"), ({"wavelet": "db1"}, "order"), ({"truth": "blocks"}, "truth")],
    )
    def test_constraints_name_field(self, override, fld):
        with pytest.raises(ConfigurationError) as exc:
            parse_config(None, {"subcommand": "rate-study", **override})
        assert exc.value.field == fld

    def test_missing_config_file(self, tmp_path):
        with pytest.raises(ConfigurationError):
            parse_config(tmp_path / "nope.json")


class TestMain:
    def test_sample_prior_outputs(self, tmp_path, capsys):
        path = write(tmp_path, {"subcommand": "sample-prior", "alpha": 2, "d": 1, "n": 1, "L": 8,
                                "seed": 7})
        out = tmp_path / "run"
        assert main(["--config", str(path), "--out-dir", str(out)]) == 0
        for name in ("coefficients.csv", "draw-grid.csv", "resolved-config.json", "manifest.json"):
            assert (out / name).exists()
        resolved = json.loads((out / "resolved-config.json").read_text())
        assert resolved["L"] == 8 and resolved["n_iters"] == 50_000
        manifest = json.loads((out / "manifest.json").read_text())
        assert manifest["seed"] == 7 and "numpy" in manifest["versions"]

    def test_rate_study_outputs(self, tmp_path):
        out = tmp_path / "rs"
        argv = ["rate-study", "--out-dir", str(out)]
        for k, v in FAST.items():
            argv += [f"--{k.replace('_', '-')}", ",".join(map(str, v)) if isinstance(v, list) else str(v)]
        assert main(argv) == 0
        for name in ("results.csv", "summary.csv", "rate-plot.svg"):
            assert (out / name).exists()
        lines = (out / "summary.csv").read_text().splitlines()
        assert lines[0].startswith("n,median,iqr_lo,iqr_hi,rate_ref") and len(lines) == 1 + 3
        assert (out / "results.csv").read_text().splitlines()[0] == "n,replicate,error,estimator,family,seed"

    def test_error_line(self, tmp_path, capsys):
        path = write(tmp_path, {"subcommand": "sample-prior", "alpha": 1})
        assert main(["--config", str(path), "--out-dir", str(tmp_path / "x")]) == 2
        err = capsys.readouterr().err.strip().splitlines()
        assert len(err) == 1 and err[0].startswith("error ")
        record = json.loads(err[0][len("error "):])
        assert record["code"] == "config.invalid" and record["field"] == "alpha"

    def test_unknown_flag(self, capsys):
        assert main(["simulate", "--bogus", "1"]) == 2
        record = json.loads(capsys.readouterr().err.strip()[len("error "):])
        assert record["code"] == "usage.invalid"

    def test_env_output_root(self, tmp_path, monkeypatch, capsys):
        monkeypatch.setenv("BESOV_LAPLACE_OUTPUT_ROOT", str(tmp_path / "root"))
        assert main(["simulate", "--n", "20", "--seed", "5"]) == 0
        (run,) = (tmp_path / "root").iterdir()
        assert run.name.endswith("-seed5") and (run / "dataset.csv").exists()

    def test_fit_from_data_file(self, tmp_path):
        assert main(["simulate", "--n", "100", "--out-dir", str(tmp_path / "sim")]) == 0
        data = tmp_path / "sim" / "dataset.csv"
        assert main(["fit-map", "--data", str(data), "--out-dir", str(tmp_path / "fit")]) == 0
        header = (tmp_path / "fit" / "map-summary.csv").read_text().splitlines()[0]
        assert "l2_error" not in header and "objective" in header

    @pytest.mark.parametrize("sub", SUBCOMMANDS)
    def test_byte_identical_reruns(self, tmp_path, sub):
        cfg = write(tmp_path, {"subcommand": sub, "seed": 11, **FAST})
        if sub == "compare-priors":
            cfg = write(tmp_path, {"subcommand": sub, "seed": 11, **FAST, "n_grid": [64, 128, 256]})
        a, b = tmp_path / "a", tmp_path / "b"
        assert main(["--config", str(cfg), "--out-dir", str(a)]) == 0
        assert main(["--config", str(cfg), "--out-dir", str(b)]) == 0
        ca, cb = csv_bytes(a), csv_bytes(b)
        assert ca and ca == cb
