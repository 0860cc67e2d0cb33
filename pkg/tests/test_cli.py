import json

import numpy as np
import pytest

from spacingfit.calibration import DEFAULT_Q_GRID, SigmaTable, save_sigma_table
from spacingfit.cli import dispatch, load_config
from spacingfit.stats import read_histogram


@pytest.fixture(scope="module")
def table_path(tmp_path_factory):
    n_range = np.arange(3, 151)
    variances = np.tile((n_range + 1.0)[:, None], (1, len(DEFAULT_Q_GRID)))
    table = SigmaTable(q_grid=DEFAULT_Q_GRID, n_range=n_range,
                       variances=variances, provenance={"synthetic": "flat"})
    path = tmp_path_factory.mktemp("table") / "sigma.csv"
    save_sigma_table(table, path)
    return str(path)


def run(*argv):
    return dispatch(list(argv))


class TestLoadConfig:
    def test_flags_parse(self):
        cfg = load_config("generate", ["--n", "100", "--beta", "0.5", "--count",
                                       "2", "--seed", "7", "--out", "d"])
        assert cfg.n_dim == 100
        assert cfg.beta == 0.5
        assert cfg.out == "d"

    def test_file_and_flags_equivalent(self, tmp_path):
        cfile = tmp_path / "run.conf"
        cfile.write_text("n_dim=100\nbeta=0.5\ncount=2\nseed=7\nout=d\n")
        from_file = load_config("generate", ["--config", str(cfile)])
        from_flags = load_config("generate", ["--n", "100", "--beta", "0.5",
                                              "--count", "2", "--seed", "7",
                                              "--out", "d"])
        assert from_file == from_flags

    def test_flags_override_file(self, tmp_path):
        cfile = tmp_path / "run.conf"
        cfile.write_text("n_dim=100\nbeta=0.5\ncount=2\nseed=7\nout=d\n")
        cfg = load_config("generate", ["--config", str(cfile), "--beta", "0.9"])
        assert cfg.beta == 0.9

    def test_unknown_key_rejected(self, tmp_path):
        cfile = tmp_path / "run.conf"
        cfile.write_text("n_dmi=100\n")
        with pytest.raises(Exception, match="unknown key"):
            load_config("generate", ["--config", str(cfile)])

    def test_inapplicable_key_rejected(self, tmp_path):
        cfile = tmp_path / "run.conf"
        cfile.write_text("bin_width=0.1\n")
        with pytest.raises(Exception, match="does not apply"):
            load_config("generate", ["--config", str(cfile)])

    def test_bound_violation_names_the_bound(self, capsys):
        status = run("thin", "--in", "x", "--out", "y", "--f", "1.5", "--seed", "1")
        assert status == 2
        err = capsys.readouterr().err
        assert "--f" in err and "(0, 1]" in err

    def test_defaults_applied(self):
        cfg = load_config("hist", ["--in", "a", "--out", "b"])
        assert cfg.bin_width == 0.1
        assert cfg.s_max == 5.0
        assert cfg.k_max == 150


class TestPipeline:
    def test_full_chain(self, tmp_path, table_path, capsys):
        d = tmp_path
        assert run("generate", "--n", "400", "--beta", "0.8", "--count", "2",
                   "--seed", "42", "--out", str(d / "spec")) == 0
        files = sorted((d / "spec").iterdir())
        assert [f.name for f in files] == ["spectrum_0000.txt", "spectrum_0001.txt"]
        text = files[0].read_text()
        assert text.startswith("#")
        assert "command=" in text

        assert run("unfold", "--in", str(files[0]), "--out", str(d / "seq.txt")) == 0
        assert run("thin", "--in", str(d / "seq.txt"), "--out", str(d / "thin.txt"),
                   "--f", "0.8", "--seed", "9") == 0
        assert run("spacings", "--in", str(d / "thin.txt"),
                   "--out", str(d / "sample.txt")) == 0
        assert run("hist", "--in", str(d / "sample.txt"),
                   "--out", str(d / "hist.csv")) == 0
        hist = read_histogram(d / "hist.csv")
        assert hist.total_count > 0

        assert run("model", "--q", "0.8", "--f", "0.8", "--smax", "5",
                   "--step", "0.1", "--table", table_path,
                   "--out", str(d / "curve.csv")) == 0
        assert run("chi2", "--in", str(d / "hist.csv"),
                   "--curve", str(d / "curve.csv")) == 0
        out = capsys.readouterr().out
        assert out.startswith("chi2=")
        float(out.split("=", 1)[1])

    def test_generate_rerun_byte_identical(self, tmp_path):
        args = ("generate", "--n", "60", "--beta", "0.3", "--count", "2",
                "--seed", "5", "--out", str(tmp_path / "d"))
        assert run(*args) == 0
        first = {name: (tmp_path / "d" / name).read_bytes()
                 for name in ("spectrum_0000.txt", "spectrum_0001.txt")}
        assert run(*args) == 0
        for name, data in first.items():
            assert (tmp_path / "d" / name).read_bytes() == data

    def test_generate_workers_byte_identical(self, tmp_path):
        base = ("generate", "--n", "60", "--beta", "0.3", "--count", "3",
                "--seed", "5", "--out", str(tmp_path / "d"))
        assert run(*base) == 0
        first = {f"spectrum_{i:04d}.txt": (tmp_path / "d" / f"spectrum_{i:04d}.txt").read_bytes()
                 for i in range(3)}
        assert run(*base, "--workers", "3") == 0
        for name, data in first.items():
            assert (tmp_path / "d" / name).read_bytes() == data

    def test_model_curve_integrates_to_one(self, tmp_path, shipped_table):
        # needs the calibrated variances: at q=0.6 the flat fixture's fat
        # Gaussian tails push several e-3 of mass beyond s_max
        out = tmp_path / "curve.csv"
        assert run("model", "--q", "0.6", "--f", "0.7", "--smax", "5",
                   "--step", "0.01", "--out", str(out)) == 0
        from spacingfit.model import read_curve
        curve = read_curve(out)
        mass = np.trapezoid(curve.values, curve.grid)
        assert mass == pytest.approx(1.0, abs=1e-3)

    def test_fit_roundtrip(self, tmp_path, table_path):
        from spacingfit.calibration import load_sigma_table
        from spacingfit.model import ModelParams, sample_spacings
        from spacingfit.stats import histogram, write_histogram
        table = load_sigma_table(table_path)
        sample = sample_spacings(ModelParams(q=0.6, f=0.8), 50_000, seed=3,
                                 table=table)
        write_histogram(histogram(sample), tmp_path / "h.csv")
        out = tmp_path / "fit.json"
        assert run("fit", "--in", str(tmp_path / "h.csv"), "--table", table_path,
                   "--out", str(out)) == 0
        doc = json.loads(out.read_text())
        assert abs(doc["q_hat"] - 0.6) < 0.06
        assert abs(doc["f_hat"] - 0.8) < 0.06
        assert doc["provenance"]["table"]["synthetic"] == "flat"

    def test_calibrate_sigma_subcommand(self, tmp_path):
        out = tmp_path / "sigma.csv"
        assert run("calibrate-sigma", "--n", "300", "--count", "4", "--seed", "11",
                   "--q-grid", "0,0.5", "--nmax", "5", "--min-count", "500",
                   "--out", str(out)) == 0
        from spacingfit.calibration import load_sigma_table
        table = load_sigma_table(out)
        assert table.n_max == 5
        assert np.array_equal(table.q_grid, [0.0, 0.5])

    def test_solve_bn_prints_json(self, capsys):
        assert run("solve-bn", "--order-n", "1", "--q", "0.5") == 0
        doc = json.loads(capsys.readouterr().out)
        assert doc["bn"] == pytest.approx(0.3106933770, rel=1e-6)

    def test_ensemble_fit_subcommand(self, tmp_path, table_path):
        out = tmp_path / "dist.csv"
        summary = tmp_path / "summary.json"
        assert run("ensemble-fit", "--n", "300", "--beta", "0.8", "--count", "10",
                   "--seed", "2", "--f", "0.9", "--table", table_path,
                   "--out", str(out), "--summary-out", str(summary)) == 0
        doc = json.loads(summary.read_text())
        assert doc["n_success"] + doc["n_failed"] == 10
        assert "q_bin,f_bin,count" in out.read_text()


class TestErrorPaths:
    def test_unknown_subcommand(self, capsys):
        assert run("frobnicate") == 2
        assert "error kind=usage" in capsys.readouterr().err

    def test_unknown_flag(self, capsys):
        assert run("generate", "--frobnicate", "3") == 2
        assert "error kind=usage" in capsys.readouterr().err

    def test_missing_required(self, capsys):
        assert run("generate", "--n", "100") == 2
        err = capsys.readouterr().err
        assert "requires" in err

    def test_runtime_failure_is_exit_one(self, tmp_path, capsys):
        missing = str(tmp_path / "nope.txt")
        assert run("unfold", "--in", missing, "--out", str(tmp_path / "o.txt")) == 1
        assert "error kind=" in capsys.readouterr().err

    def test_no_args_usage(self, capsys):
        assert run() == 2
        assert "usage" in capsys.readouterr().out

    def test_version_runs(self, capsys):
        assert run("--version") == 0
        out = capsys.readouterr().out
        assert "spacingfit" in out


class TestGnuplot:
    def test_hist_script_emitted(self, tmp_path):
        from spacingfit.stats import SpacingSample, histogram, write_sample
        rng = np.random.default_rng(0)
        write_sample(SpacingSample(order=0, values=rng.exponential(1, 200) + 1e-9),
                     tmp_path / "s.txt")
        out = tmp_path / "h.csv"
        assert run("hist", "--in", str(tmp_path / "s.txt"), "--out", str(out),
                   "--gnuplot") == 0
        script = (tmp_path / "h.csv.gnuplot").read_text()
        assert "plot" in script and "h.csv" in script

    def test_model_script_emitted(self, tmp_path, table_path):
        out = tmp_path / "c.csv"
        assert run("model", "--q", "0.5", "--f", "0.9", "--smax", "3",
                   "--step", "0.1", "--table", table_path, "--out", str(out),
                   "--gnuplot") == 0
        assert (tmp_path / "c.csv.gnuplot").exists()
