"""End-to-end tests for the neld command line."""

from __future__ import annotations

from pathlib import Path

from typer.testing import CliRunner

from neld import __version__
from neld.cli import app
from neld.results import PROFILES_FILE, REPORT_FILE, REPORT_LONG_FILE, read_table

runner = CliRunner()

_TABLES = ("chain.tsv", "series.tsv", "profiles.tsv", "summary.tsv")

BLOWUP = """\
flow.kind = "equilibrium"
flow.rate = 1.0
sim.gamma = 100.0
sim.steps_per_period = 1
sim.scheme = "euler_maruyama"
run.n_periods = 400
run.n_trajectories = 2
"""

THREADED = """\
flow.kind = "planar_elongation"
sim.steps_per_period = 4
potential.kind = "fractional_cosine"
potential.modes = [{ m = [1, 1, 0], amplitude = 0.3 }]
run.n_periods = 2
run.n_trajectories = 130
run.phase_bins = 2
init_b.momentum_scale = 2.0
"""


def _run(config: Path, out: Path, *extra: str):
    return runner.invoke(app, ["run", "--config", str(config), "--out", str(out), *extra])


def test_version():
    result = runner.invoke(app, ["--version"])
    assert result.exit_code == 0
    assert __version__ in result.output


class TestRunCommand:
    def test_writes_tables(self, small_config, tmp_path):
        result = _run(small_config, tmp_path / "out")
        assert result.exit_code == 0, result.output
        for name in (*_TABLES, "config.json"):
            assert (tmp_path / "out" / name).exists()

    def test_reruns_are_byte_identical(self, small_config, tmp_path):
        assert _run(small_config, tmp_path / "a").exit_code == 0
        assert _run(small_config, tmp_path / "b").exit_code == 0
        for name in _TABLES:
            assert (tmp_path / "a" / name).read_bytes() == (tmp_path / "b" / name).read_bytes()

    def test_threads_do_not_change_output(self, write_config, tmp_path):
        config = write_config(THREADED)
        assert _run(config, tmp_path / "one", "--threads", "1").exit_code == 0
        assert _run(config, tmp_path / "four", "--threads", "4").exit_code == 0
        for name in _TABLES:
            assert (tmp_path / "one" / name).read_bytes() == (tmp_path / "four" / name).read_bytes()

    def test_seed_override_changes_output(self, small_config, tmp_path):
        assert _run(small_config, tmp_path / "a").exit_code == 0
        assert _run(small_config, tmp_path / "b", "--seed", "43").exit_code == 0
        assert (tmp_path / "a" / "chain.tsv").read_bytes() != (tmp_path / "b" / "chain.tsv").read_bytes()

    def test_zero_rate_is_a_config_error(self, write_config, tmp_path):
        result = _run(write_config("flow.rate = 0.0\n"), tmp_path / "out")
        assert result.exit_code == 2
        assert "zero-rate" in result.output

    def test_pair_cutoff_names_key(self, write_config, tmp_path):
        config = write_config('flow.kind = "planar_elongation"\nsim.particles = 2\npotential.kind = "smooth_pair"\npotential.pair = { depth = 1.0, range = 0.9 }\n')
        result = _run(config, tmp_path / "out")
        assert result.exit_code == 2
        assert "potential.pair.range" in result.output

    def test_missing_config(self, tmp_path):
        result = _run(tmp_path / "missing.toml", tmp_path / "out")
        assert result.exit_code == 2

    def test_blowup_exit_code(self, write_config, tmp_path):
        result = _run(write_config(BLOWUP), tmp_path / "out")
        assert result.exit_code == 3
        assert "trajectory" in result.output
        assert not (tmp_path / "out" / "summary.tsv").exists()


class TestVerifyCommand:
    def test_remap_suite_passes(self):
        result = runner.invoke(app, ["verify", "remap"])
        assert result.exit_code == 0, result.output
        assert "All checks passed" in result.output

    def test_unknown_suite(self):
        result = runner.invoke(app, ["verify", "bogus"])
        assert result.exit_code == 2


class TestReportCommand:
    def test_report_rows(self, small_config, tmp_path):
        assert _run(small_config, tmp_path / "run").exit_code == 0
        result = runner.invoke(app, ["report", str(tmp_path / "run"), "--out", str(tmp_path / "report")])
        assert result.exit_code == 0, result.output

        wide = read_table(tmp_path / "report" / REPORT_FILE)
        # two observables times four phase bins
        assert len(wide.rows) == 8
        assert {"lambda_hat", "r_squared", "period"} <= set(wide.names)

        long = read_table(tmp_path / "report" / REPORT_LONG_FILE)
        quantities = set(long.column("quantity"))
        assert {"profile_mean", "lambda_hat", "drift_a"} <= quantities

    def test_report_over_several_runs(self, small_config, tmp_path):
        assert _run(small_config, tmp_path / "r1").exit_code == 0
        assert _run(small_config, tmp_path / "r2", "--seed", "5").exit_code == 0
        result = runner.invoke(app, ["report", str(tmp_path / "r1"), str(tmp_path / "r2")])
        assert result.exit_code == 0, result.output
        wide = read_table(tmp_path / "r1" / REPORT_FILE)
        assert set(wide.column("run")) == {"r1", "r2"}
        assert len(wide.rows) == 16

    def test_runs_with_different_drift_exponents(self, small_config, write_config, tmp_path):
        narrow = write_config(small_config.read_text() + "run.drift_exponents = [1]\n", name="k1.toml")
        assert _run(small_config, tmp_path / "wide").exit_code == 0
        assert _run(narrow, tmp_path / "narrow").exit_code == 0
        result = runner.invoke(app, ["report", str(tmp_path / "wide"), str(tmp_path / "narrow"), "--out", str(tmp_path / "rep")])
        assert result.exit_code == 0, result.output
        wide = read_table(tmp_path / "rep" / REPORT_FILE)
        column = wide.column("drift_a.K2")
        runs = wide.column("run")
        assert all(cell == "" for cell, run in zip(column, runs) if run == "narrow")

    def test_corrupt_bin_cell(self, small_config, tmp_path):
        assert _run(small_config, tmp_path / "run").exit_code == 0
        profiles = tmp_path / "run" / PROFILES_FILE
        lines = profiles.read_text().splitlines()
        index = read_table(profiles).names.index("bin")
        cells = lines[1].split("\t")
        cells[index] = "x"
        lines[1] = "\t".join(cells)
        profiles.write_text("\n".join(lines) + "\n")
        result = runner.invoke(app, ["report", str(tmp_path / "run")])
        assert result.exit_code == 2
        assert "Not an integer" in result.output

    def test_empty_directory(self, tmp_path):
        result = runner.invoke(app, ["report", str(tmp_path)])
        assert result.exit_code == 2
