"""Configuration, rate fits, manufactured solutions, output formats and the CLI."""

import json
from dataclasses import replace
from pathlib import Path

import numpy as np
import pytest

from electrodiff.cli import EXIT_CONFIG, EXIT_OK, EXIT_SOLVER, main
from electrodiff.diagnostics import METRICS
from electrodiff.errors import ConfigError, InsufficientDataError
from electrodiff.fields import LimitState, NpnsState
from electrodiff.harness import io
from electrodiff.harness.config import OUT_ENV, config_from_dict, load_config
from electrodiff.harness.experiments import fit_rate, run_comparison
from electrodiff.harness.mms import observed_orders, run_mms
from electrodiff.spectral import Grid, ScalarField, VectorField

ROOT = Path(__file__).resolve().parents[1]
ACCEPTANCE_TOML = ROOT / "configs" / "acceptance.toml"

SMALL = """
n = 16
T = 0.05
snapshots = 5
lambdas = [0.2, 0.1, 0.05]
doping_modes = [[1, 0, 0.1, "cos"], [0, 1, 0.1, "cos"]]
v0_modes = [[[0, 1, 0.05, "sin"]], [[1, 0, 0.05, "sin"]]]
"""


@pytest.fixture
def small_config(tmp_path, monkeypatch):
    monkeypatch.delenv(OUT_ENV, raising=False)
    path = tmp_path / "small.toml"
    path.write_text(SMALL)
    return path


class TestConfig:
    def test_acceptance_file(self, monkeypatch):
        monkeypatch.delenv(OUT_ENV, raising=False)
        cfg = load_config(ACCEPTANCE_TOML)
        assert (cfg.dim, cfg.n, cfg.T, cfg.snapshots) == (2, 64, 0.5, 20)
        assert cfg.lambdas == (0.2, 0.1, 0.05, 0.025)
        assert cfg.snapshot_times[-1] == 0.5

    @pytest.mark.parametrize("raw", [
        {"n": 12},
        {"dim": 4},
        {"lambdas": [0.1, 0.2, 0.05]},
        {"lambdas": [0.8, 0.1, 0.05]},
        {"lambdas": []},
        {"snapshots": 3},
        {"T": 0.0},
        {"dt_policy": "sometimes"},
        {"doping_modes": [[1, 0, 0.1, "tan"]]},
        {"v0_modes": [[]]},
        {"colour": "blue"},
    ])
    def test_rejects(self, raw, monkeypatch):
        monkeypatch.delenv(OUT_ENV, raising=False)
        with pytest.raises(ConfigError):
            config_from_dict(raw)

    def test_syntax_error(self, tmp_path):
        bad = tmp_path / "bad.toml"
        bad.write_text("n = = 3\n")
        with pytest.raises(ConfigError, match="bad.toml"):
            load_config(bad)

    def test_missing_file(self, tmp_path):
        with pytest.raises(ConfigError):
            load_config(tmp_path / "absent.toml")

    def test_output_override(self, monkeypatch, tmp_path):
        monkeypatch.setenv(OUT_ENV, str(tmp_path / "elsewhere"))
        assert config_from_dict({}).output_dir == str(tmp_path / "elsewhere")


class TestFitRate:
    LAMS = (0.2, 0.1, 0.05, 0.025)

    def test_linear_law(self):
        fit = fit_rate(self.LAMS, self.LAMS)
        assert fit.slope == pytest.approx(1.0, abs=1e-12)
        assert fit.intercept == pytest.approx(0.0, abs=1e-12)
        assert fit.r_squared == pytest.approx(1.0, abs=1e-12)

    def test_quadratic_law(self):
        fit = fit_rate(self.LAMS, [3 * x**2 for x in self.LAMS])
        assert fit.slope == pytest.approx(2.0, abs=1e-12)
        assert fit.intercept == pytest.approx(np.log(3.0), abs=1e-12)

    def test_non_positive_values_dropped(self):
        fit = fit_rate(self.LAMS + (0.0125,), list(self.LAMS) + [0.0])
        assert fit.slope == pytest.approx(1.0, abs=1e-12)
        assert len(fit.values) == 5

    def test_too_few(self):
        with pytest.raises(InsufficientDataError):
            fit_rate((0.2, 0.1, 0.05), (1.0, float("nan"), 0.5))


class TestMms:
    def test_observed_orders(self):
        orders = observed_orders([1e-2, 5e-3, 2.5e-3], [4e-4, 1e-4, 2.5e-5])
        assert orders[0] is None
        assert orders[1:] == pytest.approx([2.0, 2.0], abs=1e-12)

    @pytest.mark.parametrize("system", ["npns", "limit"])
    def test_zero_solution(self, system):
        rows = run_mms(system, "dt", [1e-3], T=0.01, n=16, amplitude=0.0)
        assert rows[0].error <= 1e-14

    @pytest.mark.parametrize("system", ["npns", "limit"])
    def test_temporal_order(self, system):
        rows = run_mms(system, "dt", [2e-3, 1e-3, 5e-4], T=0.05, n=16)
        for r in rows[1:]:
            assert r.order == pytest.approx(2.0, abs=0.2)

    def test_unknown_study(self):
        with pytest.raises(ValueError):
            run_mms("npns", "space", [8])
        with pytest.raises(ValueError):
            run_mms("maxwell", "dt", [1e-3])


class TestIo:
    def test_headers_only(self, tmp_path):
        path = io.write_rows_csv(tmp_path / "empty.csv", [])
        lines = path.read_text().splitlines()
        assert len(lines) == 1
        assert lines[0].split(",") == ["t", *METRICS]

    def test_column_count(self, tmp_path, small_config):
        cfg = load_config(small_config)
        res = run_comparison(cfg, 0.1, keep_bundles=False)
        path = io.write_rows_csv(tmp_path / "rows.csv", res.rows)
        back = io.read_rows_csv(path)
        assert len(back) == len(res.rows) == cfg.snapshots + 1
        assert all(len(r) == 1 + len(METRICS) for r in back)
        assert back[2]["gamma"] == res.rows[2].gamma

    def test_snapshot_round_trip(self, tmp_path, rng):
        g = Grid(2, 16)
        n = ScalarField(g, values=rng.standard_normal(g.shape))
        v = VectorField(g, values=rng.standard_normal((2,) + g.shape))
        arrays = io.state_arrays(NpnsState(0.0, n, n * 2.0, v))
        back = io.read_snapshot(io.write_snapshot(tmp_path / "s.edsnap", arrays))
        assert list(back) == ["n", "p", "v0", "v1"]
        for name, a in arrays.items():
            assert back[name].tobytes() == np.ascontiguousarray(a).tobytes()

    def test_snapshot_3d_limit_state(self, tmp_path):
        g = Grid(3, 8)
        state = LimitState(0.0, ScalarField.constant(g, 2.0), VectorField.zeros(g))
        back = io.read_snapshot(io.write_snapshot(tmp_path / "z.edsnap", io.state_arrays(state)))
        assert list(back) == ["Z", "v0", "v1", "v2"]
        assert back["Z"].shape == (8, 8, 8)

    def test_bad_magic_and_truncation(self, tmp_path):
        path = io.write_snapshot(tmp_path / "s.edsnap", {"Z": np.zeros((8, 8))})
        data = path.read_bytes()
        (tmp_path / "short.edsnap").write_bytes(data[:-8])
        with pytest.raises(ValueError, match="size"):
            io.read_snapshot(tmp_path / "short.edsnap")
        (tmp_path / "junk.edsnap").write_bytes(b"NOTASNAP" + data[8:])
        with pytest.raises(ValueError, match="not a snapshot"):
            io.read_snapshot(tmp_path / "junk.edsnap")

    def test_shape_mismatch(self, tmp_path):
        with pytest.raises(ValueError):
            io.write_snapshot(tmp_path / "x.edsnap", {"a": np.zeros((8, 8)), "b": np.zeros((16, 16))})


class TestResolution:
    def test_grid_halving_changes_h1_error_little(self, monkeypatch):
        monkeypatch.delenv(OUT_ENV, raising=False)
        cfg = load_config(ACCEPTANCE_TOML)
        fine = run_comparison(cfg, 0.1, keep_bundles=False).sup("h1_error")
        coarse = run_comparison(replace(cfg, n=32), 0.1, keep_bundles=False).sup("h1_error")
        assert abs(coarse - fine) < 0.05 * fine


class TestCli:
    def test_sweep_outputs(self, tmp_path, small_config):
        out = tmp_path / "out"
        assert main(["sweep", "--config", str(small_config), "--out", str(out)]) == EXIT_OK
        for lam in ("0.2", "0.1", "0.05"):
            assert (out / f"compare_lam{lam}.csv").is_file()
        summary = json.loads((out / "summary.json").read_text())
        assert summary["lambda"] == [0.2, 0.1, 0.05]
        assert set(summary["fits"]) == {"theorem_sum", "gamma"}
        assert not summary["failed"]

    def test_simulate_and_limit_fields(self, tmp_path, small_config):
        out = tmp_path / "out"
        assert main(["simulate", "--config", str(small_config), "--out", str(out), "--lambda", "0.1",
                     "--fields"]) == EXIT_OK
        assert main(["limit", "--config", str(small_config), "--out", str(out), "--fields"]) == EXIT_OK
        assert (out / "npns_lam0.1_steps.csv").is_file()
        assert (out / "limit_steps.csv").is_file()
        assert len(list(out.glob("npns_lam0.1_*.edsnap"))) == 6
        assert list(io.read_snapshot(out / "limit_000.edsnap")) == ["Z", "v0", "v1"]

    def test_compare_interior(self, tmp_path, small_config):
        out = tmp_path / "out"
        assert main(["compare", "--config", str(small_config), "--out", str(out), "--interior"]) == EXIT_OK
        rows = io.read_rows_csv(out / "compare_lam0.2.csv")
        assert len(rows) == 4

    def test_mms_outputs(self, tmp_path, small_config):
        cfg = small_config.read_text() + "mms_T = 0.02\nmms_ns = [8, 16]\nmms_n_T = 0.01\n"
        small_config.write_text(cfg)
        out = tmp_path / "out"
        assert main(["mms", "--config", str(small_config), "--out", str(out)]) == EXIT_OK
        report = json.loads((out / "mms.json").read_text())
        assert set(report) == {"npns/dt", "npns/n", "limit/dt", "limit/n"}
        assert (out / "mms_limit_n.csv").is_file()

    def test_config_error(self, tmp_path):
        bad = tmp_path / "bad.toml"
        bad.write_text("n = 12\n")
        assert main(["limit", "--config", str(bad), "--out", str(tmp_path)]) == EXIT_CONFIG

    def test_out_of_band_mode_is_config_error(self, tmp_path, small_config):
        small_config.write_text(small_config.read_text().replace("[1, 0, 0.1, \"cos\"]", "[9, 0, 0.1, \"cos\"]"))
        assert main(["limit", "--config", str(small_config), "--out", str(tmp_path)]) == EXIT_CONFIG

    def test_solver_failure(self, tmp_path, small_config):
        # a fixed step far above the relaxation bound of the smallest lambda
        text = small_config.read_text().replace("T = 0.05", "T = 1.0")
        small_config.write_text(text + "dt_policy = \"fixed\"\ndt = 0.01\n")
        assert main(["simulate", "--config", str(small_config), "--out", str(tmp_path),
                     "--lambda", "0.05"]) == EXIT_SOLVER
