"""Experiment configuration parsing and the command-line surface."""

import json

import numpy as np
import pytest

from filterlab.cli import main
from filterlab.config import (
    PRESET_NAMES,
    load_config,
    model_for_sweep_value,
    preset_config,
    save_config,
)
from filterlab.errors import ConfigError


class TestPresets:
    def test_names(self):
        assert PRESET_NAMES == ("example-6.1", "example-6.2")

    def test_cycle_preset_contents(self):
        cfg = preset_config("example-6.1")
        assert cfg.sweep_kind == "sigma2"
        assert cfg.sweep_values == (0.0, 0.1, 1.0, 10.0)
        assert cfg.T == 10.0 and cfg.dt == 1e-3 and cfg.n_paths == 200
        np.testing.assert_allclose(cfg.mu, [0.35, 0.35, 0.15, 0.15])
        np.testing.assert_allclose(cfg.nu, 0.25)

    def test_blocks_preset_contents(self):
        cfg = preset_config("example-6.2")
        assert cfg.sweep_kind == "k"
        assert cfg.sweep_values == (0.0, 1.0, 2.0, 4.0)
        np.testing.assert_allclose(cfg.nu, [0.1, 0.1, 0.1, 0.7])

    def test_unknown_preset(self):
        with pytest.raises(ConfigError):
            preset_config("example-9.9")


class TestModelForSweepValue:
    def test_sigma2_zero_is_noiseless(self):
        cfg = preset_config("example-6.1")
        model = model_for_sweep_value(cfg, 0.0)
        assert model.noiseless

    def test_sigma2_scales_r_as_sqrt(self):
        cfg = preset_config("example-6.1")
        model = model_for_sweep_value(cfg, 4.0)
        assert model.r == pytest.approx(2.0)
        np.testing.assert_allclose(model.h_unit, cfg.H / 2.0)

    def test_k_scales_observation(self):
        cfg = preset_config("example-6.2")
        model = model_for_sweep_value(cfg, 3.0)
        np.testing.assert_allclose(model.H, cfg.H * 3.0)
        assert model.r == cfg.r

    def test_none_gives_base_model(self):
        cfg = preset_config("example-6.1")
        model = model_for_sweep_value(cfg, None)
        assert model.r == cfg.r
        assert np.array_equal(model.H, cfg.H)


class TestLoadConfig:
    def _write(self, tmp_path, data, name="cfg.json"):
        p = tmp_path / name
        p.write_text(json.dumps(data))
        return str(p)

    def test_preset_with_overrides(self, tmp_path):
        path = self._write(
            tmp_path,
            {"preset": "example-6.1", "n_paths": 7, "sigma2_list": [1.0], "T": 2.0},
        )
        cfg = load_config(path)
        assert cfg.n_paths == 7
        assert cfg.sweep_values == (1.0,)
        assert cfg.T == 2.0

    def test_inline_model(self, tmp_path):
        path = self._write(
            tmp_path,
            {
                "model": {
                    "d": 2,
                    "m": 1,
                    "A": [-1.0, 1.0, 2.0, -2.0],
                    "H": [1.0, -1.0],
                    "r": 0.5,
                },
                "mu": [0.5, 0.5],
                "nu": [0.25, 0.75],
                "T": 1.0,
                "dt": 0.001,
                "n_paths": 3,
            },
        )
        cfg = load_config(path)
        assert cfg.d == 2
        assert cfg.r == 0.5
        assert cfg.sweep_kind is None

    def test_model_from_file_reference(self, tmp_path):
        model_path = tmp_path / "model.json"
        model_path.write_text(
            json.dumps(
                {"d": 2, "m": 1, "A": [-1.0, 1.0, 2.0, -2.0], "H": [1.0, -1.0], "r": 1.0}
            )
        )
        path = self._write(
            tmp_path,
            {"model": str(model_path), "mu": [0.5, 0.5], "nu": [0.5, 0.5], "T": 1.0},
        )
        assert load_config(path).d == 2

    def test_missing_file(self, tmp_path):
        with pytest.raises(ConfigError):
            load_config(str(tmp_path / "absent.json"))

    def test_malformed_json(self, tmp_path):
        p = tmp_path / "broken.json"
        p.write_text("{not json")
        with pytest.raises(ConfigError):
            load_config(str(p))

    def test_unknown_override_field(self, tmp_path):
        path = self._write(tmp_path, {"preset": "example-6.1", "paths": 9})
        with pytest.raises(ConfigError, match="paths"):
            load_config(path)

    def test_both_sweeps_rejected(self, tmp_path):
        path = self._write(
            tmp_path,
            {
                "model": {"d": 2, "A": [-1.0, 1.0, 2.0, -2.0], "H": [1.0, 0.0], "r": 1.0},
                "mu": [0.5, 0.5],
                "nu": [0.5, 0.5],
                "sigma2_list": [1.0],
                "k_list": [1.0],
            },
        )
        with pytest.raises(ConfigError):
            load_config(path)

    def test_non_simplex_prior_rejected(self, tmp_path):
        path = self._write(tmp_path, {"preset": "example-6.1", "mu": [0.5, 0.5, 0.5, 0.5]})
        with pytest.raises(ConfigError):
            load_config(path)

    def test_mu_must_be_dominated_by_nu(self, tmp_path):
        path = self._write(
            tmp_path,
            {"preset": "example-6.1", "nu": [0.5, 0.5, 0.0, 0.0]},
        )
        with pytest.raises(ConfigError):
            load_config(path)

    def test_dt_must_divide_T(self, tmp_path):
        path = self._write(tmp_path, {"preset": "example-6.1", "T": 1.0, "dt": 0.3})
        with pytest.raises(ConfigError):
            load_config(path)

    def test_bad_rate_window(self, tmp_path):
        path = self._write(
            tmp_path, {"preset": "example-6.1", "rate_window": [9.0, 2.0]}
        )
        with pytest.raises(ConfigError):
            load_config(path)

    def test_round_trip(self, tmp_path):
        cfg = preset_config("example-6.2").with_overrides(n_paths=11, workers=2)
        p = tmp_path / "saved.json"
        save_config(cfg, str(p))
        back = load_config(str(p))
        assert back.n_paths == 11 and back.workers == 2
        assert back.sweep_kind == "k" and back.sweep_values == cfg.sweep_values
        assert np.array_equal(back.A, cfg.A)
        assert np.array_equal(back.H, cfg.H)

    def test_with_overrides_is_functional(self):
        cfg = preset_config("example-6.1")
        other = cfg.with_overrides(n_paths=9)
        assert cfg.n_paths == 200 and other.n_paths == 9


def _tiny_config(tmp_path, **extra):
    data = {
        "preset": "example-6.1",
        "n_paths": 4,
        "T": 0.2,
        "sigma2_list": [1.0],
        "T_list": [0.1, 0.2],
    }
    data.update(extra)
    p = tmp_path / "tiny.json"
    p.write_text(json.dumps(data))
    return str(p)


class TestCliExitCodes:
    def test_usage_error_is_config_exit(self, capsys):
        assert main(["not-a-command"]) == 1
        assert "configuration error" in capsys.readouterr().err

    def test_missing_experiment_source(self, capsys):
        assert main(["simulate"]) == 1

    def test_both_experiment_sources(self, tmp_path, capsys):
        cfg = _tiny_config(tmp_path)
        assert main(["simulate", "--config", cfg, "--preset", "example-6.1"]) == 1

    def test_numerical_failure_exit(self, tmp_path, capsys):
        p = tmp_path / "noiseless.json"
        p.write_text(
            json.dumps(
                {
                    "model": {
                        "d": 2,
                        "A": [-1.0, 1.0, 1.0, -1.0],
                        "H": [1.0, 0.0],
                        "r": 0.0,
                    },
                    "mu": [0.7, 0.3],
                    "nu": [0.5, 0.5],
                    "T": 0.5,
                    "n_paths": 2,
                    "T_list": [0.5],
                }
            )
        )
        assert main(["backward-map", "--config", str(p)]) == 2
        assert "numerical failure" in capsys.readouterr().err


class TestCliSimulate:
    def test_tiny_run_writes_artifacts(self, tmp_path, capsys):
        cfg = _tiny_config(tmp_path)
        out = tmp_path / "out"
        code = main(
            ["simulate", "--config", cfg, "--out", str(out), "--seed", "99", "--plot-data"]
        )
        assert code == 0
        report = json.loads((out / "report_simulate.json").read_text())
        assert report["config"]["master_seed"] == 99
        assert (out / "series_sigma2=1.csv").exists()
        assert (out / "plotdata_sigma2=1.csv").exists() or report["sweep"][0][
            "rate_fit"
        ] is None
        text = capsys.readouterr().out
        assert "chi2(0) = 0.160000" in text

    def test_seed_and_workers_do_not_change_results(self, tmp_path):
        cfg = _tiny_config(tmp_path)
        outs = []
        for w, name in (("1", "a"), ("3", "b")):
            out = tmp_path / name
            assert main(["simulate", "--config", cfg, "--out", str(out), "--workers", w]) == 0
            report = json.loads((out / "report_simulate.json").read_text())
            report.pop("wall_clock_s")
            report["config"].pop("workers")
            outs.append(report)
        assert outs[0] == outs[1]


class TestCliStructureAndVerify:
    def test_structure_preset(self, tmp_path, capsys):
        assert main(["structure", "--preset", "example-6.2", "--out", str(tmp_path)]) == 0
        payload = json.loads((tmp_path / "report_structure.json").read_text())["structure"]
        assert payload["ergodic"] is False
        assert payload["observable_dim"] == 4
        assert payload["invariant_note"] != ""
        assert "ergodic: False" in capsys.readouterr().out

    def test_structure_model_file(self, tmp_path):
        from filterlab.model import save_model, validate_model

        model = validate_model(
            np.array([[-1.0, 1.0], [2.0, -2.0]]), np.array([1.0, -1.0]), 1.0
        )
        mp = tmp_path / "model.json"
        save_model(model, str(mp))
        assert main(["structure", "--model", str(mp), "--out", str(tmp_path)]) == 0
        payload = json.loads((tmp_path / "report_structure.json").read_text())["structure"]
        assert payload["ergodic"] is True
        assert payload["classical_pi"]["constant"] == pytest.approx(6.0)

    def test_verify_deterministic_only(self, tmp_path, capsys):
        assert main(["verify", "--size", "0", "--out", str(tmp_path)]) == 0
        report = json.loads((tmp_path / "report_verify.json").read_text())
        assert report["passed"] is True
        assert all(c["kind"] == "deterministic" for c in report["checks"])
        assert "checks passed" in capsys.readouterr().out

    def test_out_dir_from_environment(self, tmp_path, monkeypatch):
        target = tmp_path / "envout"
        monkeypatch.setenv("FILTERLAB_OUT", str(target))
        assert main(["verify", "--size", "0"]) == 0
        assert (target / "report_verify.json").exists()


class TestCliBackwardMap:
    def test_small_run(self, tmp_path, capsys):
        cfg = _tiny_config(tmp_path, n_paths=10)
        out = tmp_path / "bm"
        assert main(["backward-map", "--config", cfg, "--out", str(out)]) == 0
        report = json.loads((out / "report_backward_map.json").read_text())
        assert {d["T"] for d in report["diagnostics"]} == {0.1, 0.2}
        assert set(report["estimates"]) == {"plain", "rao-blackwell"}
        assert (out / "backward_map_plain.csv").exists()
        assert (out / "backward_map_rao-blackwell.csv").exists()
        assert "var_nu(y0)" in capsys.readouterr().out
