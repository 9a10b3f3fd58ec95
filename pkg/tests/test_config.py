"""Configuration validation and serialization."""

import pytest

from stvflow.config import ConfigError, RunConfig, tolerance_level


class TestTolerances:
    def test_levels_halve(self):
        assert tolerance_level(0) == (2.0, 0.25)
        assert tolerance_level(1) == (1.0, 0.125)
        assert tolerance_level(3) == (0.25, 0.03125)

    def test_negative_level_rejected(self):
        with pytest.raises(ConfigError):
            tolerance_level(-1)

    def test_config_resolves_level(self):
        assert RunConfig(tol_level=2).tolerances == (0.5, 0.0625)

    def test_explicit_pair_wins(self):
        cfg = RunConfig(tol_level=2, tol_h=7.0, tol_tau=0.5)
        assert cfg.tolerances == (7.0, 0.5)

    def test_half_override_rejected(self):
        with pytest.raises(ConfigError):
            RunConfig(tol_h=1.0)


class TestValidation:
    def test_defaults_are_valid(self):
        cfg = RunConfig()
        assert cfg.T == 0.05
        assert cfg.lam == 200.0
        assert cfg.macro_n == 32
        assert cfg.tau_cap == 0.005

    @pytest.mark.parametrize(
        "kw",
        [
            {"T": 0.0},
            {"lam": -1.0},
            {"eps": 0.0},
            {"sigma_amp": -0.1},
            {"tau0": 0.0},
            {"macro_n": 0},
            {"tol_level": -1},
            {"fp_tol": 0.0},
            {"scheme": "newton"},
            {"paths": 0},
            {"noise_preset": "white"},
            {"g_preset": "ramp"},
            {"g_noise_amp": -0.5},
            {"tau_min": 0.0},
            {"tau_min": 1e-2, "tau_max": 1e-3},
            {"cg_tol": 0.0},
            {"fp_cap": 0},
            {"snapshot_times": (0.0, 1.0)},
        ],
    )
    def test_bad_values_rejected(self, kw):
        with pytest.raises(ConfigError):
            RunConfig(**kw)

    def test_tau_cap_override(self):
        assert RunConfig(tau_max=1e-3).tau_cap == 1e-3

    def test_replace_revalidates(self):
        cfg = RunConfig()
        with pytest.raises(ConfigError):
            cfg.replace(T=-1.0)


class TestSerialization:
    def test_round_trip(self):
        cfg = RunConfig(T=0.01, snapshot_times=(0.0, 0.01), scheme="si", paths=3)
        again = RunConfig.from_dict(cfg.to_dict())
        assert again == cfg
        assert isinstance(again.snapshot_times, tuple)

    def test_unknown_keys_rejected(self):
        with pytest.raises(ConfigError) as exc:
            RunConfig.from_dict({"T": 0.01, "snapshot_times": [], "granularity": 3})
        assert "granularity" in str(exc.value)

    def test_json_file_round_trip(self, tmp_path):
        cfg = RunConfig(T=0.02, snapshot_times=(0.0,), seed=5)
        f = tmp_path / "cfg.json"
        cfg.to_json(f)
        assert RunConfig.from_json(f) == cfg

    def test_json_errors_wrapped(self, tmp_path):
        f = tmp_path / "broken.json"
        f.write_text("{nope")
        with pytest.raises(ConfigError):
            RunConfig.from_json(f)
        with pytest.raises(ConfigError):
            RunConfig.from_json(tmp_path / "missing.json")
        g = tmp_path / "list.json"
        g.write_text("[1, 2]")
        with pytest.raises(ConfigError):
            RunConfig.from_json(g)
