import dataclasses

import pytest

from shelving_readout.config import (
    ConfigError,
    default_config,
    load_config,
    validate_config,
)


def write_toml(tmp_path, text):
    path = tmp_path / "config.toml"
    path.write_text(text)
    return str(path)


class TestLoading:
    def test_defaults_are_valid(self):
        cfg = default_config()
        assert validate_config(cfg) == []

    def test_missing_file_is_a_config_error(self):
        with pytest.raises(ConfigError, match="not found"):
            load_config("/nonexistent/config.toml")

    def test_invalid_toml_is_a_config_error(self, tmp_path):
        path = write_toml(tmp_path, "this is not toml ===")
        with pytest.raises(ConfigError, match="TOML"):
            load_config(path)

    def test_partial_override(self, tmp_path):
        path = write_toml(
            tmp_path,
            """
            [rates]
            t01 = 10.0

            [run]
            shots = 1234
            shelving = false
            """,
        )
        cfg = load_config(path)
        assert cfg.rates.t01 == 10.0
        assert cfg.rates.t12 == default_config().rates.t12
        assert cfg.shots == 1234
        assert cfg.shelving is False
        assert cfg.scheme == ()

    def test_explicit_tone_frequency_disables_auto(self, tmp_path):
        path = write_toml(
            tmp_path,
            """
            [tones.primary]
            frequency = 6.6050
            """,
        )
        cfg = load_config(path)
        assert cfg.auto_primary is False
        assert cfg.primary.frequency == 6.6050
        assert cfg.auto_secondary is True

    def test_bad_frequency_string_rejected(self, tmp_path):
        path = write_toml(
            tmp_path,
            """
            [tones.primary]
            frequency = "whenever"
            """,
        )
        with pytest.raises(ConfigError):
            load_config(path)


class TestValidation:
    def test_equal_chi_flagged(self):
        cfg = default_config()
        cfg = dataclasses.replace(
            cfg, resonator=dataclasses.replace(cfg.resonator, chi=(0.0, -9.0, -9.0, -15.0))
        )
        problems = validate_config(cfg)
        assert any("distinct" in p for p in problems)

    def test_photon_budget_flagged(self):
        cfg = dataclasses.replace(default_config(), primary_n_bar=50.0)
        problems = validate_config(cfg)
        assert any("critical photon" in p for p in problems)

    def test_bad_mode_flagged(self):
        cfg = dataclasses.replace(default_config(), mode="telepathy")
        assert any("mode" in p for p in validate_config(cfg))

    def test_bad_probability_flagged(self):
        cfg = dataclasses.replace(default_config(), thermal_population=1.5)
        assert any("probability" in p for p in validate_config(cfg))

    def test_sweep_must_cover_pulled_resonances(self):
        cfg = default_config()
        cfg = dataclasses.replace(
            cfg, sweep=dataclasses.replace(cfg.sweep, start=6.609, stop=6.611)
        )
        assert any("span" in p for p in validate_config(cfg))


class TestHashing:
    def test_hash_is_stable(self):
        assert default_config().hash() == default_config().hash()

    def test_semantic_change_changes_hash(self):
        cfg = default_config()
        assert cfg.hash() != dataclasses.replace(cfg, shots=cfg.shots + 1).hash()
        assert cfg.hash() != dataclasses.replace(cfg, seed=cfg.seed + 1).hash()
        assert (
            cfg.hash()
            != dataclasses.replace(cfg, rates=dataclasses.replace(cfg.rates, t01=7.0)).hash()
        )

    def test_worker_count_does_not_change_hash(self):
        cfg = default_config()
        assert cfg.hash() == dataclasses.replace(cfg, workers=8).hash()

    def test_formatting_does_not_change_hash(self, tmp_path):
        a = write_toml(tmp_path, "[run]\nshots = 500\n")
        b_path = tmp_path / "b.toml"
        b_path.write_text("# a comment\n\n[run]\n\nshots    =     500\n")
        assert load_config(a).hash() == load_config(str(b_path)).hash()
