import dataclasses

import numpy as np
import pytest

from shelving_readout.config import default_config
from shelving_readout.experiments import (
    run_frequency_selection,
    run_shelving_decay,
    run_three_state,
    run_two_state,
)
from shelving_readout.levels import DecayRates
from shelving_readout.readout import NoiseModel, ToneConfig, iq_center


def fast_config(**overrides):
    cfg = default_config()
    fast = dict(shots=1500, calibration_shots=1200, seed=321)
    fast.update(overrides)
    return dataclasses.replace(cfg, **fast)


class TestShelvingDecay:
    def test_closed_loop_rate_recovery(self, tmp_path):
        report = run_shelving_decay(default_config(), tmp_path)
        fitted = report.summary["fitted_rates_us"]
        assert fitted["t01"] == pytest.approx(6.18, rel=0.05)
        assert fitted["t12"] == pytest.approx(5.21, rel=0.10)
        assert fitted["t23"] == pytest.approx(2.06, rel=0.10)

    def test_readout_window_decay_errors(self, tmp_path):
        cfg = fast_config(decay=dataclasses.replace(default_config().decay, n_trajectories=2000))
        report = run_shelving_decay(cfg, tmp_path)
        at_window = report.summary["p0_analytic_at_readout_window"]
        assert at_window["0"] == 1.0  # ground preparation stays flat
        assert at_window["1"] == pytest.approx(0.0224, abs=0.0001)
        assert at_window["3"] < at_window["2"] < at_window["1"]


class TestTwoState:
    def test_assignment_never_beats_ideal(self, tmp_path):
        cfg = fast_config(shots=4000)
        report = run_two_state(cfg, tmp_path)
        for arm in report.summary["arms"].values():
            assert arm["assignment_fidelity"] <= arm["ideal_fidelity"]

    def test_noiseless_undecayed_run_is_perfect(self, tmp_path):
        cfg = fast_config(
            shots=400,
            calibration_shots=300,
            rates=DecayRates(1e9, 9e8, 8e8),
            noise=NoiseModel(0.0),
            transfer_error=0.0,
            preparation_error=0.0,
            thermal_population=0.0,
            preselection=False,
        )
        report = run_two_state(cfg, tmp_path)
        for arm in report.summary["arms"].values():
            assert arm["assignment_fidelity"] == 1.0
            assert arm["ideal_fidelity"] is None  # zero spread, no SNR defined


class TestThreeState:
    def test_two_is_misread_as_zero_more_than_as_one(self, tmp_path):
        cfg = fast_config(shots=20000, calibration_shots=4000)
        report = run_three_state(cfg, tmp_path)
        matrix = np.array(report.summary["matrix_truth_table"])
        assert matrix[0, 2] > matrix[1, 2]

    def test_two_tone_mode_requires_compatible_discriminator(self, tmp_path):
        from shelving_readout.config import ConfigError

        cfg = fast_config(discriminator="gaussian")
        with pytest.raises(ConfigError):
            run_three_state(cfg, tmp_path)


class TestFrequencySelection:
    def test_selected_primary_is_the_exhaustive_argmax(self, tmp_path):
        cfg = fast_config()
        report = run_frequency_selection(cfg, tmp_path)
        primary = report.summary["primary_frequency_ghz"]

        grid = cfg.sweep.frequencies()
        best_f, best_sep = None, -1.0
        for f in grid:
            tone = ToneConfig(frequency=float(f), amplitude=1.0, duration_ns=140.0)
            sep = abs(iq_center(cfg.resonator, tone, 0) - iq_center(cfg.resonator, tone, 1))
            if sep > best_sep:
                best_f, best_sep = float(f), sep
        assert primary == best_f

    def test_tones_are_distinct_for_the_default_device(self, tmp_path):
        report = run_frequency_selection(fast_config(), tmp_path)
        gap = report.summary["frequency_gap_mhz"]
        assert gap != 0.0
        assert abs(gap) <= 20.0
