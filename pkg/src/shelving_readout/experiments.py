"""The four desk-scale experiments wired from the library modules.

Every runner takes a validated configuration and an output directory,
writes CSV data files plus a JSON report, and returns a RunReport. All
randomness derives from the run seed through fixed per-purpose seed
words, so identical (config, seed) pairs produce byte-identical outputs;
wall-clock time is reported on stdout only and never written to disk.
"""

from __future__ import annotations

import csv
import dataclasses
import json
import math
import time
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .config import ConfigError, ExperimentConfig
from .discriminate import (
    PrimaryLabel,
    SecondaryLabel,
    StateLabel,
    TrainConfig,
    classify_secondary,
    classify_two_state,
    fit_blob,
    fit_projection,
    fnn_classify_batch,
    fnn_train,
    save_fnn,
    secondary_result_map,
    training_data_from_shots,
    truth_table_combine,
)
from .levels import (
    DecayRates,
    SHELVING_PULSES,
    ground_population_curve,
    sample_level_occupancy,
    shelve_map,
)
from .metrics import (
    FidelityReport,
    assignment_matrix,
    fidelity_n_state,
    fidelity_two_state,
    fit_decay_curves,
    ideal_fidelity,
    snr,
)
from .readout import (
    ToneConfig,
    iq_center,
    preselect,
    select_multistate_frequency,
    select_tone_frequencies,
    simulate_shots,
    write_shots_csv,
)

# fixed seed words so that every shot batch draws from its own stream
_SEED_TWO_STATE_CAL = 1
_SEED_TWO_STATE_MEAS = 2
_SEED_PHYSICAL_CAL = 3
_SEED_AXIS_CAL = 4
_SEED_FNN_CAL = 5
_SEED_THREE_STATE_MEAS = 6
_SEED_DECAY = 7
_SEED_SINGLE_CAL = 8
_SEED_SINGLE_MEAS = 9

_STATE_INDEX = {
    StateLabel.ZERO: 0,
    StateLabel.ONE: 1,
    StateLabel.TWO: 2,
    StateLabel.OVERLAP_ERROR: None,
}


@dataclass(frozen=True)
class RunReport:
    experiment: str
    config_hash: str
    seed: int
    outputs: tuple[str, ...]
    summary: dict
    wall_time_s: float


def _write_report(out_dir: Path, report: RunReport) -> None:
    payload = {
        "experiment": report.experiment,
        "config_hash": report.config_hash,
        "seed": report.seed,
        "outputs": list(report.outputs),
        "summary": report.summary,
    }
    with open(out_dir / "report.json", "w") as fh:
        json.dump(payload, fh, sort_keys=True, indent=2)
        fh.write("\n")


def _resolve_tones(cfg: ExperimentConfig) -> tuple[ToneConfig, ToneConfig]:
    """Fill in auto-selected tone frequencies from the sweep grid."""
    if not (cfg.auto_primary or cfg.auto_secondary):
        return cfg.primary, cfg.secondary
    primary_f, secondary_f = select_tone_frequencies(
        cfg.resonator, cfg.sweep.frequencies(), cfg.sweep.min_sep03_frac
    )
    primary = cfg.primary if not cfg.auto_primary else dataclasses.replace(
        cfg.primary, frequency=primary_f
    )
    secondary = cfg.secondary if not cfg.auto_secondary else dataclasses.replace(
        cfg.secondary, frequency=secondary_f
    )
    return primary, secondary


def _batch(cfg: ExperimentConfig, tones, prepared, scheme, seed_words, n):
    return simulate_shots(
        cfg.resonator,
        tones,
        cfg.rates,
        prepared,
        scheme,
        cfg.noise,
        seed_words,
        n,
        workers=cfg.workers,
        **cfg.shot_kwargs(),
    )


def _maybe_preselect(cfg: ExperimentConfig, shots, is_ground):
    if not cfg.preselection:
        return shots, 0.0
    return preselect(shots, is_ground)


def _derived_int_seed(cfg: ExperimentConfig, word: int) -> int:
    return int(np.random.SeedSequence([cfg.seed, word]).generate_state(1)[0])


# ---------------------------------------------------------------------------
# shelving-decay


def run_shelving_decay(cfg: ExperimentConfig, out_dir: str | Path) -> RunReport:
    """Monte-Carlo ground-state return curves against the closed forms,
    plus a joint fit of the three relaxation times."""
    t0 = time.perf_counter()
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)

    times = np.linspace(0.0, cfg.decay.t_max_us, cfg.decay.n_points)
    p0_mc: dict[int, np.ndarray] = {}
    p0_an: dict[int, np.ndarray] = {}
    for prepared in range(4):
        occupancy = sample_level_occupancy(
            cfg.rates, prepared, times, cfg.decay.n_trajectories, seed=[cfg.seed, _SEED_DECAY, prepared]
        )
        p0_mc[prepared] = occupancy[:, 0]
        p0_an[prepared] = ground_population_curve(cfg.rates, prepared, times)

    curves_path = out / "decay_curves.csv"
    with open(curves_path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["t_us", "prepared", "p0_mc", "p0_analytic"])
        for prepared in range(4):
            for i, t in enumerate(times):
                writer.writerow(
                    [repr(float(t)), prepared, repr(float(p0_mc[prepared][i])), repr(float(p0_an[prepared][i]))]
                )

    # initial guess intentionally offset from the configured rates
    guess = DecayRates(
        t01=cfg.rates.t01 * 1.25, t12=cfg.rates.t12 * 0.8, t23=cfg.rates.t23 * 1.3
    )
    fit = fit_decay_curves(times, {p: p0_mc[p] for p in (1, 2, 3)}, initial_guess=guess)

    tau_r_us = cfg.primary.duration_ns / 1000.0
    summary = {
        "fitted_rates_us": {
            "t01": fit.rates.t01,
            "t12": fit.rates.t12,
            "t23": fit.rates.t23,
        },
        "configured_rates_us": {
            "t01": cfg.rates.t01,
            "t12": cfg.rates.t12,
            "t23": cfg.rates.t23,
        },
        "relative_errors": {
            "t01": fit.rates.t01 / cfg.rates.t01 - 1.0,
            "t12": fit.rates.t12 / cfg.rates.t12 - 1.0,
            "t23": fit.rates.t23 / cfg.rates.t23 - 1.0,
        },
        "covariance_diagonal": [float(x) for x in np.diag(fit.covariance)],
        "p0_analytic_at_readout_window": {
            str(p): float(ground_population_curve(cfg.rates, p, [tau_r_us])[0])
            for p in range(4)
        },
        "n_trajectories": cfg.decay.n_trajectories,
    }
    report = RunReport(
        experiment="shelving-decay",
        config_hash=cfg.hash(),
        seed=cfg.seed,
        outputs=("decay_curves.csv", "report.json"),
        summary=summary,
        wall_time_s=time.perf_counter() - t0,
    )
    _write_report(out, report)
    return report


# ---------------------------------------------------------------------------
# two-state


def _two_state_arm(cfg: ExperimentConfig, tones, scheme, arm: str, out: Path):
    cal0 = _batch(cfg, tones, 0, scheme, [cfg.seed, _SEED_TWO_STATE_CAL, 0 if arm == "shelved" else 10], cfg.calibration_shots)
    cal1 = _batch(cfg, tones, 1, scheme, [cfg.seed, _SEED_TWO_STATE_CAL, 1 if arm == "shelved" else 11], cfg.calibration_shots)

    use_gaussian = cfg.discriminator == "gaussian"
    axis = fit_projection([s.voltages[0] for s in cal0], [s.voltages[0] for s in cal1])
    if use_gaussian:
        blob0 = fit_blob([s.voltages[0] for s in cal0])
        blob1 = fit_blob([s.voltages[0] for s in cal1])

        def assign(iq: complex) -> int:
            s0 = -abs(iq - blob0.mean) ** 2 / (2 * blob0.sigma**2) - 2 * math.log(blob0.sigma)
            s1 = -abs(iq - blob1.mean) ** 2 / (2 * blob1.sigma**2) - 2 * math.log(blob1.sigma)
            return 0 if s0 >= s1 else 1
    else:

        def assign(iq: complex) -> int:
            return 0 if classify_two_state(iq, axis) is PrimaryLabel.ZERO else 1

    def is_ground(iq: complex) -> bool:
        return assign(iq) == 0

    meas0 = _batch(cfg, tones, 0, scheme, [cfg.seed, _SEED_TWO_STATE_MEAS, 0 if arm == "shelved" else 10], cfg.shots)
    meas1 = _batch(cfg, tones, 1, scheme, [cfg.seed, _SEED_TWO_STATE_MEAS, 1 if arm == "shelved" else 11], cfg.shots)
    meas0, discard0 = _maybe_preselect(cfg, meas0, is_ground)
    meas1, discard1 = _maybe_preselect(cfg, meas1, is_ground)

    outcomes = [(0, assign(s.voltages[0])) for s in meas0]
    outcomes += [(1, assign(s.voltages[0])) for s in meas1]
    matrix = assignment_matrix(outcomes, 2)
    f_a = fidelity_two_state(matrix)

    proj0 = [axis.project(s.voltages[0]) for s in meas0]
    proj1 = [axis.project(s.voltages[0]) for s in meas1]
    try:
        snr_value = snr(proj0, proj1)
        f_id = ideal_fidelity(snr_value)
    except ValueError:  # zero-variance projections in noiseless runs
        snr_value = None
        f_id = None

    shots_path = out / f"shots_{arm}.csv"
    write_shots_csv(shots_path, meas0 + meas1)

    hist_path = out / f"histogram_{arm}.csv"
    all_proj = np.concatenate([proj0, proj1])
    edges = np.linspace(all_proj.min(), all_proj.max(), 101)
    h0, _ = np.histogram(proj0, bins=edges)
    h1, _ = np.histogram(proj1, bins=edges)
    with open(hist_path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["bin_center", "count_prepared_0", "count_prepared_1"])
        centers = (edges[:-1] + edges[1:]) / 2
        for c, a, b in zip(centers, h0, h1):
            writer.writerow([repr(float(c)), int(a), int(b)])

    stats = FidelityReport(
        f_assignment=f_a,
        f_ideal=f_id,
        snr=snr_value,
        conditional=tuple(tuple(float(x) for x in row) for row in matrix.matrix),
        discard_fraction=0.0,
        extras={
            "p_0_given_not0": matrix.matrix[0, 1],
            "p_not0_given_0": matrix.matrix[1, 0],
            "preselection_discard_fraction": {"prepared_0": discard0, "prepared_1": discard1},
            "retained_shots": list(matrix.counts),
        },
    ).to_dict()
    return stats, [shots_path.name, hist_path.name]


def run_two_state(cfg: ExperimentConfig, out_dir: str | Path) -> RunReport:
    """Two-state readout: calibration, thresholding, fidelities; when
    shelving is enabled the plain arm runs as well and the error
    reduction is reported."""
    t0 = time.perf_counter()
    if cfg.discriminator not in ("auto", "threshold", "gaussian"):
        raise ConfigError(
            f"two-state readout supports the threshold or gaussian discriminator, "
            f"not {cfg.discriminator!r}"
        )
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    tones = [_resolve_tones(cfg)[0]]

    arms = [("shelved", SHELVING_PULSES), ("plain", ())] if cfg.shelving else [("plain", ())]
    summary: dict = {"primary_frequency_ghz": tones[0].frequency, "arms": {}}
    outputs: list[str] = []
    for arm, scheme in arms:
        stats, files = _two_state_arm(cfg, tones, scheme, arm, out)
        summary["arms"][arm] = stats
        outputs.extend(files)

    if len(arms) == 2:
        err_shelved = 1.0 - summary["arms"]["shelved"]["assignment_fidelity"]
        err_plain = 1.0 - summary["arms"]["plain"]["assignment_fidelity"]
        summary["error_reduction"] = 1.0 - err_shelved / err_plain if err_plain > 0 else None

    outputs.append("report.json")
    report = RunReport(
        experiment="two-state",
        config_hash=cfg.hash(),
        seed=cfg.seed,
        outputs=tuple(outputs),
        summary=summary,
        wall_time_s=time.perf_counter() - t0,
    )
    _write_report(out, report)
    return report


# ---------------------------------------------------------------------------
# three-state


def _write_matrix_json(path: Path, matrix, extra: dict | None = None) -> None:
    payload = {
        "matrix": [[float(x) for x in row] for row in matrix.matrix],
        "retained_per_prepared": list(matrix.counts),
        "discarded_per_prepared": list(matrix.discarded),
        "discard_fraction": matrix.discard_fraction,
        "assignment_fidelity": fidelity_n_state(matrix),
    }
    if extra:
        payload.update(extra)
    with open(path, "w") as fh:
        json.dump(payload, fh, sort_keys=True, indent=2)
        fh.write("\n")


def _run_two_tone_three_state(cfg: ExperimentConfig, out: Path, t0: float) -> RunReport:
    primary, secondary = _resolve_tones(cfg)
    tones = [primary, secondary]
    scheme = cfg.scheme

    # physical calibration (no shelving): secondary blobs, |2> and |3> merged
    physical = {
        p: _batch(cfg, tones, p, (), [cfg.seed, _SEED_PHYSICAL_CAL, p], cfg.calibration_shots)
        for p in range(4)
    }
    blobs = {
        SecondaryLabel.ZERO: fit_blob([s.voltages[1] for s in physical[0]]),
        SecondaryLabel.ONE: fit_blob([s.voltages[1] for s in physical[1]]),
        SecondaryLabel.TILDE_TWO: fit_blob(
            [s.voltages[1] for s in physical[2]] + [s.voltages[1] for s in physical[3]]
        ),
    }
    alias = secondary_result_map(scheme)

    # primary axis from the shelved 0/1 calibration
    cal0 = _batch(cfg, tones, 0, scheme, [cfg.seed, _SEED_AXIS_CAL, 0], cfg.calibration_shots)
    cal1 = _batch(cfg, tones, 1, scheme, [cfg.seed, _SEED_AXIS_CAL, 1], cfg.calibration_shots)
    axis = fit_projection([s.voltages[0] for s in cal0], [s.voltages[0] for s in cal1])

    def is_ground(iq: complex) -> bool:
        return classify_two_state(iq, axis) is PrimaryLabel.ZERO

    # network calibration set
    need = cfg.train.train_size + cfg.train.val_size
    per_class = -(-need // 3)  # ceil
    fnn_shots = []
    for p in range(3):
        batch = _batch(cfg, tones, p, scheme, [cfg.seed, _SEED_FNN_CAL, p], per_class + per_class // 4)
        batch, _ = _maybe_preselect(cfg, batch, is_ground)
        fnn_shots.extend(batch[:per_class])
    train_cfg = TrainConfig(
        epochs=cfg.train.epochs,
        learning_rate=cfg.train.learning_rate,
        batch_size=cfg.train.batch_size,
        train_size=cfg.train.train_size,
        val_size=cfg.train.val_size,
        seed=_derived_int_seed(cfg, _SEED_FNN_CAL),
    )
    model = fnn_train(*training_data_from_shots(fnn_shots), train_cfg)
    save_fnn(model, out / "fnn_model.json")

    # measurement
    measured = {}
    discards = {}
    for p in range(3):
        batch = _batch(cfg, tones, p, scheme, [cfg.seed, _SEED_THREE_STATE_MEAS, p], cfg.shots)
        measured[p], discards[p] = _maybe_preselect(cfg, batch, is_ground)

    tt_outcomes = []
    fnn_outcomes = []
    all_shots = []
    for p, shots in measured.items():
        predictions = (
            fnn_classify_batch(model, training_data_from_shots(shots)[0]) if shots else []
        )
        for s, fnn_label in zip(shots, predictions):
            primary_label = classify_two_state(s.voltages[0], axis)
            secondary_label = alias[classify_secondary(s.voltages[1], blobs)]
            state = truth_table_combine(primary_label, secondary_label)
            tt_outcomes.append((p, _STATE_INDEX[state]))
            fnn_outcomes.append((p, int(fnn_label)))
        all_shots.extend(shots)

    m_tt = assignment_matrix(tt_outcomes, 3)
    m_fnn = assignment_matrix(fnn_outcomes, 3)
    write_shots_csv(out / "shots_measurement.csv", all_shots)
    _write_matrix_json(out / "assignment_truth_table.json", m_tt)
    _write_matrix_json(out / "assignment_fnn.json", m_fnn)

    n_total = len(tt_outcomes)
    tt_errors = sum(1 for p, a in tt_outcomes if a is not None and a != p)
    tt_discards = sum(1 for _, a in tt_outcomes if a is None)
    fnn_errors = sum(1 for p, a in fnn_outcomes if a != p)

    headline = "fnn" if cfg.discriminator == "fnn" else "truth-table"
    summary = {
        "mode": "two-tone-3state",
        "primary_frequency_ghz": primary.frequency,
        "secondary_frequency_ghz": secondary.frequency,
        "assignment_fidelity_truth_table": fidelity_n_state(m_tt),
        "assignment_fidelity_fnn": fidelity_n_state(m_fnn),
        "overlap_discard_fraction": m_tt.discard_fraction,
        "overall_error_truth_table_with_discards": (tt_errors + tt_discards) / n_total,
        "overall_error_fnn": fnn_errors / n_total,
        "preselection_discard_fraction": {str(p): discards[p] for p in range(3)},
        "headline_discriminator": headline,
        "assignment_fidelity": fidelity_n_state(m_fnn if headline == "fnn" else m_tt),
        "matrix_truth_table": [[float(x) for x in row] for row in m_tt.matrix],
        "matrix_fnn": [[float(x) for x in row] for row in m_fnn.matrix],
    }
    outputs = (
        "shots_measurement.csv",
        "assignment_truth_table.json",
        "assignment_fnn.json",
        "fnn_model.json",
        "report.json",
    )
    report = RunReport(
        experiment="three-state",
        config_hash=cfg.hash(),
        seed=cfg.seed,
        outputs=outputs,
        summary=summary,
        wall_time_s=time.perf_counter() - t0,
    )
    _write_report(out, report)
    return report


def _run_single_tone_three_state(cfg: ExperimentConfig, out: Path, t0: float) -> RunReport:
    scheme = cfg.scheme
    readout_levels = sorted({shelve_map(p, scheme) for p in range(3)})
    frequency = select_multistate_frequency(cfg.resonator, cfg.sweep.frequencies(), readout_levels)
    tone = dataclasses.replace(cfg.primary, frequency=frequency)

    cal = {
        p: _batch(cfg, [tone], p, scheme, [cfg.seed, _SEED_SINGLE_CAL, p], cfg.calibration_shots)
        for p in range(3)
    }
    blobs = {p: fit_blob([s.voltages[0] for s in cal[p]]) for p in range(3)}

    def assign(iq: complex) -> int:
        best, best_score = 0, -np.inf
        for p in range(3):
            blob = blobs[p]
            score = -abs(iq - blob.mean) ** 2 / (2 * blob.sigma**2) - 2 * math.log(blob.sigma)
            if score > best_score:
                best, best_score = p, score
        return best

    def is_ground(iq: complex) -> bool:
        return assign(iq) == 0

    outcomes = []
    all_shots = []
    discards = {}
    for p in range(3):
        batch = _batch(cfg, [tone], p, scheme, [cfg.seed, _SEED_SINGLE_MEAS, p], cfg.shots)
        kept, discards[p] = _maybe_preselect(cfg, batch, is_ground)
        outcomes.extend((p, assign(s.voltages[0])) for s in kept)
        all_shots.extend(kept)

    matrix = assignment_matrix(outcomes, 3)
    write_shots_csv(out / "shots_measurement.csv", all_shots)
    _write_matrix_json(out / "assignment_single_tone.json", matrix)

    summary = {
        "mode": "single-tone-3state",
        "tone_frequency_ghz": frequency,
        "assignment_fidelity": fidelity_n_state(matrix),
        "overlap_discard_fraction": 0.0,
        "preselection_discard_fraction": {str(p): discards[p] for p in range(3)},
        "matrix": [[float(x) for x in row] for row in matrix.matrix],
    }
    report = RunReport(
        experiment="three-state",
        config_hash=cfg.hash(),
        seed=cfg.seed,
        outputs=("shots_measurement.csv", "assignment_single_tone.json", "report.json"),
        summary=summary,
        wall_time_s=time.perf_counter() - t0,
    )
    _write_report(out, report)
    return report


def run_three_state(cfg: ExperimentConfig, out_dir: str | Path) -> RunReport:
    """Three-state readout in the configured mode: two-tone (truth table
    and network, both always evaluated) or single-tone Gaussian."""
    t0 = time.perf_counter()
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    if cfg.mode == "two-tone-3state":
        if cfg.discriminator not in ("auto", "truth-table", "fnn"):
            raise ConfigError(
                f"two-tone three-state readout supports the truth-table or fnn "
                f"discriminator, not {cfg.discriminator!r}"
            )
        return _run_two_tone_three_state(cfg, out, t0)
    if cfg.mode == "single-tone-3state":
        if cfg.discriminator not in ("auto", "gaussian"):
            raise ConfigError(
                f"single-tone three-state readout uses the gaussian discriminator, "
                f"not {cfg.discriminator!r}"
            )
        return _run_single_tone_three_state(cfg, out, t0)
    raise ConfigError(f"three-state readout requires a 3-state mode, got {cfg.mode!r}")


# ---------------------------------------------------------------------------
# frequency selection


def run_frequency_selection(cfg: ExperimentConfig, out_dir: str | Path) -> RunReport:
    """Per-state response traces over the sweep and the selected tone
    frequencies with their separation curves."""
    t0 = time.perf_counter()
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    grid = cfg.sweep.frequencies()

    centers = np.empty((len(grid), 4), dtype=complex)
    for i, f in enumerate(grid):
        tone = ToneConfig(
            frequency=float(f),
            amplitude=cfg.primary.amplitude,
            duration_ns=cfg.primary.duration_ns,
        )
        for level in range(4):
            centers[i, level] = iq_center(cfg.resonator, tone, level)

    traces_path = out / "s21_traces.csv"
    with open(traces_path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["frequency_ghz", "level", "i", "q", "magnitude"])
        for i, f in enumerate(grid):
            for level in range(4):
                c = centers[i, level]
                writer.writerow([repr(float(f)), level, repr(c.real), repr(c.imag), repr(abs(c))])

    sep_path = out / "separations.csv"
    with open(sep_path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["frequency_ghz", "sep_01", "sep_12", "sep_03"])
        for i, f in enumerate(grid):
            writer.writerow(
                [
                    repr(float(f)),
                    repr(abs(centers[i, 0] - centers[i, 1])),
                    repr(abs(centers[i, 1] - centers[i, 2])),
                    repr(abs(centers[i, 0] - centers[i, 3])),
                ]
            )

    try:
        primary_f, secondary_f = select_tone_frequencies(
            cfg.resonator, grid, cfg.sweep.min_sep03_frac
        )
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc

    summary = {
        "primary_frequency_ghz": primary_f,
        "secondary_frequency_ghz": secondary_f,
        "frequency_gap_mhz": (primary_f - secondary_f) * 1000.0,
        "grid_points": int(len(grid)),
    }
    report = RunReport(
        experiment="freq-select",
        config_hash=cfg.hash(),
        seed=cfg.seed,
        outputs=("s21_traces.csv", "separations.csv", "report.json"),
        summary=summary,
        wall_time_s=time.perf_counter() - t0,
    )
    _write_report(out, report)
    return report
