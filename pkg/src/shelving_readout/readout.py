"""Qubit-state-dependent resonator response and stochastic IQ shot generation.

The resonator is a single-pole notch whose frequency is pulled by the
qubit state; an integrated readout shot is the time-weighted average of
the per-level response along one latent jump trajectory, plus circular
Gaussian noise. Both tones of a two-tone readout integrate the same
trajectory. Shots are reproducible: every shot derives its own random
stream from (master seed, shot index), so batches are independent of
worker count and chunking.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, replace
from multiprocessing import Pool
from typing import Callable, Iterable, Sequence

import numpy as np

from .levels import (
    DecayRates,
    JumpTrajectory,
    Level,
    PREPARATION_PULSES,
    apply_pulse_ideal,
    sample_trajectory,
)

MHZ_PER_GHZ = 1000.0


@dataclass(frozen=True)
class ResonatorModel:
    """Dispersive readout resonator with per-level frequency pulls.

    Frequencies are in GHz; linewidth, dispersive shifts, coupling and
    qubit-resonator detuning in MHz. chi holds the shifts for |0>..|3>
    with chi[0] = 0 as the reference. If `level_centers` is given, the
    physical response model is bypassed and those complex points are used
    directly as the per-level unit-drive responses.
    """

    omega_r: float
    kappa: float
    chi: tuple[float, float, float, float]
    g: float
    delta: float
    amplitude_scale: float = 1.0
    level_centers: tuple[complex, complex, complex, complex] | None = None

    def __post_init__(self):
        if self.kappa <= 0:
            raise ValueError("resonator linewidth kappa must be positive")
        if self.g <= 0:
            raise ValueError("coupling g must be positive")
        if self.delta == 0:
            raise ValueError("qubit-resonator detuning must be nonzero")
        if len(self.chi) != 4:
            raise ValueError("chi must list the shifts of all four levels")
        if self.chi[0] != 0:
            raise ValueError("chi[0] is the reference and must be 0")

    @property
    def n_critical(self) -> float:
        """Critical photon number delta^2 / (4 g^2)."""
        return self.delta**2 / (4.0 * self.g**2)


@dataclass(frozen=True)
class ToneConfig:
    """One readout tone: frequency (GHz), drive amplitude, duration (ns).

    phase_rad rotates this tone's integrated response in the IQ plane; it
    is a free knob with no auto-tuner and leaves any calibrated
    discrimination unchanged (classifiers are fit in the rotated frame).
    """

    frequency: float
    amplitude: float
    duration_ns: float
    role: str = "primary"
    phase_rad: float = 0.0

    def __post_init__(self):
        if self.duration_ns <= 0:
            raise ValueError("tone duration must be positive")
        if self.amplitude < 0:
            raise ValueError("tone amplitude must be non-negative")
        if self.role not in ("primary", "secondary"):
            raise ValueError(f"unknown tone role {self.role!r}")


@dataclass(frozen=True)
class NoiseModel:
    """Circular Gaussian noise of width sigma per axis on each integrated shot.

    sigma = 0 is allowed for noiseless consistency checks.
    """

    sigma: float

    def __post_init__(self):
        if self.sigma < 0:
            raise ValueError("noise width must be non-negative")


@dataclass(frozen=True)
class IQShot:
    """One integrated readout repetition.

    voltages holds the complex integrated voltage per tone, in tone order.
    prepared is the target state label (the ground truth for assignment
    matrices); level_at_readout the actual level at the start of the
    readout window. The preselection record is the integrated primary-tone
    voltage of a readout taken before the sequence; its pass/fail label is
    attached by :func:`preselect`.
    """

    voltages: tuple[complex, ...]
    prepared: int
    level_at_readout: int | None = None
    preselection_iq: complex | None = None
    preselection: str | None = None

    def __post_init__(self):
        for v in self.voltages:
            if not (math.isfinite(v.real) and math.isfinite(v.imag)):
                raise ValueError("integrated voltages must be finite")


def s21_response(model: ResonatorModel, omega_d: float, level: Level | int) -> complex:
    """Steady-state transmission at drive frequency omega_d (GHz) for a level.

    Single-pole notch: unity baseline far from resonance, full dip at the
    pulled resonator frequency omega_r + chi[level].
    """
    level = int(level)
    detuning_mhz = (omega_d - model.omega_r) * MHZ_PER_GHZ - model.chi[level]
    half_kappa = model.kappa / 2.0
    return 1.0 - half_kappa / (half_kappa + 1j * detuning_mhz)


def iq_center(model: ResonatorModel, tone: ToneConfig, level: Level | int) -> complex:
    """Mean IQ-plane position of the blob for a level probed by one tone."""
    level = int(level)
    if model.level_centers is not None:
        unit = model.level_centers[level]
    else:
        unit = s21_response(model, tone.frequency, level)
    if tone.phase_rad:
        unit *= complex(math.cos(tone.phase_rad), math.sin(tone.phase_rad))
    return model.amplitude_scale * tone.amplitude * unit


def _center_separations(
    model: ResonatorModel, sweep: np.ndarray, level_a: int, level_b: int
) -> np.ndarray:
    probe = ToneConfig(frequency=0.0, amplitude=1.0, duration_ns=1.0)
    sep = np.empty(len(sweep))
    for k, f in enumerate(sweep):
        tone = replace(probe, frequency=float(f))
        sep[k] = abs(iq_center(model, tone, level_a) - iq_center(model, tone, level_b))
    return sep


def select_tone_frequencies(
    model: ResonatorModel,
    sweep: Sequence[float],
    min_sep03_frac: float = 0.1,
) -> tuple[float, float]:
    """Pick the primary and secondary readout frequencies from a sweep grid.

    The primary frequency maximizes the |0>-|1> response separation. The
    secondary maximizes the |1>-|2> separation, restricted to grid points
    where the |0>-|3> separation stays above `min_sep03_frac` of its
    grid maximum so that those two states remain distinguishable as well.
    """
    sweep = np.asarray(list(sweep), dtype=float)
    if sweep.size == 0:
        raise ValueError("sweep grid is empty")
    sep01 = _center_separations(model, sweep, 0, 1)
    sep12 = _center_separations(model, sweep, 1, 2)
    sep03 = _center_separations(model, sweep, 0, 3)
    if sep01.max() <= 0 or sep12.max() <= 0 or sep03.max() <= 0:
        raise ValueError(
            "degenerate dispersive shifts: at least one state pair has no "
            "separation anywhere on the sweep grid"
        )
    primary = float(sweep[int(np.argmax(sep01))])

    floor = min_sep03_frac * sep03.max()
    allowed = sep03 >= floor
    sep12_constrained = np.where(allowed, sep12, -np.inf)
    secondary = float(sweep[int(np.argmax(sep12_constrained))])
    return primary, secondary


def select_multistate_frequency(
    model: ResonatorModel, sweep: Sequence[float], levels: Sequence[int]
) -> float:
    """Frequency maximizing the smallest pairwise separation among `levels`.

    Used for single-tone multi-state readout, where one compromise
    frequency must keep every pair of state responses apart.
    """
    sweep = np.asarray(list(sweep), dtype=float)
    if sweep.size == 0:
        raise ValueError("sweep grid is empty")
    levels = [int(l) for l in levels]
    pair_seps = [
        _center_separations(model, sweep, a, b)
        for i, a in enumerate(levels)
        for b in levels[i + 1 :]
    ]
    min_sep = np.min(pair_seps, axis=0)
    if min_sep.max() <= 0:
        raise ValueError("degenerate dispersive shifts: some state pair never separates")
    return float(sweep[int(np.argmax(min_sep))])


def critical_photon_check(n_bar: float, model: ResonatorModel) -> bool:
    """True iff the resonator population stays below the critical photon number."""
    if n_bar < 0:
        raise ValueError("photon number must be non-negative")
    return n_bar < model.n_critical


def integrate_trajectory(
    model: ResonatorModel, tone: ToneConfig, trajectory: JumpTrajectory
) -> complex:
    """Noise-free integrated voltage: time-weighted mean of the level centers."""
    total = 0.0 + 0.0j
    for level, start, end in trajectory.segments:
        total += (end - start) * iq_center(model, tone, level)
    return total / trajectory.duration


def simulate_shot(
    model: ResonatorModel,
    tones: Sequence[ToneConfig],
    rates: DecayRates,
    prepared: Level | int,
    scheme: Sequence[tuple[int, int]],
    noise: NoiseModel,
    seed,
    *,
    transfer_error: float = 0.0,
    preparation_error: float = 0.0,
    thermal_population: float = 0.0,
    with_preselection: bool = False,
) -> IQShot:
    """Generate one integrated readout shot.

    The shot follows the full sequence: an optional preselection readout
    of the (possibly thermally excited) idle qubit, ideal-or-failed state
    preparation to `prepared`, the shelving pulses of `scheme` (each
    failing independently with probability `transfer_error`), then one
    latent jump trajectory over the readout window that every tone
    integrates. Deterministic given the seed.
    """
    if not tones:
        raise ValueError("at least one readout tone is required")
    tau_r_ns = tones[0].duration_ns
    for tone in tones[1:]:
        if tone.duration_ns != tau_r_ns:
            raise ValueError("multiplexed tones must share one readout window")

    rng = seed if isinstance(seed, np.random.Generator) else np.random.default_rng(seed)
    prepared = int(prepared)

    # idle state before the sequence; thermal excitation occupies |1>
    level = 1 if rng.random() < thermal_population else 0

    preselection_iq = None
    if with_preselection:
        pre_traj = sample_trajectory(rates, level, tau_r_ns, rng)
        preselection_iq = integrate_trajectory(model, tones[0], pre_traj) + complex(
            rng.normal(0.0, noise.sigma), rng.normal(0.0, noise.sigma)
        )
        level = pre_traj.segments[-1][0]

    # state preparation: the whole pulse chain either acts ideally or fails
    prep_chain = PREPARATION_PULSES[prepared]
    if prep_chain:
        if rng.random() >= preparation_error:
            for pulse in prep_chain:
                level = apply_pulse_ideal(level, pulse)

    # shelving pulses, each independently acting as identity on failure
    for pulse in scheme:
        if rng.random() >= transfer_error:
            level = apply_pulse_ideal(level, pulse)

    trajectory = sample_trajectory(rates, level, tau_r_ns, rng)
    voltages = []
    for tone in tones:
        v = integrate_trajectory(model, tone, trajectory)
        v += complex(rng.normal(0.0, noise.sigma), rng.normal(0.0, noise.sigma))
        voltages.append(v)

    return IQShot(
        voltages=tuple(voltages),
        prepared=prepared,
        level_at_readout=level,
        preselection_iq=preselection_iq,
    )


def _seed_words(master_seed) -> list[int]:
    if isinstance(master_seed, (list, tuple)):
        return [int(w) for w in master_seed]
    return [int(master_seed)]


def _simulate_chunk(args) -> list[IQShot]:
    (model, tones, rates, prepared, scheme, noise, master_seed, indices, kwargs) = args
    words = _seed_words(master_seed)
    return [
        simulate_shot(
            model, tones, rates, prepared, scheme, noise, words + [i], **kwargs
        )
        for i in indices
    ]


def simulate_shots(
    model: ResonatorModel,
    tones: Sequence[ToneConfig],
    rates: DecayRates,
    prepared: Level | int,
    scheme: Sequence[tuple[int, int]],
    noise: NoiseModel,
    master_seed,
    n_shots: int,
    *,
    start_index: int = 0,
    workers: int = 1,
    **shot_kwargs,
) -> list[IQShot]:
    """Generate a batch of shots with per-shot derived seeds.

    Shot i uses the stream seeded by (master_seed..., start_index + i), so
    the output is identical for any worker count or chunking; the master
    seed may be an integer or a sequence of integer words.
    """
    indices = range(start_index, start_index + n_shots)
    if workers <= 1:
        return _simulate_chunk(
            (model, tuple(tones), rates, prepared, tuple(scheme), noise, master_seed, indices, shot_kwargs)
        )
    chunks = np.array_split(np.asarray(indices), workers)
    jobs = [
        (model, tuple(tones), rates, prepared, tuple(scheme), noise, master_seed, chunk.tolist(), shot_kwargs)
        for chunk in chunks
        if len(chunk)
    ]
    with Pool(processes=workers) as pool:
        parts = pool.map(_simulate_chunk, jobs)
    return [shot for part in parts for shot in part]


def preselect(
    shots: Iterable[IQShot], is_ground: Callable[[complex], bool]
) -> tuple[list[IQShot], float]:
    """Keep only shots whose preselection record classifies as the ground state.

    `is_ground` maps the preselection IQ voltage to True for a |0>
    verdict. Returns the retained shots (with pass labels attached) and
    the discarded fraction.
    """
    shots = list(shots)
    if not shots:
        return [], 0.0
    kept = []
    for shot in shots:
        if shot.preselection_iq is None:
            raise ValueError("shot carries no preselection record")
        if is_ground(shot.preselection_iq):
            kept.append(replace(shot, preselection="passed"))
    return kept, 1.0 - len(kept) / len(shots)


def write_shots_csv(path, shots: Iterable[IQShot]) -> None:
    """Write a shot stream as CSV, one row per (shot, tone).

    Columns: shot index, tone id, I, Q, preselection flag, true level
    (the prepared-state label).
    """
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["shot_index", "tone_id", "i", "q", "preselection", "true_level"])
        for index, shot in enumerate(shots):
            flag = shot.preselection or ""
            for tone_id, v in enumerate(shot.voltages):
                writer.writerow([index, tone_id, repr(v.real), repr(v.imag), flag, shot.prepared])


def read_shots_csv(path) -> list[IQShot]:
    """Read a shot stream written by :func:`write_shots_csv`.

    The preselection IQ record is not part of the format, so round-tripped
    shots carry only the pass/fail flag.
    """
    by_index: dict[int, dict] = {}
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        for row in reader:
            index = int(row["shot_index"])
            entry = by_index.setdefault(
                index,
                {"voltages": {}, "preselection": row["preselection"] or None,
                 "prepared": int(row["true_level"])},
            )
            entry["voltages"][int(row["tone_id"])] = complex(
                float(row["i"]), float(row["q"])
            )
    shots = []
    for index in sorted(by_index):
        entry = by_index[index]
        voltages = tuple(entry["voltages"][k] for k in sorted(entry["voltages"]))
        shots.append(
            IQShot(
                voltages=voltages,
                prepared=entry["prepared"],
                preselection=entry["preselection"],
            )
        )
    return shots
