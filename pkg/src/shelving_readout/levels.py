"""Cascaded multilevel decay dynamics of a four-level transmon ladder.

The ladder |0>..|3> relaxes strictly downward, one level at a time, with
per-transition relaxation times T01, T12, T23 (direct |2>->|0> decay is
orders of magnitude weaker and is not modeled). The module provides the
closed-form populations for any initial level, a matrix-exponential ODE
solver used as an independent numerical oracle, stochastic jump
trajectories, and the pulse algebra for shelving population to higher
levels before readout.

All times are in microseconds internally; readout durations cross the API
boundary in nanoseconds and are converted exactly once.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from enum import IntEnum
from typing import Iterable, Sequence

import numpy as np
from scipy.linalg import expm

NS_PER_US = 1000.0

#: Relative tolerance below which two relaxation times are treated as
#: degenerate and the closed forms are refused in favor of the ODE solver.
DEGENERACY_RTOL = 1e-6

_SUM_TOL = 1e-12


class Level(IntEnum):
    """Energy levels of the modeled transmon ladder."""

    ZERO = 0
    ONE = 1
    TWO = 2
    THREE = 3


class DegenerateRatesError(ValueError):
    """Raised when closed-form solutions are requested for (nearly) equal
    relaxation times; the caller should use :func:`populations_numeric`."""


@dataclass(frozen=True)
class DecayRates:
    """Relaxation times of the three downward transitions, in microseconds.

    t01 is the |1>->|0> relaxation time (the usual T1), t12 and t23 the
    corresponding times one and two rungs up the ladder.
    """

    t01: float
    t12: float
    t23: float

    def __post_init__(self):
        for name in ("t01", "t12", "t23"):
            value = getattr(self, name)
            if not (value > 0) or not math.isfinite(value):
                raise ValueError(f"{name} must be a positive finite time, got {value!r}")

    def as_tuple(self) -> tuple[float, float, float]:
        return (self.t01, self.t12, self.t23)

    def is_degenerate(self, rtol: float = DEGENERACY_RTOL) -> bool:
        """True if any pair of relaxation times coincides within `rtol`."""
        ts = self.as_tuple()
        for i in range(3):
            for j in range(i + 1, 3):
                if abs(ts[i] - ts[j]) <= rtol * max(ts[i], ts[j]):
                    return True
        return False


@dataclass(frozen=True)
class LevelPopulation:
    """Probability vector over |0>..|3> at a time point (time in µs)."""

    p: tuple[float, float, float, float]
    t: float

    def __post_init__(self):
        if len(self.p) != 4:
            raise ValueError("population vector must have exactly 4 entries")
        if any((x < -_SUM_TOL or x > 1 + _SUM_TOL) for x in self.p):
            raise ValueError(f"population entries must lie in [0, 1], got {self.p}")
        total = sum(self.p)
        if abs(total - 1.0) > _SUM_TOL:
            raise ValueError(f"populations must sum to 1 within {_SUM_TOL}, got {total!r}")
        if self.t < 0:
            raise ValueError("time must be non-negative")
        # clamp float fuzz from cancellation in the closed forms
        clamped = tuple(min(1.0, max(0.0, x)) for x in self.p)
        object.__setattr__(self, "p", clamped)

    def as_array(self) -> np.ndarray:
        return np.asarray(self.p, dtype=float)


@dataclass(frozen=True)
class JumpTrajectory:
    """One stochastic realization of the downward cascade during readout.

    Segments are contiguous (level, start, end) intervals in microseconds;
    levels decrease by exactly one across jumps and the last segment ends
    at the total duration.
    """

    segments: tuple[tuple[int, float, float], ...]
    duration: float

    def __post_init__(self):
        if not self.segments:
            raise ValueError("trajectory must contain at least one segment")
        if self.duration <= 0:
            raise ValueError("duration must be positive")
        prev_level, prev_end = None, 0.0
        for level, start, end in self.segments:
            if level not in (0, 1, 2, 3):
                raise ValueError(f"segment level {level} outside the modeled ladder")
            if start != prev_end:
                raise ValueError("segments must be contiguous")
            if end <= start:
                raise ValueError("segment must have positive length")
            if prev_level is not None and level != prev_level - 1:
                raise ValueError("levels must decrease by exactly 1 across jumps")
            prev_level, prev_end = level, end
        if abs(prev_end - self.duration) > 1e-12 * max(1.0, self.duration):
            raise ValueError("final segment must end at the total duration")

    def level_at(self, t: float) -> int:
        """Level occupied at time t (µs); the end point belongs to the last segment."""
        for level, start, end in self.segments:
            if t < end:
                return level
        return self.segments[-1][0]


def rate_matrix(rates: DecayRates) -> np.ndarray:
    """Generator matrix A of the cascade, with d/dt p = A p."""
    g1, g2, g3 = 1.0 / rates.t01, 1.0 / rates.t12, 1.0 / rates.t23
    return np.array(
        [
            [0.0, g1, 0.0, 0.0],
            [0.0, -g1, g2, 0.0],
            [0.0, 0.0, -g2, g3],
            [0.0, 0.0, 0.0, -g3],
        ]
    )


def _cascade_populations(taus: Sequence[float], t: float) -> list[float]:
    """Populations of a pure downward chain that starts in the topmost state.

    `taus` lists the relaxation times encountered on the way down, e.g.
    (t23, t12, t01) for a start in |3>. Returns the populations from the
    initial state downward, excluding the absorbing ground state.
    Requires pairwise distinct times.
    """
    lambdas = [1.0 / tau for tau in taus]
    out = []
    for n in range(1, len(lambdas) + 1):
        # product of the first n-1 rates times a sum over exponentials
        prefactor = 1.0
        for lam in lambdas[: n - 1]:
            prefactor *= lam
        total = 0.0
        for i in range(n):
            denom = 1.0
            for j in range(n):
                if j != i:
                    denom *= lambdas[j] - lambdas[i]
            total += math.exp(-lambdas[i] * t) / denom
        out.append(prefactor * total)
    return out


def populations_analytic(rates: DecayRates, initial: Level | int, t: float) -> LevelPopulation:
    """Closed-form populations at time t (µs) for a delta start in `initial`.

    Implements the exact solution of the downward cascade: a single
    exponential from |1>, and the multi-exponential chain forms from |2>
    and |3>; the ground-state population follows by probability
    conservation. The ground state is absorbing.

    Raises :class:`DegenerateRatesError` for (nearly) equal relaxation
    times, where the chain denominators vanish; use
    :func:`populations_numeric` there instead.
    """
    if t < 0:
        raise ValueError("time must be non-negative")
    initial = int(initial)
    if initial not in (0, 1, 2, 3):
        raise ValueError(f"initial level {initial} outside the modeled ladder")
    if rates.is_degenerate():
        raise DegenerateRatesError(
            "relaxation times are degenerate within "
            f"{DEGENERACY_RTOL:g} relative tolerance; the closed forms are "
            "singular there - use populations_numeric instead"
        )

    p = [0.0, 0.0, 0.0, 0.0]
    if initial == 0 or t == 0.0:
        p[initial] = 1.0
    else:
        taus = (rates.t23, rates.t12, rates.t01)[3 - initial :]
        chain = _cascade_populations(taus, t)
        for offset, value in enumerate(chain):
            p[initial - offset] = value
        p[0] = 1.0 - sum(chain)
    return LevelPopulation(p=tuple(p), t=t)


def populations_numeric(
    rates: DecayRates, initial_distribution: LevelPopulation, t: float
) -> LevelPopulation:
    """Propagate an arbitrary initial distribution by the matrix exponential.

    Exact to machine precision for the linear cascade (well below the
    1e-10 per-component contract) and free of the degenerate-rate
    singularities of the closed forms; serves as the independent oracle
    for :func:`populations_analytic`.
    """
    if t < 0:
        raise ValueError("time must be non-negative")
    p0 = initial_distribution.as_array()
    p_t = expm(rate_matrix(rates) * t) @ p0
    p_t = np.clip(p_t, 0.0, 1.0)
    p_t = p_t / p_t.sum()
    return LevelPopulation(p=tuple(float(x) for x in p_t), t=t)


def ground_population_curve(
    rates: DecayRates, initial: Level | int, times_us: Iterable[float]
) -> np.ndarray:
    """Ground-state population over a time grid, robust to degenerate rates.

    Uses the closed forms where they are valid and falls back to the
    matrix exponential when relaxation times coincide.
    """
    times = np.asarray(list(times_us), dtype=float)
    out = np.empty(len(times))
    initial = int(initial)
    if rates.is_degenerate():
        start = LevelPopulation(
            p=tuple(1.0 if k == initial else 0.0 for k in range(4)), t=0.0
        )
        for i, t in enumerate(times):
            out[i] = populations_numeric(rates, start, float(t)).p[0]
    else:
        for i, t in enumerate(times):
            out[i] = populations_analytic(rates, initial, float(t)).p[0]
    return out


def _shot_rng(seed) -> np.random.Generator:
    if isinstance(seed, np.random.Generator):
        return seed
    return np.random.default_rng(seed)


def sample_trajectory(
    rates: DecayRates, initial: Level | int, tau_r_ns: float, seed
) -> JumpTrajectory:
    """Draw one jump trajectory over a readout window of `tau_r_ns` nanoseconds.

    Waiting times on each rung are exponential with mean T(j-1,j); the
    cascade proceeds strictly downward and |0> is absorbing. Deterministic
    given an integer seed; also accepts a Generator for callers that
    manage their own per-shot streams.
    """
    if tau_r_ns <= 0:
        raise ValueError("readout duration must be positive")
    duration = tau_r_ns / NS_PER_US
    level = int(initial)
    if level not in (0, 1, 2, 3):
        raise ValueError(f"initial level {level} outside the modeled ladder")
    rng = _shot_rng(seed)
    taus = {1: rates.t01, 2: rates.t12, 3: rates.t23}

    segments = []
    now = 0.0
    while level > 0:
        wait = rng.exponential(taus[level])
        if now + wait >= duration:
            break
        segments.append((level, now, now + wait))
        now += wait
        level -= 1
    segments.append((level, now, duration))
    return JumpTrajectory(segments=tuple(segments), duration=duration)


def sample_level_occupancy(
    rates: DecayRates,
    initial: Level | int,
    times_us: Iterable[float],
    n_trajectories: int,
    seed,
) -> np.ndarray:
    """Empirical level occupancy at each requested time over many trajectories.

    Vectorized bulk sampler used for Monte-Carlo population curves; draws
    the same per-rung exponential waiting times as
    :func:`sample_trajectory` but for all trajectories at once. Returns an
    array of shape (len(times), 4) of occupation frequencies.
    """
    times = np.asarray(list(times_us), dtype=float)
    level = int(initial)
    rng = _shot_rng(seed)
    # cumulative jump times down the ladder; empty chain for |0>
    chain = [rates.t23, rates.t12, rates.t01][3 - level :] if level > 0 else []
    jumps = np.zeros((len(chain), n_trajectories))
    acc = np.zeros(n_trajectories)
    for k, tau in enumerate(chain):
        acc = acc + rng.exponential(tau, size=n_trajectories)
        jumps[k] = acc

    out = np.zeros((len(times), 4))
    for i, t in enumerate(times):
        occupied = np.full(n_trajectories, level)
        for k in range(len(chain)):
            occupied = np.where(jumps[k] <= t, level - k - 1, occupied)
        out[i] = np.bincount(occupied, minlength=4) / n_trajectories
    return out


def apply_pulse_ideal(level: int, pulse: tuple[int, int]) -> int:
    """Ideal pi pulse on the (i, j=i+1) transition: swaps the two levels."""
    i, j = pulse
    if j != i + 1:
        raise ValueError(f"pulse {pulse} must address adjacent levels (i, i+1)")
    if i not in (0, 1, 2, 3) or j not in (0, 1, 2, 3):
        raise ValueError(f"pulse {pulse} references a level outside the ladder")
    if level == i:
        return j
    if level == j:
        return i
    return level


def shelve(
    initial: Level | int,
    scheme: Sequence[tuple[int, int]],
    transfer_error: float = 0.0,
) -> np.ndarray:
    """Population distribution after applying a sequence of pi pulses.

    Each (i, i+1) pulse swaps the populations of the two addressed levels;
    with probability `transfer_error` a pulse acts as the identity.
    Returns the distribution over |0>..|3> as a length-4 array.
    """
    if not 0.0 <= transfer_error <= 1.0:
        raise ValueError("transfer_error must be a probability")
    level = int(initial)
    if level not in (0, 1, 2, 3):
        raise ValueError(f"initial level {level} outside the modeled ladder")
    dist = np.zeros(4)
    dist[level] = 1.0
    for pulse in scheme:
        apply_pulse_ideal(0, pulse)  # validates the pulse itself
        i, j = pulse
        new = dist.copy()
        new[i] = (1 - transfer_error) * dist[j] + transfer_error * dist[i]
        new[j] = (1 - transfer_error) * dist[i] + transfer_error * dist[j]
        dist = new
    return dist


def shelve_map(initial: Level | int, scheme: Sequence[tuple[int, int]]) -> int:
    """Level reached from `initial` under error-free application of `scheme`."""
    level = int(initial)
    for pulse in scheme:
        level = apply_pulse_ideal(level, pulse)
    return level


#: Pulse sequence of the shelving technique: a pi(1,2) followed by a pi(2,3),
#: moving |1> population to |3> and |2> population to |1>.
SHELVING_PULSES: tuple[tuple[int, int], ...] = ((1, 2), (2, 3))

#: Pulse chains used for ideal state preparation from the ground state.
PREPARATION_PULSES: dict[int, tuple[tuple[int, int], ...]] = {
    0: (),
    1: ((0, 1),),
    2: ((0, 1), (1, 2)),
    3: ((0, 1), (1, 2), (2, 3)),
}
