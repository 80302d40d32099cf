"""Fidelity arithmetic, assignment matrices, SPAM correction and decay fits.

Assignment matrices are column-stochastic with columns indexed by the
prepared state and rows by the assigned state; overlap-error shots are
excluded from the normalization and reported as a separate discard count.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Iterable, Mapping, Sequence

import numpy as np
from scipy.optimize import brentq, least_squares
from scipy.special import erf

from .levels import DecayRates, ground_population_curve

_COLUMN_TOL = 1e-12


class FitConvergenceError(RuntimeError):
    """Raised when the decay-curve fit fails to converge from every start."""


@dataclass(frozen=True)
class AssignmentMatrix:
    """Conditional classification probabilities P(assigned=i | prepared=j).

    `counts` holds the retained shots per prepared state and `discarded`
    the overlap-error shots removed before normalization.
    """

    matrix: np.ndarray
    counts: tuple[int, ...]
    discarded: tuple[int, ...]

    def __post_init__(self):
        m = np.asarray(self.matrix, dtype=float)
        if m.ndim != 2 or m.shape[0] != m.shape[1]:
            raise ValueError("assignment matrix must be square")
        if np.any(m < -_COLUMN_TOL) or np.any(m > 1 + _COLUMN_TOL):
            raise ValueError("entries must be probabilities")
        col_sums = m.sum(axis=0)
        if np.any(np.abs(col_sums - 1.0) > _COLUMN_TOL):
            raise ValueError(f"columns must sum to 1 within {_COLUMN_TOL}, got {col_sums}")
        object.__setattr__(self, "matrix", m)

    @property
    def n_states(self) -> int:
        return self.matrix.shape[0]

    @property
    def discard_fraction(self) -> float:
        total = sum(self.counts) + sum(self.discarded)
        return sum(self.discarded) / total if total else 0.0


def assignment_matrix(
    outcomes: Iterable[tuple[int, int | None]], n_states: int
) -> AssignmentMatrix:
    """Column-normalized empirical frequencies from (prepared, assigned) pairs.

    An assigned value of None marks an overlap-error shot, which is
    excluded from its column and counted as discarded. Every prepared
    state must retain at least one shot.
    """
    counts = np.zeros((n_states, n_states), dtype=int)
    discarded = np.zeros(n_states, dtype=int)
    for prepared, assigned in outcomes:
        if assigned is None:
            discarded[prepared] += 1
        else:
            counts[assigned, prepared] += 1
    retained = counts.sum(axis=0)
    if np.any(retained == 0):
        empty = [j for j in range(n_states) if retained[j] == 0]
        raise ValueError(f"no retained shots for prepared state(s) {empty}")
    return AssignmentMatrix(
        matrix=counts / retained,
        counts=tuple(int(x) for x in retained),
        discarded=tuple(int(x) for x in discarded),
    )


def _as_matrix(m) -> np.ndarray:
    if isinstance(m, AssignmentMatrix):
        return m.matrix
    return np.asarray(m, dtype=float)


def fidelity_two_state(m) -> float:
    """Assignment fidelity 1 - [P(0|not0) + P(not0|0)] / 2 of a 2x2 matrix."""
    mat = _as_matrix(m)
    if mat.shape != (2, 2):
        raise ValueError(f"two-state fidelity needs a 2x2 matrix, got {mat.shape}")
    return 1.0 - (mat[0, 1] + mat[1, 0]) / 2.0


def fidelity_n_state(m) -> float:
    """Multistate assignment fidelity: the mean of the diagonal entries."""
    mat = _as_matrix(m)
    if mat.ndim != 2 or mat.shape[0] != mat.shape[1]:
        raise ValueError("assignment matrix must be square")
    return float(np.mean(np.diag(mat)))


def snr(s0: Sequence[float], s0bar: Sequence[float]) -> float:
    """|mean(S0) - mean(S0bar)| over the standard deviation of the S0 set."""
    a = np.asarray(s0, dtype=float)
    b = np.asarray(s0bar, dtype=float)
    if a.size < 2 or b.size < 2:
        raise ValueError("each outcome set needs at least two samples")
    sigma = float(a.std())
    if sigma == 0:
        raise ValueError("the S0 set has zero variance")
    return float(abs(a.mean() - b.mean()) / sigma)


def ideal_fidelity(snr_value: float) -> float:
    """Gaussian-overlap fidelity [1 + erf(sqrt(SNR^2 / 8))] / 2."""
    if snr_value < 0:
        raise ValueError("SNR must be non-negative")
    return 0.5 * (1.0 + erf(math.sqrt(snr_value**2 / 8.0)))


def snr_for_ideal_fidelity(target: float) -> float:
    """Invert the ideal-fidelity relation by root finding."""
    if not 0.5 <= target < 1.0:
        raise ValueError("target fidelity must lie in [0.5, 1)")
    if target == 0.5:
        return 0.0
    return float(brentq(lambda s: ideal_fidelity(s) - target, 0.0, 100.0, xtol=1e-12))


def project_to_simplex(v: Sequence[float]) -> np.ndarray:
    """Euclidean projection of a vector onto the probability simplex."""
    v = np.asarray(v, dtype=float)
    u = np.sort(v)[::-1]
    css = np.cumsum(u)
    rho = np.nonzero(u + (1.0 - css) / np.arange(1, len(v) + 1) > 0)[0][-1]
    theta = (css[rho] - 1.0) / (rho + 1.0)
    return np.maximum(v - theta, 0.0)


def spam_mitigate(raw, m) -> np.ndarray:
    """Correct measured populations by inverting the assignment matrix.

    Computes m^-1 . raw and, when the result leaves the probability
    simplex, replaces it by the nearest simplex point in Euclidean norm
    (the maximum-likelihood surrogate). The output is a probability
    vector: non-negative entries summing to 1.
    """
    mat = _as_matrix(m)
    raw = np.asarray(raw, dtype=float)
    if mat.shape[0] != mat.shape[1] or mat.shape[0] != raw.shape[0]:
        raise ValueError("matrix and population vector dimensions do not match")
    try:
        x = np.linalg.solve(mat, raw)
    except np.linalg.LinAlgError as exc:
        raise ValueError("assignment matrix is singular") from exc
    if np.all(x >= 0) and abs(x.sum() - 1.0) <= 1e-9:
        # renormalize away float fuzz only
        return x / x.sum()
    return project_to_simplex(x)


@dataclass(frozen=True)
class DecayFit:
    """Joint fit of the three relaxation times to ground-state return curves."""

    rates: DecayRates
    covariance: np.ndarray
    residuals: dict[int, np.ndarray]
    baseline: float | None = None

    @property
    def cost(self) -> float:
        return float(sum(np.sum(r**2) for r in self.residuals.values()))


def fit_decay_curves(
    times: Sequence[float],
    p0_series: Mapping[int, Sequence[float]],
    initial_guess: DecayRates,
    with_baseline: bool = False,
) -> DecayFit:
    """Joint least-squares fit of (T01, T12, T23) to ground-state curves.

    `p0_series` maps each prepared state to its measured p0(t) samples on
    the common time grid; series for |1>, |2> and |3> are required (a
    prepared-|0> series is constant and adds no information, but is
    accepted). The optimizer runs from three perturbed starts and keeps
    the best converged solution; an optional shared baseline models a
    state-preparation offset. Returns the fitted rates with a covariance
    estimate from the Jacobian at the solution.
    """
    times = np.asarray(list(times), dtype=float)
    if len(times) < 3:
        raise ValueError("need at least three time points")
    series = {int(k): np.asarray(v, dtype=float) for k, v in p0_series.items()}
    for required in (1, 2, 3):
        if required not in series:
            raise ValueError(f"series for prepared state |{required}> is required")
    for prepared, values in series.items():
        if values.shape != times.shape:
            raise ValueError("every series must match the time grid")

    prepared_states = sorted(series)

    def residual_vector(params: np.ndarray) -> np.ndarray:
        rates = DecayRates(t01=params[0], t12=params[1], t23=params[2])
        baseline = params[3] if with_baseline else 0.0
        chunks = []
        for prepared in prepared_states:
            model = baseline + (1.0 - baseline) * ground_population_curve(rates, prepared, times)
            chunks.append(model - series[prepared])
        return np.concatenate(chunks)

    guess = np.array(initial_guess.as_tuple(), dtype=float)
    starts = [guess, guess * 0.6, guess * 1.7]
    if with_baseline:
        starts = [np.append(s, 0.01) for s in starts]
        lower = [1e-9, 1e-9, 1e-9, 0.0]
        upper = [np.inf, np.inf, np.inf, 0.5]
    else:
        lower = [1e-9, 1e-9, 1e-9]
        upper = [np.inf, np.inf, np.inf]

    best = None
    for start in starts:
        try:
            result = least_squares(
                residual_vector, start, bounds=(lower, upper), max_nfev=2000
            )
        except Exception:
            continue
        if not result.success:
            continue
        if best is None or result.cost < best.cost:
            best = result
    if best is None:
        raise FitConvergenceError("decay-curve fit did not converge from any start")

    n_residuals = len(times) * len(prepared_states)
    n_params = len(best.x)
    dof = max(1, n_residuals - n_params)
    jtj = best.jac.T @ best.jac
    try:
        covariance = np.linalg.inv(jtj) * (2.0 * best.cost / dof)
    except np.linalg.LinAlgError:
        covariance = np.full((n_params, n_params), np.nan)

    rates = DecayRates(t01=float(best.x[0]), t12=float(best.x[1]), t23=float(best.x[2]))
    baseline = float(best.x[3]) if with_baseline else None
    residuals = {}
    offset = 0
    for prepared in prepared_states:
        residuals[prepared] = best.fun[offset : offset + len(times)]
        offset += len(times)
    return DecayFit(rates=rates, covariance=covariance, residuals=residuals, baseline=baseline)


@dataclass(frozen=True)
class FidelityReport:
    """Summary of one readout run: fidelities, SNR and conditional errors."""

    f_assignment: float
    f_ideal: float | None
    snr: float | None
    conditional: tuple[tuple[float, ...], ...]
    discard_fraction: float = 0.0
    extras: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        out = {
            "assignment_fidelity": self.f_assignment,
            "ideal_fidelity": self.f_ideal,
            "snr": self.snr,
            "conditional_probabilities": [list(row) for row in self.conditional],
            "overlap_discard_fraction": self.discard_fraction,
        }
        out.update(self.extras)
        return out
