"""Classification of integrated IQ shots into qubit states.

Covers the optimal-axis two-state threshold, multiclass Gaussian-blob
discrimination for the secondary tone, the deterministic truth table that
combines the two tones, and a small feedforward neural network trained by
plain mini-batch gradient descent on the four-vector (I1, Q1, I2, Q2).

All tie-breaking is fixed and documented: a shot exactly on the two-state
threshold reads NotZero, equidistant blobs resolve in label order
Zero < One < TildeTwo, and probability ties in the network resolve to the
lowest class index.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from enum import Enum
from typing import Mapping, Sequence

import numpy as np

from .levels import shelve_map


class PrimaryLabel(Enum):
    ZERO = "zero"
    NOT_ZERO = "not_zero"


class SecondaryLabel(Enum):
    ZERO = "zero"
    ONE = "one"
    TILDE_TWO = "tilde_two"


class StateLabel(Enum):
    ZERO = "zero"
    ONE = "one"
    TWO = "two"
    OVERLAP_ERROR = "overlap_error"


_SECONDARY_ORDER = (SecondaryLabel.ZERO, SecondaryLabel.ONE, SecondaryLabel.TILDE_TWO)

#: Physical-blob label of each ladder level for the secondary tone; the
#: |2> and |3> responses are merged into the TildeTwo classification.
PHYSICAL_BLOB_LABEL = {
    0: SecondaryLabel.ZERO,
    1: SecondaryLabel.ONE,
    2: SecondaryLabel.TILDE_TWO,
    3: SecondaryLabel.TILDE_TWO,
}


@dataclass(frozen=True)
class ProjectionAxis:
    """Threshold discriminator along the line joining two blob means."""

    origin: complex
    direction: complex
    threshold: float

    def __post_init__(self):
        if abs(abs(self.direction) - 1.0) > 1e-9:
            raise ValueError("direction must be a unit vector")

    def project(self, iq: complex) -> float:
        d = self.direction
        v = iq - self.origin
        return v.real * d.real + v.imag * d.imag


@dataclass(frozen=True)
class GaussianBlob:
    """Circular Gaussian blob: complex mean and per-axis width."""

    mean: complex
    sigma: float

    def __post_init__(self):
        if self.sigma <= 0:
            raise ValueError("blob width must be positive")


def fit_projection(shots_0: Sequence[complex], shots_1: Sequence[complex]) -> ProjectionAxis:
    """Fit the optimal projection axis from two calibration shot sets.

    The axis points from the |0> blob mean to the other blob mean, with
    the threshold midway between the projected means (equal-width
    assumption); the origin sits at the |0> mean so that |0> projects
    below the threshold.
    """
    shots_0 = np.asarray(shots_0, dtype=complex)
    shots_1 = np.asarray(shots_1, dtype=complex)
    if shots_0.size == 0 or shots_1.size == 0:
        raise ValueError("both calibration sets must be non-empty")
    mean0 = complex(shots_0.mean())
    mean1 = complex(shots_1.mean())
    delta = mean1 - mean0
    if abs(delta) == 0:
        raise ValueError("calibration sets have identical means; no separation to project onto")
    return ProjectionAxis(origin=mean0, direction=delta / abs(delta), threshold=abs(delta) / 2)


def classify_two_state(iq: complex, axis: ProjectionAxis) -> PrimaryLabel:
    """Zero iff the shot projects strictly below the threshold; ties read NotZero."""
    if axis.project(iq) < axis.threshold:
        return PrimaryLabel.ZERO
    return PrimaryLabel.NOT_ZERO


def fit_blob(shots: Sequence[complex]) -> GaussianBlob:
    """Fit a circular Gaussian blob (mean and per-axis width) to a shot set."""
    shots = np.asarray(shots, dtype=complex)
    if shots.size < 2:
        raise ValueError("need at least two shots to fit a blob")
    mean = complex(shots.mean())
    sigma = float(np.sqrt(np.mean(np.abs(shots - mean) ** 2) / 2.0))
    if sigma == 0:
        raise ValueError("shot set has zero spread")
    return GaussianBlob(mean=mean, sigma=sigma)


def classify_secondary(
    iq: complex, blobs: Mapping[SecondaryLabel, GaussianBlob]
) -> SecondaryLabel:
    """Assign the shot to one of the secondary-tone blobs.

    Nearest-mean under equal widths, otherwise maximum likelihood under
    circular Gaussians. Ties resolve in label order Zero < One < TildeTwo.
    """
    labels = [label for label in _SECONDARY_ORDER if label in blobs]
    if len(labels) < 3:
        raise ValueError("blobs for Zero, One and TildeTwo are required")
    sigmas = [blobs[label].sigma for label in labels]
    equal_widths = max(sigmas) - min(sigmas) <= 1e-12 * max(sigmas)

    best_label, best_score = None, -np.inf
    for label in labels:
        blob = blobs[label]
        d2 = abs(iq - blob.mean) ** 2
        if equal_widths:
            score = -d2
        else:
            score = -d2 / (2.0 * blob.sigma**2) - 2.0 * np.log(blob.sigma)
        if score > best_score:
            best_label, best_score = label, score
    return best_label


def truth_table_combine(primary: PrimaryLabel, secondary: SecondaryLabel) -> StateLabel:
    """Deterministic map from the two tone results to the inferred state.

    Consistent pairs identify a unique initial state; the three
    inconsistent pairs are overlap errors to be discarded.
    """
    if primary is PrimaryLabel.ZERO:
        if secondary is SecondaryLabel.ZERO:
            return StateLabel.ZERO
        return StateLabel.OVERLAP_ERROR
    if secondary is SecondaryLabel.ONE:
        return StateLabel.ONE
    if secondary is SecondaryLabel.TILDE_TWO:
        return StateLabel.TWO
    return StateLabel.OVERLAP_ERROR


def secondary_result_map(
    scheme: Sequence[tuple[int, int]],
) -> dict[SecondaryLabel, SecondaryLabel]:
    """Relabeling of physical secondary classifications under a shelving scheme.

    The truth table speaks the language of initial states, while the
    secondary blobs are calibrated on physical levels. With shelving, the
    initial states 0, 1, 2 sit at shifted physical levels during readout;
    this map renames the physical blob verdict to the corresponding
    initial-state result (it is the identity when no shelving is applied).
    """
    result_for_initial = {
        0: SecondaryLabel.ZERO,
        1: SecondaryLabel.ONE,
        2: SecondaryLabel.TILDE_TWO,
    }
    mapping: dict[SecondaryLabel, SecondaryLabel] = {}
    for initial, result in result_for_initial.items():
        physical = PHYSICAL_BLOB_LABEL[shelve_map(initial, scheme)]
        if physical in mapping:
            raise ValueError(
                "shelving scheme sends two initial states to the same secondary "
                "blob; the truth table cannot distinguish them"
            )
        mapping[physical] = result
    for label in _SECONDARY_ORDER:
        mapping.setdefault(label, label)
    return mapping


# ---------------------------------------------------------------------------
# Feedforward neural network


SELU_ALPHA = 1.6732632423543772
SELU_SCALE = 1.0507009873554805

_LAYER_SIZES = (4, 16, 8, 3)


@dataclass(frozen=True)
class TrainConfig:
    epochs: int = 100
    learning_rate: float = 5e-4
    batch_size: int = 64
    train_size: int = 8000
    val_size: int = 2000
    seed: int = 0

    def __post_init__(self):
        if min(self.epochs, self.batch_size, self.train_size, self.val_size) <= 0:
            raise ValueError("epochs, batch size and split sizes must be positive")
        if self.learning_rate <= 0:
            raise ValueError("learning rate must be positive")


@dataclass
class FnnModel:
    """Trained network: per-layer weights/biases plus the feature scaling.

    Architecture 4 -> 16 -> 8 -> 3 with SELU on both hidden layers and a
    normalized-exponential output. Instances are treated as immutable
    after training.
    """

    weights: tuple[np.ndarray, ...]
    biases: tuple[np.ndarray, ...]
    feature_mean: np.ndarray
    feature_std: np.ndarray

    def __post_init__(self):
        shapes = tuple(w.shape for w in self.weights)
        expected = tuple(
            (_LAYER_SIZES[i], _LAYER_SIZES[i + 1]) for i in range(len(_LAYER_SIZES) - 1)
        )
        if shapes != expected:
            raise ValueError(f"weight shapes {shapes} do not match layers {_LAYER_SIZES}")
        for w in self.weights:
            if not np.all(np.isfinite(w)):
                raise ValueError("weights must be finite")


def selu(x: np.ndarray) -> np.ndarray:
    return SELU_SCALE * np.where(x > 0, x, SELU_ALPHA * np.expm1(x))


def _selu_grad(x: np.ndarray) -> np.ndarray:
    return SELU_SCALE * np.where(x > 0, 1.0, SELU_ALPHA * np.exp(x))


def _softmax(z: np.ndarray) -> np.ndarray:
    shifted = z - z.max(axis=-1, keepdims=True)
    e = np.exp(shifted)
    return e / e.sum(axis=-1, keepdims=True)


def _forward(weights, biases, x: np.ndarray):
    z1 = x @ weights[0] + biases[0]
    a1 = selu(z1)
    z2 = a1 @ weights[1] + biases[1]
    a2 = selu(z2)
    z3 = a2 @ weights[2] + biases[2]
    return _softmax(z3), (x, z1, a1, z2, a2)


def loss_and_gradients(weights, biases, x: np.ndarray, y: np.ndarray):
    """Mean cross-entropy of the softmax output and its exact gradients.

    Returns (loss, weight gradients, bias gradients); inputs are the raw
    (already standardized) feature batch and integer class labels.
    """
    probs, (x0, z1, a1, z2, a2) = _forward(weights, biases, x)
    n = x.shape[0]
    eps = 1e-300  # guards log of an exactly saturated output
    loss = float(-np.mean(np.log(probs[np.arange(n), y] + eps)))

    dz3 = probs.copy()
    dz3[np.arange(n), y] -= 1.0
    dz3 /= n
    dw3 = a2.T @ dz3
    db3 = dz3.sum(axis=0)

    da2 = dz3 @ weights[2].T
    dz2 = da2 * _selu_grad(z2)
    dw2 = a1.T @ dz2
    db2 = dz2.sum(axis=0)

    da1 = dz2 @ weights[1].T
    dz1 = da1 * _selu_grad(z1)
    dw1 = x0.T @ dz1
    db1 = dz1.sum(axis=0)

    return loss, (dw1, dw2, dw3), (db1, db2, db3)


def initial_parameters(seed: int):
    """Seeded Gaussian weights with variance 1/fan-in and zero biases."""
    rng = np.random.default_rng(seed)
    weights, biases = [], []
    for fan_in, fan_out in zip(_LAYER_SIZES[:-1], _LAYER_SIZES[1:]):
        weights.append(rng.normal(0.0, 1.0 / np.sqrt(fan_in), size=(fan_in, fan_out)))
        biases.append(np.zeros(fan_out))
    return weights, biases


def _standardize(x: np.ndarray, mean: np.ndarray, std: np.ndarray) -> np.ndarray:
    return (x - mean) / std


def fnn_train(features: np.ndarray, labels: np.ndarray, config: TrainConfig) -> FnnModel:
    """Train the network by plain mini-batch gradient descent.

    The dataset is permuted once (seeded), split into the configured
    train/validation sizes, and standardized per feature with statistics
    of the training split. Training runs for the configured epochs at a
    fixed learning rate without momentum; the returned model is the one
    with the best validation accuracy seen, evaluated after every epoch
    (the first model to reach the best accuracy wins).
    """
    features = np.asarray(features, dtype=float)
    labels = np.asarray(labels, dtype=int)
    if features.ndim != 2 or features.shape[1] != _LAYER_SIZES[0]:
        raise ValueError(f"features must have shape (n, {_LAYER_SIZES[0]})")
    n_needed = config.train_size + config.val_size
    if len(features) < n_needed:
        raise ValueError(f"need at least {n_needed} samples, got {len(features)}")
    if np.any((labels < 0) | (labels > 2)):
        raise ValueError("labels must lie in {0, 1, 2}")

    rng = np.random.default_rng(config.seed)
    order = rng.permutation(len(features))
    train_idx = order[: config.train_size]
    val_idx = order[config.train_size : n_needed]

    x_train_raw = features[train_idx]
    y_train = labels[train_idx]
    if len(np.unique(y_train)) < 2:
        raise ValueError("training split contains a single class; nothing to learn")

    mean = x_train_raw.mean(axis=0)
    std = x_train_raw.std(axis=0)
    std = np.where(std > 0, std, 1.0)
    x_train = _standardize(x_train_raw, mean, std)
    x_val = _standardize(features[val_idx], mean, std)
    y_val = labels[val_idx]

    weights, biases = initial_parameters(config.seed)

    def val_accuracy() -> float:
        probs, _ = _forward(weights, biases, x_val)
        return float(np.mean(probs.argmax(axis=1) == y_val))

    best_acc = val_accuracy()
    best = ([w.copy() for w in weights], [b.copy() for b in biases])

    n_train = len(x_train)
    for _ in range(config.epochs):
        perm = rng.permutation(n_train)
        for start in range(0, n_train, config.batch_size):
            batch = perm[start : start + config.batch_size]
            _, dws, dbs = loss_and_gradients(weights, biases, x_train[batch], y_train[batch])
            for w, dw in zip(weights, dws):
                w -= config.learning_rate * dw
            for b, db in zip(biases, dbs):
                b -= config.learning_rate * db
        acc = val_accuracy()
        if acc > best_acc:
            best_acc = acc
            best = ([w.copy() for w in weights], [b.copy() for b in biases])

    return FnnModel(
        weights=tuple(best[0]),
        biases=tuple(best[1]),
        feature_mean=mean,
        feature_std=std,
    )


def fnn_classify(model: FnnModel, features) -> tuple[int, np.ndarray]:
    """Forward pass on one four-vector; argmax class with lowest-index ties.

    Returns (class index in {0, 1, 2}, probability 3-vector). The network
    always commits to a state and never reports an overlap error.
    """
    x = np.asarray(features, dtype=float).reshape(1, _LAYER_SIZES[0])
    x = _standardize(x, model.feature_mean, model.feature_std)
    probs, _ = _forward(model.weights, model.biases, x)
    probs = probs[0]
    return int(np.argmax(probs)), probs


def fnn_classify_batch(model: FnnModel, features: np.ndarray) -> np.ndarray:
    """Vectorized argmax classification of an (n, 4) feature array."""
    x = np.asarray(features, dtype=float)
    x = _standardize(x, model.feature_mean, model.feature_std)
    probs, _ = _forward(model.weights, model.biases, x)
    return probs.argmax(axis=1)


def save_fnn(model: FnnModel, path) -> None:
    """Serialize the model as self-describing JSON (shapes, weights, scaling)."""
    payload = {
        "layers": list(_LAYER_SIZES),
        "activation": "selu",
        "output": "normalized_exponential",
        "weights": [w.tolist() for w in model.weights],
        "biases": [b.tolist() for b in model.biases],
        "feature_mean": model.feature_mean.tolist(),
        "feature_std": model.feature_std.tolist(),
    }
    with open(path, "w") as fh:
        json.dump(payload, fh, sort_keys=True)


def load_fnn(path) -> FnnModel:
    with open(path) as fh:
        payload = json.load(fh)
    if tuple(payload["layers"]) != _LAYER_SIZES:
        raise ValueError(f"unsupported layer sizes {payload['layers']}")
    return FnnModel(
        weights=tuple(np.asarray(w, dtype=float) for w in payload["weights"]),
        biases=tuple(np.asarray(b, dtype=float) for b in payload["biases"]),
        feature_mean=np.asarray(payload["feature_mean"], dtype=float),
        feature_std=np.asarray(payload["feature_std"], dtype=float),
    )


def training_data_from_shots(shots) -> tuple[np.ndarray, np.ndarray]:
    """Network features and labels from two-tone shots.

    Accepts any shot records with per-tone complex `voltages` and a
    `prepared` label (e.g. the shot-CSV reader's output); returns the
    (n, 4) feature array (I1, Q1, I2, Q2) and the label vector.
    """
    shots = list(shots)
    if not shots:
        raise ValueError("no shots to train on")
    if any(len(s.voltages) != 2 for s in shots):
        raise ValueError("network training needs two-tone shots")
    features = np.array(
        [
            [s.voltages[0].real, s.voltages[0].imag, s.voltages[1].real, s.voltages[1].imag]
            for s in shots
        ]
    )
    labels = np.array([s.prepared for s in shots])
    return features, labels
