"""Core data types: datasets, pointwise label losses, linear scorers.

Labels are integers 1..Y throughout the package. Feature matrices are dense
float64 arrays or scipy CSR matrices; both flow through every estimator.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np

from .exceptions import ConfigError, DomainError, ShapeError, SizeError
from .rng import Rng
from .validation import as_feature_matrix, as_label_vector, check_same_length

__all__ = [
    "Dataset",
    "LossSpec",
    "ZERO_ONE_100",
    "MAE",
    "loss_from_name",
    "evaluate_loss",
    "loss_vector",
    "LinearScorer",
    "Rng",
]

_LOSS_KINDS = ("zero_one_100", "mae")


@dataclass(frozen=True)
class LossSpec:
    """Pointwise loss on label pairs.

    kind
        ``"zero_one_100"``: 100 * [y_true != y_pred], the percentage error
        convention used for classification.
        ``"mae"``: |y_true - y_pred|, used for ordinal labels.
    """

    kind: str

    def __post_init__(self):
        if self.kind not in _LOSS_KINDS:
            raise ConfigError(
                f"unknown loss kind {self.kind!r}; expected one of {_LOSS_KINDS}"
            )

    def evaluate(self, y_true: int, y_pred: int) -> float:
        """Loss of predicting ``y_pred`` when the label is ``y_true``."""
        yt, yp = _check_label_pair(y_true, y_pred)
        if self.kind == "zero_one_100":
            return 100.0 if yt != yp else 0.0
        return float(abs(yt - yp))

    def vector(self, y_true, y_pred) -> np.ndarray:
        """Elementwise losses for two label vectors."""
        yt = as_label_vector(y_true, "y_true")
        yp = as_label_vector(y_pred, "y_pred")
        check_same_length(("y_true", "y_pred"), yt, yp)
        if self.kind == "zero_one_100":
            return np.where(yt != yp, 100.0, 0.0)
        return np.abs(yt - yp).astype(np.float64)


ZERO_ONE_100 = LossSpec("zero_one_100")
MAE = LossSpec("mae")


def loss_from_name(name: str) -> LossSpec:
    """LossSpec for a config-file loss name."""
    if name == "zero_one_100":
        return ZERO_ONE_100
    if name == "mae":
        return MAE
    raise ConfigError(f"unknown loss {name!r}; expected 'zero_one_100' or 'mae'")


def evaluate_loss(spec: LossSpec, y_true: int, y_pred: int) -> float:
    """Functional form of :meth:`LossSpec.evaluate`."""
    return spec.evaluate(y_true, y_pred)


def loss_vector(spec: LossSpec, y_true, y_pred) -> np.ndarray:
    """Functional form of :meth:`LossSpec.vector`."""
    return spec.vector(y_true, y_pred)


def _check_label_pair(y_true, y_pred):
    for name, y in (("y_true", y_true), ("y_pred", y_pred)):
        if isinstance(y, (bool, np.bool_)) or not isinstance(y, (int, np.integer)):
            raise DomainError(f"{name} must be an integer label, got {y!r}")
        if y < 1:
            raise DomainError(f"{name} must be >= 1, got {y}")
    return int(y_true), int(y_pred)


@dataclass(frozen=True)
class Dataset:
    """Feature matrix plus labels in 1..n_classes.

    Parameters
    ----------
    features : (n, d) float64 ndarray or CSR matrix
    labels : (n,) int array with values in 1..n_classes
    n_classes : int, number of classes Y >= 2
    label_map : optional tuple of the raw label values the integer labels were
        mapped from (position k holds the raw value of label k+1).
    """

    features: object
    labels: np.ndarray
    n_classes: int
    label_map: Optional[tuple] = None

    def __post_init__(self):
        feats = as_feature_matrix(self.features)
        labels = as_label_vector(self.labels)
        object.__setattr__(self, "features", feats)
        object.__setattr__(self, "labels", labels)
        n = check_same_length(("features", "labels"), feats, labels)
        if n < 1:
            raise SizeError("a dataset needs at least one sample")
        if feats.shape[1] < 1:
            raise SizeError("a dataset needs at least one feature")
        if int(self.n_classes) < 2:
            raise DomainError(f"n_classes must be >= 2, got {self.n_classes}")
        object.__setattr__(self, "n_classes", int(self.n_classes))
        if labels.max() > self.n_classes:
            raise DomainError(
                f"labels reach {labels.max()} but n_classes is {self.n_classes}"
            )
        if self.label_map is not None:
            lm = tuple(self.label_map)
            if len(lm) != self.n_classes:
                raise ShapeError(
                    f"label_map has {len(lm)} entries for {self.n_classes} classes"
                )
            object.__setattr__(self, "label_map", lm)
        labels.setflags(write=False)
        if isinstance(feats, np.ndarray):
            feats.setflags(write=False)

    @property
    def n(self) -> int:
        return int(self.labels.shape[0])

    @property
    def d(self) -> int:
        return int(self.features.shape[1])

    def subset(self, indices) -> "Dataset":
        """Rows selected by an index array; classes and label_map carry over."""
        idx = np.asarray(indices, dtype=np.int64)
        if idx.ndim != 1 or idx.size == 0:
            raise ShapeError("indices must be a nonempty 1-D array")
        if idx.min() < 0 or idx.max() >= self.n:
            raise DomainError(
                f"indices must lie in [0, {self.n}), found range "
                f"[{idx.min()}, {idx.max()}]"
            )
        feats = self.features[idx]
        if isinstance(feats, np.ndarray):
            feats = feats.copy()
        return Dataset(feats, self.labels[idx].copy(), self.n_classes, self.label_map)


@dataclass(frozen=True)
class LinearScorer:
    """Per-class linear scorer: activation a_y(x) = <w_y, x> + b_y.

    weights : (Y, d) float64
    biases : (Y,) float64
    """

    weights: np.ndarray
    biases: np.ndarray

    def __post_init__(self):
        w = np.asarray(self.weights, dtype=np.float64)
        b = np.asarray(self.biases, dtype=np.float64)
        if w.ndim != 2:
            raise ShapeError(f"weights must be 2-D, got shape {w.shape}")
        if b.ndim != 1 or b.shape[0] != w.shape[0]:
            raise ShapeError(
                f"biases must be 1-D with one entry per weight row; "
                f"got {b.shape} for weights {w.shape}"
            )
        if not (np.all(np.isfinite(w)) and np.all(np.isfinite(b))):
            raise DomainError("scorer parameters must be finite")
        w.setflags(write=False)
        b.setflags(write=False)
        object.__setattr__(self, "weights", w)
        object.__setattr__(self, "biases", b)

    @property
    def n_classes(self) -> int:
        return int(self.weights.shape[0])

    @property
    def n_features(self) -> int:
        return int(self.weights.shape[1])

    def activations(self, X) -> np.ndarray:
        """(n, Y) activation matrix X @ W.T + b."""
        X = as_feature_matrix(X, "X")
        if X.shape[1] != self.n_features:
            raise ShapeError(
                f"X has {X.shape[1]} features, scorer expects {self.n_features}"
            )
        A = X @ self.weights.T
        A = np.asarray(A) + self.biases
        return A

    def activations_at(self, X, labels) -> np.ndarray:
        """Per-sample activation of the given class: a_{labels_i}(x_i).

        Computed by indexing into the same activation matrix that
        :meth:`activations` returns, so picking the argmax class reproduces
        the row maximum bit for bit.
        """
        A = self.activations(X)
        y = as_label_vector(labels, "labels")
        check_same_length(("X", "labels"), A, y)
        if y.max() > self.n_classes:
            raise DomainError(
                f"labels reach {y.max()} but the scorer has {self.n_classes} classes"
            )
        return A[np.arange(A.shape[0]), y - 1]

    def predict(self, X) -> np.ndarray:
        """Argmax class per row (ties break to the smallest class index)."""
        A = self.activations(X)
        return np.argmax(A, axis=1).astype(np.int64) + 1
