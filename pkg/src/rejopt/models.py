"""Linear classifiers trained by regularized risk minimization.

Four model families share one training path (the bundle method in
:mod:`rejopt.optimize`) and one prediction contract: labels are 1..Y, ties in
argmax decisions break toward the smaller class index, and every model
exposes ``uncertainty(X)`` where larger values mean less trustworthy
predictions.

* :class:`LogisticClassifier` - multinomial logistic regression; uncertainty
  is one minus the maximum posterior.
* :class:`MulticlassSVM` - Crammer-Singer multiclass SVM; uncertainty is the
  negated maximum activation. Per the training objective the margin term uses
  activations without biases, so the biases stay at zero; they are kept in
  the parameter vector (and regularizer) and in the decision function.
* :class:`BinarySVM` - hinge-loss SVM for Y = 2 (class 1 maps to -1, class 2
  to +1); uncertainty is the negated absolute activation.
* :class:`OrdinalSVM` - SVM for ordinal regression with implicit constraints:
  one direction w plus Y-1 thresholds; h(x) = 1 + #{y : <w, x> > b_y};
  uncertainty is the negated distance to the nearest threshold.

Models serialize to a versioned plain-text format (`save_model` /
`load_model`) that round-trips parameters exactly via repr floats.
"""

from __future__ import annotations

import copy
from typing import Optional

import numpy as np
from sklearn.base import BaseEstimator

from .core import LinearScorer
from .exceptions import ConfigError, DomainError, ParseError, ShapeError
from .optimize import bmrm_solve
from .validation import (
    as_feature_matrix,
    as_label_vector,
    check_fitted,
    check_same_length,
)

__all__ = [
    "LogisticClassifier",
    "MulticlassSVM",
    "BinarySVM",
    "OrdinalSVM",
    "make_classifier",
    "fold_model_normalization",
    "save_model",
    "load_model",
]


def _prepare_training(X, y, n_classes, minimum_classes=2):
    X = as_feature_matrix(X, "X")
    y = as_label_vector(y, "y")
    check_same_length(("X", "y"), X, y)
    if y.shape[0] == 0:
        raise ShapeError("training data must be nonempty")
    Y = int(n_classes) if n_classes is not None else int(y.max())
    if Y < minimum_classes:
        raise DomainError(f"n_classes must be >= {minimum_classes}, got {Y}")
    if y.max() > Y:
        raise DomainError(f"labels reach {y.max()} but n_classes is {Y}")
    return X, y, Y


def _check_inference_input(est, X):
    check_fitted(est, "report_")
    X = as_feature_matrix(X, "X")
    if X.shape[1] != est.n_features_in_:
        raise ShapeError(
            f"X has {X.shape[1]} features, {type(est).__name__} was fitted "
            f"with {est.n_features_in_}"
        )
    return X


def _row_logsumexp(A):
    m = A.max(axis=1, keepdims=True)
    return m[:, 0] + np.log(np.exp(A - m).sum(axis=1))


def _label_onehot(y, Y):
    out = np.zeros((y.shape[0], Y), dtype=np.float64)
    out[np.arange(y.shape[0]), y - 1] = 1.0
    return out


def _lr_risk_oracle(X, y, Y):
    """Empirical negative log-likelihood oracle over theta = (W, b)."""
    n, d = X.shape
    onehot = _label_onehot(y, Y)
    rows = np.arange(n)

    def oracle(theta):
        W = theta[: Y * d].reshape(Y, d)
        b = theta[Y * d :]
        A = np.asarray(X @ W.T) + b
        lse = _row_logsumexp(A)
        loglik = A[rows, y - 1] - lse
        risk = -float(loglik.mean())
        P = np.exp(A - lse[:, None])
        G = (P - onehot) / n
        grad_W = np.asarray((X.T @ G).T)
        grad_b = G.sum(axis=0)
        return risk, np.concatenate([grad_W.ravel(), grad_b])

    return oracle


def _msvm_risk_oracle(X, y, Y):
    """Crammer-Singer hinge risk oracle; biases ride along with zero grad."""
    n, d = X.shape
    onehot = _label_onehot(y, Y)
    rows = np.arange(n)

    def oracle(theta):
        W = theta[: Y * d].reshape(Y, d)
        A = np.asarray(X @ W.T)
        margins = A + (1.0 - onehot)
        ystar = np.argmax(margins, axis=1)  # ties -> smallest class index
        risk = float((margins[rows, ystar] - A[rows, y - 1]).mean())
        G = (_label_onehot(ystar + 1, Y) - onehot) / n
        grad_W = np.asarray((X.T @ G).T)
        return risk, np.concatenate([grad_W.ravel(), np.zeros(Y)])

    return oracle


def _bsvm_risk_oracle(X, y):
    """Binary hinge risk oracle over theta = (w, b); class 1 -> -1, 2 -> +1."""
    n, d = X.shape
    signs = np.where(y == 2, 1.0, -1.0)

    def oracle(theta):
        w = theta[:d]
        b = theta[d]
        act = np.asarray(X @ w) + b
        margin = 1.0 - signs * act
        active = margin > 0.0
        risk = float(np.where(active, margin, 0.0).mean())
        coeff = np.where(active, -signs, 0.0) / n
        grad_w = np.asarray(X.T @ coeff)
        grad_b = float(coeff.sum())
        return risk, np.concatenate([grad_w, [grad_b]])

    return oracle


def _svor_risk_oracle(X, y, Y):
    """Ordinal-regression hinge risk oracle over theta = (w, b_1..b_{Y-1})."""
    n, d = X.shape
    # below[i, k] marks thresholds k+1 < y_i (the sample must sit above).
    ks = np.arange(1, Y)
    below = ks[None, :] < y[:, None]

    def oracle(theta):
        w = theta[:d]
        b = theta[d:]
        t = np.asarray(X @ w)
        slack_up = 1.0 - t[:, None] + b[None, :]  # thresholds below y_i
        slack_dn = 1.0 + t[:, None] - b[None, :]  # thresholds >= y_i
        act_up = below & (slack_up > 0.0)
        act_dn = (~below) & (slack_dn > 0.0)
        risk = (
            float(np.where(act_up, slack_up, 0.0).sum())
            + float(np.where(act_dn, slack_dn, 0.0).sum())
        ) / n
        coeff = (act_dn.sum(axis=1) - act_up.sum(axis=1)).astype(np.float64) / n
        grad_w = np.asarray(X.T @ coeff)
        grad_b = (
            act_up.sum(axis=0).astype(np.float64)
            - act_dn.sum(axis=0).astype(np.float64)
        ) / n
        return risk, np.concatenate([grad_w, grad_b])

    return oracle


class _FittedModelMixin:
    """Shared inference helpers for models with per-class weight rows."""

    def scorer(self) -> LinearScorer:
        check_fitted(self, "report_")
        return LinearScorer(self.coef_, self.intercept_)

    def decision_function(self, X) -> np.ndarray:
        X = _check_inference_input(self, X)
        A = X @ self.coef_.T
        return np.asarray(A) + self.intercept_

    def predict(self, X) -> np.ndarray:
        A = self.decision_function(X)
        return np.argmax(A, axis=1).astype(np.int64) + 1


class LogisticClassifier(_FittedModelMixin, BaseEstimator):
    """Multinomial logistic regression trained with the bundle method.

    Minimizes (C/2)||theta||^2 - (1/m) sum_i log softmax(a(x_i))_{y_i} over
    theta = (W, b). ``uncertainty(X)`` is 1 - max_y p(y|x).
    """

    kind = "logistic"

    def __init__(self, C=1.0, gap_tol=1e-3, max_iters=2000, bundle_cap=200):
        self.C = C
        self.gap_tol = gap_tol
        self.max_iters = max_iters
        self.bundle_cap = bundle_cap

    def fit(self, X, y, n_classes: Optional[int] = None):
        X, y, Y = _prepare_training(X, y, n_classes)
        n, d = X.shape
        oracle = _lr_risk_oracle(X, y, Y)
        report = bmrm_solve(
            oracle,
            dim=Y * d + Y,
            reg_const=self.C,
            gap_tol=self.gap_tol,
            max_iters=self.max_iters,
            bundle_cap=self.bundle_cap,
        )
        self.coef_ = report.theta[: Y * d].reshape(Y, d)
        self.intercept_ = report.theta[Y * d :]
        self.n_classes_ = Y
        self.n_features_in_ = d
        self.report_ = report
        return self

    def predict_proba(self, X) -> np.ndarray:
        A = self.decision_function(X)
        lse = _row_logsumexp(A)
        return np.exp(A - lse[:, None])

    def uncertainty(self, X) -> np.ndarray:
        return 1.0 - self.predict_proba(X).max(axis=1)


class MulticlassSVM(_FittedModelMixin, BaseEstimator):
    """Crammer-Singer multiclass SVM.

    Risk: (1/m) sum_i max_y ([y != y_i] + <w_y - w_{y_i}, x_i>). The margin
    term carries no biases, so the trained biases are zero; the decision
    function keeps them for interface parity. ``uncertainty(X)`` is the
    negated maximum activation.
    """

    kind = "msvm"

    def __init__(self, C=1.0, gap_tol=1e-3, max_iters=2000, bundle_cap=200):
        self.C = C
        self.gap_tol = gap_tol
        self.max_iters = max_iters
        self.bundle_cap = bundle_cap

    def fit(self, X, y, n_classes: Optional[int] = None):
        X, y, Y = _prepare_training(X, y, n_classes)
        n, d = X.shape
        oracle = _msvm_risk_oracle(X, y, Y)
        report = bmrm_solve(
            oracle,
            dim=Y * d + Y,
            reg_const=self.C,
            gap_tol=self.gap_tol,
            max_iters=self.max_iters,
            bundle_cap=self.bundle_cap,
        )
        self.coef_ = report.theta[: Y * d].reshape(Y, d)
        self.intercept_ = report.theta[Y * d :]
        self.n_classes_ = Y
        self.n_features_in_ = d
        self.report_ = report
        return self

    def uncertainty(self, X) -> np.ndarray:
        return -self.decision_function(X).max(axis=1)


class BinarySVM(BaseEstimator):
    """Hinge-loss SVM for two classes (1 -> -1, 2 -> +1), bias included.

    Risk: (1/m) sum_i max(0, 1 - s_i (<w, x_i> + b)) with s_i in {-1, +1}.
    Predicts class 2 exactly when the activation is positive. The hinge
    subgradient at an exactly-met margin is 0 (the hinge counts as inactive).
    ``uncertainty(X)`` is the negated absolute activation.
    """

    kind = "bsvm"

    def __init__(self, C=1.0, gap_tol=1e-3, max_iters=2000, bundle_cap=200):
        self.C = C
        self.gap_tol = gap_tol
        self.max_iters = max_iters
        self.bundle_cap = bundle_cap

    def fit(self, X, y, n_classes: Optional[int] = None):
        X, y, Y = _prepare_training(X, y, n_classes)
        if Y != 2:
            raise DomainError(f"BinarySVM requires exactly 2 classes, got {Y}")
        n, d = X.shape
        oracle = _bsvm_risk_oracle(X, y)
        report = bmrm_solve(
            oracle,
            dim=d + 1,
            reg_const=self.C,
            gap_tol=self.gap_tol,
            max_iters=self.max_iters,
            bundle_cap=self.bundle_cap,
        )
        self.coef_ = report.theta[:d]
        self.intercept_ = float(report.theta[d])
        self.n_classes_ = 2
        self.n_features_in_ = d
        self.report_ = report
        return self

    def decision_function(self, X) -> np.ndarray:
        X = _check_inference_input(self, X)
        return np.asarray(X @ self.coef_) + self.intercept_

    def predict(self, X) -> np.ndarray:
        act = self.decision_function(X)
        return np.where(act > 0.0, 2, 1).astype(np.int64)

    def uncertainty(self, X) -> np.ndarray:
        return -np.abs(self.decision_function(X))

    def scorer(self) -> LinearScorer:
        """Two-row scorer whose argmax reproduces the sign rule."""
        check_fitted(self, "report_")
        w = self.coef_
        b = self.intercept_
        # class 1 row is the negated activation, so argmax picks class 2
        # exactly when the activation is positive (ties -> class 1).
        return LinearScorer(
            np.vstack([-0.5 * w, 0.5 * w]), np.array([-0.5 * b, 0.5 * b])
        )


class OrdinalSVM(BaseEstimator):
    """Support vector ordinal regression with implicit threshold constraints.

    theta = (w, b_1..b_{Y-1}). Risk:
    (1/m) sum_i [ sum_{y < y_i} max(0, 1 - <w, x_i> + b_y)
                + sum_{y >= y_i} max(0, 1 + <w, x_i> - b_y) ]
    (the inner index y runs over thresholds 1..Y-1). Prediction:
    h(x) = 1 + #{y : <w, x> > b_y}. ``uncertainty(X)`` is the negated
    distance to the nearest threshold.
    """

    kind = "svor"

    def __init__(self, C=1.0, gap_tol=1e-3, max_iters=2000, bundle_cap=200):
        self.C = C
        self.gap_tol = gap_tol
        self.max_iters = max_iters
        self.bundle_cap = bundle_cap

    def fit(self, X, y, n_classes: Optional[int] = None):
        X, y, Y = _prepare_training(X, y, n_classes)
        n, d = X.shape
        oracle = _svor_risk_oracle(X, y, Y)
        report = bmrm_solve(
            oracle,
            dim=d + Y - 1,
            reg_const=self.C,
            gap_tol=self.gap_tol,
            max_iters=self.max_iters,
            bundle_cap=self.bundle_cap,
        )
        self.coef_ = report.theta[:d]
        self.thresholds_ = report.theta[d:]
        self.n_classes_ = Y
        self.n_features_in_ = d
        self.report_ = report
        return self

    def decision_function(self, X) -> np.ndarray:
        X = _check_inference_input(self, X)
        return np.asarray(X @ self.coef_)

    def predict(self, X) -> np.ndarray:
        t = self.decision_function(X)
        return 1 + (t[:, None] > self.thresholds_[None, :]).sum(axis=1).astype(
            np.int64
        )

    def uncertainty(self, X) -> np.ndarray:
        t = self.decision_function(X)
        return -np.abs(t[:, None] - self.thresholds_[None, :]).min(axis=1)


_MODEL_CLASSES = {
    cls.kind: cls for cls in (LogisticClassifier, MulticlassSVM, BinarySVM, OrdinalSVM)
}


def make_classifier(family: str, n_classes: int, **params):
    """Classifier instance for a model-family name.

    family: ``"lr"``, ``"svm"`` (binary or multiclass picked by n_classes),
    or ``"svor"``.
    """
    if family == "lr":
        return LogisticClassifier(**params)
    if family == "svm":
        return BinarySVM(**params) if n_classes == 2 else MulticlassSVM(**params)
    if family == "svor":
        return OrdinalSVM(**params)
    raise ConfigError(f"unknown model family {family!r}; expected lr, svm or svor")


def fold_model_normalization(model, mean, scale):
    """Rewrite a fitted model to consume unnormalized features.

    If the model was fitted on (x - mean) / scale, the returned copy makes
    the same decisions directly from x (up to float rounding): weights divide
    by the scale; intercepts absorb <w', mean> (ordinal thresholds absorb it
    with the opposite sign, since they sit on the other side of the
    comparison).
    """
    check_fitted(model, "report_")
    mean = np.asarray(mean, dtype=np.float64)
    scale = np.asarray(scale, dtype=np.float64)
    d = model.n_features_in_
    if mean.shape != (d,) or scale.shape != (d,):
        raise ShapeError(
            f"mean/scale shapes {mean.shape}/{scale.shape} do not match "
            f"{d} features"
        )
    folded = copy.copy(model)
    if model.kind in ("logistic", "msvm"):
        folded.coef_ = model.coef_ / scale[None, :]
        folded.intercept_ = model.intercept_ - folded.coef_ @ mean
    elif model.kind == "bsvm":
        folded.coef_ = model.coef_ / scale
        folded.intercept_ = float(model.intercept_ - folded.coef_ @ mean)
    elif model.kind == "svor":
        folded.coef_ = model.coef_ / scale
        folded.thresholds_ = model.thresholds_ + folded.coef_ @ mean
    else:  # pragma: no cover - the kinds above are exhaustive
        raise ConfigError(f"cannot fold model kind {model.kind!r}")
    return folded


_FORMAT_HEADER = "rejopt-model 1"


def _write_floats(stream, tag, values):
    flat = " ".join(repr(float(v)) for v in np.asarray(values, dtype=np.float64).ravel())
    stream.write(f"{tag} {flat}\n")


def save_model(model, stream, header_comments=()) -> None:
    """Serialize a fitted model as versioned plain text.

    ``header_comments`` lines are written first, each prefixed with ``# ``.
    Floats use repr, so loading restores parameters bit for bit.
    """
    check_fitted(model, "report_")
    for line in header_comments:
        stream.write(f"# {line}\n")
    stream.write(_FORMAT_HEADER + "\n")
    stream.write(f"kind {model.kind}\n")
    stream.write(f"n_classes {model.n_classes_}\n")
    stream.write(f"n_features {model.n_features_in_}\n")
    stream.write(f"C {float(model.C)!r}\n")
    stream.write(f"gap {float(model.report_.relative_gap)!r}\n")
    if model.kind in ("logistic", "msvm"):
        for row in model.coef_:
            _write_floats(stream, "w", row)
        _write_floats(stream, "b", model.intercept_)
    elif model.kind == "bsvm":
        _write_floats(stream, "w", model.coef_)
        _write_floats(stream, "b", [model.intercept_])
    elif model.kind == "svor":
        _write_floats(stream, "w", model.coef_)
        _write_floats(stream, "t", model.thresholds_)
    else:  # pragma: no cover - the classes above are exhaustive
        raise ConfigError(f"cannot serialize model kind {model.kind!r}")


class _LoadedReport:
    """Minimal stand-in for a SolveReport on deserialized models."""

    def __init__(self, relative_gap):
        self.relative_gap = relative_gap
        self.message = "loaded from file"


def _parse_tagged_floats(line, tag, lineno):
    parts = line.split()
    if not parts or parts[0] != tag:
        raise ParseError(f"line {lineno}: expected a {tag!r} row, got {line!r}")
    try:
        return np.array([float(v) for v in parts[1:]], dtype=np.float64)
    except ValueError as exc:
        raise ParseError(f"line {lineno}: bad float in {tag!r} row: {exc}") from None


def load_model(stream):
    """Load a model saved by :func:`save_model`."""
    lines = []
    for raw in stream:
        text = raw.rstrip("\n")
        if text.startswith("#") or not text.strip():
            continue
        lines.append(text)
    if not lines or lines[0] != _FORMAT_HEADER:
        raise ParseError(
            f"not a rejopt model file (expected header {_FORMAT_HEADER!r})"
        )
    fields = {}
    cursor = 1
    for key in ("kind", "n_classes", "n_features", "C", "gap"):
        if cursor >= len(lines):
            raise ParseError(f"model file truncated before {key!r}")
        parts = lines[cursor].split(None, 1)
        if len(parts) != 2 or parts[0] != key:
            raise ParseError(f"line {cursor + 1}: expected {key!r}, got {lines[cursor]!r}")
        fields[key] = parts[1]
        cursor += 1
    kind = fields["kind"]
    if kind not in _MODEL_CLASSES:
        raise ParseError(f"unknown model kind {kind!r}")
    try:
        Y = int(fields["n_classes"])
        d = int(fields["n_features"])
        C = float(fields["C"])
        gap = float(fields["gap"])
    except ValueError as exc:
        raise ParseError(f"bad model metadata: {exc}") from None
    model = _MODEL_CLASSES[kind](C=C)
    body = lines[cursor:]
    if kind in ("logistic", "msvm"):
        if len(body) != Y + 1:
            raise ParseError(f"expected {Y + 1} parameter rows, got {len(body)}")
        W = np.vstack(
            [_parse_tagged_floats(body[i], "w", cursor + i + 1) for i in range(Y)]
        )
        b = _parse_tagged_floats(body[Y], "b", cursor + Y + 1)
        if W.shape != (Y, d) or b.shape != (Y,):
            raise ParseError(
                f"parameter shapes {W.shape}/{b.shape} do not match "
                f"n_classes={Y}, n_features={d}"
            )
        model.coef_ = W
        model.intercept_ = b
    elif kind == "bsvm":
        if len(body) != 2:
            raise ParseError(f"expected 2 parameter rows, got {len(body)}")
        w = _parse_tagged_floats(body[0], "w", cursor + 1)
        b = _parse_tagged_floats(body[1], "b", cursor + 2)
        if w.shape != (d,) or b.shape != (1,):
            raise ParseError("binary SVM parameter rows have the wrong lengths")
        model.coef_ = w
        model.intercept_ = float(b[0])
    else:  # svor
        if len(body) != 2:
            raise ParseError(f"expected 2 parameter rows, got {len(body)}")
        w = _parse_tagged_floats(body[0], "w", cursor + 1)
        t = _parse_tagged_floats(body[1], "t", cursor + 2)
        if w.shape != (d,) or t.shape != (Y - 1,):
            raise ParseError("ordinal SVM parameter rows have the wrong lengths")
        model.coef_ = w
        model.thresholds_ = t
    model.n_classes_ = Y
    model.n_features_in_ = d
    model.report_ = _LoadedReport(gap)
    return model
