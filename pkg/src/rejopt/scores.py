"""Uncertainty scores for a fixed base classifier.

A score ranks the base classifier's predictions from most to least
trustworthy. All score estimators expose ``uncertainty(X)`` with one
convention: larger values mean the prediction is more likely to be wrong,
so sorting ascending by uncertainty orders samples for early acceptance.

The learned scores are linear in the predicted-class feature map
psi(x) = (x, 1) placed in block h(x) of a Y*(d+1)-dimensional space, i.e.
s(x) = <w_{h(x)}, x> + b_{h(x)} with per-class weights and bias.

* :class:`BaselineScore` - the base model's own uncertainty (max posterior
  for logistic models, margin distance for SVMs).
* :class:`RegScore` - ridge regression of the observed losses on psi(x).
* :class:`TcpScore` - ridge regression of the true-class posterior
  p(y_i | x_i) on psi(x); requires a logistic base model.
* :class:`SeleScore` - direct minimization of the softplus ordering proxy
  (:func:`rejopt.metrics.sele_proxy`) with the bundle method, averaged over
  random data chunks of roughly 500 samples.
"""

from __future__ import annotations

import copy
import math
from dataclasses import dataclass
from typing import Optional

import numpy as np
import scipy.sparse as sp
from sklearn.base import BaseEstimator

from .core import LossSpec, Rng
from .exceptions import ContractError, ParseError, ShapeError
from .metrics import sele_proxy, sele_proxy_gradient
from .models import LogisticClassifier, _MODEL_CLASSES
from .optimize import bmrm_solve, ridge_solve
from .validation import (
    as_feature_matrix,
    as_label_vector,
    check_fitted,
    check_same_length,
)

__all__ = [
    "ChunkPlan",
    "make_chunk_plan",
    "predicted_class_design",
    "BaselineScore",
    "RegScore",
    "TcpScore",
    "SeleScore",
    "make_score",
    "fold_score_normalization",
    "save_score",
    "load_score",
]

_CHUNK_TARGET = 500


@dataclass(frozen=True)
class ChunkPlan:
    """Partition of 0..n-1 into shuffled, nearly equal chunks."""

    n: int
    chunks: tuple

    def __post_init__(self):
        total = sum(len(c) for c in self.chunks)
        if total != self.n:
            raise ShapeError(
                f"chunks cover {total} indices, expected {self.n}"
            )

    @property
    def n_chunks(self) -> int:
        return len(self.chunks)


def make_chunk_plan(n: int, rng: Rng) -> ChunkPlan:
    """Shuffle 0..n-1 and cut it into P = max(1, round(n / 500)) chunks.

    ``round`` is Python's banker's rounding. Chunk sizes differ by at most
    one (the earlier chunks take the remainder).
    """
    if n < 1:
        raise ShapeError(f"n must be >= 1, got {n}")
    P = max(1, round(n / _CHUNK_TARGET))
    perm = rng.permutation(n)
    base, extra = divmod(n, P)
    chunks = []
    start = 0
    for k in range(P):
        size = base + (1 if k < extra else 0)
        chunks.append(perm[start : start + size].copy())
        start += size
    return ChunkPlan(n=n, chunks=tuple(chunks))


def predicted_class_design(base, X, predictions=None):
    """Block feature map psi(x) = (x, 1) in block h(x); plus the predictions.

    Returns ``(h, design)`` where ``h`` are the base predictions and
    ``design`` has shape (n, Y*(d+1)): block y occupies columns
    [y*(d+1), (y+1)*(d+1)) with the raw features first and a constant 1 last.
    The design is sparse when X is sparse. ``predictions`` overrides the
    base's own predictions on X (used when the base consumes features in a
    different normalization than the score).
    """
    check_fitted(base, "report_")
    if predictions is None:
        h = base.predict(X)
    else:
        h = as_label_vector(predictions, "predictions")
        if h.max() > base.n_classes_:
            raise ShapeError(
                f"predictions reach {h.max()} but the base model has "
                f"{base.n_classes_} classes"
            )
    X = as_feature_matrix(X, "X")
    n, d = X.shape
    Y = base.n_classes_
    check_same_length(("X", "predictions"), X, h)
    width = Y * (d + 1)
    offsets = (h - 1) * (d + 1)
    if sp.issparse(X):
        coo = X.tocoo()
        data = np.concatenate([coo.data, np.ones(n)])
        rows = np.concatenate([coo.row, np.arange(n)])
        cols = np.concatenate(
            [coo.col + offsets[coo.row], offsets + d]
        )
        design = sp.csr_matrix((data, (rows, cols)), shape=(n, width))
        return h, design
    design = np.zeros((n, width), dtype=np.float64)
    for c in range(Y):
        rows = np.nonzero(h == c + 1)[0]
        if rows.size == 0:
            continue
        start = c * (d + 1)
        design[rows, start : start + d] = X[rows]
        design[rows, start + d] = 1.0
    return h, design


def _pack_blocks(coef, intercept):
    Y, d = coef.shape
    theta = np.empty(Y * (d + 1), dtype=np.float64)
    for c in range(Y):
        theta[c * (d + 1) : c * (d + 1) + d] = coef[c]
        theta[c * (d + 1) + d] = intercept[c]
    return theta


def _unpack_blocks(theta, Y, d):
    coef = np.empty((Y, d), dtype=np.float64)
    intercept = np.empty(Y, dtype=np.float64)
    for c in range(Y):
        coef[c] = theta[c * (d + 1) : c * (d + 1) + d]
        intercept[c] = theta[c * (d + 1) + d]
    return coef, intercept


class _LinearScoreBase(BaseEstimator):
    """Shared fitted-score behavior: raw scores and uncertainty.

    ``base_inputs``, when given, carries the same samples as ``X`` but in the
    base classifier's input space (the score's own features may be normalized
    differently); it defaults to ``X``.
    """

    #: subclasses set this: +1 when larger raw scores mean larger loss,
    #: -1 when larger raw scores mean more confidence (posterior targets).
    _uncertainty_sign = 1.0

    def raw_score(self, X, base_inputs=None) -> np.ndarray:
        """s(x) = <w_{h(x)}, x> + b_{h(x)} using the base's predictions."""
        check_fitted(self, "coef_")
        X_mat = as_feature_matrix(X, "X")
        if X_mat.shape[1] != self.coef_.shape[1]:
            raise ShapeError(
                f"X has {X_mat.shape[1]} features, the score was fitted "
                f"with {self.coef_.shape[1]}"
            )
        h = self.base.predict(X if base_inputs is None else base_inputs)
        check_same_length(("X", "base_inputs"), X_mat, h)
        A = np.asarray(X_mat @ self.coef_.T) + self.intercept_
        return A[np.arange(A.shape[0]), h - 1]

    def uncertainty(self, X, base_inputs=None) -> np.ndarray:
        return self._uncertainty_sign * self.raw_score(X, base_inputs)


class BaselineScore(BaseEstimator):
    """The base classifier's own uncertainty, as a score estimator."""

    kind = "baseline"

    def __init__(self, base):
        self.base = base

    def fit(self, X=None, y=None):
        check_fitted(self.base, "report_")
        self.fitted_ = True
        return self

    def uncertainty(self, X, base_inputs=None) -> np.ndarray:
        check_fitted(self.base, "report_")
        return self.base.uncertainty(X if base_inputs is None else base_inputs)


class RegScore(_LinearScoreBase):
    """Ridge regression of observed losses on the predicted-class features.

    Fit minimizes (C/2)||theta||^2 + (1/n) sum_i (l_i - <theta, psi_i>)^2
    where l_i is the loss of the base prediction on sample i. Larger raw
    scores predict larger losses, so uncertainty = raw score.
    """

    kind = "reg"
    _uncertainty_sign = 1.0

    def __init__(self, base, loss: LossSpec, C=1.0):
        self.base = base
        self.loss = loss
        self.C = C

    def fit(self, X, y, base_inputs=None):
        y = as_label_vector(y, "y")
        predictions = None if base_inputs is None else self.base.predict(base_inputs)
        h, design = predicted_class_design(self.base, X, predictions)
        check_same_length(("X", "y"), h, y)
        targets = self.loss.vector(y, h)
        theta = ridge_solve(design, targets, self.C)
        self.coef_, self.intercept_ = _unpack_blocks(
            theta, self.base.n_classes_, design.shape[1] // self.base.n_classes_ - 1
        )
        return self


class TcpScore(_LinearScoreBase):
    """Ridge regression of the true-class posterior on the predicted-class
    features. Requires a logistic base model (posteriors are otherwise
    unavailable). Larger raw scores predict higher correctness probability,
    so uncertainty = negated raw score.
    """

    kind = "tcp"
    _uncertainty_sign = -1.0

    def __init__(self, base, C=1.0):
        self.base = base
        self.C = C

    def fit(self, X, y, base_inputs=None):
        if not isinstance(self.base, LogisticClassifier):
            raise ContractError(
                "TcpScore needs a logistic base model with posteriors; "
                f"got {type(self.base).__name__}"
            )
        y = as_label_vector(y, "y")
        inputs = X if base_inputs is None else base_inputs
        proba = self.base.predict_proba(inputs)
        predictions = self.base.predict(inputs)
        h, design = predicted_class_design(self.base, X, predictions)
        check_same_length(("X", "y"), h, y)
        if y.max() > proba.shape[1]:
            raise ShapeError(
                f"labels reach {y.max()} but the base model has "
                f"{proba.shape[1]} classes"
            )
        targets = proba[np.arange(proba.shape[0]), y - 1]
        theta = ridge_solve(design, targets, self.C)
        self.coef_, self.intercept_ = _unpack_blocks(
            theta, self.base.n_classes_, design.shape[1] // self.base.n_classes_ - 1
        )
        return self


class SeleScore(_LinearScoreBase):
    """Direct minimization of the softplus ordering proxy.

    The training objective is (C/2)||theta||^2 + (1/P) sum_k proxy_k(theta),
    where the data is shuffled and cut into P = max(1, round(n/500)) chunks
    and proxy_k is :func:`rejopt.metrics.sele_proxy` of the chunk's scores
    against the base model's losses. Solved with the bundle method from
    theta = 0 until the relative gap reaches ``gap_tol`` (1% by default).
    """

    kind = "sele"
    _uncertainty_sign = 1.0

    def __init__(
        self,
        base,
        loss: LossSpec,
        C=1.0,
        gap_tol=0.01,
        max_iters=2000,
        bundle_cap=200,
        seed=0,
    ):
        self.base = base
        self.loss = loss
        self.C = C
        self.gap_tol = gap_tol
        self.max_iters = max_iters
        self.bundle_cap = bundle_cap
        self.seed = seed

    def fit(self, X, y, rng: Optional[Rng] = None, base_inputs=None):
        y = as_label_vector(y, "y")
        predictions = None if base_inputs is None else self.base.predict(base_inputs)
        h, design = predicted_class_design(self.base, X, predictions)
        check_same_length(("X", "y"), h, y)
        losses = self.loss.vector(y, h)
        if rng is None:
            rng = Rng(self.seed)
        plan = make_chunk_plan(h.shape[0], rng)
        chunk_designs = [design[idx] for idx in plan.chunks]
        chunk_losses = [losses[idx] for idx in plan.chunks]
        P = plan.n_chunks
        width = design.shape[1]

        def oracle(theta):
            value_parts = []
            grad = np.zeros(width, dtype=np.float64)
            for D, l in zip(chunk_designs, chunk_losses):
                s = np.asarray(D @ theta)
                value_parts.append(sele_proxy(s, l))
                grad += np.asarray(D.T @ sele_proxy_gradient(s, l))
            return math.fsum(value_parts) / P, grad / P

        report = bmrm_solve(
            oracle,
            dim=width,
            reg_const=self.C,
            gap_tol=self.gap_tol,
            max_iters=self.max_iters,
            bundle_cap=self.bundle_cap,
        )
        self.coef_, self.intercept_ = _unpack_blocks(
            report.theta, self.base.n_classes_, width // self.base.n_classes_ - 1
        )
        self.report_ = report
        self.chunk_plan_ = plan
        return self


_SCORE_CLASSES = {"baseline": BaselineScore, "reg": RegScore, "tcp": TcpScore, "sele": SeleScore}


def fold_score_normalization(score, mean, scale):
    """Rewrite a fitted linear score to consume unnormalized features.

    If the score was fitted on (x - mean) / scale, the returned copy
    produces the same raw scores directly from x (up to float rounding):
    w' = w / scale, b' = b - <w', mean>, per class row.
    """
    check_fitted(score, "coef_")
    mean = np.asarray(mean, dtype=np.float64)
    scale = np.asarray(scale, dtype=np.float64)
    if mean.shape != (score.coef_.shape[1],) or scale.shape != mean.shape:
        raise ShapeError(
            f"mean/scale shapes {mean.shape}/{scale.shape} do not match "
            f"{score.coef_.shape[1]} features"
        )
    folded = copy.copy(score)
    folded.coef_ = score.coef_ / scale[None, :]
    folded.intercept_ = score.intercept_ - folded.coef_ @ mean
    return folded


def make_score(method: str, base, loss: LossSpec, **params):
    """Score instance for a method name ("baseline", "reg", "tcp", "sele")."""
    if method == "baseline":
        return BaselineScore(base)
    if method == "reg":
        return RegScore(base, loss, **params)
    if method == "tcp":
        return TcpScore(base, **params)
    if method == "sele":
        return SeleScore(base, loss, **params)
    raise ContractError(
        f"unknown score method {method!r}; expected baseline, reg, tcp or sele"
    )


_SCORE_FORMAT_HEADER = "rejopt-score 1"


def save_score(score, stream, header_comments=()) -> None:
    """Serialize a fitted linear score as versioned plain text."""
    check_fitted(score, "coef_")
    for line in header_comments:
        stream.write(f"# {line}\n")
    stream.write(_SCORE_FORMAT_HEADER + "\n")
    stream.write(f"kind {score.kind}\n")
    stream.write(f"base_kind {score.base.kind}\n")
    stream.write(f"n_classes {score.base.n_classes_}\n")
    stream.write(f"n_features {score.base.n_features_in_}\n")
    stream.write(f"C {float(score.C)!r}\n")
    for row in score.coef_:
        flat = " ".join(repr(float(v)) for v in row)
        stream.write(f"w {flat}\n")
    flat = " ".join(repr(float(v)) for v in score.intercept_)
    stream.write(f"b {flat}\n")


def load_score(stream, base):
    """Load a score saved by :func:`save_score`, attaching it to ``base``.

    The base model must match the kind and shapes recorded in the file.
    """
    check_fitted(base, "report_")
    lines = []
    for raw in stream:
        text = raw.rstrip("\n")
        if text.startswith("#") or not text.strip():
            continue
        lines.append(text)
    if not lines or lines[0] != _SCORE_FORMAT_HEADER:
        raise ParseError(
            f"not a rejopt score file (expected header {_SCORE_FORMAT_HEADER!r})"
        )
    fields = {}
    cursor = 1
    for key in ("kind", "base_kind", "n_classes", "n_features", "C"):
        if cursor >= len(lines):
            raise ParseError(f"score file truncated before {key!r}")
        parts = lines[cursor].split(None, 1)
        if len(parts) != 2 or parts[0] != key:
            raise ParseError(
                f"line {cursor + 1}: expected {key!r}, got {lines[cursor]!r}"
            )
        fields[key] = parts[1]
        cursor += 1
    kind = fields["kind"]
    if kind not in _SCORE_CLASSES or kind == "baseline":
        raise ParseError(f"unknown score kind {kind!r}")
    if fields["base_kind"] not in _MODEL_CLASSES:
        raise ParseError(f"unknown base model kind {fields['base_kind']!r}")
    if base.kind != fields["base_kind"]:
        raise ContractError(
            f"score was trained on a {fields['base_kind']!r} base model, "
            f"got {base.kind!r}"
        )
    try:
        Y = int(fields["n_classes"])
        d = int(fields["n_features"])
        C = float(fields["C"])
    except ValueError as exc:
        raise ParseError(f"bad score metadata: {exc}") from None
    if base.n_classes_ != Y or base.n_features_in_ != d:
        raise ContractError(
            f"score expects a base with {Y} classes and {d} features, "
            f"got {base.n_classes_} and {base.n_features_in_}"
        )
    body = lines[cursor:]
    if len(body) != Y + 1:
        raise ParseError(f"expected {Y + 1} parameter rows, got {len(body)}")
    rows = []
    for i in range(Y):
        parts = body[i].split()
        if not parts or parts[0] != "w":
            raise ParseError(f"line {cursor + i + 1}: expected a 'w' row")
        try:
            rows.append(np.array([float(v) for v in parts[1:]], dtype=np.float64))
        except ValueError as exc:
            raise ParseError(f"line {cursor + i + 1}: bad float: {exc}") from None
    parts = body[Y].split()
    if not parts or parts[0] != "b":
        raise ParseError(f"line {cursor + Y + 1}: expected a 'b' row")
    try:
        intercept = np.array([float(v) for v in parts[1:]], dtype=np.float64)
    except ValueError as exc:
        raise ParseError(f"line {cursor + Y + 1}: bad float: {exc}") from None
    coef = np.vstack(rows)
    if coef.shape != (Y, d) or intercept.shape != (Y,):
        raise ParseError(
            f"parameter shapes {coef.shape}/{intercept.shape} do not match "
            f"n_classes={Y}, n_features={d}"
        )
    if kind == "reg":
        score = RegScore(base, loss=None, C=C)
    elif kind == "tcp":
        score = TcpScore(base, C=C)
    else:
        score = SeleScore(base, loss=None, C=C)
    score.coef_ = coef
    score.intercept_ = intercept
    return score
