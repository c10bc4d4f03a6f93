"""Data loading, serialization, splits, normalization, and manifests.

Formats
-------
LIBSVM text: one sample per line, ``label idx:val idx:val ...`` with 1-based
strictly increasing indices. Raw labels may be any numbers; they are remapped
to 1..Y by sorted order and the mapping is kept on the dataset.

CSV: rectangular numeric table, one sample per row, one column holding the
label (``label_column``, negative indices allowed). A non-numeric first row
is treated as a header and skipped.

A JSON manifest bundles a data source with everything a reproducible run
needs: format, label column, loss, split ratios, seed, and optional ordinal
binning of a numeric label.
"""

from __future__ import annotations

import csv
import json
import math
import os
import warnings
from dataclasses import dataclass
from typing import Optional

import numpy as np
import scipy.sparse as sp
from sklearn.base import BaseEstimator, TransformerMixin

from .core import Dataset, LossSpec, Rng, loss_from_name
from .exceptions import (
    ConfigError,
    DegenerateDataWarning,
    DomainError,
    ParseError,
    ShapeError,
    SizeError,
)
from .validation import as_feature_matrix, as_float_vector, check_fitted

__all__ = [
    "parse_libsvm",
    "serialize_libsvm",
    "parse_csv",
    "SplitPlan",
    "make_splits",
    "Normalizer",
    "ordinal_binning",
    "Manifest",
    "load_manifest",
    "save_manifest",
    "load_dataset",
]

_STD_FLOOR = 1e-12


def _open_text(source, mode="r"):
    """File-like passthrough, or open a path."""
    if hasattr(source, "read") or hasattr(source, "write"):
        return source, False
    return open(source, mode, encoding="utf-8"), True


def _remap_labels(raw: np.ndarray):
    values = np.unique(raw)
    if values.shape[0] < 2:
        raise ParseError(
            f"need at least 2 distinct labels, found {values.shape[0]}"
        )
    labels = np.searchsorted(values, raw) + 1
    return labels.astype(np.int64), tuple(values.tolist())


def parse_libsvm(source) -> Dataset:
    """Parse LIBSVM-format text from a path or file-like object.

    Blank lines and ``#`` comment lines are skipped. Malformed content
    raises :class:`ParseError` with the offending line number.
    """
    stream, owned = _open_text(source)
    try:
        raw_labels = []
        data, indices, indptr = [], [], [0]
        max_index = 0
        for lineno, line in enumerate(stream, start=1):
            text = line.strip()
            if not text or text.startswith("#"):
                continue
            tokens = text.split()
            try:
                raw_labels.append(float(tokens[0]))
            except ValueError:
                raise ParseError(
                    f"line {lineno}: bad label {tokens[0]!r}"
                ) from None
            previous = 0
            for token in tokens[1:]:
                idx_text, sep, val_text = token.partition(":")
                if not sep:
                    raise ParseError(
                        f"line {lineno}: expected index:value, got {token!r}"
                    )
                try:
                    idx = int(idx_text)
                except ValueError:
                    raise ParseError(
                        f"line {lineno}: bad feature index {idx_text!r}"
                    ) from None
                if idx < 1:
                    raise ParseError(
                        f"line {lineno}: feature indices are 1-based, got {idx}"
                    )
                if idx <= previous:
                    raise ParseError(
                        f"line {lineno}: feature indices must increase, "
                        f"got {idx} after {previous}"
                    )
                try:
                    val = float(val_text)
                except ValueError:
                    raise ParseError(
                        f"line {lineno}: bad feature value {val_text!r}"
                    ) from None
                if not math.isfinite(val):
                    raise ParseError(
                        f"line {lineno}: feature value must be finite, got {val!r}"
                    )
                previous = idx
                data.append(val)
                indices.append(idx - 1)
                max_index = max(max_index, idx)
            indptr.append(len(data))
    finally:
        if owned:
            stream.close()
    n = len(raw_labels)
    if n == 0:
        raise ParseError("no samples found")
    if max_index == 0:
        raise ParseError("no feature indices found in the whole file")
    features = sp.csr_matrix(
        (
            np.asarray(data, dtype=np.float64),
            np.asarray(indices, dtype=np.int32),
            np.asarray(indptr, dtype=np.int32),
        ),
        shape=(n, max_index),
    )
    labels, label_map = _remap_labels(np.asarray(raw_labels, dtype=np.float64))
    return Dataset(features, labels, n_classes=len(label_map), label_map=label_map)


def serialize_libsvm(dataset: Dataset, target) -> None:
    """Write a dataset as canonical LIBSVM text.

    Labels are written as their raw values when the dataset has a label map
    (repr floats), otherwise as the integer labels. Entries appear in
    ascending index order; stored zeros are kept.
    """
    stream, owned = _open_text(target, "w")
    try:
        feats = dataset.features
        sparse = sp.issparse(feats)
        if sparse:
            feats = feats.tocsr()
        for i in range(dataset.n):
            label = int(dataset.labels[i])
            if dataset.label_map is not None:
                text = repr(float(dataset.label_map[label - 1]))
            else:
                text = str(label)
            parts = [text]
            if sparse:
                start, stop = feats.indptr[i], feats.indptr[i + 1]
                cols = feats.indices[start:stop]
                vals = feats.data[start:stop]
                order = np.argsort(cols, kind="stable")
                for c, v in zip(cols[order], vals[order]):
                    parts.append(f"{c + 1}:{float(v)!r}")
            else:
                for c, v in enumerate(feats[i]):
                    parts.append(f"{c + 1}:{float(v)!r}")
            stream.write(" ".join(parts) + "\n")
    finally:
        if owned:
            stream.close()


def parse_csv(source, label_column: int = -1) -> Dataset:
    """Parse a numeric CSV table into a dataset.

    ``label_column`` picks the label (negative indices count from the end);
    every other column is a feature, kept in order. If the first row has any
    non-numeric cell it is treated as a header and skipped.
    """
    stream, owned = _open_text(source)
    try:
        reader = csv.reader(stream)
        rows = []
        width = None
        for rowno, cells in enumerate(reader, start=1):
            if not cells or (len(cells) == 1 and not cells[0].strip()):
                continue
            if width is None:
                width = len(cells)
                try:
                    rows.append([float(c) for c in cells])
                    continue
                except ValueError:
                    # header row: skip it, keep its width as the contract
                    continue
            if len(cells) != width:
                raise ParseError(
                    f"row {rowno}: expected {width} columns, got {len(cells)}"
                )
            parsed = []
            for colno, cell in enumerate(cells, start=1):
                try:
                    parsed.append(float(cell))
                except ValueError:
                    raise ParseError(
                        f"row {rowno}, column {colno}: not a number: {cell!r}"
                    ) from None
            rows.append(parsed)
    finally:
        if owned:
            stream.close()
    if not rows:
        raise ParseError("no data rows found")
    table = np.asarray(rows, dtype=np.float64)
    if not np.all(np.isfinite(table)):
        raise ParseError("table contains non-finite values")
    n, width = table.shape
    if width < 2:
        raise ParseError("need at least one feature column and one label column")
    if label_column < -width or label_column >= width:
        raise DomainError(
            f"label_column {label_column} is out of range for {width} columns"
        )
    col = label_column % width
    raw = table[:, col]
    features = np.delete(table, col, axis=1)
    labels, label_map = _remap_labels(raw)
    return Dataset(features, labels, n_classes=len(label_map), label_map=label_map)


@dataclass(frozen=True)
class SplitPlan:
    """Five-way split percentages plus the randomness that realizes them.

    ratios: percentages (train1, val1, train2, val2, test) summing to 100.
    seed, replicate: identify the shuffle; replicate 1..R for repeated runs.
    """

    ratios: tuple
    seed: int = 0
    replicate: int = 1

    PART_NAMES = ("train1", "val1", "train2", "val2", "test")

    def __post_init__(self):
        ratios = tuple(float(r) for r in self.ratios)
        if len(ratios) != 5:
            raise ShapeError(f"ratios needs 5 entries, got {len(ratios)}")
        if any(not math.isfinite(r) or r < 0.0 for r in ratios):
            raise DomainError(f"ratios must be finite and >= 0, got {ratios}")
        if abs(math.fsum(ratios) - 100.0) > 1e-9:
            raise DomainError(f"ratios must sum to 100, got {math.fsum(ratios)!r}")
        object.__setattr__(self, "ratios", ratios)
        object.__setattr__(self, "seed", int(self.seed))
        object.__setattr__(self, "replicate", int(self.replicate))


def make_splits(n: int, plan: SplitPlan, rng: Optional[Rng] = None):
    """Partition 0..n-1 into five index arrays per the plan's percentages.

    Rows are shuffled once (``rng`` defaults to ``Rng(plan.seed,
    stream=plan.replicate)``), cut into contiguous runs sized by largest
    remainder (ties toward the earlier part), and each part is returned
    sorted. Every part with a nonzero ratio must receive at least one row.
    """
    if n < 1:
        raise SizeError(f"n must be >= 1, got {n}")
    if rng is None:
        rng = Rng(plan.seed, stream=plan.replicate)
    quotas = [n * r / 100.0 for r in plan.ratios]
    sizes = [int(math.floor(q)) for q in quotas]
    remainder = n - sum(sizes)
    fractions = [q - s for q, s in zip(quotas, sizes)]
    order = sorted(range(5), key=lambda i: (-fractions[i], i))
    for i in order[:remainder]:
        sizes[i] += 1
    for name, ratio, size in zip(SplitPlan.PART_NAMES, plan.ratios, sizes):
        if ratio > 0.0 and size == 0:
            raise SizeError(
                f"split {name!r} (ratio {ratio}%) receives no rows at n={n}"
            )
    perm = rng.permutation(n)
    parts = []
    start = 0
    for size in sizes:
        parts.append(np.sort(perm[start : start + size]))
        start += size
    return tuple(parts)


class Normalizer(TransformerMixin, BaseEstimator):
    """Column standardization to zero mean, unit variance.

    Means and variances use the population convention (1/n). Standard
    deviations below 1e-12 are floored at 1e-12, so constant columns map
    to 0. ``transform`` returns dense output (mean subtraction densifies
    sparse input).
    """

    def fit(self, X, y=None):
        X = as_feature_matrix(X, "X")
        if X.shape[0] < 1:
            raise SizeError("Normalizer.fit needs at least one row")
        if sp.issparse(X):
            mean = np.asarray(X.mean(axis=0)).ravel()
            mean_sq = np.asarray(X.multiply(X).mean(axis=0)).ravel()
            var = np.maximum(mean_sq - mean**2, 0.0)
        else:
            mean = X.mean(axis=0)
            var = X.var(axis=0)
        self.mean_ = mean
        self.scale_ = np.maximum(np.sqrt(var), _STD_FLOOR)
        return self

    def transform(self, X) -> np.ndarray:
        check_fitted(self, "mean_")
        X = as_feature_matrix(X, "X")
        if X.shape[1] != self.mean_.shape[0]:
            raise ShapeError(
                f"X has {X.shape[1]} features, Normalizer was fitted with "
                f"{self.mean_.shape[0]}"
            )
        if sp.issparse(X):
            X = X.toarray()
        return (X - self.mean_) / self.scale_


def ordinal_binning(values, n_bins: int):
    """Bin numeric values into ordinal labels 1..n_bins by empirical quantiles.

    Edges are the k/n_bins quantiles (linear interpolation) for k=1..n_bins-1;
    the label is 1 plus the number of edges the value strictly exceeds.
    Emits :class:`DegenerateDataWarning` when fewer distinct values than bins
    exist or some bin ends up empty.
    """
    v = as_float_vector(values, "values")
    if v.shape[0] == 0:
        raise SizeError("ordinal_binning needs at least one value")
    if n_bins < 2:
        raise DomainError(f"n_bins must be >= 2, got {n_bins}")
    edges = np.quantile(v, [k / n_bins for k in range(1, n_bins)])
    labels = 1 + (v[:, None] > edges[None, :]).sum(axis=1).astype(np.int64)
    counts = np.bincount(labels, minlength=n_bins + 1)[1:]
    distinct = np.unique(v).shape[0]
    if distinct < n_bins or np.any(counts == 0):
        warnings.warn(
            f"ordinal binning into {n_bins} bins is degenerate "
            f"({distinct} distinct values; bin counts {counts.tolist()})",
            DegenerateDataWarning,
            stacklevel=2,
        )
    return labels


@dataclass(frozen=True)
class Manifest:
    """Everything needed to load one dataset reproducibly."""

    source: str
    fmt: str
    loss: str
    ratios: tuple = (30.0, 10.0, 30.0, 10.0, 20.0)
    label_column: int = -1
    ordinal_bins: Optional[int] = None
    seed: int = 0
    name: Optional[str] = None

    def __post_init__(self):
        if self.fmt not in ("libsvm", "csv"):
            raise ConfigError(f"format must be 'libsvm' or 'csv', got {self.fmt!r}")
        loss_from_name(self.loss)  # validates
        object.__setattr__(self, "ratios", tuple(float(r) for r in self.ratios))
        SplitPlan(self.ratios)  # validates
        if self.ordinal_bins is not None and int(self.ordinal_bins) < 2:
            raise ConfigError(
                f"ordinal_bins must be >= 2 when set, got {self.ordinal_bins}"
            )

    @property
    def loss_spec(self) -> LossSpec:
        return loss_from_name(self.loss)

    @property
    def display_name(self) -> str:
        if self.name:
            return self.name
        return os.path.splitext(os.path.basename(self.source))[0]

    def to_json(self) -> str:
        payload = {
            "source": self.source,
            "format": self.fmt,
            "loss": self.loss,
            "ratios": list(self.ratios),
            "label_column": self.label_column,
            "ordinal_bins": self.ordinal_bins,
            "seed": self.seed,
            "name": self.name,
        }
        return json.dumps(payload, sort_keys=True, indent=2) + "\n"


def save_manifest(manifest: Manifest, path) -> None:
    with open(path, "w", encoding="utf-8") as stream:
        stream.write(manifest.to_json())


def load_manifest(path) -> Manifest:
    """Read a JSON manifest; a relative source resolves against the manifest
    file's directory."""
    try:
        with open(path, "r", encoding="utf-8") as stream:
            payload = json.load(stream)
    except json.JSONDecodeError as exc:
        raise ParseError(f"{path}: not valid JSON: {exc}") from None
    if not isinstance(payload, dict):
        raise ParseError(f"{path}: manifest must be a JSON object")
    known = {
        "source",
        "format",
        "loss",
        "ratios",
        "label_column",
        "ordinal_bins",
        "seed",
        "name",
    }
    unknown = set(payload) - known
    if unknown:
        raise ConfigError(f"{path}: unknown manifest keys {sorted(unknown)}")
    for key in ("source", "format", "loss"):
        if key not in payload:
            raise ConfigError(f"{path}: manifest is missing {key!r}")
    source = payload["source"]
    if not os.path.isabs(source):
        source = os.path.normpath(
            os.path.join(os.path.dirname(os.path.abspath(path)), source)
        )
    return Manifest(
        source=source,
        fmt=payload["format"],
        loss=payload["loss"],
        ratios=tuple(payload.get("ratios", (30.0, 10.0, 30.0, 10.0, 20.0))),
        label_column=int(payload.get("label_column", -1)),
        ordinal_bins=payload.get("ordinal_bins"),
        seed=int(payload.get("seed", 0)),
        name=payload.get("name"),
    )


def load_dataset(manifest: Manifest) -> Dataset:
    """Load the dataset a manifest describes, applying ordinal binning when
    configured."""
    if manifest.fmt == "libsvm":
        dataset = parse_libsvm(manifest.source)
    else:
        dataset = parse_csv(manifest.source, label_column=manifest.label_column)
    if manifest.ordinal_bins is None:
        return dataset
    raw = np.asarray(dataset.label_map, dtype=np.float64)[dataset.labels - 1]
    labels = ordinal_binning(raw, int(manifest.ordinal_bins))
    return Dataset(
        dataset.features, labels, n_classes=int(manifest.ordinal_bins), label_map=None
    )
