"""Bundled synthetic datasets with position-independent label noise.

Both generators plant the same structure: the class geometry is carried by a
few coordinates, while the probability that a label got corrupted grows with
one separate "noise driver" coordinate. A margin-based uncertainty (distance
to the decision boundary) cannot see the corruption, but a learned score can
read it straight off the noise coordinate, which is exactly the situation
ranking-trained scores are built for.

Generation draws only from :class:`rejopt.core.Rng`, so a seed pins the data
on every platform.
"""

from __future__ import annotations

import numpy as np
from scipy.special import expit

from .core import Dataset, Rng

__all__ = ["noisy_margin_binary", "noisy_blobs_multiclass", "BUNDLED_DATASETS"]


def noisy_margin_binary(n: int = 1000, seed: int = 7) -> Dataset:
    """Two linearly separated classes with flip noise rising along x1.

    x0 carries the class (sign decides), x1 drives the flip probability
    0.42 * sigmoid(2.5 * x1), x2 and x3 are standard-normal distractors.
    """
    rng = Rng(seed, stream=1)
    X = rng.normals((n, 4))
    clean = np.where(X[:, 0] > 0.0, 2, 1).astype(np.int64)
    flip_prob = 0.42 * expit(2.5 * X[:, 1])
    flips = rng.uniforms((n,)) < flip_prob
    labels = np.where(flips, 3 - clean, clean)
    return Dataset(X, labels, n_classes=2)


def noisy_blobs_multiclass(n: int = 1200, seed: int = 11) -> Dataset:
    """Three Gaussian blobs with relabeling noise rising along x2.

    Blob centers sit on a circle of radius 3 in the (x0, x1) plane; x2 drives
    the corruption probability 0.45 * sigmoid(2.5 * x2). A corrupted sample
    takes one of the other two labels, chosen by a further coin flip.
    """
    rng = Rng(seed, stream=2)
    angles = 2.0 * np.pi * np.arange(3) / 3.0
    centers = 3.0 * np.column_stack([np.cos(angles), np.sin(angles)])
    clean = 1 + np.array([rng.below(3) for _ in range(n)], dtype=np.int64)
    X = rng.normals((n, 3))
    X[:, :2] += centers[clean - 1]
    corrupt_prob = 0.45 * expit(2.5 * X[:, 2])
    corrupted = rng.uniforms((n,)) < corrupt_prob
    shift = 1 + (rng.uniforms((n,)) < 0.5).astype(np.int64)  # 1 or 2
    labels = np.where(corrupted, 1 + (clean - 1 + shift) % 3, clean)
    return Dataset(X, labels, n_classes=3)


#: name -> (generator, loss kind); the data the benchmark demo runs on.
BUNDLED_DATASETS = {
    "noisy-margin": (noisy_margin_binary, "zero_one_100"),
    "noisy-blobs": (noisy_blobs_multiclass, "zero_one_100"),
}
