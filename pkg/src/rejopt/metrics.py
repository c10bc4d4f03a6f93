"""Risk-coverage analysis of uncertainty scores.

A score orders samples from most to least trustworthy (lower score = accepted
earlier). The risk-coverage curve tracks the mean loss of the accepted prefix
as coverage grows one sample at a time; AuRC is its average height. The SELE
loss is the pairwise-ordering surrogate bounding AuRC, and its softplus
smoothing (with gradient) is the trainable proxy.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.special import expit

from .exceptions import DomainError, ShapeError, SizeError
from .validation import as_float_vector, check_same_length

__all__ = [
    "RiskCoverageCurve",
    "rc_curve",
    "aurc",
    "risk_at_coverage",
    "sele_loss",
    "sele_proxy",
    "sele_proxy_gradient",
    "harmonic_numbers",
    "write_rc_csv",
]

_BLOCK_ROWS = 256


def _checked_pair(scores, losses):
    s = as_float_vector(scores, "scores")
    lv = as_float_vector(losses, "losses")
    n = check_same_length(("scores", "losses"), s, lv)
    if n == 0:
        raise ShapeError("need at least one sample")
    if np.any(lv < 0.0):
        raise DomainError(f"losses must be >= 0, found {lv.min()}")
    return s, lv, n


@dataclass(frozen=True)
class RiskCoverageCurve:
    """Risk-coverage curve at the n empirical coverage levels i/n.

    coverage[i-1]  = i / n
    risk[i-1]      = mean loss of the i samples with the smallest scores
    threshold[i-1] = score of the i-th sample in that order

    Ties between equal scores break by original sample index (stable order).
    """

    coverage: np.ndarray
    risk: np.ndarray
    threshold: np.ndarray

    def __post_init__(self):
        for name in ("coverage", "risk", "threshold"):
            arr = np.asarray(getattr(self, name), dtype=np.float64)
            arr.setflags(write=False)
            object.__setattr__(self, name, arr)
        if not (self.coverage.shape == self.risk.shape == self.threshold.shape):
            raise ShapeError("curve columns must share one length")
        if self.coverage.ndim != 1 or self.coverage.shape[0] == 0:
            raise ShapeError("curve columns must be nonempty 1-D arrays")

    @property
    def n(self) -> int:
        return int(self.coverage.shape[0])


def rc_curve(scores, losses) -> RiskCoverageCurve:
    """Risk-coverage curve of a score vector against observed losses."""
    s, l, n = _checked_pair(scores, losses)
    order = np.argsort(s, kind="stable")
    ordered_losses = l[order]
    prefix = np.cumsum(ordered_losses)
    counts = np.arange(1, n + 1, dtype=np.float64)
    return RiskCoverageCurve(
        coverage=counts / n,
        risk=prefix / counts,
        threshold=s[order],
    )


def aurc(scores, losses) -> float:
    """Area under the risk-coverage curve: the mean of its n risk values."""
    curve = rc_curve(scores, losses)
    return math.fsum(curve.risk.tolist()) / curve.n


def risk_at_coverage(curve: RiskCoverageCurve, target: float) -> float:
    """Curve risk at the smallest empirical coverage level >= target.

    ``target`` must lie in (0, 1]. Targets that fall between grid points
    round up to the next achievable coverage i/n (with a 1e-12 slack so
    targets sitting on a grid point do not spill over).
    """
    if not isinstance(curve, RiskCoverageCurve):
        raise ShapeError("curve must be a RiskCoverageCurve")
    t = float(target)
    if not math.isfinite(t) or t <= 0.0 or t > 1.0:
        raise DomainError(f"target coverage must lie in (0, 1], got {target}")
    n = curve.n
    i = max(1, int(math.ceil(t * n - 1e-12)))
    return float(curve.risk[i - 1])


def sele_loss(scores, losses) -> float:
    """Pairwise ordering loss: (1/n^2) sum_ij loss_i * [score_i <= score_j].

    The diagonal i == j is included. Needs n >= 2.
    """
    s, l, n = _checked_pair(scores, losses)
    if n < 2:
        raise SizeError(f"sele_loss needs at least 2 samples, got {n}")
    ordered = np.sort(s)
    # For each i, the number of j with s_j >= s_i is n - #{j : s_j < s_i}.
    n_strictly_below = np.searchsorted(ordered, s, side="left")
    counts = (n - n_strictly_below).astype(np.float64)
    return math.fsum((l * counts).tolist()) / (n * n)


def sele_proxy(scores, losses) -> float:
    """Softplus smoothing of :func:`sele_loss`:
    (1/n^2) sum_ij loss_i * log(1 + exp(score_j - score_i)).
    """
    s, l, n = _checked_pair(scores, losses)
    if n < 2:
        raise SizeError(f"sele_proxy needs at least 2 samples, got {n}")
    parts = []
    for start in range(0, n, _BLOCK_ROWS):
        stop = min(start + _BLOCK_ROWS, n)
        # block of rows i: softplus(s_j - s_i), summed over j
        soft = np.logaddexp(0.0, s[None, :] - s[start:stop, None])
        parts.append(float(np.dot(l[start:stop], soft.sum(axis=1))))
    return math.fsum(parts) / (n * n)


def sele_proxy_gradient(scores, losses) -> np.ndarray:
    """Gradient of :func:`sele_proxy` with respect to the scores.

    d/ds_k = (1/n^2) [ sum_i loss_i * sigmoid(s_k - s_i)
                       - loss_k * sum_j sigmoid(s_j - s_k) ].
    """
    s, l, n = _checked_pair(scores, losses)
    if n < 2:
        raise SizeError(f"sele_proxy_gradient needs at least 2 samples, got {n}")
    grad = np.empty(n, dtype=np.float64)
    for start in range(0, n, _BLOCK_ROWS):
        stop = min(start + _BLOCK_ROWS, n)
        rows = s[start:stop, None]
        incoming = expit(rows - s[None, :]) @ l
        outgoing = expit(s[None, :] - rows).sum(axis=1)
        grad[start:stop] = incoming - l[start:stop] * outgoing
    grad /= n * n
    return grad


def harmonic_numbers(n: int) -> np.ndarray:
    """Harmonic numbers H_0..H_n (H_0 = 0, H_k = sum_{i<=k} 1/i)."""
    if n < 0:
        raise DomainError(f"n must be >= 0, got {n}")
    out = np.zeros(n + 1, dtype=np.float64)
    if n:
        out[1:] = np.cumsum(1.0 / np.arange(1, n + 1, dtype=np.float64))
    return out


def write_rc_csv(curve: RiskCoverageCurve, stream) -> None:
    """Write a curve as CSV with full-precision (repr) floats."""
    if not isinstance(curve, RiskCoverageCurve):
        raise ShapeError("curve must be a RiskCoverageCurve")
    stream.write("coverage,selective_risk,threshold\n")
    for c, r, t in zip(
        curve.coverage.tolist(), curve.risk.tolist(), curve.threshold.tolist()
    ):
        stream.write(f"{c!r},{r!r},{t!r}\n")
