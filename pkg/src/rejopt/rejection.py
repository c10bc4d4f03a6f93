"""Optimal randomized rejection rules on discrete conditional-risk distributions.

A selector accepts or rejects a sample based on its conditional risk r. The
optimal selector for each rejection model is a randomized threshold rule: it
accepts every atom with risk strictly below a threshold, accepts atoms exactly
at the threshold with some probability, and rejects everything above. The
three solvers here return that rule for

* cost-based rejection (each rejection costs ``reject_cost``),
* bounded improvement (selective risk must not exceed ``target_risk``),
* bounded coverage (coverage must reach ``target_coverage``).

Probability arithmetic uses compensated summation (`math.fsum` and a Neumaier
running sum) so thresholds sit on the right atom even when masses are tiny.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass

import numpy as np

from .exceptions import (
    DomainError,
    InfeasibleTargetWarning,
    ShapeError,
    SizeError,
    UndefinedRiskError,
)
from .validation import as_float_vector, check_probability, check_same_length

__all__ = [
    "DiscreteRiskDistribution",
    "RandomizedSelector",
    "SelectorEvaluation",
    "empirical_risk_distribution",
    "evaluate_selector",
    "cost_based_selector",
    "bounded_improvement_selector",
    "bounded_coverage_selector",
    "brute_force_selector",
]

_MASS_TOL = 1e-12
_FEAS_SLACK = 1e-12


def _neumaier_cumsum(terms: np.ndarray) -> np.ndarray:
    """Prefix sums with Neumaier compensation (error stays O(eps) per entry)."""
    out = np.empty(terms.shape[0], dtype=np.float64)
    total = 0.0
    comp = 0.0
    for i, t in enumerate(terms):
        t = float(t)
        s = total + t
        if abs(total) >= abs(t):
            comp += (total - s) + t
        else:
            comp += (t - s) + total
        total = s
        out[i] = total + comp
    return out


class DiscreteRiskDistribution:
    """Finite distribution of conditional risk: atoms (r_i, p_i).

    Atoms are stored sorted by risk, risks strictly increasing, masses
    positive and summing to one (tolerance 1e-12). Equal-risk atoms passed to
    the constructor are merged by summing their masses.
    """

    __slots__ = ("risks", "masses")

    def __init__(self, risks, masses):
        r = as_float_vector(risks, "risks")
        p = as_float_vector(masses, "masses")
        check_same_length(("risks", "masses"), r, p)
        if r.size == 0:
            raise SizeError("a risk distribution needs at least one atom")
        if np.any(r < 0.0):
            raise DomainError(f"risks must be >= 0, found {r.min()}")
        if np.any(p <= 0.0):
            raise DomainError(f"masses must be > 0, found {p.min()}")
        total = math.fsum(p.tolist())
        if abs(total - 1.0) > _MASS_TOL:
            raise DomainError(f"masses must sum to 1 within {_MASS_TOL}, got {total!r}")
        order = np.argsort(r, kind="stable")
        r = r[order]
        p = p[order]
        # Merge exact-duplicate risk values so atoms are distinct.
        values, inverse = np.unique(r, return_inverse=True)
        if values.shape[0] != r.shape[0]:
            merged = np.zeros(values.shape[0], dtype=np.float64)
            for k in range(values.shape[0]):
                merged[k] = math.fsum(p[inverse == k].tolist())
            r, p = values, merged
        r.setflags(write=False)
        p.setflags(write=False)
        self.risks = r
        self.masses = p

    @classmethod
    def from_atoms(cls, atoms) -> "DiscreteRiskDistribution":
        """Build from an iterable of (risk, mass) pairs."""
        pairs = list(atoms)
        if not pairs:
            raise SizeError("a risk distribution needs at least one atom")
        return cls([a[0] for a in pairs], [a[1] for a in pairs])

    @property
    def n_atoms(self) -> int:
        return int(self.risks.shape[0])

    @property
    def atoms(self) -> list:
        return list(zip(self.risks.tolist(), self.masses.tolist()))

    def mean_risk(self) -> float:
        return math.fsum((self.risks * self.masses).tolist())

    def __repr__(self) -> str:  # pragma: no cover - debugging aid
        inner = ", ".join(f"({r:g}, {p:g})" for r, p in self.atoms[:6])
        more = "" if self.n_atoms <= 6 else f", ... {self.n_atoms} atoms"
        return f"DiscreteRiskDistribution([{inner}{more}])"


@dataclass(frozen=True)
class RandomizedSelector:
    """Threshold rule: accept r < threshold; accept r == threshold with
    probability accept_prob; reject r > threshold.

    ``threshold`` may be +inf (accept everything) or -inf (reject everything).
    """

    threshold: float
    accept_prob: float

    def __post_init__(self):
        t = float(self.threshold)
        if math.isnan(t):
            raise DomainError("threshold must not be NaN")
        object.__setattr__(self, "threshold", t)
        object.__setattr__(
            self, "accept_prob", check_probability(self.accept_prob, "accept_prob")
        )

    def accept_fractions(self, risks: np.ndarray) -> np.ndarray:
        """Per-atom acceptance probability: 1 below, accept_prob at, 0 above."""
        out = np.zeros(risks.shape[0], dtype=np.float64)
        out[risks < self.threshold] = 1.0
        out[risks == self.threshold] = self.accept_prob
        return out


class SelectorEvaluation:
    """Coverage, selective risk, and (optionally) expected cost of a selector.

    ``selective_risk`` raises :class:`UndefinedRiskError` when the selector
    accepts nothing; use ``has_risk`` to test first.
    """

    __slots__ = ("coverage", "expected_cost", "_risk")

    def __init__(self, coverage: float, selective_risk, expected_cost=None):
        self.coverage = float(coverage)
        self._risk = None if selective_risk is None else float(selective_risk)
        self.expected_cost = None if expected_cost is None else float(expected_cost)

    @property
    def has_risk(self) -> bool:
        return self._risk is not None

    @property
    def selective_risk(self) -> float:
        if self._risk is None:
            raise UndefinedRiskError(
                "selective risk is undefined at coverage 0 (nothing accepted)"
            )
        return self._risk

    def __repr__(self) -> str:  # pragma: no cover - debugging aid
        risk = f"{self._risk!r}" if self._risk is not None else "undefined"
        cost = "" if self.expected_cost is None else f", expected_cost={self.expected_cost!r}"
        return f"SelectorEvaluation(coverage={self.coverage!r}, selective_risk={risk}{cost})"


def empirical_risk_distribution(scores, losses) -> DiscreteRiskDistribution:
    """Conditional-risk distribution of a score on labeled losses.

    Samples sharing an identical score value form one group; the group's risk
    is its mean loss and its mass is its sample fraction. Groups whose mean
    losses coincide merge into a single atom.
    """
    s = as_float_vector(scores, "scores")
    lv = as_float_vector(losses, "losses")
    n = check_same_length(("scores", "losses"), s, lv)
    if n == 0:
        raise ShapeError("need at least one sample")
    if np.any(lv < 0.0):
        raise DomainError(f"losses must be >= 0, found {lv.min()}")
    values, inverse = np.unique(s, return_inverse=True)
    risks = np.empty(values.shape[0], dtype=np.float64)
    masses = np.empty(values.shape[0], dtype=np.float64)
    for k in range(values.shape[0]):
        group = lv[inverse == k]
        risks[k] = math.fsum(group.tolist()) / group.shape[0]
        masses[k] = group.shape[0] / n
    return DiscreteRiskDistribution(risks, masses)


def evaluate_selector(
    dist: DiscreteRiskDistribution,
    selector: RandomizedSelector,
    reject_cost=None,
) -> SelectorEvaluation:
    """Coverage, selective risk, and optional expected cost of a selector.

    coverage  phi = sum_{r < a} p + nu * sum_{r = a} p
    risk      (sum_{r < a} p r + nu * sum_{r = a} p r) / phi   (None at phi = 0)
    cost      sum_i p_i (c_i r_i + (1 - c_i) reject_cost), c_i the per-atom
              acceptance probability; only computed when reject_cost is given.
    """
    if not isinstance(dist, DiscreteRiskDistribution):
        raise ShapeError("dist must be a DiscreteRiskDistribution")
    if not isinstance(selector, RandomizedSelector):
        raise ShapeError("selector must be a RandomizedSelector")
    fractions = selector.accept_fractions(dist.risks)
    # fsum over masses that themselves sum to 1 only within 1e-12 can land a
    # hair above 1; pin the invariant
    coverage = min(1.0, math.fsum((fractions * dist.masses).tolist()))
    risk_mass = math.fsum((fractions * dist.masses * dist.risks).tolist())
    risk = risk_mass / coverage if coverage > 0.0 else None
    cost = None
    if reject_cost is not None:
        eps = float(reject_cost)
        if not math.isfinite(eps) or eps < 0.0:
            raise DomainError(f"reject_cost must be finite and >= 0, got {reject_cost}")
        terms = dist.masses * (fractions * dist.risks + (1.0 - fractions) * eps)
        cost = math.fsum(terms.tolist())
    return SelectorEvaluation(coverage, risk, cost)


def cost_based_selector(
    dist: DiscreteRiskDistribution, reject_cost: float
) -> RandomizedSelector:
    """Optimal selector when every rejection costs ``reject_cost``.

    Accept exactly the atoms with risk <= reject_cost: threshold = reject_cost
    with boundary acceptance probability 1 (any boundary probability gives the
    same cost; 1 is the deterministic choice).
    """
    if not isinstance(dist, DiscreteRiskDistribution):
        raise ShapeError("dist must be a DiscreteRiskDistribution")
    eps = float(reject_cost)
    if not math.isfinite(eps) or eps < 0.0:
        raise DomainError(f"reject_cost must be finite and >= 0, got {reject_cost}")
    return RandomizedSelector(threshold=eps, accept_prob=1.0)


def bounded_improvement_selector(
    dist: DiscreteRiskDistribution, target_risk: float
) -> RandomizedSelector:
    """Coverage-maximal selector with selective risk at most ``target_risk``.

    With rbar_i = r_i - target, the running signed excess over the sorted
    atoms is rho_k = sum_{j<=k} p_j rbar_j. Let K be the largest k with
    rho_k <= 0. If K equals the atom count the whole distribution fits the
    budget and everything is accepted. Otherwise the threshold is r_{K+1} and
    the boundary atom is accepted with exactly the probability that spends the
    remaining slack: nu = -rho_K / (p_{K+1} rbar_{K+1}), which lies in [0, 1).

    When the target sits below the smallest atom risk no positive-coverage
    selector is feasible; the reject-everything selector is returned and an
    :class:`InfeasibleTargetWarning` is emitted.
    """
    if not isinstance(dist, DiscreteRiskDistribution):
        raise ShapeError("dist must be a DiscreteRiskDistribution")
    lam = float(target_risk)
    if not math.isfinite(lam) or lam <= 0.0:
        raise DomainError(f"target_risk must be finite and > 0, got {target_risk}")
    r = dist.risks
    p = dist.masses
    m = r.shape[0]
    terms = p * (r - lam)
    prefix = _neumaier_cumsum(terms)
    # Largest K with rho_K <= 0 (rho_0 = 0, so K >= 0 always).
    nonpos = np.nonzero(prefix <= 0.0)[0]
    K = int(nonpos[-1]) + 1 if nonpos.size else 0
    if K == m:
        return RandomizedSelector(threshold=math.inf, accept_prob=1.0)
    rho_K = 0.0 if K == 0 else float(prefix[K - 1])
    denom = float(terms[K])  # p_{K+1} (r_{K+1} - lam) > 0 by choice of K
    nu = 0.0 if denom <= 0.0 else min(1.0, max(0.0, -rho_K / denom))
    selector = RandomizedSelector(threshold=float(r[K]), accept_prob=nu)
    if K == 0 and nu == 0.0:
        warnings.warn(
            f"target_risk={lam!r} lies below the smallest atom risk {float(r[0])!r}; "
            "no selector with positive coverage meets it, rejecting everything",
            InfeasibleTargetWarning,
            stacklevel=2,
        )
    return selector


def bounded_coverage_selector(
    dist: DiscreteRiskDistribution, target_coverage: float
) -> RandomizedSelector:
    """Risk-minimal selector with coverage exactly ``target_coverage``.

    Accept atoms in increasing risk order until the cumulative mass F_k first
    exceeds the target; that atom is the threshold and is accepted with the
    fractional probability (target - F_{k-1}) / p_k. A target of 1 (or a
    target at or above the total mass) accepts everything.
    """
    if not isinstance(dist, DiscreteRiskDistribution):
        raise ShapeError("dist must be a DiscreteRiskDistribution")
    omega = float(target_coverage)
    if not math.isfinite(omega) or omega <= 0.0 or omega > 1.0:
        raise DomainError(
            f"target_coverage must lie in (0, 1], got {target_coverage}"
        )
    cdf = _neumaier_cumsum(dist.masses)
    above = np.nonzero(cdf > omega)[0]
    if omega == 1.0 or above.size == 0:
        return RandomizedSelector(threshold=math.inf, accept_prob=1.0)
    k = int(above[0])
    below_mass = 0.0 if k == 0 else float(cdf[k - 1])
    kappa = (omega - below_mass) / float(dist.masses[k])
    kappa = min(1.0, max(0.0, kappa))
    return RandomizedSelector(threshold=float(dist.risks[k]), accept_prob=kappa)


_BRUTE_MAX_ATOMS = 30
_SUBSET_MAX_ATOMS = 20
_PROB_GRID = np.round(np.linspace(0.0, 1.0, 101), 2)


def brute_force_selector(
    dist: DiscreteRiskDistribution, model: str, target: float
) -> SelectorEvaluation:
    """Best selector evaluation found by exhaustive search. Testing oracle.

    model
        ``"cost"``: minimize expected cost with reject cost ``target``. All
        2^m accept/reject subsets are searched for m <= 20 atoms (threshold
        rules only above that).
        ``"risk"``: maximize coverage subject to selective risk <=
        ``target`` + 1e-12, searching thresholds at every atom value with
        boundary probabilities from a 0.01 grid plus the exact
        constraint-saturating probability.
        ``"coverage"``: minimize selective risk subject to coverage >=
        ``target`` - 1e-12, searched the same way; selective-risk ties break
        toward the smallest feasible coverage (the constraint-saturating
        rule).

    At most 30 atoms (SizeError above). The search never consults the
    closed-form solvers; it only evaluates candidate rules.
    """
    if not isinstance(dist, DiscreteRiskDistribution):
        raise ShapeError("dist must be a DiscreteRiskDistribution")
    if dist.n_atoms > _BRUTE_MAX_ATOMS:
        raise SizeError(
            f"brute_force_selector handles at most {_BRUTE_MAX_ATOMS} atoms, "
            f"got {dist.n_atoms}"
        )
    if model == "cost":
        return _brute_force_cost(dist, target)
    if model == "risk":
        return _brute_force_risk(dist, target)
    if model == "coverage":
        return _brute_force_coverage(dist, target)
    raise DomainError(f"model must be 'cost', 'risk' or 'coverage', got {model!r}")


def _threshold_candidates(dist, extra_prob_for):
    """Yield RandomizedSelector candidates over atom-value thresholds.

    ``extra_prob_for(k)`` may return an additional boundary probability for
    the threshold at atom k (or None).
    """
    yield RandomizedSelector(threshold=-math.inf, accept_prob=0.0)
    for k in range(dist.n_atoms):
        t = float(dist.risks[k])
        probs = set(_PROB_GRID.tolist())
        extra = extra_prob_for(k)
        if extra is not None and 0.0 <= extra <= 1.0:
            probs.add(float(extra))
        for q in sorted(probs):
            yield RandomizedSelector(threshold=t, accept_prob=q)


def _brute_force_cost(dist, reject_cost) -> SelectorEvaluation:
    eps = float(reject_cost)
    if not math.isfinite(eps) or eps < 0.0:
        raise DomainError(f"reject_cost must be finite and >= 0, got {reject_cost}")
    best = None
    if dist.n_atoms <= _SUBSET_MAX_ATOMS:
        m = dist.n_atoms
        base_cost = math.fsum((dist.masses * eps).tolist())
        gains = dist.masses * (dist.risks - eps)
        shifts = np.arange(m, dtype=np.uint32)
        best_mask, best_cost = 0, base_cost
        # cost(mask) = base_cost + sum_{i in mask} p_i (r_i - eps); scan the
        # 2^m masks in blocks to keep memory flat.
        block = 1 << 17
        for start in range(0, 1 << m, block):
            masks = np.arange(start, min(start + block, 1 << m), dtype=np.uint32)
            bits = ((masks[:, None] >> shifts) & 1).astype(np.float64)
            costs = bits @ gains + base_cost
            pick = int(np.argmin(costs))
            if costs[pick] < best_cost:
                best_mask, best_cost = int(masks[pick]), float(costs[pick])
        frac = ((best_mask >> shifts) & 1).astype(np.float64)
        coverage = math.fsum((frac * dist.masses).tolist())
        risk_mass = math.fsum((frac * dist.masses * dist.risks).tolist())
        cost = math.fsum(
            (dist.masses * (frac * dist.risks + (1.0 - frac) * eps)).tolist()
        )
        best = SelectorEvaluation(
            coverage, risk_mass / coverage if coverage > 0 else None, cost
        )
    for cand in _threshold_candidates(dist, lambda k: None):
        ev = evaluate_selector(dist, cand, reject_cost=eps)
        if best is None or ev.expected_cost < best.expected_cost:
            best = ev
    return best


def _brute_force_risk(dist, target_risk) -> SelectorEvaluation:
    lam = float(target_risk)
    if not math.isfinite(lam) or lam <= 0.0:
        raise DomainError(f"target_risk must be finite and > 0, got {target_risk}")
    p = dist.masses
    r = dist.risks
    prefix_p = _neumaier_cumsum(p)
    prefix_pr = _neumaier_cumsum(p * r)

    def saturating_prob(k):
        # Solve (S< + q S=) / (P< + q P=) = lam for q at threshold atom k.
        p_below = 0.0 if k == 0 else float(prefix_p[k - 1])
        s_below = 0.0 if k == 0 else float(prefix_pr[k - 1])
        p_at = float(p[k])
        s_at = float(p[k] * r[k])
        denom = s_at - lam * p_at
        if denom <= 0.0:
            return None
        return (lam * p_below - s_below) / denom

    best = SelectorEvaluation(0.0, None, None)
    for cand in _threshold_candidates(dist, saturating_prob):
        ev = evaluate_selector(dist, cand)
        if ev.coverage > 0.0 and ev.selective_risk > lam + _FEAS_SLACK:
            continue
        if ev.coverage > best.coverage:
            best = ev
    return best


def _brute_force_coverage(dist, target_coverage) -> SelectorEvaluation:
    omega = float(target_coverage)
    if not math.isfinite(omega) or omega <= 0.0 or omega > 1.0:
        raise DomainError(
            f"target_coverage must lie in (0, 1], got {target_coverage}"
        )
    p = dist.masses
    prefix_p = _neumaier_cumsum(p)

    def saturating_prob(k):
        p_below = 0.0 if k == 0 else float(prefix_p[k - 1])
        return (omega - p_below) / float(p[k])

    best = None
    for cand in _threshold_candidates(dist, saturating_prob):
        ev = evaluate_selector(dist, cand)
        if ev.coverage == 0.0 or ev.coverage < omega - _FEAS_SLACK:
            continue
        if best is None:
            best = ev
            continue
        # Risk ties happen for real: every acceptance probability inside the
        # smallest-risk atom yields the same selective risk (up to rounding).
        # Break them toward the smallest coverage, i.e. the rule that
        # saturates the constraint.
        tol = 1e-12 * max(1.0, abs(best.selective_risk))
        if ev.selective_risk < best.selective_risk - tol:
            best = ev
        elif (
            abs(ev.selective_risk - best.selective_risk) <= tol
            and ev.coverage < best.coverage
        ):
            best = ev
    return best
