"""Benchmark protocol: replicated model selection plus rank statistics.

One replicate of the protocol on one dataset:

1. Split the data five ways (train1/val1/train2/val2/test) from the
   replicate's seed.
2. Classifier stage: standardize features with train1's statistics, train the
   base classifier for every C in the classifier grid, keep the C with the
   lowest validation risk on val1 (ties -> the earlier grid entry).
3. Score stage: standardize features with train2's statistics, train each
   score method for every C in the score grid on train2, keep the C with the
   lowest AuRC on val2 (ties -> earlier grid entry). The baseline score has
   nothing to train.
4. Evaluate on test: AuRC, risk at coverage 0.9, and risk at full coverage.

Replicate r (0-based) draws every random choice from seed + r, so the base
classifier and test folds are shared by all methods within a replicate and
risk at full coverage is identical across methods by construction.

Across datasets, methods are compared by average rank of their mean AuRC,
with the Friedman test and the Nemenyi critical difference (critical values
for both are baked in for the standard alpha levels).
"""

from __future__ import annotations

import json
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np
from scipy.stats import rankdata

from .core import Dataset, LossSpec, Rng
from .dataio import Normalizer, SplitPlan, make_splits
from .exceptions import ConfigError, DomainError, ShapeError, SizeError
from .metrics import aurc, rc_curve, risk_at_coverage
from .models import make_classifier
from .scores import make_score

__all__ = [
    "BenchTask",
    "CellResult",
    "MethodSummary",
    "ProtocolResult",
    "run_protocol",
    "rank_matrix",
    "rank_methods",
    "friedman_test",
    "FriedmanResult",
    "nemenyi_cd",
    "relative_improvement",
    "results_csv",
    "summary_text",
    "summary_json",
]

CLASSIFIER_GRID = (1.0, 10.0, 100.0, 1000.0)
SCORE_GRID = (0.0, 1.0, 10.0, 100.0, 1000.0)
METHODS = ("baseline", "sele", "reg", "tcp")


@dataclass(frozen=True)
class BenchTask:
    """One dataset entering the protocol."""

    name: str
    dataset: Dataset
    loss: LossSpec
    ratios: tuple = (30.0, 10.0, 30.0, 10.0, 20.0)


@dataclass(frozen=True)
class CellResult:
    """Test metrics of one (dataset, method, replicate) cell."""

    dataset: str
    method: str
    replicate: int
    c_classifier: float
    c_score: Optional[float]
    aurc: float
    risk_at_90: float
    risk_at_100: float


@dataclass(frozen=True)
class MethodSummary:
    """Mean and population std over replicates for one (dataset, method)."""

    dataset: str
    method: str
    aurc_mean: float
    aurc_std: float
    risk90_mean: float
    risk90_std: float
    risk100_mean: float
    risk100_std: float


@dataclass(frozen=True)
class ProtocolResult:
    """All cells of a protocol run plus the orderings needed to report it."""

    datasets: tuple
    methods: tuple
    replicates: int
    seed: int
    cells: tuple

    def summaries(self) -> list:
        out = []
        for name in self.datasets:
            for method in self.methods:
                rows = [
                    c
                    for c in self.cells
                    if c.dataset == name and c.method == method
                ]
                rows.sort(key=lambda c: c.replicate)
                a = np.array([c.aurc for c in rows])
                r90 = np.array([c.risk_at_90 for c in rows])
                r100 = np.array([c.risk_at_100 for c in rows])
                out.append(
                    MethodSummary(
                        dataset=name,
                        method=method,
                        aurc_mean=float(a.mean()),
                        aurc_std=float(a.std()),
                        risk90_mean=float(r90.mean()),
                        risk90_std=float(r90.std()),
                        risk100_mean=float(r100.mean()),
                        risk100_std=float(r100.std()),
                    )
                )
        return out

    def mean_aurc_matrix(self) -> np.ndarray:
        """Datasets x methods matrix of mean AuRC (protocol orderings)."""
        table = {(s.dataset, s.method): s.aurc_mean for s in self.summaries()}
        return np.array(
            [[table[(d, m)] for m in self.methods] for d in self.datasets]
        )


def _slice_rows(X, idx):
    return X[idx]


def _run_cell(task: BenchTask, family: str, methods, classifier_grid,
              score_grid, seed: int, replicate: int, fit_params) -> list:
    """All methods' CellResults for one (task, replicate)."""
    data = task.dataset
    plan = SplitPlan(task.ratios, seed=seed + replicate, replicate=replicate + 1)
    trn1, val1, trn2, val2, tst = make_splits(data.n, plan)
    X, y = data.features, data.labels
    loss = task.loss

    norm_clf = Normalizer().fit(_slice_rows(X, trn1))
    Xc_trn1 = norm_clf.transform(_slice_rows(X, trn1))
    Xc_val1 = norm_clf.transform(_slice_rows(X, val1))

    best_clf, best_c, best_risk = None, None, math.inf
    for C in classifier_grid:
        clf = make_classifier(
            family,
            data.n_classes,
            C=C,
            gap_tol=fit_params["classifier_gap_tol"],
            max_iters=fit_params["max_iters"],
        ).fit(Xc_trn1, y[trn1], n_classes=data.n_classes)
        val_risk = float(loss.vector(y[val1], clf.predict(Xc_val1)).mean())
        if val_risk < best_risk:
            best_clf, best_c, best_risk = clf, float(C), val_risk
    clf = best_clf

    norm_score = Normalizer().fit(_slice_rows(X, trn2))
    Xc_trn2 = norm_clf.transform(_slice_rows(X, trn2))
    Xs_trn2 = norm_score.transform(_slice_rows(X, trn2))
    Xc_val2 = norm_clf.transform(_slice_rows(X, val2))
    Xs_val2 = norm_score.transform(_slice_rows(X, val2))
    Xc_tst = norm_clf.transform(_slice_rows(X, tst))
    Xs_tst = norm_score.transform(_slice_rows(X, tst))

    val2_losses = loss.vector(y[val2], clf.predict(Xc_val2))
    tst_losses = loss.vector(y[tst], clf.predict(Xc_tst))

    results = []
    for method in methods:
        if method == "baseline":
            score = make_score("baseline", clf, loss).fit()
            chosen_c = None
        else:
            best_score, chosen_c, best_aurc = None, None, math.inf
            for C in score_grid:
                params = {"C": C}
                if method == "sele":
                    params["gap_tol"] = fit_params["score_gap_tol"]
                    params["max_iters"] = fit_params["max_iters"]
                cand = make_score(method, clf, loss, **params)
                if method == "sele":
                    cand.fit(
                        Xs_trn2,
                        y[trn2],
                        rng=Rng(seed + replicate, stream=1),
                        base_inputs=Xc_trn2,
                    )
                else:
                    cand.fit(Xs_trn2, y[trn2], base_inputs=Xc_trn2)
                val_aurc = aurc(
                    cand.uncertainty(Xs_val2, base_inputs=Xc_val2), val2_losses
                )
                if val_aurc < best_aurc:
                    best_score, chosen_c, best_aurc = cand, float(C), val_aurc
            score = best_score
        if method == "baseline":
            unc_tst = score.uncertainty(Xc_tst)
        else:
            unc_tst = score.uncertainty(Xs_tst, base_inputs=Xc_tst)
        curve = rc_curve(unc_tst, tst_losses)
        results.append(
            CellResult(
                dataset=task.name,
                method=method,
                replicate=replicate + 1,
                c_classifier=best_c,
                c_score=chosen_c,
                aurc=float(math.fsum(curve.risk.tolist()) / curve.n),
                risk_at_90=risk_at_coverage(curve, 0.9),
                risk_at_100=risk_at_coverage(curve, 1.0),
            )
        )
    return results


def run_protocol(
    tasks: Sequence[BenchTask],
    family: str = "lr",
    methods: Sequence[str] = METHODS,
    classifier_grid: Sequence[float] = CLASSIFIER_GRID,
    score_grid: Sequence[float] = SCORE_GRID,
    seed: int = 0,
    replicates: int = 5,
    threads: int = 1,
    classifier_gap_tol: float = 1e-3,
    score_gap_tol: float = 0.01,
    max_iters: int = 2000,
) -> ProtocolResult:
    """Run the full protocol; see the module docstring for the stages.

    ``threads`` parallelizes over (dataset, replicate) cells; results are
    identical to the sequential run regardless of the thread count.
    """
    tasks = list(tasks)
    if not tasks:
        raise SizeError("run_protocol needs at least one task")
    names = [t.name for t in tasks]
    if len(set(names)) != len(names):
        raise ConfigError(f"duplicate dataset names: {names}")
    methods = tuple(methods)
    if not methods:
        raise SizeError("run_protocol needs at least one method")
    for m in methods:
        if m not in METHODS:
            raise ConfigError(f"unknown method {m!r}; expected one of {METHODS}")
    if len(set(methods)) != len(methods):
        raise ConfigError(f"duplicate methods: {methods}")
    if family not in ("lr", "svm", "svor"):
        raise ConfigError(f"unknown model family {family!r}")
    if "tcp" in methods and family != "lr":
        raise ConfigError(
            f"method 'tcp' requires the 'lr' model family, got {family!r}"
        )
    if replicates < 1:
        raise SizeError(f"replicates must be >= 1, got {replicates}")
    if not classifier_grid or not score_grid:
        raise SizeError("C grids must be nonempty")
    fit_params = {
        "classifier_gap_tol": float(classifier_gap_tol),
        "score_gap_tol": float(score_gap_tol),
        "max_iters": int(max_iters),
    }

    jobs = [(t, r) for t in tasks for r in range(replicates)]

    def run_job(job):
        t, r = job
        return _run_cell(
            t, family, methods, tuple(classifier_grid), tuple(score_grid),
            seed, r, fit_params,
        )

    if threads > 1:
        with ThreadPoolExecutor(max_workers=int(threads)) as pool:
            per_job = list(pool.map(run_job, jobs))
    else:
        per_job = [run_job(j) for j in jobs]
    cells = tuple(cell for group in per_job for cell in group)
    return ProtocolResult(
        datasets=tuple(names),
        methods=methods,
        replicates=int(replicates),
        seed=int(seed),
        cells=cells,
    )


def rank_matrix(values) -> np.ndarray:
    """Row-wise ranks (1 = smallest value), ties sharing the average rank."""
    V = np.asarray(values, dtype=np.float64)
    if V.ndim != 2 or V.shape[0] < 1 or V.shape[1] < 2:
        raise ShapeError(
            f"values must be (datasets, methods) with >= 2 methods, got {V.shape}"
        )
    if not np.all(np.isfinite(V)):
        raise DomainError("values must be finite")
    return np.vstack([rankdata(row, method="average") for row in V])


def rank_methods(values) -> np.ndarray:
    """Column means of :func:`rank_matrix`: the average rank per method."""
    return rank_matrix(values).mean(axis=0)


# Upper critical values of the chi-square distribution, df 1..9.
_CHI2_CRITICAL = {
    0.05: (3.841, 5.991, 7.815, 9.488, 11.070, 12.592, 14.067, 15.507, 16.919),
    0.10: (2.706, 4.605, 6.251, 7.779, 9.236, 10.645, 12.017, 13.362, 14.684),
}

# Studentized-range-based q_alpha for the Nemenyi test, K = 2..10 methods.
_NEMENYI_Q = {
    0.05: (1.960, 2.343, 2.569, 2.728, 2.850, 2.949, 3.031, 3.102, 3.164),
    0.10: (1.645, 2.052, 2.291, 2.459, 2.589, 2.693, 2.780, 2.855, 2.920),
}


@dataclass(frozen=True)
class FriedmanResult:
    statistic: float
    critical_value: float
    alpha: float
    reject: bool
    df: int


def friedman_test(ranks, alpha: float = 0.05) -> FriedmanResult:
    """Friedman chi-square test on a (datasets, methods) rank matrix.

    statistic = 12 D / (K (K+1)) * (sum_j Rbar_j^2 - K (K+1)^2 / 4), df = K-1.
    ``reject`` is True when the statistic exceeds the baked critical value
    (supported alphas: 0.05 and 0.10; K up to 10).
    """
    R = np.asarray(ranks, dtype=np.float64)
    if R.ndim != 2 or R.shape[0] < 1 or R.shape[1] < 2:
        raise ShapeError(
            f"ranks must be (datasets, methods) with >= 2 methods, got {R.shape}"
        )
    D, K = R.shape
    if alpha not in _CHI2_CRITICAL:
        raise ConfigError(
            f"alpha must be one of {sorted(_CHI2_CRITICAL)}, got {alpha}"
        )
    if K - 1 > len(_CHI2_CRITICAL[alpha]):
        raise ConfigError(
            f"critical values are baked for up to {len(_CHI2_CRITICAL[alpha]) + 1} "
            f"methods, got {K}"
        )
    mean_ranks = R.mean(axis=0)
    statistic = (
        12.0 * D / (K * (K + 1.0)) * (float(np.dot(mean_ranks, mean_ranks)) - K * (K + 1.0) ** 2 / 4.0)
    )
    critical = _CHI2_CRITICAL[alpha][K - 2]
    return FriedmanResult(
        statistic=float(statistic),
        critical_value=float(critical),
        alpha=float(alpha),
        reject=bool(statistic > critical),
        df=K - 1,
    )


def nemenyi_cd(n_methods: int, n_datasets: int, alpha: float = 0.10) -> float:
    """Nemenyi critical difference: q_alpha(K) * sqrt(K (K+1) / (6 N)).

    Two methods' average ranks differ significantly when their gap exceeds
    this. Baked q values cover K = 2..10 at alpha 0.05 and 0.10.
    """
    if alpha not in _NEMENYI_Q:
        raise ConfigError(f"alpha must be one of {sorted(_NEMENYI_Q)}, got {alpha}")
    K, N = int(n_methods), int(n_datasets)
    if not 2 <= K <= 10:
        raise ConfigError(f"n_methods must be in 2..10, got {K}")
    if N < 1:
        raise DomainError(f"n_datasets must be >= 1, got {N}")
    q = _NEMENYI_Q[alpha][K - 2]
    return q * math.sqrt(K * (K + 1.0) / (6.0 * N))


def relative_improvement(baseline: float, value: float) -> float:
    """Percent improvement of ``value`` over ``baseline`` (lower is better)."""
    baseline = float(baseline)
    if not math.isfinite(baseline) or baseline <= 0.0:
        raise DomainError(
            f"baseline must be finite and > 0 for a relative comparison, "
            f"got {baseline}"
        )
    return 100.0 * (baseline - float(value)) / baseline


def results_csv(result: ProtocolResult, stream) -> None:
    """Per-cell CSV, one row per (dataset, method, replicate)."""
    stream.write(
        "dataset,method,replicate,C_classifier,C_score,aurc,r_at_90,r_at_100\n"
    )
    ordered = sorted(
        result.cells,
        key=lambda c: (
            result.datasets.index(c.dataset),
            result.methods.index(c.method),
            c.replicate,
        ),
    )
    for c in ordered:
        c_score = "" if c.c_score is None else repr(c.c_score)
        stream.write(
            f"{c.dataset},{c.method},{c.replicate},{c.c_classifier!r},{c_score},"
            f"{c.aurc!r},{c.risk_at_90!r},{c.risk_at_100!r}\n"
        )


def summary_text(result: ProtocolResult, stream) -> None:
    """Human-readable aggregate summary with rank statistics."""
    summaries = result.summaries()
    stream.write(
        f"protocol: {len(result.datasets)} dataset(s), "
        f"{len(result.methods)} method(s), {result.replicates} replicate(s), "
        f"seed {result.seed}\n"
    )
    for name in result.datasets:
        stream.write(f"\ndataset {name}\n")
        for s in summaries:
            if s.dataset != name:
                continue
            stream.write(
                f"  {s.method:<10} aurc {s.aurc_mean:10.4f} +- {s.aurc_std:8.4f}"
                f"   r@90 {s.risk90_mean:10.4f} +- {s.risk90_std:8.4f}"
                f"   r@100 {s.risk100_mean:10.4f} +- {s.risk100_std:8.4f}\n"
            )
    if len(result.methods) >= 2:
        matrix = result.mean_aurc_matrix()
        mean_ranks = rank_methods(matrix)
        stream.write("\naverage AuRC ranks (1 = best)\n")
        for method, rank in zip(result.methods, mean_ranks):
            stream.write(f"  {method:<10} {rank:.4f}\n")
        ranks = rank_matrix(matrix)
        for alpha in (0.05, 0.10):
            fr = friedman_test(ranks, alpha=alpha)
            verdict = "rejected" if fr.reject else "not rejected"
            stream.write(
                f"Friedman chi2 = {fr.statistic:.4f} vs critical "
                f"{fr.critical_value:.3f} at alpha {alpha:.2f} "
                f"(df {fr.df}): equal-performance hypothesis {verdict}\n"
            )
            cd = nemenyi_cd(len(result.methods), len(result.datasets), alpha=alpha)
            stream.write(
                f"Nemenyi critical difference at alpha {alpha:.2f}: {cd:.4f}\n"
            )


def summary_json(result: ProtocolResult) -> str:
    """Machine-readable aggregate summary (sorted keys, repr-exact floats)."""
    payload = {
        "seed": result.seed,
        "replicates": result.replicates,
        "datasets": list(result.datasets),
        "methods": list(result.methods),
        "summaries": [
            {
                "dataset": s.dataset,
                "method": s.method,
                "aurc_mean": s.aurc_mean,
                "aurc_std": s.aurc_std,
                "risk90_mean": s.risk90_mean,
                "risk90_std": s.risk90_std,
                "risk100_mean": s.risk100_mean,
                "risk100_std": s.risk100_std,
            }
            for s in result.summaries()
        ],
    }
    if len(result.methods) >= 2:
        matrix = result.mean_aurc_matrix()
        payload["mean_ranks"] = {
            m: float(r) for m, r in zip(result.methods, rank_methods(matrix))
        }
        ranks = rank_matrix(matrix)
        payload["friedman"] = {}
        payload["nemenyi_cd"] = {}
        for alpha in (0.05, 0.10):
            fr = friedman_test(ranks, alpha=alpha)
            payload["friedman"][f"{alpha:.2f}"] = {
                "statistic": fr.statistic,
                "critical_value": fr.critical_value,
                "reject": fr.reject,
                "df": fr.df,
            }
            payload["nemenyi_cd"][f"{alpha:.2f}"] = nemenyi_cd(
                len(result.methods), len(result.datasets), alpha=alpha
            )
    return json.dumps(payload, sort_keys=True, indent=2) + "\n"
