"""Regularized risk minimization: bundle method (BMRM) and ridge regression.

``bmrm_solve`` minimizes F(theta) = (C/2)||theta||^2 + R(theta) for a convex
risk R given through a first-order oracle. Each iteration adds the cutting
plane R(theta_t) + <g_t, theta - theta_t> and solves the master problem
(regularizer plus max over cuts) through its dual, a box-free quadratic over
the simplex. Every feasible dual point yields a valid lower bound on min F,
so the reported gap is sound even with an approximately solved master and a
capped bundle.

``ridge_solve`` is the closed-form least-squares counterpart used both as a
trainer (regression-style scores) and as an independent check on BMRM.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Optional

import numpy as np
import scipy.sparse as sp

from .exceptions import DomainError, NumericError, ShapeError, SizeError

__all__ = ["SolveReport", "bmrm_solve", "ridge_solve"]

_TINY = 1e-300
_ZERO_REG_SUBSTITUTE = 1e-8
_DUAL_TOL = 1e-10
_INACTIVE = 1e-12


@dataclass(frozen=True)
class SolveReport:
    """Outcome of a bundle-method run.

    theta            final iterate (the best primal point seen)
    primal_value     best value of F(theta) over evaluated iterates
    dual_lower_bound best dual value over iterations (a certified bound on min F)
    relative_gap     (primal - dual) / max(primal, tiny)
    iterations       oracle calls performed
    converged        True when relative_gap <= gap_tol within the budget
    message          human-readable termination note
    """

    theta: np.ndarray
    primal_value: float
    dual_lower_bound: float
    relative_gap: float
    iterations: int
    converged: bool
    message: str


def _solve_master_dual(K, b, alpha, sweeps):
    """Maximize b.alpha - 0.5 alpha^T K alpha over the simplex, in place.

    Pairwise (SMO-style) coordinate ascent: move mass from the worst active
    coordinate to the best one. Stops on a 1e-10 stationarity tolerance or
    after a fixed sweep budget. Returns the dual value.
    """
    m = b.shape[0]
    if m == 1:
        alpha[0] = 1.0
        return float(b[0] - 0.5 * K[0, 0])
    Ka = K @ alpha
    for _ in range(sweeps):
        grad = b - Ka
        i = int(np.argmax(grad))
        active = alpha > 0.0
        # worst active coordinate
        masked = np.where(active, grad, np.inf)
        j = int(np.argmin(masked))
        violation = float(grad[i] - grad[j])
        scale = max(1.0, float(abs(np.dot(alpha, b))))
        if i == j or violation <= _DUAL_TOL * scale:
            break
        denom = float(K[i, i] - 2.0 * K[i, j] + K[j, j])
        if denom <= 0.0:
            step = float(alpha[j])
        else:
            step = min(float(alpha[j]), violation / denom)
        if step <= 0.0:
            break
        alpha[i] += step
        alpha[j] -= step
        if alpha[j] < 0.0:
            alpha[j] = 0.0
        Ka += step * (K[:, i] - K[:, j])
    return float(np.dot(alpha, b) - 0.5 * np.dot(alpha, K @ alpha))


def bmrm_solve(
    oracle: Callable[[np.ndarray], tuple],
    dim: int,
    reg_const: float,
    gap_tol: float = 1e-3,
    max_iters: int = 2000,
    bundle_cap: int = 200,
    trace: Optional[Callable[[int, float, float], None]] = None,
) -> SolveReport:
    """Minimize (C/2)||theta||^2 + R(theta) with the bundle method.

    Parameters
    ----------
    oracle : callable theta -> (risk, subgradient)
        First-order oracle of the convex risk R. Values must be finite.
    dim : int
        Parameter dimension; the start point is theta = 0.
    reg_const : float
        Regularization constant C >= 0. C = 0 is substituted by 1e-8 (the
        objective needs strong convexity for the master to be bounded); the
        substitution is noted in the report message.
    gap_tol : float
        Stop when (primal - dual) / max(primal, tiny) <= gap_tol.
    max_iters : int
        Oracle-call budget. Exhausting it is reported via ``converged=False``,
        not raised.
    bundle_cap : int
        Maximum number of retained cuts. When full, the oldest cut with
        negligible dual weight is evicted (the oldest outright if all carry
        weight); any removed weight moves to the heaviest cut.
    trace : callable (iteration, primal, gap) -> None, optional
        Called once per iteration after the master solve.

    Returns
    -------
    SolveReport
    """
    if dim < 1:
        raise SizeError(f"dim must be >= 1, got {dim}")
    C = float(reg_const)
    if not math.isfinite(C) or C < 0.0:
        raise DomainError(f"reg_const must be finite and >= 0, got {reg_const}")
    if not math.isfinite(gap_tol) or gap_tol < 0.0:
        raise DomainError(f"gap_tol must be finite and >= 0, got {gap_tol}")
    if max_iters < 1:
        raise SizeError(f"max_iters must be >= 1, got {max_iters}")
    if bundle_cap < 2:
        raise SizeError(f"bundle_cap must be >= 2, got {bundle_cap}")
    substituted = C == 0.0
    if substituted:
        C = _ZERO_REG_SUBSTITUTE

    A = np.zeros((bundle_cap, dim), dtype=np.float64)  # cut gradients
    b = np.zeros(bundle_cap, dtype=np.float64)  # cut offsets
    K = np.zeros((bundle_cap, bundle_cap), dtype=np.float64)  # <a_i,a_j>/C
    alpha = np.zeros(bundle_cap, dtype=np.float64)
    n_cuts = 0

    theta = np.zeros(dim, dtype=np.float64)
    theta_best = theta.copy()
    primal_best = math.inf
    dual_best = -math.inf
    gap = math.inf
    converged = False
    iterations = 0

    for it in range(1, max_iters + 1):
        iterations = it
        risk, grad = oracle(theta)
        risk = float(risk)
        grad = np.asarray(grad, dtype=np.float64)
        if grad.shape != (dim,):
            raise ShapeError(
                f"oracle gradient has shape {grad.shape}, expected ({dim},)"
            )
        if not (math.isfinite(risk) and np.all(np.isfinite(grad))):
            raise NumericError(f"oracle returned non-finite values at iteration {it}")
        primal = 0.5 * C * float(np.dot(theta, theta)) + risk
        if primal < primal_best:
            primal_best = primal
            theta_best = theta.copy()

        if n_cuts == bundle_cap:
            n_cuts = _evict_cut(A, b, K, alpha, n_cuts)
        A[n_cuts] = grad
        b[n_cuts] = risk - float(np.dot(grad, theta))
        row = A[: n_cuts + 1] @ grad / C
        K[n_cuts, : n_cuts + 1] = row
        K[: n_cuts + 1, n_cuts] = row
        if n_cuts == 0:
            alpha[0] = 1.0
        else:
            alpha[n_cuts] = 0.0
        n_cuts += 1

        sweeps = max(200, 20 * n_cuts)
        dual = _solve_master_dual(
            K[:n_cuts, :n_cuts], b[:n_cuts], alpha[:n_cuts], sweeps
        )
        if dual > dual_best:
            dual_best = dual
        gap = (primal_best - dual_best) / max(primal_best, _TINY)
        if trace is not None:
            trace(it, primal_best, gap)
        if gap <= gap_tol:
            converged = True
            break
        theta = -(A[:n_cuts].T @ alpha[:n_cuts]) / C

    message = (
        f"gap {gap:.3e} reached in {iterations} iterations"
        if converged
        else f"iteration budget {max_iters} exhausted at gap {gap:.3e}"
    )
    if substituted:
        message += f" (reg_const 0 substituted by {_ZERO_REG_SUBSTITUTE})"
    return SolveReport(
        theta=theta_best,
        primal_value=primal_best,
        dual_lower_bound=dual_best,
        relative_gap=gap,
        iterations=iterations,
        converged=converged,
        message=message,
    )


def _evict_cut(A, b, K, alpha, n_cuts):
    """Drop one cut in place; returns the new cut count.

    Prefers the oldest cut whose dual weight is negligible; otherwise drops
    the oldest cut and moves its weight to the heaviest remaining cut, so
    alpha stays on the simplex.
    """
    idx = 0
    for k in range(n_cuts):
        if alpha[k] < _INACTIVE:
            idx = k
            break
    removed = float(alpha[idx])
    keep = [k for k in range(n_cuts) if k != idx]
    A[: n_cuts - 1] = A[keep]
    b[: n_cuts - 1] = b[keep]
    K[: n_cuts - 1, : n_cuts - 1] = K[np.ix_(keep, keep)]
    alpha[: n_cuts - 1] = alpha[keep]
    alpha[n_cuts - 1] = 0.0
    if removed > 0.0:
        heaviest = int(np.argmax(alpha[: n_cuts - 1]))
        alpha[heaviest] += removed
    return n_cuts - 1


def ridge_solve(design, targets, reg_const: float) -> np.ndarray:
    """Minimize (C/2)||theta||^2 + (1/n) sum_i (t_i - <theta, phi_i>)^2.

    C > 0 solves the equivalent augmented least-squares system
    [Phi; sqrt(n C / 2) I] theta ~ [t; 0]; C = 0 returns the minimum-norm
    least-squares solution. Sparse designs are densified (the protocol-scale
    designs this serves are small).
    """
    if sp.issparse(design):
        design = design.toarray()
    Phi = np.asarray(design, dtype=np.float64)
    t = np.asarray(targets, dtype=np.float64)
    if Phi.ndim != 2:
        raise ShapeError(f"design must be 2-D, got shape {Phi.shape}")
    if t.ndim != 1 or t.shape[0] != Phi.shape[0]:
        raise ShapeError(
            f"targets must be 1-D with one entry per design row; "
            f"got {t.shape} for design {Phi.shape}"
        )
    if Phi.shape[0] == 0:
        raise SizeError("ridge_solve needs at least one row")
    if not (np.all(np.isfinite(Phi)) and np.all(np.isfinite(t))):
        raise NumericError("design and targets must be finite")
    C = float(reg_const)
    if not math.isfinite(C) or C < 0.0:
        raise DomainError(f"reg_const must be finite and >= 0, got {reg_const}")
    n, d = Phi.shape
    if C == 0.0:
        theta, *_ = np.linalg.lstsq(Phi, t, rcond=None)
        return theta
    ridge_rows = math.sqrt(n * C / 2.0) * np.eye(d)
    augmented = np.vstack([Phi, ridge_rows])
    rhs = np.concatenate([t, np.zeros(d)])
    theta, *_ = np.linalg.lstsq(augmented, rhs, rcond=None)
    return theta
