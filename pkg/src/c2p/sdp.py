"""Primal-dual interior-point solver for small dense SDPs.

Solves::

    min  <C, X>   s.t.  <A_i, X> = b_i,  X >= 0
    max  b'y      s.t.  S = C - sum_i y_i A_i >= 0

with the HKM search direction and a Mehrotra predictor-corrector scheme,
starting from the infeasible point ``X = S = tau I, y = 0``. Intended for
``d <= 32`` and ``m <= 64``; every iteration forms and factors the dense
``m x m`` Schur complement.
"""

from __future__ import annotations

import csv
import enum
import logging
import os
from dataclasses import dataclass, field
from typing import List, Optional, Sequence, Tuple

import numpy as np
import scipy.linalg

from c2p.errors import DegenerateInput, InfeasibleConstraints

logger = logging.getLogger(__name__)

TRACE_ENV_VAR = "C2P_SOLVER_TRACE"
DEPENDENCY_TOL = 1e-10
SCHUR_REGULARIZATION = 1e-12
REFINEMENT_STEPS = 2
BACKTRACK_STEPS = 20
STALL_ITERATIONS = 15


class SolverStatus(str, enum.Enum):
    OPTIMAL = "optimal"
    MAX_ITERATIONS = "max_iterations"
    NUMERICAL_FAILURE = "numerical_failure"


@dataclass(frozen=True)
class SolverConfig:
    gap_tol: float = 1e-10
    feas_tol: float = 1e-9
    max_iterations: int = 100
    step_fraction_to_boundary: float = 0.98
    initial_scale: float = 1.0
    trace_path: Optional[str] = None
    record_eigenvalues: bool = False

    def __post_init__(self):
        for name in ("gap_tol", "feas_tol", "initial_scale"):
            if not getattr(self, name) > 0:
                raise ValueError(f"{name} must be positive")
        if self.max_iterations < 1:
            raise ValueError("max_iterations must be positive")
        if not 0 < self.step_fraction_to_boundary < 1:
            raise ValueError("step_fraction_to_boundary must lie in (0, 1)")


@dataclass
class SdpProblem:
    """``min <cost, X>`` subject to ``<A_i, X> = b_i`` and ``X`` PSD.

    ``constraints`` holds ``(A_i, b_i)`` pairs where ``A_i`` is a dense
    symmetric array or any object with a ``to_dense()`` method.
    """

    cost: np.ndarray
    constraints: Sequence[Tuple[object, float]]

    def __post_init__(self):
        self.cost = np.asarray(self.cost, dtype=float)
        d = self.cost.shape[0]
        if d < 1 or self.cost.shape != (d, d):
            raise DegenerateInput("cost must be a non-empty square matrix")
        if not np.allclose(self.cost, self.cost.T, atol=1e-12, rtol=0):
            raise DegenerateInput("cost must be symmetric")
        if len(self.constraints) < 1:
            raise DegenerateInput("at least one constraint is required")

    @property
    def dim(self) -> int:
        return self.cost.shape[0]

    def dense_constraints(self) -> Tuple[np.ndarray, np.ndarray]:
        """Stacked ``(m, d, d)`` constraint matrices and the ``b`` vector."""
        mats = []
        for A, _ in self.constraints:
            A = A.to_dense() if hasattr(A, "to_dense") else np.asarray(A, dtype=float)
            if A.shape != (self.dim, self.dim):
                raise DegenerateInput(f"constraint of shape {A.shape}, expected {self.dim}x{self.dim}")
            if not np.allclose(A, A.T, atol=1e-12, rtol=0):
                raise DegenerateInput("constraint matrices must be symmetric")
            mats.append(A)
        b = np.array([float(bi) for _, bi in self.constraints])
        return np.stack(mats), b

    @classmethod
    def from_qcqp(cls, qcqp) -> "SdpProblem":
        return cls(qcqp.cost, qcqp.constraints)


@dataclass
class IterationLog:
    iteration: int
    primal_objective: float
    dual_objective: float
    gap: float
    primal_infeasibility: float
    dual_infeasibility: float
    step_primal: float
    step_dual: float
    min_eig_X: float = float("nan")
    min_eig_S: float = float("nan")


@dataclass
class SdpSolution:
    X: np.ndarray
    y: np.ndarray
    S: np.ndarray
    primal_objective: float
    dual_objective: float
    relative_gap: float
    primal_infeasibility: float
    dual_infeasibility: float
    iterations: int
    status: SolverStatus
    history: List[IterationLog] = field(default_factory=list, repr=False)

    @property
    def optimal(self) -> bool:
        return self.status is SolverStatus.OPTIMAL


def kkt_residuals(problem: SdpProblem, solution: SdpSolution) -> Tuple[float, float, float]:
    """Absolute KKT residuals ``(max|<A_i,X> - b_i|, ||C - A'y - S||_F, <X, S>)``."""
    A, b = problem.dense_constraints()
    X, S, y = solution.X, solution.S, solution.y
    primal = float(np.max(np.abs(np.einsum("kij,ij->k", A, X) - b)))
    dual = float(np.linalg.norm(problem.cost - np.einsum("k,kij->ij", y, A) - S))
    return primal, dual, float(np.sum(X * S))


def independent_constraints(A: np.ndarray, b: np.ndarray, tol: float = DEPENDENCY_TOL):
    """Indices of a maximal linearly independent subset of the constraints.

    Raises:
        InfeasibleConstraints: if a dependent constraint contradicts the others.
    """
    m, d, _ = A.shape
    G = A.reshape(m, d * d).T
    _, R, piv = scipy.linalg.qr(G, mode="economic", pivoting=True)
    diag = np.abs(np.diag(R))
    rank = int(np.sum(diag > tol * max(diag[0], 1.0)))
    keep = np.sort(piv[:rank])
    if rank < m:
        drop = np.sort(piv[rank:])
        coef, *_ = np.linalg.lstsq(G[:, keep], G[:, drop], rcond=None)
        mismatch = np.abs(b[keep] @ coef - b[drop])
        if np.any(mismatch > 1e-8 * (1.0 + np.abs(b[drop]))):
            raise InfeasibleConstraints(
                f"dependent constraints {drop[mismatch > 1e-8].tolist()} are inconsistent"
            )
    return keep


def _max_step(L: np.ndarray, dM: np.ndarray) -> float:
    """Largest ``alpha`` with ``L L' + alpha dM`` PSD, given the Cholesky factor ``L``."""
    W = scipy.linalg.solve_triangular(L, dM, lower=True)
    W = scipy.linalg.solve_triangular(L, W.T, lower=True)
    lam = np.linalg.eigvalsh(0.5 * (W + W.T))[0]
    return np.inf if lam >= 0 else -1.0 / lam


def _interior_step(M: np.ndarray, dM: np.ndarray, step: float):
    """Take ``M + step dM``, shrinking the step until the result factors.

    Returns ``(new_M, step)`` or ``None`` when no usable step remains.
    """
    for _ in range(BACKTRACK_STEPS):
        new = M + step * dM
        new = 0.5 * (new + new.T)
        if _cholesky(new) is not None:
            return new, step
        step *= 0.5
    return None


def _restore_primal(X, b, A, A_flat, tol):
    """Pull ``X`` back onto ``A(X) = b`` when a long step drifted off it."""
    d = len(X)
    err = b - A_flat @ X.reshape(-1)
    if np.max(np.abs(err)) <= 0.1 * tol:
        return X
    LX = _cholesky(X)
    if LX is None:
        return X
    proj = _SchurQR((LX.T @ A @ LX).reshape(len(b), -1))
    fixed = X + X @ (proj.solve(err) @ A_flat).reshape(d, d) @ X
    fixed = 0.5 * (fixed + fixed.T)
    # the projection degrades as X loses rank, so only keep real improvements
    if np.max(np.abs(b - A_flat @ fixed.reshape(-1))) >= np.max(np.abs(err)):
        return X
    return fixed if _cholesky(fixed) is not None else X


def _cholesky(M: np.ndarray):
    try:
        return np.linalg.cholesky(M)
    except np.linalg.LinAlgError:
        return None


class _SchurQR:
    """Schur complement ``M = F F'`` factored through the QR decomposition of ``F'``."""

    def __init__(self, F: np.ndarray):
        R = scipy.linalg.qr(F.T, mode="r", check_finite=False)[0][: F.shape[0]]
        d = np.abs(np.diag(R))
        if not np.all(np.isfinite(R)) or d.min() <= 1e-15 * max(d.max(), 1e-300):
            reg = np.sqrt(SCHUR_REGULARIZATION) * max(d.max(), 1.0)
            R = scipy.linalg.qr(np.vstack([F.T, reg * np.eye(F.shape[0])]), mode="r", check_finite=False)[0][: F.shape[0]]
        self.factor = R

    def solve(self, r: np.ndarray) -> np.ndarray:
        z = scipy.linalg.solve_triangular(self.factor, r, trans="T", check_finite=False)
        return scipy.linalg.solve_triangular(self.factor, z, check_finite=False)


def solve(problem: SdpProblem, config: Optional[SolverConfig] = None) -> SdpSolution:
    """Solve the SDP to the tolerances in ``config``.

    Linearly dependent constraints are removed before iterating (their
    multipliers are reported as zero). On ``MAX_ITERATIONS`` the best iterate
    seen is returned; on ``NUMERICAL_FAILURE`` the last interior iterate.
    """
    config = config or SolverConfig()
    trace_path = config.trace_path or os.environ.get(TRACE_ENV_VAR) or None

    A_all, b_all = problem.dense_constraints()
    keep = independent_constraints(A_all, b_all)
    A, b = A_all[keep], b_all[keep]
    m, d = len(b), problem.dim
    A_flat = A.reshape(m, d * d)

    # scale the cost to unit size; multipliers and dual slack are unscaled at the end
    c_scale = max(1.0, float(np.linalg.norm(problem.cost)))
    C = problem.cost / c_scale
    b_norm = 1.0 + float(np.max(np.abs(b)))
    c_norm = 1.0 + float(np.linalg.norm(C))

    tau = config.initial_scale * b_norm
    X = tau * np.eye(d)
    S = tau * np.eye(d)
    y = np.zeros(m)
    I = np.eye(d)
    frac = config.step_fraction_to_boundary

    history: List[IterationLog] = []
    best = None
    status = SolverStatus.MAX_ITERATIONS
    step_p = step_d = 0.0

    def measures(X, y, S):
        rp = b - A_flat @ X.reshape(-1)
        Rd = C - (y @ A_flat).reshape(d, d) - S
        pobj = float(np.sum(C * X))
        dobj = float(b @ y)
        gap = float(np.sum(X * S))
        pinf = float(np.max(np.abs(rp))) / b_norm
        dinf = float(np.linalg.norm(Rd)) / c_norm
        return rp, Rd, pobj, dobj, gap, pinf, dinf

    for it in range(config.max_iterations + 1):
        rp, Rd, pobj, dobj, gap, pinf, dinf = measures(X, y, S)
        rel_gap = gap / (1.0 + abs(pobj))
        log = IterationLog(it, pobj * c_scale, dobj * c_scale, rel_gap, pinf, dinf, step_p, step_d)
        if config.record_eigenvalues:
            log.min_eig_X = float(np.linalg.eigvalsh(X)[0])
            log.min_eig_S = float(np.linalg.eigvalsh(S)[0])
        history.append(log)

        merit = max(rel_gap / config.gap_tol, pinf / config.feas_tol, dinf / config.feas_tol)
        if best is None or merit < best[0]:
            best = (merit, X, y, S, it)
        if merit <= 1.0:
            status = SolverStatus.OPTIMAL
            break
        if it == config.max_iterations:
            break

        LX = _cholesky(X)
        LS = _cholesky(S)
        if LX is None or LS is None:
            status = SolverStatus.NUMERICAL_FAILURE
            break
        Sinv = scipy.linalg.cho_solve((LS, True), I, check_finite=False)
        Sinv = 0.5 * (Sinv + Sinv.T)
        mu = gap / d

        # M_ij = <A_i, S^-1 A_j X> = <L' A_i K, L' A_j K> with X = LL', S^-1 = KK'
        # factored through QR of F instead of forming the ill-conditioned M
        K = scipy.linalg.solve_triangular(LS, I, lower=True, check_finite=False).T
        schur = _SchurQR((LX.T @ A @ K).reshape(m, -1))
        proj = _SchurQR((LX.T @ A @ LX).reshape(m, -1))
        XRdSinv = X @ Rd @ Sinv
        base = rp + A_flat @ (X + XRdSinv).reshape(-1)

        def direction(sigma_mu, corr):
            # dX = sigma_mu S^-1 - X - X dS S^-1 - corr, dS = Rd - A'dy
            rhs = base - sigma_mu * (A_flat @ Sinv.reshape(-1))
            if corr is not None:
                rhs = rhs + A_flat @ corr.reshape(-1)
            dy = schur.solve(rhs)
            dS = Rd - (dy @ A_flat).reshape(d, d)
            dX = sigma_mu * Sinv - X - X @ dS @ Sinv
            if corr is not None:
                dX = dX - corr
            dX = 0.5 * (dX + dX.T)
            # M is ill-conditioned near the optimum; refine against A(dX) = rp
            for _ in range(REFINEMENT_STEPS):
                err = rp - A_flat @ dX.reshape(-1)
                if np.max(np.abs(err)) <= 1e-15 * b_norm:
                    break
                # least-change correction in the metric of X keeps dS untouched
                z = proj.solve(err)
                dX = dX + X @ (z @ A_flat).reshape(d, d) @ X
            return dX, dy, dS

        # predictor
        dX, dy, dS = direction(0.0, None)
        ap = min(1.0, _max_step(LX, dX))
        ad = min(1.0, _max_step(LS, dS))
        mu_aff = float(np.sum((X + ap * dX) * (S + ad * dS))) / d
        sigma = min(1.0, (mu_aff / mu) ** 3) if mu > 0 else 0.0

        # corrector
        corr = dX @ dS @ Sinv
        dX, dy, dS = direction(sigma * mu, corr)
        step_p = min(1.0, frac * _max_step(LX, dX))
        step_d = min(1.0, frac * _max_step(LS, dS))
        # near a rank-deficient X the direction violates A(dX) = rp slightly;
        # do not let a long primal step undo feasibility already reached
        limit = max(0.5 * config.feas_tol * b_norm, float(np.max(np.abs(rp))))
        AdX = A_flat @ dX.reshape(-1)
        while step_p > 1e-8 and np.max(np.abs(rp - step_p * AdX)) > limit:
            step_p *= 0.5
        if step_p < 1e-12 and step_d < 1e-12:
            status = SolverStatus.NUMERICAL_FAILURE
            break

        X_new = _interior_step(X, dX, step_p)
        S_new = _interior_step(S, dS, step_d)
        if X_new is None or S_new is None:
            status = SolverStatus.NUMERICAL_FAILURE
            break
        (X, step_p), (S, step_d) = X_new, S_new
        y = y + step_d * dy
        X = _restore_primal(X, b, A, A_flat, config.feas_tol * b_norm)
        if it - best[4] >= STALL_ITERATIONS:
            status = SolverStatus.NUMERICAL_FAILURE
            break

    if status is not SolverStatus.OPTIMAL:
        _, X, y, S, _ = best
        if status is SolverStatus.MAX_ITERATIONS:
            logger.warning("SDP solver hit the iteration limit (%d)", config.max_iterations)
        else:
            logger.warning("SDP solver numerical failure at iteration %d", len(history) - 1)

    _, _, pobj, dobj, gap, pinf, dinf = measures(X, y, S)
    y_full = np.zeros(len(b_all))
    y_full[keep] = y * c_scale
    solution = SdpSolution(
        X=X,
        y=y_full,
        S=S * c_scale,
        primal_objective=pobj * c_scale,
        dual_objective=dobj * c_scale,
        relative_gap=gap / (1.0 + abs(pobj)),
        primal_infeasibility=pinf,
        dual_infeasibility=dinf,
        iterations=len(history) - 1,
        status=status,
        history=history,
    )
    if trace_path:
        write_trace(trace_path, history)
    return solution


def write_trace(path: str, history: Sequence[IterationLog]) -> None:
    """Write the per-iteration log as CSV."""
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(
            [
                "iteration",
                "gap",
                "primal_infeasibility",
                "dual_infeasibility",
                "step_primal",
                "step_dual",
                "primal_objective",
                "dual_objective",
            ]
        )
        for h in history:
            w.writerow(
                [
                    h.iteration,
                    repr(h.gap),
                    repr(h.primal_infeasibility),
                    repr(h.dual_infeasibility),
                    repr(h.step_primal),
                    repr(h.step_dual),
                    repr(h.primal_objective),
                    repr(h.dual_objective),
                ]
            )
