"""Pose recovery from the SDP solution and the rank certificate of tightness.

The lifted C2P solution ``X`` is 18x18 with the layout of
:data:`c2p.problem.C2P_LAYOUT`. Its leading 16x16 block covers
``(e, t, q, h)``; when the relaxation is tight that block has rank at most
three and its ``e`` and ``(t, q)`` sub-blocks are rank one.
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field
from typing import List, Optional, Tuple

import numpy as np

from c2p import sdp
from c2p.errors import DegenerateInput, DegenerateSpectrum
from c2p.geometry import (
    MIN_NORM,
    RelativePose,
    adjugate,
    project_to_so3,
    skew,
)
from c2p.problem import C2P_LAYOUT, Variant, build_qcqp
from c2p.refine import refine_pose

DEFAULT_RANK_TOL = 1e-5
# numerical gate for the h-free extraction, fixed
PURE_ROTATION_GATE = 1e-4
# user-facing pure-rotation threshold on s_t^2
DEFAULT_EPS_T = 1e-3
MIN_TOP_EIGENVALUE = 1e-9
REPORTED_EIGENVALUES = 8

_E = C2P_LAYOUT["e"]
_T = C2P_LAYOUT["t"]
_Q = C2P_LAYOUT["q"]
_H = C2P_LAYOUT.index("h")
_SR = C2P_LAYOUT.index("s_r")
_ST = C2P_LAYOUT.index("s_t")


def sym_eig_desc(M: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
    """Eigenpairs of a symmetric matrix in descending eigenvalue order."""
    M = np.asarray(M, dtype=float)
    w, V = np.linalg.eigh(0.5 * (M + M.T))
    return w[::-1], V[:, ::-1]


def numeric_rank(M: np.ndarray, rank_tol: float = DEFAULT_RANK_TOL) -> int:
    """Number of eigenvalues above ``rank_tol`` times the largest one."""
    w, _ = sym_eig_desc(M)
    if w[0] <= 0:
        return 0
    return int(np.sum(w > rank_tol * w[0]))


def extract_dominant(X16: np.ndarray):
    """Split the dominant eigenvector of the 16x16 block into ``(e, t, q, h)``.

    The sign is fixed so that ``h > 0``.

    Raises:
        DegenerateSpectrum: if the top eigenvalue is below 1e-9.
    """
    X16 = np.asarray(X16, dtype=float)[:16, :16]
    w, V = sym_eig_desc(X16)
    if w[0] < MIN_TOP_EIGENVALUE:
        raise DegenerateSpectrum(f"top eigenvalue {w[0]:.3e} is too small")
    v = V[:, 0] * np.sqrt(w[0])
    if v[_H] < 0:
        v = -v
    return v[_E].copy(), v[_T].copy(), v[_Q].copy(), float(v[_H])


def rescale_estimates(e, t, q):
    """Normalize ``t`` and ``q``; rebuild ``E`` with singular values ``(1, 1, 0)``.

    Raises:
        DegenerateInput: when ``t`` or ``q`` vanish or ``E`` has fewer than
            two significant singular values.
    """
    t = np.asarray(t, dtype=float).reshape(3)
    q = np.asarray(q, dtype=float).reshape(3)
    nt, nq = np.linalg.norm(t), np.linalg.norm(q)
    if nt < MIN_NORM or nq < MIN_NORM:
        raise DegenerateInput("translation estimate vanished")
    U, s, Vt = np.linalg.svd(np.asarray(e, dtype=float).reshape(3, 3))
    if s[1] < MIN_NORM:
        raise DegenerateInput(f"essential estimate has rank < 2 (s = {s})")
    E = U @ np.diag([1.0, 1.0, 0.0]) @ Vt
    return E, t / nt, q / nq


def read_slack_squared(X: np.ndarray, name: str = "s_t") -> float:
    """Diagonal entry of the slack, clamped at zero."""
    i = C2P_LAYOUT.index(name)
    return max(float(X[i, i]), 0.0)


def pure_rotation_path(X: np.ndarray, prior) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Dominant eigenvector of the ``(e, t, q)`` block, sign-aligned with ``prior``.

    ``prior`` is the 15-vector ``(e, t, q)`` from the h-normalized extraction.
    """
    w, V = sym_eig_desc(np.asarray(X, dtype=float)[:15, :15])
    v = V[:, 0] * np.sqrt(max(w[0], 0.0))
    if v @ np.asarray(prior, dtype=float).reshape(15) < 0:
        v = -v
    return v[_E].copy(), v[_T].copy(), v[_Q].copy()


def recover_rotation(E, t, q) -> np.ndarray:
    """``R = t q' - (skew(t) E + E skew(q)) / 2``, projected to SO(3)."""
    E = np.asarray(E, dtype=float)
    t = np.asarray(t, dtype=float).reshape(3)
    q = np.asarray(q, dtype=float).reshape(3)
    R = np.outer(t, q) - 0.5 * (skew(t) @ E + E @ skew(q))
    return project_to_so3(R)


@dataclass(frozen=True)
class CertificateReport:
    rank_full_block: int
    rank_e_block: int
    rank_tq_block: int
    rank_tol: float
    max_full_rank: int
    passed: bool

    def __bool__(self) -> bool:
        return self.passed


def certify(X: np.ndarray, rank_tol: float = DEFAULT_RANK_TOL) -> CertificateReport:
    """Rank test on the ``(e, t, q, h)`` block of a C2P solution."""
    X = np.asarray(X, dtype=float)
    full = numeric_rank(X[:16, :16], rank_tol)
    r_e = numeric_rank(X[_E, _E], rank_tol)
    r_tq = numeric_rank(X[9:15, 9:15], rank_tol)
    return CertificateReport(full, r_e, r_tq, rank_tol, 3, 1 <= full <= 3 and r_e == 1 and r_tq == 1)


def certify_baseline(X: np.ndarray, rank_tol: float = DEFAULT_RANK_TOL) -> CertificateReport:
    """Rank test on the ``(e, t)`` block of a QCQP-Z solution.

    ``rank_tq_block`` reports the rank of the ``t`` block here.
    """
    X = np.asarray(X, dtype=float)
    full = numeric_rank(X[:12, :12], rank_tol)
    r_e = numeric_rank(X[:9, :9], rank_tol)
    r_t = numeric_rank(X[9:12, 9:12], rank_tol)
    return CertificateReport(full, r_e, r_t, rank_tol, 2, 1 <= full <= 2 and r_e == 1 and r_t == 1)


@dataclass
class PoseEstimate:
    """Output of a relative-pose solve.

    ``s_t_squared`` and ``s_r_squared`` are ``None`` for the two-step
    baselines, which carry no slack variables.
    """

    essential: np.ndarray
    pose: RelativePose
    q: np.ndarray
    s_t_squared: Optional[float]
    certified: bool
    is_pure_rotation: bool
    eigenvalues: np.ndarray
    solver_gap: float
    solver_status: str = sdp.SolverStatus.OPTIMAL.value
    s_r_squared: Optional[float] = None
    variant: str = Variant.C2P.value
    certificate: Optional[CertificateReport] = None
    timings: dict = field(default_factory=dict)

    @property
    def rotation(self) -> np.ndarray:
        return self.pose.rotation

    @property
    def translation(self) -> np.ndarray:
        return self.pose.translation

    def to_json(self) -> dict:
        """JSON-ready dict; matrices are row-major lists of rows."""
        return {
            "variant": self.variant,
            "E": self.essential.tolist(),
            "R": self.pose.rotation.tolist(),
            "t": self.pose.translation.tolist(),
            "q": np.asarray(self.q).tolist(),
            "s_t2": self.s_t_squared,
            "certified": bool(self.certified),
            "is_pure_rot": bool(self.is_pure_rotation),
            "gap": float(self.solver_gap),
            "status": self.solver_status,
            "eigenvalues": [float(v) for v in self.eigenvalues],
        }


def recover_pose(X: np.ndarray):
    """``(E, t, q, s_t2, used_pure_rotation_path)`` from a C2P solution."""
    e, t, q, _ = extract_dominant(X[:16, :16])
    s_t2 = read_slack_squared(X, "s_t")
    pure_path = s_t2 < PURE_ROTATION_GATE
    if pure_path:
        e, t, q = pure_rotation_path(X, np.concatenate([e, t, q]))
    E, t, q = rescale_estimates(e, t, q)
    return E, t, q, s_t2, pure_path


def eigenvector_poses(X: np.ndarray, rank_tol: float = DEFAULT_RANK_TOL) -> List[Tuple[float, Optional[RelativePose]]]:
    """Pose carried by every significant eigenvector of the 16x16 block.

    Returns ``(eigenvalue, pose)`` pairs in descending eigenvalue order; the
    pose is ``None`` where the eigenvector does not hold a usable
    ``(E, t, q)``.
    """
    w, V = sym_eig_desc(np.asarray(X, dtype=float)[:16, :16])
    out = []
    for k in range(len(w)):
        if w[k] <= rank_tol * w[0]:
            break
        v = V[:, k] if V[_H, k] >= 0 else -V[:, k]
        try:
            E, t, q = rescale_estimates(v[_E], v[_T], v[_Q])
            pose = RelativePose(recover_rotation(E, t, q), t)
        except DegenerateInput:
            pose = None
        out.append((float(w[k]), pose))
    return out


def solve_c2p(
    pairs,
    variant=Variant.C2P,
    eps_t: float = DEFAULT_EPS_T,
    config: Optional[sdp.SolverConfig] = None,
    rank_tol: float = DEFAULT_RANK_TOL,
    refine: bool = True,
) -> PoseEstimate:
    """Estimate the relative pose in one certifiable step.

    Builds the QCQP, solves its SDP relaxation, reads the pose out of the
    dominant eigenvector and certifies tightness from the ranks of ``X``.
    With ``refine`` the read-out is polished locally on the essential
    manifold (see :mod:`c2p.refine`); the certificate always refers to ``X``.
    """
    variant = Variant(variant)
    if variant not in (Variant.C2P, Variant.C2P_FAST):
        raise ValueError(f"{variant.value} is a two-step variant")
    if not eps_t > 0:
        raise ValueError("eps_t must be positive")

    tic = time.perf_counter()
    problem = build_qcqp(pairs, variant)
    t_build = time.perf_counter()
    sol = sdp.solve(sdp.SdpProblem.from_qcqp(problem), config)
    t_solve = time.perf_counter()

    X = sol.X
    E, t, q, s_t2, _ = recover_pose(X)
    R = recover_rotation(E, t, q)
    if refine:
        R, t = refine_pose(problem.cost[_E, _E], R, t)
        E, q = skew(t) @ R, R.T @ t
    report = certify(X, rank_tol)
    w, _ = sym_eig_desc(X[:16, :16])
    t_rec = time.perf_counter()

    return PoseEstimate(
        essential=E,
        pose=RelativePose(R, t),
        q=q,
        s_t_squared=s_t2,
        certified=report.passed,
        is_pure_rotation=s_t2 < eps_t,
        eigenvalues=w[:REPORTED_EIGENVALUES],
        solver_gap=sol.relative_gap,
        solver_status=sol.status.value,
        s_r_squared=read_slack_squared(X, "s_r"),
        variant=variant.value,
        certificate=report,
        timings={
            "build_ms": 1e3 * (t_build - tic),
            "solve_ms": 1e3 * (t_solve - t_build),
            "recovery_ms": 1e3 * (t_rec - t_solve),
        },
    )


def consistency_residuals(est: PoseEstimate) -> Tuple[float, float, float]:
    """``(||E - skew(t) R||, ||q - R't||, ||Adj(E) - q t'||)``."""
    R, t, E, q = est.pose.rotation, est.pose.translation, est.essential, est.q
    return (
        float(np.linalg.norm(E - skew(t) @ R)),
        float(np.linalg.norm(q - R.T @ t)),
        float(np.linalg.norm(adjugate(E) - np.outer(q, t))),
    )
