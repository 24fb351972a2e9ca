"""Two-step baselines: essential matrix first, then four-pose disambiguation.

For a correspondence ``(f0, f1)`` under pose ``(R, t)`` write ``g = R f1``,
``c = f0 . g`` and ``s^2 = 1 - c^2``. The closest points of the two rays
``lambda0 f0`` and ``t + lambda1 g`` satisfy::

    s^2 lambda0 = (g x f0) . (g x t)  = f0.t - c g.t
    s^2 lambda1 = (g x f0) . (f0 x t) = c f0.t - g.t

so the depth signs follow from two triple products without forming the point.
"""

from __future__ import annotations

import enum
import time
from dataclasses import dataclass
from typing import Optional, Tuple

import numpy as np

from c2p import sdp
from c2p.errors import AllAbstained, NotRankTwo, ParallelRays
from c2p.geometry import (
    ESSENTIAL_TOL,
    BearingPair,
    RelativePose,
    as_correspondences,
    skew,
)
from c2p.problem import Variant, build_qcqp
from c2p.recovery import (
    DEFAULT_RANK_TOL,
    REPORTED_EIGENVALUES,
    PoseEstimate,
    sym_eig_desc,
    certify_baseline,
    rescale_estimates,
)
from c2p.refine import refine_pose

PARALLEL_TOL = 1e-12
_W = np.array([[0.0, -1.0, 0.0], [1.0, 0.0, 0.0], [0.0, 0.0, 1.0]])


class Method(str, enum.Enum):
    TRIANGULATION = "T"
    MIDPOINT = "M"


@dataclass(frozen=True)
class FourPoseCandidates:
    """``(R_a, u), (R_a, -u), (R_b, u), (R_b, -u)`` in that order."""

    poses: Tuple[RelativePose, RelativePose, RelativePose, RelativePose]

    def __post_init__(self):
        if len(self.poses) != 4:
            raise ValueError("exactly four candidate poses are required")

    def __iter__(self):
        return iter(self.poses)

    def __getitem__(self, i) -> RelativePose:
        return self.poses[i]

    def __len__(self) -> int:
        return 4


@dataclass(frozen=True)
class CheiralityVote:
    counts: Tuple[int, int, int, int]
    winner: int
    margin: int
    tie: bool
    abstentions: int


def decompose_essential(E) -> FourPoseCandidates:
    """The four poses sharing the epipolar geometry of ``E``.

    Raises:
        NotRankTwo: if ``E`` is not numerically rank two.
    """
    E = np.asarray(E, dtype=float)
    U, s, Vt = np.linalg.svd(E)
    if s[0] <= 0 or s[1] < 1e-9 * s[0] or s[2] > ESSENTIAL_TOL * s[0]:
        raise NotRankTwo(f"singular values {s} are not of rank two")
    if np.linalg.det(U) < 0:
        U = -U
    if np.linalg.det(Vt) < 0:
        Vt = -Vt
    Ra = U @ _W @ Vt
    Rb = U @ _W.T @ Vt
    u = U[:, 2]
    return FourPoseCandidates(
        (RelativePose(Ra, u), RelativePose(Ra, -u), RelativePose(Rb, u), RelativePose(Rb, -u))
    )


def midpoint_signs(pose: RelativePose, pair: BearingPair) -> Tuple[bool, bool]:
    """Whether the correspondence lies in front of camera 0 and camera 1.

    Raises:
        ParallelRays: if the rays are (anti)parallel, ``s^2 < 1e-12``.
    """
    g = pose.rotation @ pair.f1
    c = float(pair.f0 @ g)
    if 1.0 - c * c < PARALLEL_TOL:
        raise ParallelRays("rays are parallel; depth is undefined")
    n = np.cross(g, pair.f0)
    t = pose.translation
    return bool(n @ np.cross(g, t) > 0), bool(n @ np.cross(pair.f0, t) > 0)


def midpoint_signs_batch(pose: RelativePose, pairs):
    """Vectorized :func:`midpoint_signs`.

    Returns ``(front0, front1, valid)`` boolean arrays; invalid rows are
    parallel rays and have both flags false.
    """
    corr = as_correspondences(pairs)
    g = corr.f1 @ pose.rotation.T
    c = np.einsum("ij,ij->i", corr.f0, g)
    valid = 1.0 - c * c >= PARALLEL_TOL
    n = np.cross(g, corr.f0)
    t = pose.translation
    front0 = (np.einsum("ij,ij->i", n, np.cross(g, t)) > 0) & valid
    front1 = (np.einsum("ij,ij->i", n, np.cross(corr.f0, t)) > 0) & valid
    return front0, front1, valid


def triangulate_midpoint(pose: RelativePose, pair: BearingPair):
    """Depths ``(lambda0, lambda1)`` and the midpoint in the frame of camera 0.

    Raises:
        ParallelRays: if the rays are (anti)parallel.
    """
    g = pose.rotation @ pair.f1
    t = pose.translation
    c = float(pair.f0 @ g)
    if 1.0 - c * c < PARALLEL_TOL:
        raise ParallelRays("rays are parallel; depth is undefined")
    # normal equations of min || l0 f0 - l1 g - t ||
    A = np.array([[1.0, -c], [-c, 1.0]])
    rhs = np.array([pair.f0 @ t, -(g @ t)])
    lam0, lam1 = np.linalg.solve(A, rhs)
    point = 0.5 * (lam0 * pair.f0 + lam1 * g + t)
    return float(lam0), float(lam1), point


def triangulation_check(pose: RelativePose, pair: BearingPair) -> Tuple[bool, bool]:
    """Triangulate the midpoint, then test the sign of both depths."""
    lam0, lam1, _ = triangulate_midpoint(pose, pair)
    return lam0 > 0, lam1 > 0


def triangulation_check_batch(pose: RelativePose, pairs):
    """Per-correspondence :func:`triangulation_check`, same output as :func:`midpoint_signs_batch`."""
    corr = as_correspondences(pairs)
    n = len(corr)
    front0 = np.zeros(n, dtype=bool)
    front1 = np.zeros(n, dtype=bool)
    valid = np.ones(n, dtype=bool)
    for i, pair in enumerate(corr):
        try:
            front0[i], front1[i] = triangulation_check(pose, pair)
        except ParallelRays:
            valid[i] = False
    return front0, front1, valid


def disambiguate(candidates: FourPoseCandidates, pairs, method=Method.MIDPOINT):
    """Pick the candidate with the most correspondences in front of both cameras.

    Ties go to the lowest index and are flagged; parallel rays abstain.

    Raises:
        AllAbstained: if no correspondence carries depth information.
    """
    method = Method(method)
    check = triangulation_check_batch if method is Method.TRIANGULATION else midpoint_signs_batch
    corr = as_correspondences(pairs)
    counts = []
    abstentions = 0
    for pose in candidates:
        front0, front1, valid = check(pose, corr)
        counts.append(int(np.sum(front0 & front1)))
        abstentions = int(np.sum(~valid))
    if abstentions == len(corr):
        raise AllAbstained("every correspondence has parallel rays")
    order = sorted(range(4), key=lambda k: (-counts[k], k))
    winner = order[0]
    margin = counts[winner] - counts[order[1]]
    vote = CheiralityVote(tuple(counts), winner, margin, margin == 0, abstentions)
    return candidates[winner], vote


def solve_two_step(
    pairs,
    variant=Variant.QCQP_Z,
    method=Method.MIDPOINT,
    config: Optional[sdp.SolverConfig] = None,
    rank_tol: float = DEFAULT_RANK_TOL,
    refine: bool = True,
) -> PoseEstimate:
    """Essential matrix from the baseline relaxation, then disambiguation."""
    variant = Variant(variant)
    if variant not in (Variant.QCQP_Z, Variant.QCQP_Z_REDUNDANT):
        raise ValueError(f"{variant.value} is not a two-step variant")
    method = Method(method)
    corr = as_correspondences(pairs)

    tic = time.perf_counter()
    problem = build_qcqp(corr, variant)
    t_build = time.perf_counter()
    sol = sdp.solve(sdp.SdpProblem.from_qcqp(problem), config)
    t_solve = time.perf_counter()

    X = sol.X
    w_e, V_e = sym_eig_desc(X[:9, :9])
    w_t, V_t = sym_eig_desc(X[9:12, 9:12])
    E, _, _ = rescale_estimates(V_e[:, 0], V_t[:, 0], V_t[:, 0])
    if refine:
        seed = decompose_essential(E)[0]
        R, t = refine_pose(problem.cost[:9, :9], seed.rotation, seed.translation)
        E = skew(t) @ R
    candidates = decompose_essential(E)
    report = certify_baseline(X, rank_tol)
    w, _ = sym_eig_desc(X[:12, :12])
    t_rec = time.perf_counter()

    pose, _ = disambiguate(candidates, corr, method)
    t_dis = time.perf_counter()

    return PoseEstimate(
        essential=skew(pose.translation) @ pose.rotation,
        pose=pose,
        q=pose.rotation.T @ pose.translation,
        s_t_squared=None,
        certified=report.passed,
        is_pure_rotation=False,
        eigenvalues=w[:REPORTED_EIGENVALUES],
        solver_gap=sol.relative_gap,
        solver_status=sol.status.value,
        variant=f"two-step-{'z' if variant is Variant.QCQP_Z else 'z-redundant'}",
        certificate=report,
        timings={
            "build_ms": 1e3 * (t_build - tic),
            "solve_ms": 1e3 * (t_solve - t_build),
            "recovery_ms": 1e3 * (t_rec - t_solve),
            "disambiguation_ms": 1e3 * (t_dis - t_rec),
        },
    )
