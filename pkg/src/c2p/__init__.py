"""Certifiable two-view relative pose with cheirality constraints.

Typical use::

    from c2p import solve_c2p, read_correspondences
    est = solve_c2p(read_correspondences("pairs.txt"))
    est.rotation, est.translation, est.certified
"""

from c2p.baselines import Method, decompose_essential, disambiguate, solve_two_step
from c2p.errors import C2PError
from c2p.geometry import BearingPair, Correspondences, RelativePose
from c2p.io import read_correspondences, write_correspondences
from c2p.problem import Variant, build_qcqp
from c2p.recovery import PoseEstimate, solve_c2p
from c2p.sdp import SolverConfig, SolverStatus

__all__ = [
    "BearingPair",
    "C2PError",
    "Correspondences",
    "Method",
    "PoseEstimate",
    "RelativePose",
    "SolverConfig",
    "SolverStatus",
    "Variant",
    "build_qcqp",
    "decompose_essential",
    "disambiguate",
    "read_correspondences",
    "solve_c2p",
    "solve_two_step",
    "write_correspondences",
]
