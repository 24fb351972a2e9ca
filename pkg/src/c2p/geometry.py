"""Small exact matrix operations for calibrated two-view geometry.

Conventions used throughout the package:

* A relative pose ``(R, t)`` maps points from frame 1 to frame 0,
  ``p0 = R @ p1 + t``, so a correspondence satisfies ``f0 @ E @ f1 = 0``
  with ``E = skew(t) @ R``.
* ``q = R.T @ t`` is the translation expressed in frame 1.
* An essential matrix is vectorized by stacking its rows,
  ``e = E.reshape(9)`` (equivalently ``vec(E.T)``).
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Iterator

import numpy as np

from c2p.errors import DegenerateInput, EmptyInput

MIN_NORM = 1e-9
ROTATION_TOL = 1e-9
ESSENTIAL_TOL = 1e-6
SINGULAR_TOL = 1e-12


def unit_vector(v, min_norm: float = MIN_NORM) -> np.ndarray:
    """Return ``v`` normalized to unit length.

    Raises:
        DegenerateInput: if ``v`` is not a 3-vector or its norm is below ``min_norm``.
    """
    v = np.asarray(v, dtype=float).reshape(-1)
    if v.shape != (3,):
        raise DegenerateInput(f"expected a 3-vector, got shape {v.shape}")
    norm = np.linalg.norm(v)
    if not np.isfinite(norm) or norm < min_norm:
        raise DegenerateInput(f"vector norm {norm:.3e} below {min_norm:.0e}")
    return v / norm


def skew(v) -> np.ndarray:
    """Cross-product matrix: ``skew(v) @ w == np.cross(v, w)``."""
    x, y, z = np.asarray(v, dtype=float).reshape(3)
    return np.array([[0.0, -z, y], [z, 0.0, -x], [-y, x, 0.0]])


def adjugate(M) -> np.ndarray:
    """Adjugate (transposed cofactor matrix) of a 3x3 matrix.

    Uses the cofactor formula, so it is well defined for singular input.
    """
    M = np.asarray(M, dtype=float)
    A = np.empty((3, 3))
    for i in range(3):
        i1, i2 = (i + 1) % 3, (i + 2) % 3
        for j in range(3):
            j1, j2 = (j + 1) % 3, (j + 2) % 3
            # Adj[i, j] is the (j, i) cofactor
            A[i, j] = M[j1, i1] * M[j2, i2] - M[j1, i2] * M[j2, i1]
    return A


def is_rotation(R, tol: float = ROTATION_TOL) -> bool:
    R = np.asarray(R, dtype=float)
    if R.shape != (3, 3):
        return False
    return bool(
        np.all(np.abs(R.T @ R - np.eye(3)) <= tol) and abs(np.linalg.det(R) - 1.0) <= tol
    )


def is_essential(E, tol: float = ESSENTIAL_TOL) -> bool:
    """Check membership of the normalized essential manifold via singular values."""
    E = np.asarray(E, dtype=float)
    if E.shape != (3, 3):
        return False
    s = np.linalg.svd(E, compute_uv=False)
    return bool(np.all(np.abs(s - [1.0, 1.0, 0.0]) <= tol))


def project_to_so3(M) -> np.ndarray:
    """Nearest rotation matrix in Frobenius norm.

    Raises:
        DegenerateInput: if the smallest singular value of ``M`` is below 1e-12.
    """
    M = np.asarray(M, dtype=float)
    U, s, Vt = np.linalg.svd(M)
    if s[-1] < SINGULAR_TOL:
        raise DegenerateInput(f"cannot project matrix with singular value {s[-1]:.3e} to SO(3)")
    D = np.diag([1.0, 1.0, np.sign(np.linalg.det(U @ Vt))])
    return U @ D @ Vt


@dataclass(frozen=True)
class RelativePose:
    """Rotation and unit translation with ``p0 = R @ p1 + t``."""

    rotation: np.ndarray
    translation: np.ndarray

    def __post_init__(self):
        R = np.array(self.rotation, dtype=float)
        if not is_rotation(R):
            raise DegenerateInput("rotation is not in SO(3)")
        t = unit_vector(self.translation)
        R.setflags(write=False)
        t.setflags(write=False)
        object.__setattr__(self, "rotation", R)
        object.__setattr__(self, "translation", t)

    @property
    def q(self) -> np.ndarray:
        """Translation expressed in frame 1."""
        return self.rotation.T @ self.translation


@dataclass(frozen=True)
class BearingPair:
    f0: np.ndarray
    f1: np.ndarray
    weight: float = 1.0

    def __post_init__(self):
        if not self.weight >= 0:
            raise DegenerateInput(f"weight must be nonnegative, got {self.weight}")
        f0, f1 = unit_vector(self.f0), unit_vector(self.f1)
        f0.setflags(write=False)
        f1.setflags(write=False)
        object.__setattr__(self, "f0", f0)
        object.__setattr__(self, "f1", f1)
        object.__setattr__(self, "weight", float(self.weight))


@dataclass(frozen=True)
class Correspondences:
    """A batch of bearing pairs stored as ``(n, 3)`` arrays.

    This is the bulk form of a list of :class:`BearingPair`; every function
    that takes "pairs" accepts either.
    """

    f0: np.ndarray
    f1: np.ndarray
    weights: np.ndarray = field(default=None)

    def __post_init__(self):
        f0 = np.array(self.f0, dtype=float).reshape(-1, 3)
        f1 = np.array(self.f1, dtype=float).reshape(-1, 3)
        if f0.shape != f1.shape:
            raise DegenerateInput("f0 and f1 must have the same number of rows")
        n0, n1 = np.linalg.norm(f0, axis=1), np.linalg.norm(f1, axis=1)
        if np.any(n0 < MIN_NORM) or np.any(n1 < MIN_NORM):
            raise DegenerateInput("zero-length bearing vector")
        f0 /= n0[:, None]
        f1 /= n1[:, None]
        if self.weights is None:
            w = np.ones(len(f0))
        else:
            w = np.array(self.weights, dtype=float).reshape(-1)
            if w.shape != (len(f0),):
                raise DegenerateInput("one weight per correspondence is required")
            if np.any(~(w >= 0)):
                raise DegenerateInput("weights must be nonnegative")
        for a in (f0, f1, w):
            a.setflags(write=False)
        object.__setattr__(self, "f0", f0)
        object.__setattr__(self, "f1", f1)
        object.__setattr__(self, "weights", w)

    def __len__(self) -> int:
        return len(self.f0)

    def __iter__(self) -> Iterator[BearingPair]:
        for a, b, w in zip(self.f0, self.f1, self.weights):
            yield BearingPair(a, b, w)

    def __getitem__(self, i) -> BearingPair:
        return BearingPair(self.f0[i], self.f1[i], self.weights[i])

    @classmethod
    def from_pairs(cls, pairs) -> "Correspondences":
        pairs = list(pairs)
        if not pairs:
            raise EmptyInput("no correspondences given")
        return cls(
            np.array([p.f0 for p in pairs]),
            np.array([p.f1 for p in pairs]),
            np.array([p.weight for p in pairs]),
        )


def as_correspondences(pairs) -> Correspondences:
    """Coerce a list of :class:`BearingPair` (or a batch) to :class:`Correspondences`."""
    if isinstance(pairs, Correspondences):
        if len(pairs) == 0:
            raise EmptyInput("no correspondences given")
        return pairs
    return Correspondences.from_pairs(pairs)


def essential_from_pose(pose: RelativePose) -> np.ndarray:
    return skew(pose.translation) @ pose.rotation


def epipolar_residual(E, pair: BearingPair) -> float:
    """Signed algebraic epipolar error ``f0 @ E @ f1``."""
    return float(pair.f0 @ np.asarray(E, dtype=float) @ pair.f1)


def epipolar_residuals(E, corr: Correspondences) -> np.ndarray:
    return np.einsum("ni,ij,nj->n", corr.f0, np.asarray(E, dtype=float), corr.f1)
