"""Assembly of the relative-pose QCQPs in standard lifted form.

Every problem is written as ``min x' C0 x  s.t.  x' A_i x = b_i`` over a
parameter vector ``x`` whose layout is described by :class:`ParamLayout`.
Constraint matrices are kept as upper-triangular triplets; a bilinear term
``c * x[a] * x[b]`` contributes ``c / 2`` to both ``(a, b)`` and ``(b, a)``
of the full symmetric matrix.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass
from typing import Dict, List, Tuple

import numpy as np

from c2p.errors import EmptyInput, TooFewCorrespondences
from c2p.geometry import Correspondences, as_correspondences, skew

MIN_CORRESPONDENCES = 6


class Variant(str, enum.Enum):
    C2P = "c2p"
    C2P_FAST = "c2p-fast"
    QCQP_Z = "qcqp-z"
    QCQP_Z_REDUNDANT = "qcqp-z-redundant"


EXPECTED_CONSTRAINTS = {
    Variant.C2P_FAST: 15,
    Variant.C2P: 27,
    Variant.QCQP_Z: 7,
    Variant.QCQP_Z_REDUNDANT: 13,
}


@dataclass(frozen=True)
class ParamLayout:
    """Named index ranges into the lifted parameter vector."""

    ranges: Dict[str, Tuple[int, int]]

    @property
    def dim(self) -> int:
        return max(stop for _, stop in self.ranges.values())

    def __getitem__(self, name: str) -> slice:
        start, stop = self.ranges[name]
        return slice(start, stop)

    def index(self, name: str, k: int = 0) -> int:
        start, stop = self.ranges[name]
        if not 0 <= k < stop - start:
            raise IndexError(f"{name}[{k}] out of range")
        return start + k

    def __contains__(self, name: str) -> bool:
        return name in self.ranges

    def pack(self, **values) -> np.ndarray:
        """Build a lifted vector from named blocks; missing blocks are zero."""
        x = np.zeros(self.dim)
        for name, v in values.items():
            x[self[name]] = np.asarray(v, dtype=float).reshape(-1)
        return x


C2P_LAYOUT = ParamLayout(
    {"e": (0, 9), "t": (9, 12), "q": (12, 15), "h": (15, 16), "s_r": (16, 17), "s_t": (17, 18)}
)
QCQP_Z_LAYOUT = ParamLayout({"e": (0, 9), "t": (9, 12)})
QCQP_ZR_LAYOUT = ParamLayout({"e": (0, 9), "t": (9, 12), "q": (12, 15)})


class SymmetricQuadratic:
    """Sparse symmetric matrix defining the quadratic form ``x' A x``.

    Stored as upper-triangular ``(rows, cols, vals)`` triplets.
    """

    __slots__ = ("dim", "rows", "cols", "vals")

    def __init__(self, dim: int, rows, cols, vals):
        self.dim = dim
        self.rows = np.asarray(rows, dtype=int)
        self.cols = np.asarray(cols, dtype=int)
        self.vals = np.asarray(vals, dtype=float)

    @classmethod
    def from_terms(cls, dim: int, terms) -> "SymmetricQuadratic":
        """Build from ``(a, b, coeff)`` monomials ``coeff * x[a] * x[b]``."""
        acc: Dict[Tuple[int, int], float] = {}
        for a, b, c in terms:
            if a == b:
                key, val = (a, a), c
            else:
                key, val = (min(a, b), max(a, b)), c / 2.0
            acc[key] = acc.get(key, 0.0) + val
        items = [(k, v) for k, v in sorted(acc.items()) if v != 0.0]
        if not items:
            return cls(dim, [], [], [])
        keys, vals = zip(*items)
        rows, cols = zip(*keys)
        return cls(dim, rows, cols, vals)

    @classmethod
    def from_dense(cls, A, tol: float = 0.0) -> "SymmetricQuadratic":
        A = np.asarray(A, dtype=float)
        rows, cols = np.triu_indices(A.shape[0])
        vals = A[rows, cols]
        keep = np.abs(vals) > tol
        return cls(A.shape[0], rows[keep], cols[keep], vals[keep])

    @property
    def nnz(self) -> int:
        return len(self.vals)

    def to_dense(self) -> np.ndarray:
        A = np.zeros((self.dim, self.dim))
        A[self.rows, self.cols] = self.vals
        A[self.cols, self.rows] = self.vals
        return A

    def evaluate(self, x) -> float:
        """Quadratic form ``x' A x``."""
        x = np.asarray(x, dtype=float)
        w = np.where(self.rows == self.cols, 1.0, 2.0)
        return float(np.sum(w * self.vals * x[self.rows] * x[self.cols]))

    def inner(self, X) -> float:
        """Frobenius inner product ``trace(A X)`` with a symmetric matrix ``X``."""
        X = np.asarray(X, dtype=float)
        w = np.where(self.rows == self.cols, 1.0, 2.0)
        return float(np.sum(w * self.vals * X[self.rows, self.cols]))

    def __repr__(self) -> str:
        return f"SymmetricQuadratic(dim={self.dim}, nnz={self.nnz})"


Constraint = Tuple[SymmetricQuadratic, float]


@dataclass(frozen=True)
class AveragedCoefficients:
    """Data coefficients of the cheirality constraints, averaged over correspondences.

    Attributes:
        rot9: ``vec(mean(f1 f0'))``, entry ``3a + b`` is ``mean(f1[a] * f0[b])``.
        t3: ``mean(f0)``, coefficients of ``h * t``.
        q3: ``-mean(f1)``, coefficients of ``h * q``.
    """

    rot9: np.ndarray
    t3: np.ndarray
    q3: np.ndarray


@dataclass
class QcqpProblem:
    layout: ParamLayout
    cost: np.ndarray
    constraints: List[Constraint]
    variant: Variant
    names: List[str]

    @property
    def dim(self) -> int:
        return self.layout.dim

    @property
    def num_constraints(self) -> int:
        return len(self.constraints)

    def objective(self, x) -> float:
        x = np.asarray(x, dtype=float)
        return float(x @ self.cost @ x)

    def residuals(self, x) -> np.ndarray:
        """``x' A_i x - b_i`` for every constraint."""
        return np.array([A.evaluate(x) - b for A, b in self.constraints])


def build_cost(pairs) -> np.ndarray:
    """9x9 data matrix ``C = sum_i w_i k_i k_i'`` with ``k_i = kron(f0_i, f1_i)``.

    ``e' C e`` equals the weighted sum of squared epipolar residuals for
    ``e = E.reshape(9)``.
    """
    corr = as_correspondences(pairs)
    K = (corr.f0[:, :, None] * corr.f1[:, None, :]).reshape(-1, 9)
    C = (K * corr.weights[:, None]).T @ K
    return 0.5 * (C + C.T)


def average_coefficients(pairs) -> AveragedCoefficients:
    corr = as_correspondences(pairs)
    n = len(corr)
    rot = corr.f1.T @ corr.f0 / n
    return AveragedCoefficients(
        rot9=rot.reshape(9), t3=corr.f0.mean(axis=0), q3=-corr.f1.mean(axis=0)
    )


def _adjugate_terms(layout: ParamLayout, i: int, j: int):
    """Monomials of ``Adj(E)[i, j]`` in terms of ``e``."""
    e = lambda r, c: layout.index("e", 3 * r + c)  # noqa: E731
    i1, i2 = (i + 1) % 3, (i + 2) % 3
    j1, j2 = (j + 1) % 3, (j + 2) % 3
    return [(e(j1, i1), e(j2, i2), 1.0), (e(j1, i2), e(j2, i1), -1.0)]


def _norm_constraint(layout: ParamLayout, name: str, value: float) -> Constraint:
    d = layout.dim
    terms = [(layout.index(name, k), layout.index(name, k), 1.0) for k in range(3)]
    return SymmetricQuadratic.from_terms(d, terms), value


def _gram_constraints(layout: ParamLayout, vec: str, transpose: bool) -> List[Constraint]:
    """Upper triangle of ``E E' = skew(v) skew(v)'`` (or ``E' E`` when ``transpose``).

    Since ``skew(v) skew(v)' = (v'v) I - v v'`` and ``v'v = 1`` on the feasible
    set, the identity part goes to the right-hand side:
    ``(E E')_ij + v_i v_j = delta_ij``.
    """
    d = layout.dim
    e = lambda r, c: layout.index("e", 3 * r + c)  # noqa: E731
    out = []
    for i in range(3):
        for j in range(i, 3):
            if transpose:
                terms = [(e(k, i), e(k, j), 1.0) for k in range(3)]
            else:
                terms = [(e(i, k), e(j, k), 1.0) for k in range(3)]
            terms.append((layout.index(vec, i), layout.index(vec, j), 1.0))
            out.append((SymmetricQuadratic.from_terms(d, terms), 1.0 if i == j else 0.0))
    return out


def build_manifold_constraints(layout: ParamLayout = C2P_LAYOUT) -> List[Constraint]:
    """``trace(E E') = 2``, ``Adj(E) = q t'`` (9 entries), ``t't = 1``, ``q'q = 1``."""
    d = layout.dim
    trace = SymmetricQuadratic.from_terms(
        d, [(layout.index("e", k), layout.index("e", k), 1.0) for k in range(9)]
    )
    out: List[Constraint] = [(trace, 2.0)]
    for i in range(3):
        for j in range(3):
            terms = _adjugate_terms(layout, i, j)
            terms.append((layout.index("q", i), layout.index("t", j), -1.0))
            out.append((SymmetricQuadratic.from_terms(d, terms), 0.0))
    out.append(_norm_constraint(layout, "t", 1.0))
    out.append(_norm_constraint(layout, "q", 1.0))
    return out


def cheirality_rotation_matrix(avg: AveragedCoefficients) -> np.ndarray:
    """9x3 matrix ``B`` such that the averaged ``f1' E' skew(t) f0`` equals ``e' B t``."""
    M = avg.rot9.reshape(3, 3)  # M[j, l] = mean(f1[j] * f0[l])
    # f1' E' skew(t) f0 = sum_ijk E[i,j] f1[j] (-skew(f0))[i,k] t[k]
    S = np.stack([skew(np.eye(3)[l]) for l in range(3)])  # S[l] = skew(unit_l)
    B = -np.einsum("jl,lik->ijk", M, S)
    return B.reshape(9, 3)


def build_cheirality_constraints(
    layout: ParamLayout, avg: AveragedCoefficients
) -> List[Constraint]:
    """Rotation and translation disambiguation plus homogenization ``h^2 = 1``."""
    d = layout.dim
    B = cheirality_rotation_matrix(avg)
    terms = [
        (layout.index("e", a), layout.index("t", k), B[a, k])
        for a in range(9)
        for k in range(3)
        if B[a, k] != 0.0
    ]
    s_r = layout.index("s_r")
    terms.append((s_r, s_r, -1.0))
    rotation = SymmetricQuadratic.from_terms(d, terms)

    h, s_t = layout.index("h"), layout.index("s_t")
    terms = [(h, layout.index("t", k), avg.t3[k]) for k in range(3)]
    terms += [(h, layout.index("q", k), avg.q3[k]) for k in range(3)]
    terms.append((s_t, s_t, -1.0))
    translation = SymmetricQuadratic.from_terms(d, terms)

    homogenization = SymmetricQuadratic.from_terms(d, [(h, h, 1.0)])
    return [(rotation, 0.0), (translation, 0.0), (homogenization, 1.0)]


def build_redundant_constraints(layout: ParamLayout = C2P_LAYOUT) -> List[Constraint]:
    """``E E' = skew(t) skew(t)'`` and ``E' E = skew(q) skew(q)'``, 6 entries each."""
    return _gram_constraints(layout, "t", transpose=False) + _gram_constraints(
        layout, "q", transpose=True
    )


def _names(variant: Variant) -> List[str]:
    upper = [f"{i}{j}" for i in range(3) for j in range(i, 3)]
    manifold = ["trace"] + [f"adj{i}{j}" for i in range(3) for j in range(3)] + ["norm_t", "norm_q"]
    cheir = ["cheir_rot", "cheir_trans", "homog"]
    left = [f"gram_left{k}" for k in upper]
    right = [f"gram_right{k}" for k in upper]
    return {
        Variant.C2P_FAST: manifold + cheir,
        Variant.C2P: manifold + cheir + left + right,
        Variant.QCQP_Z: left + ["norm_t"],
        Variant.QCQP_Z_REDUNDANT: left + ["norm_t"] + right,
    }[variant]


def layout_for(variant: Variant) -> ParamLayout:
    return {
        Variant.C2P: C2P_LAYOUT,
        Variant.C2P_FAST: C2P_LAYOUT,
        Variant.QCQP_Z: QCQP_Z_LAYOUT,
        Variant.QCQP_Z_REDUNDANT: QCQP_ZR_LAYOUT,
    }[Variant(variant)]


def build_qcqp(pairs, variant=Variant.C2P) -> QcqpProblem:
    """Assemble the QCQP of the requested variant.

    Raises:
        EmptyInput: no correspondences.
        TooFewCorrespondences: fewer than 6 correspondences.
    """
    variant = Variant(variant)
    corr = as_correspondences(pairs)
    if len(corr) < MIN_CORRESPONDENCES:
        raise TooFewCorrespondences(
            f"need at least {MIN_CORRESPONDENCES} correspondences, got {len(corr)}"
        )
    layout = layout_for(variant)
    C0 = np.zeros((layout.dim, layout.dim))
    C0[layout["e"], layout["e"]] = build_cost(corr)

    if variant in (Variant.C2P, Variant.C2P_FAST):
        cons = build_manifold_constraints(layout)
        cons += build_cheirality_constraints(layout, average_coefficients(corr))
        if variant is Variant.C2P:
            cons += build_redundant_constraints(layout)
    else:
        cons = _gram_constraints(layout, "t", transpose=False)
        cons.append(_norm_constraint(layout, "t", 1.0))
        if variant is Variant.QCQP_Z_REDUNDANT:
            cons += _gram_constraints(layout, "q", transpose=True)

    return QcqpProblem(layout, C0, cons, variant, _names(variant))


def lift_ground_truth(layout: ParamLayout, E, t, q, avg: AveragedCoefficients | None = None):
    """Lifted vector of a known ``(E, t, q)``; slacks are filled from ``avg`` when present."""
    E = np.asarray(E, dtype=float)
    values = {"e": E.reshape(9), "t": t}
    if "q" in layout:
        values["q"] = q
    if "h" in layout:
        values["h"] = 1.0
    if avg is not None and "s_r" in layout:
        s_r2 = float(E.reshape(9) @ cheirality_rotation_matrix(avg) @ np.asarray(t))
        s_t2 = float(avg.t3 @ t + avg.q3 @ q)
        values["s_r"] = np.sqrt(max(s_r2, 0.0))
        values["s_t"] = np.sqrt(max(s_t2, 0.0))
    return layout.pack(**values)
