"""Dense minimum-norm linear algebra primitives.

Projections onto row spaces, the pseudoinverse-based minimum-norm solver
(the oracle everything else is checked against), orthogonal-complement
projectors, and the projector onto an intersection of two subspaces.

All functions are pure and operate on immutable inputs; tolerances are the
module constants below.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .exceptions import DimensionMismatchError, InconsistentSystemError, RankDeficientError

# A matrix is treated as rank-deficient when smin/smax falls below this.
RANK_RTOL = 1e-10
# Ax = y is declared consistent when the relative residual is below this.
INTERP_RTOL = 1e-8
# Singular values below smax * PINV_RTOL are zeroed in pseudoinverses.
PINV_RTOL = 1e-12

_SYM_TOL = 1e-10
_IDEM_TOL = 1e-9
_EIG_TOL = 1e-8


def _as_matrix(a, name: str) -> np.ndarray:
    m = np.asarray(a, dtype=float)
    if m.ndim != 2 or m.size == 0:
        raise DimensionMismatchError(f"{name} must be a nonempty 2-D array, got shape {m.shape}")
    if not np.all(np.isfinite(m)):
        raise ValueError(f"{name} contains non-finite entries")
    return m


def _as_vector(a, name: str) -> np.ndarray:
    v = np.asarray(a, dtype=float)
    if v.ndim != 1:
        raise DimensionMismatchError(f"{name} must be a 1-D array, got shape {v.shape}")
    if not np.all(np.isfinite(v)):
        raise ValueError(f"{name} contains non-finite entries")
    return v


@dataclass(frozen=True)
class DesignMatrix:
    """An n x d matrix of observed core-feature rows (n points, d features)."""

    entries: np.ndarray
    full_row_rank: bool = field(init=False)

    def __post_init__(self):
        m = _as_matrix(self.entries, "design matrix")
        m = m.copy()
        m.setflags(write=False)
        object.__setattr__(self, "entries", m)
        smax, smin = _extreme_singular_values(m)
        full = m.shape[0] <= m.shape[1] and smax > 0 and smin / smax >= RANK_RTOL
        object.__setattr__(self, "full_row_rank", bool(full))

    @property
    def rows(self) -> int:
        return self.entries.shape[0]

    @property
    def cols(self) -> int:
        return self.entries.shape[1]


@dataclass(frozen=True)
class Projection:
    """A symmetric idempotent d x d matrix together with its rank."""

    matrix: np.ndarray
    rank: int

    def __post_init__(self):
        m = _as_matrix(self.matrix, "projection matrix")
        if m.shape[0] != m.shape[1]:
            raise DimensionMismatchError(f"projection matrix must be square, got {m.shape}")
        if np.max(np.abs(m - m.T)) >= _SYM_TOL:
            raise ValueError("projection matrix is not symmetric")
        if np.max(np.abs(m @ m - m)) >= _IDEM_TOL:
            raise ValueError("projection matrix is not idempotent")
        eig = np.linalg.eigvalsh(m)
        if np.max(np.minimum(np.abs(eig), np.abs(eig - 1.0))) >= _EIG_TOL:
            raise ValueError("projection eigenvalues are not in {0, 1}")
        if not 0 <= self.rank <= m.shape[0]:
            raise ValueError(f"projection rank {self.rank} out of range")
        m = m.copy()
        m.setflags(write=False)
        object.__setattr__(self, "matrix", m)

    @property
    def dim(self) -> int:
        return self.matrix.shape[0]


@dataclass(frozen=True)
class MinNormSolution:
    """Least-norm interpolant of a consistent linear system."""

    x: np.ndarray
    residual_norm: float
    solution_norm: float


def _extreme_singular_values(m: np.ndarray) -> tuple[float, float]:
    s = np.linalg.svd(m, compute_uv=False)
    return float(s[0]), float(s[-1])


def projection(Z: DesignMatrix) -> Projection:
    """Orthogonal projector onto the row space of a full-row-rank design.

    Computed as V V' from the thin SVD Z = U S V', which equals
    Z'(ZZ')^{-1}Z but is numerically stable.
    """
    if not Z.full_row_rank:
        raise RankDeficientError(
            f"design matrix ({Z.rows}x{Z.cols}) is rank-deficient or has more rows than columns"
        )
    _, _, vt = np.linalg.svd(Z.entries, full_matrices=False)
    p = vt.T @ vt
    return Projection(matrix=(p + p.T) / 2.0, rank=Z.rows)


def row_space_projection(M: np.ndarray, rtol: float = RANK_RTOL) -> Projection:
    """Projector onto the row space of an arbitrary (possibly rank-deficient) matrix.

    Unlike :func:`projection` this never raises on rank deficiency; singular
    values below smax * rtol are treated as zero.
    """
    m = _as_matrix(M, "matrix")
    _, s, vt = np.linalg.svd(m, full_matrices=False)
    if s.size == 0 or s[0] == 0.0:
        d = m.shape[1]
        return Projection(matrix=np.zeros((d, d)), rank=0)
    keep = s > s[0] * rtol
    v = vt[keep]
    p = v.T @ v
    return Projection(matrix=(p + p.T) / 2.0, rank=int(np.count_nonzero(keep)))


def min_norm_solve(A, y) -> MinNormSolution:
    """Unique least-l2-norm x with Ax = y, via the pseudoinverse.

    Raises InconsistentSystemError when y is not in the column space of A
    (relative residual above INTERP_RTOL).
    """
    a = _as_matrix(A, "system matrix")
    b = _as_vector(y, "right-hand side")
    if a.shape[0] != b.shape[0]:
        raise DimensionMismatchError(f"system has {a.shape[0]} rows but rhs has {b.shape[0]}")
    x, _, _, _ = np.linalg.lstsq(a, b, rcond=PINV_RTOL)
    residual = float(np.linalg.norm(a @ x - b))
    scale = float(np.linalg.norm(b))
    rel = residual / scale if scale > 0 else residual
    if rel > INTERP_RTOL:
        raise InconsistentSystemError(
            f"system Ax = y is inconsistent (relative residual {rel:.3e})"
        )
    return MinNormSolution(x=x, residual_norm=residual, solution_norm=float(np.linalg.norm(x)))


def null_projection(pi: Projection) -> Projection:
    """Projector onto the orthogonal complement: I - pi."""
    d = pi.dim
    return Projection(matrix=np.eye(d) - pi.matrix, rank=d - pi.rank)


def intersection_projection(pi1: Projection, pi2: Projection) -> Projection:
    """Projector onto range(pi1) intersected with range(pi2).

    Uses the parallel-sum identity 2 * pi1 (pi1 + pi2)^+ pi2; an empty
    intersection yields the zero matrix.
    """
    if pi1.dim != pi2.dim:
        raise DimensionMismatchError(f"projection dims differ: {pi1.dim} vs {pi2.dim}")
    pinv = np.linalg.pinv(pi1.matrix + pi2.matrix, rcond=PINV_RTOL)
    p = 2.0 * pi1.matrix @ pinv @ pi2.matrix
    p = (p + p.T) / 2.0
    return Projection(matrix=p, rank=int(round(float(np.trace(p)))))
