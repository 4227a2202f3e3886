"""Top-k sparsification of the dual Hessian and its symmetric CSC storage.

Index layout of the ``(n+m-1)``-square matrix: rows/columns ``0..n-1`` belong
to ``alpha`` and ``n..n+m-2`` to ``beta[:-1]``.  A coordinate ``(i, j)`` of
the sparsification scheme couples ``alpha[i]`` with ``beta[j]``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp

from .cholesky import pattern_digest
from .dual import EXP_CLAMP, GradientResult, fused_gradient, split

__all__ = [
    "SparsityPattern",
    "SparseSym",
    "topk_budget",
    "select_topk",
    "assemble",
    "update_values",
]


@dataclass(frozen=True, eq=False)
class SparsityPattern:
    """Retained coordinates of ``T[:, :-1]``, lexicographically sorted, 0-based.

    Always contains the first row and first column (the minimal set).
    """

    n: int
    m: int
    rows: np.ndarray
    cols: np.ndarray
    k_requested: int

    def __len__(self):
        return self.rows.size

    @property
    def coords(self) -> np.ndarray:
        return np.column_stack([self.rows, self.cols])

    def mask(self) -> np.ndarray:
        out = np.zeros((self.n, self.m - 1), dtype=bool)
        out[self.rows, self.cols] = True
        return out

    def same_as(self, other: "SparsityPattern") -> bool:
        return (
            (self.n, self.m) == (other.n, other.m)
            and np.array_equal(self.rows, other.rows)
            and np.array_equal(self.cols, other.cols)
        )


def topk_budget(density: float, n: int, m: int) -> int:
    return int(math.ceil(density * n * (m - 1)))


def select_topk(T, k: int) -> SparsityPattern:
    """Keep the ``k`` largest entries of ``T[:, :-1]`` plus the minimal set.

    Ties at the selection threshold go to the lexicographically smaller
    ``(i, j)``, so the result is fully determined by ``T`` and ``k``.
    """
    if k < 0:
        raise ValueError("k must be non-negative")
    T = np.asarray(T)
    n, m = T.shape
    sub = T[:, :-1]
    flat = sub.ravel()
    mask = np.zeros(flat.size, dtype=bool)
    if k >= flat.size:
        mask[:] = True
    elif k > 0:
        part = np.argpartition(-flat, k - 1)[:k]
        cut = flat[part].min()
        above = np.flatnonzero(flat > cut)
        ties = np.flatnonzero(flat == cut)
        mask[above] = True
        mask[ties[: k - above.size]] = True
    mask = mask.reshape(n, m - 1)
    mask[0, :] = True
    mask[:, 0] = True
    rows, cols = np.nonzero(mask)
    return SparsityPattern(n, m, rows.astype(np.int64), cols.astype(np.int64), int(k))


class _SymLayout:
    """Frozen CSC structure for a given scheme; shared by every value update."""

    def __init__(self, omega: SparsityPattern):
        n, m = omega.n, omega.m
        dim = n + m - 1
        diag = np.arange(dim)
        bcol = n + omega.cols
        rows = np.concatenate([diag, omega.rows, bcol])
        cols = np.concatenate([diag, bcol, omega.rows])
        order = np.lexsort((rows, cols))
        where = np.empty_like(order)
        where[order] = np.arange(order.size)
        k = omega.rows.size
        self.n, self.m, self.dim = n, m, dim
        self.omega = omega
        self.indices = rows[order].astype(np.int64)
        self.indptr = np.concatenate([[0], np.cumsum(np.bincount(cols, minlength=dim))]).astype(np.int64)
        self.diag_pos = where[:dim]
        self.upper_pos = where[dim : dim + k]
        self.lower_pos = where[dim + k :]
        for arr in (self.indices, self.indptr, self.diag_pos, self.upper_pos, self.lower_pos):
            arr.setflags(write=False)
        self.pattern_id = pattern_digest(self.indptr, self.indices)


@dataclass(frozen=True, eq=False)
class SparseSym:
    """Symmetric matrix ``H_Omega + tau I`` stored with both triangles in CSC."""

    layout: _SymLayout
    data: np.ndarray
    tau: float

    @property
    def dim(self) -> int:
        return self.layout.dim

    @property
    def indptr(self) -> np.ndarray:
        return self.layout.indptr

    @property
    def indices(self) -> np.ndarray:
        return self.layout.indices

    @property
    def pattern_id(self) -> str:
        return self.layout.pattern_id

    @property
    def omega(self) -> SparsityPattern:
        return self.layout.omega

    @property
    def nnz(self) -> int:
        return self.data.size

    def diagonal(self) -> np.ndarray:
        return self.data[self.layout.diag_pos]

    def to_scipy(self) -> sp.csc_matrix:
        return sp.csc_matrix((self.data, self.indices, self.indptr), shape=(self.dim, self.dim))

    def to_dense(self) -> np.ndarray:
        return self.to_scipy().toarray()

    def matvec(self, v) -> np.ndarray:
        return self.to_scipy() @ v

    def lower_triangle(self):
        """``(indptr, indices, data)`` of the lower triangle, diagonal included."""
        low = sp.tril(self.to_scipy(), format="csc")
        low.sort_indices()
        return low.indptr, low.indices, low.data


def _values(layout: _SymLayout, x, p, tau, grad: GradientResult | None):
    if grad is None:
        grad = fused_gradient(x, p)
    alpha, beta = split(x, p)
    om = layout.omega
    z = (alpha[om.rows] + beta[om.cols] - p.M[om.rows, om.cols]) / p.eta
    off = np.exp(np.clip(z, -EXP_CLAMP, EXP_CLAMP)) / p.eta
    data = np.empty(layout.indices.size)
    data[layout.diag_pos] = np.concatenate([grad.row_sums, grad.col_sums[:-1]]) / p.eta + tau
    data[layout.upper_pos] = off
    data[layout.lower_pos] = off
    return data


def assemble(x, p, omega: SparsityPattern, tau: float, grad: GradientResult | None = None) -> SparseSym:
    """Build ``H_Omega + tau I``.

    Diagonal blocks use the full row and column sums of ``T``; off-diagonal
    entries are ``T[i, j] / eta`` on ``omega`` only.  ``grad`` may be passed to
    reuse marginals already computed at ``x``.
    """
    if tau < 0:
        raise ValueError("tau must be non-negative")
    if (omega.n, omega.m) != (p.n, p.m):
        raise ValueError("sparsity pattern does not match the problem size")
    layout = _SymLayout(omega)
    return SparseSym(layout, _values(layout, x, p, tau, grad), float(tau))


def update_values(A: SparseSym, x, p, tau: float, grad: GradientResult | None = None) -> SparseSym:
    """Refresh every stored value of ``A`` at a new point; the structure is reused as is."""
    if tau < 0:
        raise ValueError("tau must be non-negative")
    return SparseSym(A.layout, _values(A.layout, x, p, tau, grad), float(tau))
