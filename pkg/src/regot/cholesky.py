"""Simplicial sparse Cholesky split into symbolic and numeric phases.

The symbolic phase depends only on the sparsity structure: it picks a
fill-reducing ordering, builds the elimination tree of the permuted matrix and
the exact pattern of its factor.  A SymbolicFactor can therefore be reused for
every matrix that shares the structure; only ``numeric_factorize`` and
``solve`` touch values.

Matrices are passed as objects exposing ``indptr``, ``indices``, ``data``,
``dim`` and ``pattern_id`` (full symmetric storage, CSC).  ``SparseSym`` from
:mod:`regot.sparsify` and :class:`SymmetricCSC` below both qualify.
"""

from __future__ import annotations

import hashlib
import heapq
from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp

from .exceptions import NotPositiveDefiniteError, StructureError

__all__ = [
    "SymmetricCSC",
    "SymbolicFactor",
    "NumericFactor",
    "pattern_digest",
    "minimum_degree_order",
    "elimination_tree",
    "symbolic_analyze",
    "numeric_factorize",
    "solve",
]

PIVOT_RTOL = 1e-13


def pattern_digest(indptr, indices) -> str:
    h = hashlib.blake2b(digest_size=12)
    h.update(np.int64(len(indptr) - 1).tobytes())
    h.update(np.ascontiguousarray(indptr, dtype=np.int64).tobytes())
    h.update(np.ascontiguousarray(indices, dtype=np.int64).tobytes())
    return h.hexdigest()


class SymmetricCSC:
    """Plain symmetric matrix in CSC form with both triangles stored."""

    def __init__(self, indptr, indices, data):
        self.indptr = np.asarray(indptr, dtype=np.int64)
        self.indices = np.asarray(indices, dtype=np.int64)
        self.data = np.asarray(data, dtype=np.float64)
        self.dim = self.indptr.size - 1
        self.pattern_id = pattern_digest(self.indptr, self.indices)

    @classmethod
    def from_scipy(cls, S):
        S = sp.csc_matrix(S)
        S.sum_duplicates()
        S.sort_indices()
        return cls(S.indptr, S.indices, S.data)

    @classmethod
    def from_dense(cls, A):
        """Keep exactly the nonzero entries of a dense matrix."""
        return cls.from_scipy(sp.csc_matrix(np.asarray(A, dtype=np.float64)))

    def with_data(self, data):
        out = SymmetricCSC.__new__(SymmetricCSC)
        out.indptr, out.indices, out.dim, out.pattern_id = self.indptr, self.indices, self.dim, self.pattern_id
        out.data = np.asarray(data, dtype=np.float64)
        return out

    def to_scipy(self):
        return sp.csc_matrix((self.data, self.indices, self.indptr), shape=(self.dim, self.dim))

    def to_dense(self):
        return self.to_scipy().toarray()

    def matvec(self, v):
        return self.to_scipy() @ v


def _structure(A):
    dim = A.dim
    S = sp.csc_matrix((np.ones(A.indices.size), A.indices, A.indptr), shape=(dim, dim))
    if S.nnz != A.indices.size:
        raise StructureError("duplicate entries in pattern")
    if (S != S.T).nnz:
        raise StructureError("pattern is not structurally symmetric")
    if not np.all(S.diagonal() != 0):
        raise StructureError("pattern is missing diagonal entries")
    return S


def minimum_degree_order(S) -> np.ndarray:
    """Greedy minimum-degree elimination order; ties go to the smaller index.

    Degrees are exact on the elimination graph, i.e. the graph after
    forming the clique of each eliminated node's neighbours.
    """
    S = sp.csr_matrix(S)
    dim = S.shape[0]
    adj = [set(S.indices[S.indptr[v] : S.indptr[v + 1]].tolist()) - {v} for v in range(dim)]
    heap = [(len(adj[v]), v) for v in range(dim)]
    heapq.heapify(heap)
    done = np.zeros(dim, dtype=bool)
    order = []
    while heap:
        deg, v = heapq.heappop(heap)
        if done[v] or deg != len(adj[v]):
            continue
        done[v] = True
        order.append(v)
        nbrs = adj[v]
        for u in nbrs:
            au = adj[u]
            au.discard(v)
            au |= nbrs
            au.discard(u)
            heapq.heappush(heap, (len(au), u))
        adj[v] = set()
    return np.array(order, dtype=np.int64)


def elimination_tree(Cp, Ci) -> np.ndarray:
    """Parent array of the elimination tree from the upper triangle (CSC); -1 marks roots."""
    dim = Cp.size - 1
    parent = np.full(dim, -1, dtype=np.int64)
    ancestor = np.full(dim, -1, dtype=np.int64)
    for k in range(dim):
        for i in Ci[Cp[k] : Cp[k + 1]]:
            while i != -1 and i < k:
                nxt = ancestor[i]
                ancestor[i] = k
                if nxt == -1:
                    parent[i] = k
                i = nxt
    return parent


def _row_patterns(Cp, Ci, parent):
    """Column indices of each row of L (excluding the diagonal), ascending."""
    dim = Cp.size - 1
    mark = np.full(dim, -1, dtype=np.int64)
    pats = []
    for k in range(dim):
        mark[k] = k
        found = []
        for i in Ci[Cp[k] : Cp[k + 1]]:
            while i < k and mark[i] != k:
                found.append(i)
                mark[i] = k
                i = parent[i]
        found.sort()
        pats.append(np.array(found, dtype=np.int64))
    return pats


def _permuted_upper(A, perm):
    """Upper triangle of ``A[perm][:, perm]`` plus positions of its entries in ``A.data``."""
    dim = A.dim
    tag = sp.csc_matrix((np.arange(1, A.indices.size + 1, dtype=np.int64), A.indices, A.indptr),
                        shape=(dim, dim))
    C = sp.triu(tag[perm][:, perm], format="csc")
    C.sort_indices()
    return C.indptr.astype(np.int64), C.indices.astype(np.int64), C.data.astype(np.int64) - 1


@dataclass(frozen=True, eq=False)
class SymbolicFactor:
    """Structure-only result: ordering, elimination tree and the pattern of ``L``."""

    dim: int
    perm: np.ndarray
    iperm: np.ndarray
    etree: np.ndarray
    Lp: np.ndarray
    Li: np.ndarray
    row_patterns: list
    row_positions: list
    Cp: np.ndarray
    Ci: np.ndarray
    Cmap: np.ndarray
    source_pattern_id: str

    @property
    def nnz(self) -> int:
        return int(self.Li.size)

    def pattern_dense(self) -> np.ndarray:
        out = np.zeros((self.dim, self.dim), dtype=bool)
        cols = np.repeat(np.arange(self.dim), np.diff(self.Lp))
        out[self.Li, cols] = True
        return out


def symbolic_analyze(A, ordering="mindegree") -> SymbolicFactor:
    """Ordering, elimination tree and factor pattern for the structure of ``A``.

    ``ordering`` is ``"mindegree"``, ``"natural"`` or an explicit permutation.
    """
    S = _structure(A)
    dim = A.dim
    if isinstance(ordering, str):
        if ordering == "mindegree":
            perm = minimum_degree_order(S)
        elif ordering == "natural":
            perm = np.arange(dim, dtype=np.int64)
        else:
            raise ValueError(f"unknown ordering {ordering!r}")
    else:
        perm = np.asarray(ordering, dtype=np.int64)
        if not np.array_equal(np.sort(perm), np.arange(dim)):
            raise ValueError("ordering is not a permutation")
    iperm = np.empty_like(perm)
    iperm[perm] = np.arange(dim)
    Cp, Ci, Cmap = _permuted_upper(A, perm)
    parent = elimination_tree(Cp, Ci)
    pats = _row_patterns(Cp, Ci, parent)

    counts = np.ones(dim, dtype=np.int64)
    for pat in pats:
        counts[pat] += 1
    Lp = np.concatenate([[0], np.cumsum(counts)]).astype(np.int64)
    Li = np.empty(Lp[-1], dtype=np.int64)
    Li[Lp[:-1]] = np.arange(dim)
    nxt = Lp[:-1] + 1
    positions = []
    for k, pat in enumerate(pats):
        pos = nxt[pat].copy()
        Li[pos] = k
        nxt[pat] += 1
        positions.append(pos)
    for arr in (perm, iperm, parent, Lp, Li, Cp, Ci, Cmap):
        arr.setflags(write=False)
    return SymbolicFactor(dim, perm, iperm, parent, Lp, Li, pats, positions, Cp, Ci, Cmap, A.pattern_id)


@dataclass(eq=False)
class NumericFactor:
    """Values of ``L`` with ``A[perm][:, perm] = L @ L.T``, aligned to ``symbolic.Li``."""

    symbolic: SymbolicFactor
    Lx: np.ndarray

    def L_dense(self) -> np.ndarray:
        sym = self.symbolic
        L = np.zeros((sym.dim, sym.dim))
        cols = np.repeat(np.arange(sym.dim), np.diff(sym.Lp))
        L[sym.Li, cols] = self.Lx
        return L

    def solve(self, rhs) -> np.ndarray:
        return solve(self, rhs)


def _values_for(sym: SymbolicFactor, A):
    if A.dim != sym.dim:
        raise StructureError("matrix dimension does not match the symbolic factor")
    if A.pattern_id == sym.source_pattern_id:
        return sym.Cp, sym.Ci, A.data[sym.Cmap]
    _structure(A)
    Cp, Ci, Cmap = _permuted_upper(A, sym.perm)
    for k in range(sym.dim):
        rows = Ci[Cp[k] : Cp[k + 1] - 1]
        if not np.isin(rows, sym.row_patterns[k]).all():
            raise StructureError("matrix pattern is not covered by the symbolic factor")
    return Cp, Ci, A.data[Cmap]


def numeric_factorize(sym: SymbolicFactor, A) -> NumericFactor:
    """Up-looking Cholesky of ``A[perm][:, perm]`` over the precomputed pattern.

    Raises NotPositiveDefiniteError when a pivot is at most
    ``1e-13 * max(diag(A))``.
    """
    Cp, Ci, Cx = _values_for(sym, A)
    dim = sym.dim
    Lp, Li = sym.Lp, sym.Li
    Lx = np.zeros(Li.size)
    work = np.zeros(dim)
    diag_ptr = Lp[:-1]
    fill = (Lp[:-1] + 1).tolist()
    dmax = max(float(Cx[Cp[1:] - 1].max()), 0.0) if dim else 0.0
    tol = PIVOT_RTOL * dmax
    for k in range(dim):
        lo, hi = Cp[k], Cp[k + 1]
        work[Ci[lo:hi]] = Cx[lo:hi]
        d = work[k]
        work[k] = 0.0
        for i, pos in zip(sym.row_patterns[k].tolist(), sym.row_positions[k].tolist()):
            lki = work[i] / Lx[diag_ptr[i]]
            work[i] = 0.0
            s, e = diag_ptr[i] + 1, fill[i]
            if e > s:
                work[Li[s:e]] -= Lx[s:e] * lki
            d -= lki * lki
            Lx[pos] = lki
            fill[i] = pos + 1
        if not d > tol:
            raise NotPositiveDefiniteError(
                f"non-positive pivot {d:.3e} at column {k}", column=k, pivot=d)
        Lx[diag_ptr[k]] = np.sqrt(d)
    return NumericFactor(sym, Lx)


def solve(F: NumericFactor, rhs) -> np.ndarray:
    """Solve ``A x = rhs`` (vector or matrix of right-hand sides)."""
    sym = F.symbolic
    rhs = np.asarray(rhs, dtype=np.float64)
    if rhs.shape[0] != sym.dim:
        raise ValueError(f"rhs has {rhs.shape[0]} rows, expected {sym.dim}")
    Lp, Li, Lx = sym.Lp, sym.Li, F.Lx
    y = rhs[sym.perm].copy()
    for j in range(sym.dim):
        s, e = Lp[j], Lp[j + 1]
        y[j] /= Lx[s]
        if e > s + 1:
            if y.ndim == 1:
                y[Li[s + 1 : e]] -= Lx[s + 1 : e] * y[j]
            else:
                y[Li[s + 1 : e]] -= np.outer(Lx[s + 1 : e], y[j])
    for j in range(sym.dim - 1, -1, -1):
        s, e = Lp[j], Lp[j + 1]
        if e > s + 1:
            y[j] -= Lx[s + 1 : e] @ y[Li[s + 1 : e]]
        y[j] /= Lx[s]
    out = np.empty_like(y)
    out[sym.perm] = y
    return out
