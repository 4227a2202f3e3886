"""Dual objective of entropic OT and everything evaluated from the plan ``T(x)``.

The dual has one redundant degree of freedom; it is removed by pinning the
last column potential, ``beta[m-1] = 0``.  The remaining free vector is
``x = (alpha, beta[:-1])`` of length ``n + m - 1`` and the minimized objective
is ``f(x) = eta * sum(T) - alpha @ a - beta @ b`` with
``T[i, j] = exp((alpha[i] + beta[j] - M[i, j]) / eta)``.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .exceptions import OracleSizeError
from .problem import ProblemInstance

__all__ = [
    "DualPoint",
    "GradientResult",
    "EXP_CLAMP",
    "DEFAULT_TILE",
    "as_free",
    "split",
    "plan",
    "objective",
    "fused_gradient",
    "naive_gradient",
    "hessian_dense",
    "marginal_error",
    "duality_gap",
    "primal_dual_values",
]

EXP_CLAMP = 700.0
DEFAULT_TILE = (8, 32)
DENSE_ORACLE_CAP = 4096


@dataclass(frozen=True, eq=False)
class DualPoint:
    """Dual potentials with the gauge ``beta[-1] == 0``."""

    alpha: np.ndarray
    beta: np.ndarray

    def __post_init__(self):
        alpha = np.array(self.alpha, dtype=np.float64)
        beta = np.array(self.beta, dtype=np.float64)
        if beta.size and beta[-1] != 0.0:
            raise ValueError("gauge violated: beta[-1] must be 0")
        object.__setattr__(self, "alpha", alpha)
        object.__setattr__(self, "beta", beta)

    @classmethod
    def from_free(cls, x, n: int) -> "DualPoint":
        x = np.asarray(x, dtype=np.float64)
        return cls(x[:n], np.append(x[n:], 0.0))

    @classmethod
    def zeros(cls, n: int, m: int) -> "DualPoint":
        return cls(np.zeros(n), np.zeros(m))

    @property
    def x(self) -> np.ndarray:
        return np.concatenate([self.alpha, self.beta[:-1]])


def as_free(x, p: ProblemInstance) -> np.ndarray:
    """Free vector for ``x`` given either as a DualPoint or an array."""
    if isinstance(x, DualPoint):
        x = x.x
    x = np.asarray(x, dtype=np.float64)
    if x.shape != (p.dim,):
        raise ValueError(f"dual vector has shape {x.shape}, expected ({p.dim},)")
    return x


def split(x, p: ProblemInstance):
    """Return ``(alpha, beta)`` with the pinned zero appended to ``beta``."""
    if isinstance(x, DualPoint):
        return x.alpha, x.beta
    x = as_free(x, p)
    return x[: p.n], np.append(x[p.n :], 0.0)


def _log_plan(alpha, beta, M, eta):
    z = (alpha[:, None] + beta[None, :] - M) / eta
    np.clip(z, -EXP_CLAMP, EXP_CLAMP, out=z)
    return z


def plan(x, p: ProblemInstance) -> np.ndarray:
    """Transport plan ``T(x)``; the exponent is clamped to [-700, 700]."""
    alpha, beta = split(x, p)
    return np.exp(_log_plan(alpha, beta, p.M, p.eta))


def objective(x, p: ProblemInstance) -> float:
    alpha, beta = split(x, p)
    T = plan(x, p)
    return float(p.eta * T.sum() - alpha @ p.a - beta @ p.b)


@dataclass(frozen=True, eq=False)
class GradientResult:
    """Objective, gradient and plan marginals from one evaluation.

    ``total`` is ``sum(T)``; it lets callers form objective differences
    without the cancellation in ``alpha @ a``.
    """

    f: float
    grad: np.ndarray
    row_sums: np.ndarray
    col_sums: np.ndarray
    total: float


def _pairwise(parts: np.ndarray) -> np.ndarray:
    """Tree-sum along axis 0 in a fixed order."""
    while parts.shape[0] > 1:
        k = parts.shape[0]
        head = parts[0 : k - 1 : 2] + parts[1:k:2]
        parts = np.concatenate([head, parts[k - 1 :]]) if k % 2 else head
    return parts[0]


def _assemble(p, alpha, beta, row_sums, col_sums, total):
    grad = np.concatenate([row_sums - p.a, col_sums[:-1] - p.b[:-1]])
    f = p.eta * total - alpha @ p.a - beta @ p.b
    return GradientResult(float(f), grad, row_sums, col_sums, float(total))


def fused_gradient(x, p: ProblemInstance, tile=DEFAULT_TILE) -> GradientResult:
    """Objective, gradient and both plan marginals in a single pass over ``M``.

    ``M`` is walked in bands of ``tile[0]`` rows; each band is cut into tiles
    of ``tile[1]`` columns.  Plan entries of a band are formed once and reduced
    two ways: per tile along rows (then tree-merged across the band's tiles),
    and along columns (then tree-merged across bands).  The merge order is
    fixed, so results do not depend on scheduling.
    """
    alpha, beta = split(x, p)
    n, m = p.M.shape
    rows, cols = tile
    starts = np.arange(0, m, cols)
    inv_eta = 1.0 / p.eta
    row_sums = np.empty(n)
    band_cols = []
    for r0 in range(0, n, rows):
        r1 = min(r0 + rows, n)
        z = alpha[r0:r1, None] + beta[None, :]
        z -= p.M[r0:r1]
        z *= inv_eta
        np.clip(z, -EXP_CLAMP, EXP_CLAMP, out=z)
        np.exp(z, out=z)
        tile_rows = np.add.reduceat(z, starts, axis=1)
        row_sums[r0:r1] = _pairwise(tile_rows.T)
        band_cols.append(z.sum(axis=0))
    col_sums = _pairwise(np.asarray(band_cols))
    total = _pairwise(row_sums)
    return _assemble(p, alpha, beta, row_sums, col_sums, total)


def naive_gradient(x, p: ProblemInstance) -> GradientResult:
    """Reference path: materialize ``T`` and reduce it in separate passes."""
    alpha, beta = split(x, p)
    T = plan(x, p)
    row_sums = T.sum(axis=1)
    col_sums = T.sum(axis=0)
    return _assemble(p, alpha, beta, row_sums, col_sums, T.sum())


def hessian_dense(x, p: ProblemInstance) -> np.ndarray:
    """Exact Hessian of ``f`` as a dense ``(n+m-1)``-square matrix (test oracle)."""
    if p.n + p.m > DENSE_ORACLE_CAP:
        raise OracleSizeError(f"n + m = {p.n + p.m} exceeds the dense oracle cap {DENSE_ORACLE_CAP}")
    T = plan(x, p)
    n = p.n
    Tm = T[:, :-1]
    H = np.zeros((p.dim, p.dim))
    H[:n, :n] = np.diag(T.sum(axis=1))
    H[n:, n:] = np.diag(Tm.sum(axis=0))
    H[:n, n:] = Tm
    H[n:, :n] = Tm.T
    return H / p.eta


def marginal_error(T, a, b) -> float:
    """L1 marginal violation ``|T 1 - a|_1 + |T^T 1 - b|_1``."""
    T = np.asarray(T)
    return float(np.abs(T.sum(axis=1) - a).sum() + np.abs(T.sum(axis=0) - b).sum())


def duality_gap(x, p: ProblemInstance, grad: GradientResult | None = None) -> float:
    """Primal minus dual value, via ``alpha @ (T1 - a) + beta @ (T^T 1 - b)``."""
    alpha, beta = split(x, p)
    if grad is None:
        grad = fused_gradient(x, p)
    return float(alpha @ (grad.row_sums - p.a) + beta @ (grad.col_sums - p.b))


def primal_dual_values(x, p: ProblemInstance):
    """Direct evaluation of ``(L_p, L_d)`` at the plan induced by ``x``."""
    alpha, beta = split(x, p)
    logT = _log_plan(alpha, beta, p.M, p.eta)
    T = np.exp(logT)
    mass = T.sum()
    L_p = (T * p.M).sum() + p.eta * (T * logT).sum() - p.eta * mass
    L_d = -p.eta * mass + alpha @ p.a + beta @ p.b
    return float(L_p), float(L_d)
