"""Log-domain Sinkhorn: exact alternating maximization of the dual."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .dual import DualPoint, fused_gradient, split
from .problem import ProblemInstance
from .trace import Recorder, SolverTrace

__all__ = ["SinkhornConfig", "sinkhorn_step", "update_alpha", "update_beta", "run_sinkhorn", "logsumexp"]


@dataclass(frozen=True)
class SinkhornConfig:
    max_iter: int = 1000
    record_every: int = 1
    tol: float = 0.0

    def __post_init__(self):
        if self.max_iter < 1:
            raise ValueError("max_iter must be at least 1")
        if self.record_every < 1:
            raise ValueError("record_every must be at least 1")


def logsumexp(z, axis):
    """Max-shifted log-sum-exp along ``axis``."""
    top = z.max(axis=axis, keepdims=True)
    top[~np.isfinite(top)] = 0.0
    out = np.log(np.exp(z - top).sum(axis=axis, keepdims=True)) + top
    return np.squeeze(out, axis=axis)


def update_alpha(beta, p: ProblemInstance) -> np.ndarray:
    """Row potentials that make ``T 1 = a`` exactly for fixed ``beta``."""
    return p.eta * (np.log(p.a) - logsumexp((beta[None, :] - p.M) / p.eta, axis=1))


def update_beta(alpha, p: ProblemInstance) -> np.ndarray:
    """Column potentials that make ``T^T 1 = b`` exactly for fixed ``alpha``."""
    return p.eta * (np.log(p.b) - logsumexp((alpha[:, None] - p.M) / p.eta, axis=0))


def sinkhorn_step(x, p: ProblemInstance) -> DualPoint:
    """One row update then one column update, followed by the gauge shift."""
    _, beta = split(x, p)
    alpha = update_alpha(beta, p)
    beta = update_beta(alpha, p)
    shift = beta[-1]
    alpha = alpha + shift
    beta = beta - shift
    beta[-1] = 0.0
    return DualPoint(alpha, beta)


def run_sinkhorn(x0, p: ProblemInstance, cfg: SinkhornConfig = SinkhornConfig()):
    """Run up to ``cfg.max_iter`` Sinkhorn steps from ``x0``.

    Returns the final DualPoint and a SolverTrace.  With ``cfg.tol > 0`` the
    loop stops early once the marginal error drops to ``tol``.
    """
    x = x0 if isinstance(x0, DualPoint) else DualPoint.from_free(x0, p.n)
    trace = SolverTrace(meta={"algo": "sinkhorn", "problem": repr(p), "eta": p.eta,
                              "max_iter": cfg.max_iter, "tol": cfg.tol})
    rec = Recorder(trace, p, cfg.record_every)
    rec.record(0, x)
    for k in range(1, cfg.max_iter + 1):
        x = sinkhorn_step(x, p)
        g = None
        if cfg.tol > 0:
            g = fused_gradient(x, p)
            err = np.abs(g.row_sums - p.a).sum() + np.abs(g.col_sums - p.b).sum()
            if err <= cfg.tol:
                rec.record(k, x, g)
                break
        if rec.due(k) or k == cfg.max_iter:
            rec.record(k, x, g)
    return x, trace
