"""Sparse-plus-low-rank quasi-Newton solver for the entropic OT dual.

Each step minimizes ``f`` along ``d = -B^{-1} g`` with
``B = H_Omega + R + tau I``: a top-k sparsified Hessian, a BFGS-style rank-two
correction ``R`` and a diagonal shift.  Three changes make the loop cheap to
run repeatedly:

* the sparsity scheme and its symbolic factorization are refreshed only every
  ``S`` steps; in between only numeric values are recomputed;
* on refresh steps a short Sinkhorn chain runs next to the symbolic analysis
  and its endpoint replaces the quasi-Newton iterate when it has a lower
  objective;
* objective and gradient come from a single tiled pass over the cost matrix.
"""

from __future__ import annotations

import logging
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace

import numpy as np

from .cholesky import NumericFactor, SymbolicFactor, numeric_factorize, solve, symbolic_analyze
from .dual import DualPoint, GradientResult, as_free, fused_gradient, plan
from .exceptions import (
    DirectionError,
    LineSearchError,
    NotPositiveDefiniteError,
    StepError,
)
from .problem import ProblemInstance
from .sinkhorn import sinkhorn_step
from .sparsify import SparseSym, SparsityPattern, assemble, select_topk, topk_budget, update_values
from .trace import Recorder, SolverTrace

__all__ = [
    "SplrConfig",
    "SplrState",
    "LowRankTerm",
    "LineSearchResult",
    "StepRecord",
    "initial_state",
    "build_low_rank",
    "compute_direction",
    "line_search",
    "splr_step",
    "run_splr",
]

log = logging.getLogger(__name__)

CURVATURE_GUARD = 1e-6
DEGENERATE_DENOM = 1e-12
CORE_COND_MAX = 1e14
TAU_RETRIES = 8


@dataclass(frozen=True)
class SplrConfig:
    tau_max: float = 1.0
    S: int = 10
    J: int = 5
    density: float = 0.01
    c1: float = 1e-4
    c2: float = 0.9
    max_iter: int = 1000
    tol: float = 1e-8
    max_ls_trials: int = 30
    record_every: int = 1
    overlap: bool = False

    def __post_init__(self):
        if not 0 < self.c1 < 0.5:
            raise ValueError("c1 must lie in (0, 1/2)")
        if not self.c1 < self.c2 < 1:
            raise ValueError("c2 must lie in (c1, 1)")
        if self.S < 1:
            raise ValueError("S must be at least 1")
        if self.J < 0:
            raise ValueError("J must be non-negative (0 disables Sinkhorn candidates)")
        if not self.tau_max > 0:
            raise ValueError("tau_max must be positive")
        if not 0 <= self.density <= 1:
            raise ValueError("density must lie in [0, 1]")
        if self.max_iter < 0 or self.max_ls_trials < 1 or self.record_every < 1:
            raise ValueError("max_iter, max_ls_trials and record_every must be positive")


@dataclass(frozen=True, eq=False)
class LowRankTerm:
    """``R = xi u u^T + zeta v v^T``; ``R = 0`` when inactive."""

    u: np.ndarray | None = None
    v: np.ndarray | None = None
    xi: float = 0.0
    zeta: float = 0.0
    active: bool = False

    def dense(self) -> np.ndarray | None:
        if not self.active:
            return None
        return self.xi * np.outer(self.u, self.u) + self.zeta * np.outer(self.v, self.v)


@dataclass(eq=False)
class SplrState:
    x: np.ndarray
    res: GradientResult
    f: float
    iter: int = 0
    x_prev: np.ndarray | None = None
    g_prev: np.ndarray | None = None
    omega: SparsityPattern | None = None
    symbolic: SymbolicFactor | None = None
    A: SparseSym | None = None

    @property
    def g(self) -> np.ndarray:
        return self.res.grad

    @property
    def s_minus(self):
        return None if self.x_prev is None else self.x - self.x_prev

    @property
    def y_minus(self):
        return None if self.g_prev is None else self.g - self.g_prev


@dataclass(frozen=True)
class LineSearchResult:
    gamma: float
    x: np.ndarray
    f: float
    grad: np.ndarray
    payload: object
    slope0: float
    slope: float
    trials: int
    wolfe: bool


@dataclass
class StepRecord:
    """Diagnostics of one step; enough to re-check the Wolfe conditions."""

    iter: int
    refresh: bool
    tau: float
    low_rank: bool
    f_before: float
    gamma: float
    slope0: float
    slope_plus: float
    f_q: float
    wolfe: bool
    ls_trials: int
    f_s: float | None = None
    chosen: str = "q"
    f_next: float = 0.0
    tau_retries: int = 0
    nnz_L: int = 0
    extra: dict = field(default_factory=dict)


def initial_state(x0, p: ProblemInstance) -> SplrState:
    x = as_free(x0, p).copy()
    res = fused_gradient(x, p)
    return SplrState(x=x, res=res, f=res.f)


def build_low_rank(state: SplrState, A: SparseSym) -> LowRankTerm:
    """Rank-two term from the last step; inactive on the first step or when curvature is unusable."""
    s, y = state.s_minus, state.y_minus
    if s is None or y is None:
        return LowRankTerm()
    ys = float(y @ s)
    if not ys > CURVATURE_GUARD * float(y @ y):
        return LowRankTerm()
    v = A.matvec(s)
    vs = float(v @ s)
    if not abs(vs) > DEGENERATE_DENOM * np.linalg.norm(v) * np.linalg.norm(s):
        return LowRankTerm()
    return LowRankTerm(u=y.copy(), v=v, xi=1.0 / ys, zeta=-1.0 / vs, active=True)


def _direction(F: NumericFactor, R: LowRankTerm, g):
    g = np.asarray(g, dtype=np.float64)
    if not np.any(g):
        return np.zeros_like(g), False
    if R.active:
        Z = solve(F, np.column_stack([g, R.u, R.v]))
        zg, ZW = Z[:, 0], Z[:, 1:]
        W = np.column_stack([R.u, R.v])
        core = np.diag([1.0 / R.xi, 1.0 / R.zeta]) + W.T @ ZW
        if np.all(np.isfinite(core)) and np.linalg.cond(core) < CORE_COND_MAX:
            d = -(zg - ZW @ np.linalg.solve(core, W.T @ zg))
            if g @ d < 0:
                return d, True
        log.debug("low-rank direction rejected; using sparse part only")
    else:
        zg = solve(F, g)
    d = -zg
    if not g @ d < 0:
        raise DirectionError(f"no descent direction: g.d = {g @ d:.3e}")
    return d, False


def compute_direction(F: NumericFactor, R: LowRankTerm, g) -> np.ndarray:
    """``d = -B^{-1} g`` with ``B = A + R``, where ``F`` factorizes ``A``.

    The rank-two part is handled by the Woodbury identity, so only solves
    with the sparse factor are needed.
    """
    return _direction(F, R, g)[0]


def line_search(func, x, d, f, g, c1=1e-4, c2=0.9, max_trials=30) -> LineSearchResult:
    """Bracketing search for a step satisfying the (weak) Wolfe conditions.

    ``func(x_new)`` returns ``(f_new, grad_new, payload)``; ``payload`` is
    handed back untouched.  Starts at ``gamma = 1``, doubles until the
    bracket closes, then shrinks it by safeguarded quadratic interpolation.
    If the bracket collapses or the trial budget runs out, the best point
    satisfying sufficient decrease (or failing that, any decrease) is returned
    with ``wolfe=False``.
    """
    x = np.asarray(x, dtype=np.float64)
    d = np.asarray(d, dtype=np.float64)
    slope0 = float(np.dot(g, d))
    if not slope0 < 0:
        raise ValueError(f"line search needs a descent direction, got g.d = {slope0:.3e}")
    lo, hi = 0.0, math.inf
    f_lo, slope_lo, f_hi = f, slope0, math.inf
    gamma = 1.0
    best_armijo = best_any = None
    for trial in range(1, max_trials + 1):
        xn = x + gamma * d
        fn, gn, payload = func(xn)
        slope = float(np.dot(gn, d)) if np.all(np.isfinite(gn)) else math.nan
        point = (gamma, xn, fn, gn, payload, slope)
        finite = math.isfinite(fn) and math.isfinite(slope)
        armijo = finite and fn <= f + c1 * gamma * slope0
        if finite and fn < f and (best_any is None or fn < best_any[2]):
            best_any = point
        if armijo and (best_armijo is None or fn < best_armijo[2]):
            best_armijo = point
        if not armijo:
            hi, f_hi = gamma, fn
        elif slope < c2 * slope0:
            lo, f_lo, slope_lo = gamma, fn, slope
        else:
            return LineSearchResult(gamma, xn, fn, gn, payload, slope0, slope, trial, True)
        if math.isinf(hi):
            gamma = 2.0 * gamma
            continue
        width = hi - lo
        if width <= 4 * np.finfo(float).eps * hi:
            break
        gamma = lo + 0.5 * width
        if math.isfinite(f_hi):
            curv = f_hi - f_lo - slope_lo * width
            if curv > 0:
                cand = lo - slope_lo * width * width / (2.0 * curv)
                if lo + 0.1 * width <= cand <= hi - 0.1 * width:
                    gamma = cand
    pick = best_armijo or best_any
    if pick is None:
        raise LineSearchError(f"no decrease in {trial} trials (g.d = {slope0:.3e})")
    log.info("line search returned a point without the curvature certificate")
    gamma, xn, fn, gn, payload, slope = pick
    return LineSearchResult(gamma, xn, fn, gn, payload, slope0, slope, trial, False)


def _anchored(p: ProblemInstance, x_ref, f_ref, total_ref):
    """Objective evaluator expressed as a difference from a reference point.

    ``f(x') = f(x) + eta * (sum T' - sum T) - (x' - x) @ [a; b[:-1]]`` avoids
    the cancellation in ``alpha @ a`` that would otherwise swamp decreases near
    the optimum.
    """
    c = np.concatenate([p.a, p.b[:-1]])

    def value(xn, res):
        return f_ref + (p.eta * (res.total - total_ref) - (xn - x_ref) @ c)

    def func(xn):
        res = fused_gradient(xn, p)
        return float(value(xn, res)), res.grad, res

    return func, value


def _sinkhorn_chain(x, p: ProblemInstance, J: int):
    pt = DualPoint.from_free(x, p.n)
    for _ in range(J):
        pt = sinkhorn_step(pt, p)
    return pt.x


def splr_step(state: SplrState, p: ProblemInstance, cfg: SplrConfig, pool=None):
    """Advance one iteration; returns ``(next_state, StepRecord)``.

    ``pool`` (an executor) runs the Sinkhorn candidate chain concurrently with
    the symbolic analysis.  Without it both run serially, with identical
    results.
    """
    k = state.iter
    x, g = state.x, state.g
    tau = min(cfg.tau_max, float(np.linalg.norm(g)))
    refresh = state.symbolic is None or k % cfg.S == 0
    x_s = None
    if refresh:
        omega = select_topk(plan(x, p), topk_budget(cfg.density, p.n, p.m))
        A = assemble(x, p, omega, tau, grad=state.res)
        future = None
        if cfg.J > 0 and pool is not None:
            future = pool.submit(_sinkhorn_chain, x.copy(), p, cfg.J)
        symbolic = symbolic_analyze(A)
        if cfg.J > 0:
            x_s = future.result() if future is not None else _sinkhorn_chain(x, p, cfg.J)
    else:
        omega, symbolic = state.omega, state.symbolic
        A = update_values(state.A, x, p, tau, grad=state.res)

    retries = 0
    while True:
        try:
            F = numeric_factorize(symbolic, A)
            break
        except NotPositiveDefiniteError as exc:
            if retries >= TAU_RETRIES:
                raise StepError("factorization failed after raising tau",
                                {"iter": k, "tau": tau, "pivot": exc.pivot}) from exc
            retries += 1
            tau = max(2.0 * tau, 1e-12)
            A = update_values(A, x, p, tau, grad=state.res)

    R = build_low_rank(state, A)
    try:
        d, used_low_rank = _direction(F, R, g)
    except DirectionError as exc:
        raise StepError(str(exc), {"iter": k, "tau": tau}) from exc
    func, value = _anchored(p, x, state.f, state.res.total)
    try:
        ls = line_search(func, x, d, state.f, g, cfg.c1, cfg.c2, cfg.max_ls_trials)
    except LineSearchError as exc:
        raise StepError(str(exc), {"iter": k, "tau": tau, "slope": float(g @ d)}) from exc

    rec = StepRecord(iter=k, refresh=refresh, tau=tau, low_rank=used_low_rank, f_before=state.f,
                     gamma=ls.gamma, slope0=ls.slope0, slope_plus=ls.slope, f_q=ls.f,
                     wolfe=ls.wolfe, ls_trials=ls.trials, tau_retries=retries, nnz_L=symbolic.nnz)
    x_next, f_next, res_next = ls.x, ls.f, ls.payload
    if x_s is not None:
        res_s = fused_gradient(x_s, p)
        f_s = float(value(x_s, res_s))
        rec.f_s = f_s
        if f_s <= ls.f:
            x_next, f_next, res_next = x_s, f_s, res_s
            rec.chosen = "s"
    rec.f_next = f_next
    nxt = SplrState(x=x_next, res=res_next, f=f_next, iter=k + 1, x_prev=x, g_prev=g,
                    omega=omega, symbolic=symbolic, A=A)
    return nxt, rec


def _error(p, res):
    return float(np.abs(res.row_sums - p.a).sum() + np.abs(res.col_sums - p.b).sum())


def run_splr(x0, p: ProblemInstance, cfg: SplrConfig = SplrConfig()):
    """Iterate until the marginal error is at most ``cfg.tol`` or ``cfg.max_iter`` steps.

    Returns the final DualPoint and a SolverTrace whose ``events`` hold one
    StepRecord per step.  A failing step raises StepError with the trace so
    far attached.
    """
    state = initial_state(x0, p)
    trace = SolverTrace(meta={"algo": "splr", "problem": repr(p), "eta": p.eta,
                              "config": cfg.__dict__.copy()})
    rec = Recorder(trace, p, cfg.record_every)
    rec.record(0, state.x, state.res)
    pool = ThreadPoolExecutor(max_workers=1) if cfg.overlap else None
    try:
        while state.iter < cfg.max_iter and _error(p, state.res) > cfg.tol:
            try:
                state, info = splr_step(state, p, cfg, pool)
            except StepError as exc:
                exc.trace = trace
                raise
            trace.events.append(info)
            done = state.iter == cfg.max_iter or _error(p, state.res) <= cfg.tol
            if rec.due(state.iter) or done:
                rec.record(state.iter, state.x, state.res)
    finally:
        if pool is not None:
            pool.shutdown()
    return DualPoint.from_free(state.x, p.n), trace
