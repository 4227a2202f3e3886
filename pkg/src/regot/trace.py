"""Per-iteration solver records shared by every solver and the bench harness."""

from __future__ import annotations

import time
from dataclasses import dataclass, field
from typing import NamedTuple

import numpy as np

from .dual import duality_gap, fused_gradient


class TraceRow(NamedTuple):
    iter: int
    wall_ms: float
    f: float
    marginal_error: float
    duality_gap: float


@dataclass
class SolverTrace:
    rows: list = field(default_factory=list)
    meta: dict = field(default_factory=dict)
    events: list = field(default_factory=list)

    def __len__(self):
        return len(self.rows)

    def column(self, name) -> np.ndarray:
        return np.array([getattr(r, name) for r in self.rows])

    @property
    def last(self) -> TraceRow | None:
        return self.rows[-1] if self.rows else None


class Recorder:
    """Stopwatch plus trace writer; time spent recording is not counted."""

    def __init__(self, trace: SolverTrace, p, every: int = 1):
        self.trace = trace
        self.p = p
        self.every = max(int(every), 1)
        self._start = time.perf_counter()
        self._paused = 0.0

    def elapsed_ms(self) -> float:
        return (time.perf_counter() - self._start - self._paused) * 1e3

    def due(self, k: int) -> bool:
        return k % self.every == 0

    def record(self, k, x, grad=None) -> TraceRow:
        t0 = time.perf_counter()
        wall = (t0 - self._start - self._paused) * 1e3
        if grad is None:
            grad = fused_gradient(x, self.p)
        err = float(np.abs(grad.row_sums - self.p.a).sum() + np.abs(grad.col_sums - self.p.b).sum())
        row = TraceRow(int(k), wall, grad.f, err, duality_gap(x, self.p, grad))
        self.trace.rows.append(row)
        self._paused += time.perf_counter() - t0
        return row
