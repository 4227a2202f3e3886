"""Timed fixed-iteration benchmarks, CSV output and SVG error-vs-time plots."""

from __future__ import annotations

import csv
import hashlib
import json
import math
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field, replace
from pathlib import Path
from xml.sax.saxutils import escape

import numpy as np

from .dual import DualPoint
from .exceptions import PlotError, RegotError
from .problem import GeneratorSpec, generate
from .sinkhorn import SinkhornConfig, run_sinkhorn
from .splr import SplrConfig, run_splr
from .trace import SolverTrace, TraceRow

__all__ = [
    "TRACE_HEADER",
    "REPORT_HEADER",
    "BenchSpec",
    "ReportRow",
    "BenchReport",
    "run_benchmark",
    "emit_csv",
    "read_csv",
    "emit_svg_plot",
    "read_keyfile",
    "solve",
]

TRACE_FIELDS = ("iter", "wall_ms", "f", "marginal_error", "duality_gap")
TRACE_HEADER = ",".join(TRACE_FIELDS)
REPORT_HEADER = "algo," + TRACE_HEADER
ALGOS = ("sinkhorn", "splr")


@dataclass(frozen=True)
class BenchSpec:
    generator: GeneratorSpec = field(default_factory=GeneratorSpec)
    eta: float = 1e-3
    algos: tuple = ALGOS
    splr: SplrConfig = field(default_factory=SplrConfig)
    checkpoints: tuple = (10, 20, 50, 100)
    repeats: int = 10
    warmup: int = 1
    parallel_repeats: bool = False

    def __post_init__(self):
        if self.repeats < 1:
            raise ValueError("repeats must be at least 1")
        if self.warmup < 0:
            raise ValueError("warmup must be non-negative")
        cps = tuple(int(c) for c in self.checkpoints)
        if not cps or any(b <= a for a, b in zip(cps, cps[1:])) or cps[0] < 1:
            raise ValueError("checkpoints must be positive and strictly increasing")
        object.__setattr__(self, "checkpoints", cps)
        for a in self.algos:
            if a not in ALGOS:
                raise ValueError(f"unknown algorithm {a!r}")


class ReportRow:
    """Median cell of a benchmark report, plus the per-repeat measurements."""

    __slots__ = ("iter", "wall_ms", "f", "marginal_error", "duality_gap", "samples", "failed")

    def __init__(self, iter, wall_ms, f, marginal_error, duality_gap, samples=(), failed=False):
        self.iter = int(iter)
        self.wall_ms = wall_ms
        self.f = f
        self.marginal_error = marginal_error
        self.duality_gap = duality_gap
        self.samples = list(samples)
        self.failed = failed

    def values(self):
        return (self.iter, self.wall_ms, self.f, self.marginal_error, self.duality_gap)


@dataclass
class BenchReport:
    algo: str
    rows: list = field(default_factory=list)
    meta: dict = field(default_factory=dict)


def solve(algo, p, max_iter, tol=0.0, splr_cfg: SplrConfig | None = None, record_every=None):
    """Run one solver from the zero dual point; returns ``(DualPoint, SolverTrace)``."""
    x0 = DualPoint.zeros(p.n, p.m)
    every = record_every or max(max_iter, 1)
    if algo == "sinkhorn":
        return run_sinkhorn(x0, p, SinkhornConfig(max_iter=max(max_iter, 1), record_every=every, tol=tol))
    if algo == "splr":
        cfg = replace(splr_cfg or SplrConfig(), max_iter=max_iter, tol=tol, record_every=every)
        return run_splr(x0, p, cfg)
    raise ValueError(f"unknown algorithm {algo!r}")


def _config_hash(obj) -> str:
    blob = json.dumps(obj, sort_keys=True, default=str).encode()
    return hashlib.sha1(blob).hexdigest()[:12]


def run_benchmark(spec: BenchSpec) -> list:
    """One BenchReport per algorithm with median runtime and errors per checkpoint.

    Each checkpoint is a separate run of exactly that many iterations with the
    convergence tolerance at zero.  Warmup runs are discarded.
    """
    p = generate(spec.generator, spec.eta)
    reports = []
    for algo in spec.algos:
        cfg = spec.splr if algo == "splr" else None
        meta = {"algo": algo, "problem": spec.generator.describe(), "eta": p.eta,
                "config_hash": _config_hash(asdict(cfg) if cfg else {"algo": algo})}
        report = BenchReport(algo, meta=meta)
        for cp in spec.checkpoints:

            def once(_=None, cp=cp):
                _, tr = solve(algo, p, cp, 0.0, cfg)
                return tr.last

            try:
                for _ in range(spec.warmup):
                    once()
                if spec.parallel_repeats:
                    with ThreadPoolExecutor() as ex:
                        samples = list(ex.map(once, range(spec.repeats)))
                else:
                    samples = [once() for _ in range(spec.repeats)]
            except RegotError as exc:
                report.rows.append(ReportRow(cp, math.nan, math.nan, math.nan, math.nan, failed=True))
                report.meta.setdefault("failures", []).append(f"checkpoint {cp}: {exc}")
                continue
            med = [float(np.median([getattr(s, name) for s in samples])) for name in TRACE_FIELDS[1:]]
            report.rows.append(ReportRow(cp, *med, samples=samples))
        reports.append(report)
    return reports


def _fmt(v) -> str:
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    return "%.17g" % float(v)


def emit_csv(obj, path) -> None:
    """Write a SolverTrace (5-column schema) or BenchReport(s) (``algo`` column first)."""
    with open(path, "w", newline="") as fh:
        if isinstance(obj, SolverTrace):
            fh.write(TRACE_HEADER + "\n")
            for row in obj.rows:
                fh.write(",".join(_fmt(v) for v in row) + "\n")
            return
        reports = [obj] if isinstance(obj, BenchReport) else list(obj)
        fh.write(REPORT_HEADER + "\n")
        for rep in reports:
            for row in rep.rows:
                fh.write(rep.algo + "," + ",".join(_fmt(v) for v in row.values()) + "\n")


def read_csv(path):
    """Parse a trace CSV into a SolverTrace, or a report CSV into a list of BenchReports."""
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        rows = list(reader)
    if header is None:
        raise ValueError(f"{path}: empty file")
    joined = ",".join(header)
    if joined == TRACE_HEADER:
        tr = SolverTrace(meta={"algo": Path(path).stem})
        tr.rows = [TraceRow(int(r[0]), *map(float, r[1:])) for r in rows]
        return tr
    if joined != REPORT_HEADER:
        raise ValueError(f"{path}: unrecognized header {joined!r}")
    out = {}
    for r in rows:
        vals = list(map(float, r[2:]))
        out.setdefault(r[0], BenchReport(r[0])).rows.append(
            ReportRow(int(r[1]), *vals, failed=any(math.isnan(v) for v in vals)))
    return list(out.values())


# --- SVG -------------------------------------------------------------------

_W, _H = 800, 600
_LEFT, _RIGHT, _TOP, _BOTTOM = 90, 170, 40, 70
_COLORS = ("#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd", "#8c564b")


def _series(rep, metric):
    rows = rep.rows if isinstance(rep, BenchReport) else rep.rows
    pts = []
    for r in rows:
        val = r.marginal_error if metric == "marginal" else abs(r.duality_gap)
        t = r.wall_ms / 1e3
        if math.isfinite(t) and math.isfinite(val) and val > 0:
            pts.append((t, math.log10(val)))
    return pts


def emit_svg_plot(reports, path, metric="marginal") -> None:
    """Log-scale error against wall time, one polyline per algorithm.

    ``metric`` is ``"marginal"`` or ``"dgap"`` (absolute duality gap).
    """
    if metric not in ("marginal", "dgap"):
        raise ValueError(f"unknown metric {metric!r}")
    if isinstance(reports, (BenchReport, SolverTrace)):
        reports = [reports]
    named = []
    for rep in reports:
        label = rep.algo if isinstance(rep, BenchReport) else rep.meta.get("algo", "trace")
        pts = _series(rep, metric)
        if pts:
            named.append((str(label), pts))
    if not named:
        raise PlotError("no finite positive points to plot")

    ts = [t for _, pts in named for t, _ in pts]
    ys = [y for _, pts in named for _, y in pts]
    tmax = max(ts) if max(ts) > 0 else 1.0
    ylo, yhi = math.floor(min(ys)), math.ceil(max(ys))
    if yhi == ylo:
        yhi += 1
    pw, ph = _W - _LEFT - _RIGHT, _H - _TOP - _BOTTOM

    def sx(t):
        return _LEFT + pw * t / tmax

    def sy(y):
        return _TOP + ph * (yhi - y) / (yhi - ylo)

    ylabel = "log10(marginal error)" if metric == "marginal" else "log10|duality gap|"
    out = [
        '<?xml version="1.0" encoding="UTF-8"?>',
        f'<svg xmlns="http://www.w3.org/2000/svg" viewBox="0 0 {_W} {_H}" width="{_W}" height="{_H}">',
        f'<rect x="0" y="0" width="{_W}" height="{_H}" fill="white"/>',
        f'<g id="axes" stroke="black" fill="none">'
        f'<line x1="{_LEFT}" y1="{_TOP + ph}" x2="{_LEFT + pw}" y2="{_TOP + ph}"/>'
        f'<line x1="{_LEFT}" y1="{_TOP}" x2="{_LEFT}" y2="{_TOP + ph}"/></g>',
    ]
    ticks = ['<g id="yticks" font-family="sans-serif" font-size="12">']
    step = max(1, (yhi - ylo) // 12)
    for e in range(ylo, yhi + 1, step):
        y = sy(e)
        ticks.append(f'<line x1="{_LEFT - 5}" y1="{y:.2f}" x2="{_LEFT}" y2="{y:.2f}" stroke="black"/>'
                     f'<text x="{_LEFT - 8}" y="{y + 4:.2f}" text-anchor="end">1e{e}</text>')
    ticks.append("</g>")
    ticks.append('<g id="xticks" font-family="sans-serif" font-size="12">')
    for i in range(6):
        t = tmax * i / 5
        x = sx(t)
        ticks.append(f'<line x1="{x:.2f}" y1="{_TOP + ph}" x2="{x:.2f}" y2="{_TOP + ph + 5}" stroke="black"/>'
                     f'<text x="{x:.2f}" y="{_TOP + ph + 20}" text-anchor="middle">{t:.3g}</text>')
    ticks.append("</g>")
    out += ticks
    out.append(f'<text x="{_LEFT + pw / 2}" y="{_H - 20}" text-anchor="middle" '
               f'font-family="sans-serif" font-size="14">wall time (s)</text>')
    out.append(f'<text x="25" y="{_TOP + ph / 2}" text-anchor="middle" font-family="sans-serif" '
               f'font-size="14" transform="rotate(-90 25 {_TOP + ph / 2})">{ylabel}</text>')

    legend = ['<g id="legend" font-family="sans-serif" font-size="13">']
    for idx, (label, pts) in enumerate(named):
        color = _COLORS[idx % len(_COLORS)]
        coords = " ".join(f"{sx(t):.3f},{sy(y):.3f}" for t, y in pts)
        out.append(f'<g class="series" data-label="{escape(label)}" stroke="{color}" fill="{color}">')
        out.append(f'<polyline points="{coords}" fill="none" stroke-width="2"/>')
        for t, y in pts:
            out.append(f'<circle class="marker" cx="{sx(t):.3f}" cy="{sy(y):.3f}" r="3.5" '
                       f'data-t="{t:.17g}" data-log10="{y:.17g}"/>')
        out.append("</g>")
        ly = _TOP + 20 + 22 * idx
        lx = _W - _RIGHT + 20
        legend.append(f'<line x1="{lx}" y1="{ly}" x2="{lx + 25}" y2="{ly}" stroke="{color}" stroke-width="2"/>'
                      f'<text class="legend-entry" x="{lx + 32}" y="{ly + 4}">{escape(label)}</text>')
    legend.append("</g>")
    out += legend
    out.append("</svg>")
    Path(path).write_text("\n".join(out) + "\n")


# --- key files ---------------------------------------------------------------

def read_keyfile(path) -> dict:
    """Flat ``key = value`` lines; ``#`` starts a comment.  Keys use CLI flag names."""
    out = {}
    for lineno, raw in enumerate(Path(path).read_text().splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ValueError(f"{path}:{lineno}: expected 'key = value'")
        key, value = (s.strip() for s in line.split("=", 1))
        out[key.lstrip("-").replace("_", "-")] = value
    return out
