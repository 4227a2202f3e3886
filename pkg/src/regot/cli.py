"""Command line entry point: ``regot {gen,solve,bench,plot}``."""

from __future__ import annotations

import argparse
import logging
import sys
from dataclasses import replace
from pathlib import Path

from . import bench
from .exceptions import RegotError
from .problem import GENERATOR_KINDS, GeneratorSpec, generate, save_problem
from .splr import SplrConfig

SYNTH_KINDS = tuple(k for k in GENERATOR_KINDS if k != "file")


def _generator(problem, n, m, d, seed) -> GeneratorSpec:
    if problem in SYNTH_KINDS:
        return GeneratorSpec(kind=problem, n=n, m=m, d=d, seed=seed)
    return GeneratorSpec(kind="file", path=problem)


def _splr_config(ns) -> SplrConfig:
    return SplrConfig(tau_max=ns.tau_max, S=ns.S, J=ns.J, density=ns.density, c1=ns.c1, c2=ns.c2,
                      max_ls_trials=ns.max_ls_trials, overlap=getattr(ns, "overlap", False))


def _add_problem_flags(ap, with_kind=True):
    if with_kind:
        ap.add_argument("--problem", default="synth2",
                        help="synth1-iid, synth1-diff, synth2 or a path to a .rotb file")
    ap.add_argument("--n", type=int, default=64)
    ap.add_argument("--m", type=int, default=64)
    ap.add_argument("--d", type=int, default=2, help="point dimension for synth1")
    ap.add_argument("--seed", type=int, default=0)


def _add_splr_flags(ap):
    d = SplrConfig()
    ap.add_argument("--tau-max", type=float, default=d.tau_max)
    ap.add_argument("--S", type=int, default=d.S, help="symbolic reuse period")
    ap.add_argument("--J", type=int, default=d.J, help="Sinkhorn candidate steps per refresh (0 disables)")
    ap.add_argument("--density", type=float, default=d.density)
    ap.add_argument("--c1", type=float, default=d.c1)
    ap.add_argument("--c2", type=float, default=d.c2)
    ap.add_argument("--max-ls-trials", type=int, default=d.max_ls_trials)


def cmd_gen(ns):
    spec = GeneratorSpec(kind=ns.kind, n=ns.n, m=ns.m, d=ns.d, seed=ns.seed)
    p = generate(spec, ns.eta)
    save_problem(p, ns.output)
    print(f"wrote {p} to {ns.output}")


def cmd_solve(ns):
    eta = ns.eta
    if eta is None and ns.problem in SYNTH_KINDS:
        eta = 1e-3
    p = generate(_generator(ns.problem, ns.n, ns.m, ns.d, ns.seed), eta)
    cfg = _splr_config(ns)
    try:
        x, trace = bench.solve(ns.algo, p, ns.max_iter, ns.tol, cfg, record_every=ns.record_every)
    except RegotError as exc:
        trace = getattr(exc, "trace", None)
        if ns.trace and trace is not None:
            bench.emit_csv(trace, ns.trace)
        raise
    last = trace.last
    print(f"{ns.algo} on {p}: iter={last.iter} f={last.f:.12g} "
          f"marginal_error={last.marginal_error:.3e} duality_gap={last.duality_gap:.3e} "
          f"wall={last.wall_ms:.1f} ms")
    if ns.trace:
        bench.emit_csv(trace, ns.trace)


def _spec_from_keyfile(keys: dict) -> tuple:
    def get(name, cast, default):
        return cast(keys[name]) if name in keys else default

    def tup(s, cast=str):
        return tuple(cast(v.strip()) for v in s.split(",") if v.strip())

    problem = keys.get("problem", "synth2")
    gen = _generator(problem, get("n", int, 64), get("m", int, 64), get("d", int, 2), get("seed", int, 0))
    d = SplrConfig()
    splr = SplrConfig(tau_max=get("tau-max", float, d.tau_max), S=get("S", int, d.S), J=get("J", int, d.J),
                      density=get("density", float, d.density), c1=get("c1", float, d.c1),
                      c2=get("c2", float, d.c2), max_ls_trials=get("max-ls-trials", int, d.max_ls_trials))
    algos = tup(keys.get("algos", keys.get("algo", "sinkhorn,splr")))
    truthy = keys.get("parallel-repeats", "false").lower() in ("1", "true", "yes", "on")
    spec = bench.BenchSpec(generator=gen, eta=get("eta", float, 1e-3), algos=algos, splr=splr,
                           checkpoints=tup(keys.get("checkpoints", "10,20,50,100"), int),
                           repeats=get("repeats", int, 10), warmup=get("warmup", int, 1),
                           parallel_repeats=truthy)
    return spec, keys.get("svg"), keys.get("metric", "marginal")


def cmd_bench(ns):
    spec, svg, metric = _spec_from_keyfile(bench.read_keyfile(ns.spec))
    if ns.parallel_repeats:
        spec = replace(spec, parallel_repeats=True)
    reports = bench.run_benchmark(spec)
    bench.emit_csv(reports, ns.output)
    svg = ns.svg or svg or str(Path(ns.output).with_suffix(".svg"))
    bench.emit_svg_plot(reports, svg, metric=ns.metric or metric)
    for rep in reports:
        for row in rep.rows:
            status = "FAILED" if row.failed else f"{row.wall_ms:10.2f} ms  error={row.marginal_error:.3e}"
            print(f"{rep.algo:9s} iter={row.iter:5d}  {status}")
    print(f"wrote {ns.output} and {svg}")


def cmd_plot(ns):
    data = bench.read_csv(ns.report)
    bench.emit_svg_plot(data, ns.output, metric=ns.metric)
    print(f"wrote {ns.output}")


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="regot", description="Entropic-regularized OT solvers and benchmarks")
    ap.add_argument("-v", "--verbose", action="store_true")
    sub = ap.add_subparsers(dest="command", required=True)

    g = sub.add_parser("gen", help="generate a problem and save it as .rotb")
    g.add_argument("kind", choices=SYNTH_KINDS)
    _add_problem_flags(g, with_kind=False)
    g.add_argument("--eta", type=float, default=1e-3)
    g.add_argument("-o", "--output", required=True)
    g.set_defaults(func=cmd_gen)

    s = sub.add_parser("solve", help="run one solver and optionally write its trace")
    _add_problem_flags(s)
    s.add_argument("--eta", type=float, default=None, help="defaults to 1e-3, or the file's value")
    s.add_argument("--algo", choices=bench.ALGOS, default="splr")
    _add_splr_flags(s)
    s.add_argument("--overlap", action="store_true", help="run Sinkhorn candidates on a worker thread")
    s.add_argument("--max-iter", type=int, default=1000)
    s.add_argument("--tol", type=float, default=1e-8)
    s.add_argument("--record-every", type=int, default=1)
    s.add_argument("--trace")
    s.set_defaults(func=cmd_solve)

    b = sub.add_parser("bench", help="timed checkpoint benchmark driven by a key file")
    b.add_argument("--spec", required=True)
    b.add_argument("-o", "--output", required=True)
    b.add_argument("--svg")
    b.add_argument("--metric", choices=("marginal", "dgap"))
    b.add_argument("--parallel-repeats", action="store_true", help="untimed property runs only")
    b.set_defaults(func=cmd_bench)

    pl = sub.add_parser("plot", help="plot a report or trace CSV")
    pl.add_argument("report")
    pl.add_argument("--metric", choices=("marginal", "dgap"), default="marginal")
    pl.add_argument("-o", "--output", required=True)
    pl.set_defaults(func=cmd_plot)
    return ap


def main(argv=None) -> int:
    ns = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if ns.verbose else logging.WARNING)
    try:
        ns.func(ns)
    except (RegotError, OSError, ValueError) as exc:
        print(f"regot: error: {exc}", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
