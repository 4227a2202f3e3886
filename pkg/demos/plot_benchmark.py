"""
Error against wall time
=======================

Median timings over a few repeats at fixed iteration checkpoints, written as
CSV and drawn as an SVG with a log-scale error axis.  This is what
``regot bench`` does from the command line.
"""

import sys
from pathlib import Path

from regot.bench import BenchSpec, emit_csv, emit_svg_plot, run_benchmark
from regot.problem import GeneratorSpec

out = Path(sys.argv[1] if len(sys.argv) > 1 else ".")
spec = BenchSpec(generator=GeneratorSpec("synth2", n=128, m=128), eta=1e-3,
                 checkpoints=(5, 20, 50, 100), repeats=3)
reports = run_benchmark(spec)

for rep in reports:
    for row in rep.rows:
        print(f"{rep.algo:9s} {row.iter:4d}  {row.wall_ms:8.2f} ms  {row.marginal_error:.2e}")

emit_csv(reports, out / "bench.csv")
emit_svg_plot(reports, out / "bench.svg")
emit_svg_plot(reports, out / "bench_dgap.svg", metric="dgap")
print("wrote", out / "bench.csv", out / "bench.svg", out / "bench_dgap.svg")
