"""
Sinkhorn versus SPLR on a small-eta problem
===========================================

Both solvers start from the zero dual point on the 1-D Gaussian-mixture
problem.  At eta = 1e-3 Sinkhorn stalls around 1e-4 marginal error after 500
sweeps; the quasi-Newton method, helped early on by its Sinkhorn candidates,
gets below 1e-10 within the same budget.
"""

import numpy as np

from regot import SinkhornConfig, SplrConfig, gen_synthetic2, run_sinkhorn, run_splr
from regot.dual import plan

p = gen_synthetic2(128, 128, eta=1e-3)
x0 = np.zeros(p.dim)

# Run each method for a fixed budget and keep every iterate's error
_, tr_sk = run_sinkhorn(x0, p, SinkhornConfig(max_iter=500))
pt, tr_qn = run_splr(x0, p, SplrConfig(max_iter=500, tol=1e-10))

for name, tr in (("sinkhorn", tr_sk), ("splr", tr_qn)):
    last = tr.last
    print(f"{name:9s} {last.iter:4d} iterations  {last.wall_ms:8.1f} ms  "
          f"marginal error {last.marginal_error:.2e}  duality gap {last.duality_gap:.2e}")

# How often did the Sinkhorn candidate win on refresh steps?
picked = sum(e.chosen == "s" for e in tr_qn.events)
print(f"Sinkhorn candidate accepted on {picked} of {sum(e.refresh for e in tr_qn.events)} refresh steps")

# Transport cost of the entropic plan
T = plan(pt.x, p)
print(f"<T, M> = {(T * p.M).sum():.6f}")
