"""
Reusing the symbolic Cholesky analysis
======================================

The sparsity pattern of the Hessian approximation only changes on refresh
steps.  In between, the ordering and elimination tree can be kept and only
the numeric values recomputed.
"""

import time

import numpy as np

from regot import gen_synthetic1, numeric_factorize, symbolic_analyze, solve
from regot.dual import plan
from regot.sparsify import assemble, select_topk, topk_budget, update_values

p = gen_synthetic1(200, 200, "iid", seed=7, eta=0.01)
rng = np.random.default_rng(0)
x = 0.01 * rng.standard_normal(p.dim)

omega = select_topk(plan(x, p), topk_budget(0.02, p.n, p.m))
A = assemble(x, p, omega, tau=1e-3)
print(f"dimension {A.dim}, stored entries {A.nnz}")

t0 = time.perf_counter()
sym = symbolic_analyze(A)
t_sym = time.perf_counter() - t0
print(f"symbolic analysis: {1e3 * t_sym:.1f} ms, nnz(L) = {sym.nnz}")

# compare with the natural ordering: minimum degree keeps fill low
print("nnz(L) without reordering:", symbolic_analyze(A, ordering="natural").nnz)

# A nearby point gives new values on the same pattern
x2 = x + 1e-3 * rng.standard_normal(p.dim)
A2 = update_values(A, x2, p, tau=1e-3)
assert A2.pattern_id == sym.source_pattern_id

t0 = time.perf_counter()
F = numeric_factorize(sym, A2)
print(f"numeric refactorization: {1e3 * (time.perf_counter() - t0):.1f} ms")

b = rng.standard_normal(p.dim)
print("solve residual:", np.abs(A2.matvec(solve(F, b)) - b).max())
