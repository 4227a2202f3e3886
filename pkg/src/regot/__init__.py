"""Entropic-regularized optimal transport solvers.

Two solvers share one problem/dual layer: a log-domain Sinkhorn baseline and
SPLR, a sparse-plus-low-rank quasi-Newton method with amortized symbolic
factorization and Sinkhorn candidate iterates.
"""

from .problem import (
    GeneratorSpec,
    ProblemInstance,
    gen_synthetic1,
    gen_synthetic2,
    generate,
    load_problem,
    normalize_cost,
    save_problem,
)
from .dual import (
    DualPoint,
    GradientResult,
    duality_gap,
    fused_gradient,
    hessian_dense,
    marginal_error,
    naive_gradient,
    objective,
    plan,
)
from .sinkhorn import SinkhornConfig, run_sinkhorn, sinkhorn_step
from .sparsify import SparseSym, SparsityPattern, assemble, select_topk, update_values
from .cholesky import SymbolicFactor, NumericFactor, numeric_factorize, solve, symbolic_analyze
from .splr import SplrConfig, run_splr, splr_step
from .trace import SolverTrace, TraceRow
from . import exceptions

__version__ = "0.1.0"
