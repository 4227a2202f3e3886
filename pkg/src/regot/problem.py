"""Problem instances, benchmark generators and the ROTB binary format.

A problem instance holds a cost matrix ``M`` (n x m), two strictly positive
probability vectors ``a`` and ``b``, and the entropic regularization ``eta``.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .exceptions import (
    DegenerateCostError,
    FormatError,
    TruncationError,
    ValidationError,
)

__all__ = [
    "ProblemInstance",
    "GeneratorSpec",
    "normalize_cost",
    "synthetic1_points",
    "gen_synthetic1",
    "gen_synthetic2",
    "generate",
    "save_problem",
    "load_problem",
]

MAGIC = b"ROTB"
VERSION = 1
_HEADER = struct.Struct("<4sBQQd")
MARGINAL_TOL = 1e-12
GENERATOR_KINDS = ("synth1-iid", "synth1-diff", "synth2", "file")


@dataclass(frozen=True, eq=False)
class ProblemInstance:
    """Entropic OT problem ``min <P, M> - eta * h(P)`` over couplings of ``a`` and ``b``."""

    M: np.ndarray
    a: np.ndarray
    b: np.ndarray
    eta: float
    name: str = field(default="", compare=False)

    def __post_init__(self):
        M = np.ascontiguousarray(self.M, dtype=np.float64)
        a = np.ascontiguousarray(self.a, dtype=np.float64)
        b = np.ascontiguousarray(self.b, dtype=np.float64)
        if M.ndim != 2 or a.ndim != 1 or b.ndim != 1:
            raise ValidationError("M must be 2-D and a, b 1-D")
        if M.shape != (a.size, b.size):
            raise ValidationError(f"M has shape {M.shape}, expected ({a.size}, {b.size})")
        if not np.all(np.isfinite(M)):
            raise ValidationError("M contains non-finite entries")
        if not (np.all(a > 0) and np.all(b > 0)):
            raise ValidationError("marginals must be strictly positive")
        if abs(a.sum() - 1.0) > MARGINAL_TOL or abs(b.sum() - 1.0) > MARGINAL_TOL:
            raise ValidationError("marginals must each sum to 1")
        eta = float(self.eta)
        if not (eta > 0 and np.isfinite(eta)):
            raise ValidationError(f"eta must be positive, got {self.eta!r}")
        for arr in (M, a, b):
            arr.setflags(write=False)
        object.__setattr__(self, "M", M)
        object.__setattr__(self, "a", a)
        object.__setattr__(self, "b", b)
        object.__setattr__(self, "eta", eta)

    @property
    def n(self) -> int:
        return self.a.size

    @property
    def m(self) -> int:
        return self.b.size

    @property
    def dim(self) -> int:
        """Length of the free dual vector ``(alpha, beta[:-1])``."""
        return self.n + self.m - 1

    def with_eta(self, eta: float) -> "ProblemInstance":
        return ProblemInstance(self.M, self.a, self.b, eta, name=self.name)

    def identical(self, other: "ProblemInstance") -> bool:
        """Bitwise equality of every stored field."""
        return (
            self.M.shape == other.M.shape
            and np.float64(self.eta).tobytes() == np.float64(other.eta).tobytes()
            and self.a.tobytes() == other.a.tobytes()
            and self.b.tobytes() == other.b.tobytes()
            and self.M.tobytes() == other.M.tobytes()
        )

    def __repr__(self):
        label = f"{self.name}, " if self.name else ""
        return f"ProblemInstance({label}n={self.n}, m={self.m}, eta={self.eta:g})"


@dataclass(frozen=True)
class GeneratorSpec:
    kind: str = "synth2"
    n: int = 64
    m: int = 64
    d: int = 2
    seed: int = 0
    path: str | None = None

    def __post_init__(self):
        if self.kind not in GENERATOR_KINDS:
            raise ValueError(f"unknown generator kind {self.kind!r}")
        if self.kind == "file":
            if not self.path:
                raise ValueError("kind='file' needs a path")
            return
        if self.n < 2 or self.m < 2:
            raise ValueError("n and m must both be at least 2")
        if self.d < 1:
            raise ValueError("d must be at least 1")

    def describe(self) -> str:
        if self.kind == "file":
            return f"file:{self.path}"
        extra = f",d={self.d},seed={self.seed}" if self.kind.startswith("synth1") else ""
        return f"{self.kind}(n={self.n},m={self.m}{extra})"


def normalize_cost(M) -> np.ndarray:
    """Scale ``M`` so that its largest entry is exactly one."""
    M = np.asarray(M, dtype=np.float64)
    top = M.max() if M.size else 0.0
    if not top > 0:
        raise DegenerateCostError("cost matrix has no strictly positive entry")
    out = M / top
    # x / x is exactly 1 in IEEE arithmetic, so the maximum is preserved
    return out


def _sq_dist(X, Y):
    diff = X[:, None, :] - Y[None, :, :]
    return np.einsum("ijk,ijk->ij", diff, diff)


def synthetic1_points(n, m, variant="iid", d=2, seed=0):
    """Source and target clouds of shape (n, d) and (m, d).

    ``variant="iid"`` draws both from N(0, 1); ``variant="diff"`` draws the
    target from N(1, 0.25), i.e. mean 1 and standard deviation 0.5.
    """
    if variant not in ("iid", "diff"):
        raise ValueError(f"unknown variant {variant!r}")
    rng = np.random.Generator(np.random.PCG64(seed))
    X = rng.standard_normal((n, d))
    Y = rng.standard_normal((m, d))
    if variant == "diff":
        Y = 1.0 + 0.5 * Y
    return X, Y


def gen_synthetic1(n, m, variant="iid", d=2, seed=0, eta=1e-3) -> ProblemInstance:
    """Gaussian point clouds with uniform weights and squared Euclidean cost."""
    if n < 2 or m < 2:
        raise ValueError("n and m must both be at least 2")
    X, Y = synthetic1_points(n, m, variant, d, seed)
    M = normalize_cost(_sq_dist(X, Y))
    a = np.full(n, 1.0 / n)
    b = np.full(m, 1.0 / m)
    return ProblemInstance(M, a, b, eta, name=f"synth1-{variant}")


def _normal_pdf(x, mean, var):
    return np.exp(-0.5 * (x - mean) ** 2 / var) / np.sqrt(2.0 * np.pi * var)


def gen_synthetic2(n, m, eta=1e-3) -> ProblemInstance:
    """Exponential source vs. two-component Gaussian mixture target on [0, 5]."""
    if n < 2 or m < 2:
        raise ValueError("n and m must both be at least 2")
    x = np.linspace(0.0, 5.0, n)
    y = np.linspace(0.0, 5.0, m)
    a = np.exp(-x)
    a /= a.sum()
    b = 0.2 * _normal_pdf(y, 1.0, 0.04) + 0.8 * _normal_pdf(y, 3.0, 0.25)
    b /= b.sum()
    M = normalize_cost((x[:, None] - y[None, :]) ** 2)
    return ProblemInstance(M, a, b, eta, name="synth2")


def generate(spec: GeneratorSpec, eta=1e-3) -> ProblemInstance:
    """Build the instance described by ``spec``.

    For ``kind="file"`` the stored eta is kept unless ``eta`` is given explicitly
    as something other than None.
    """
    if spec.kind == "file":
        p = load_problem(spec.path)
        return p if eta is None else p.with_eta(eta)
    eta = 1e-3 if eta is None else eta
    if spec.kind == "synth2":
        return gen_synthetic2(spec.n, spec.m, eta=eta)
    variant = spec.kind.split("-", 1)[1]
    return gen_synthetic1(spec.n, spec.m, variant, d=spec.d, seed=spec.seed, eta=eta)


def save_problem(p: ProblemInstance, path) -> None:
    header = _HEADER.pack(MAGIC, VERSION, p.n, p.m, p.eta)
    with open(path, "wb") as fh:
        fh.write(header)
        fh.write(p.a.astype("<f8").tobytes())
        fh.write(p.b.astype("<f8").tobytes())
        fh.write(p.M.astype("<f8").tobytes(order="C"))


def load_problem(path) -> ProblemInstance:
    raw = Path(path).read_bytes()
    if len(raw) < 5 or raw[:4] != MAGIC:
        raise FormatError(f"{path}: not a ROTB file")
    if raw[4] != VERSION:
        raise FormatError(f"{path}: unsupported ROTB version {raw[4]}")
    if len(raw) < _HEADER.size:
        raise TruncationError(f"{path}: header truncated")
    _, _, n, m, eta = _HEADER.unpack_from(raw)
    need = _HEADER.size + 8 * (n + m + n * m)
    if len(raw) < need:
        raise TruncationError(f"{path}: expected {need} bytes, found {len(raw)}")
    if len(raw) > need:
        raise FormatError(f"{path}: {len(raw) - need} trailing bytes")
    body = np.frombuffer(raw, dtype="<f8", offset=_HEADER.size)
    a = body[:n].astype(np.float64)
    b = body[n : n + m].astype(np.float64)
    M = body[n + m :].reshape(n, m).astype(np.float64)
    return ProblemInstance(M, a, b, eta, name=Path(path).stem)
