"""Objective functions over bounded model spaces.

Every objective is evaluated in batches: a ``(B, N)`` array of models maps to
a ``(B,)`` array of values.  Single-model helpers (:func:`evaluate`,
:func:`gradient`) wrap the batch path.
"""

from __future__ import annotations

import math
import threading
from dataclasses import dataclass, field
from typing import Callable, Mapping, Sequence

import numpy as np

KINDS = (
    "rosenbrock",
    "griewank",
    "cosine-equal",
    "cosine-weighted",
    "quadratic",
    "statics",
    "smoothed-statics",
    "user-registered",
)

FD_EPS = 1e-7


class EvaluationFault(ArithmeticError):
    """An objective produced a non-finite value or gradient."""


@dataclass(frozen=True)
class Bounds:
    lower: np.ndarray
    upper: np.ndarray

    def __post_init__(self):
        lo = np.atleast_1d(np.asarray(self.lower, dtype=float)).copy()
        hi = np.atleast_1d(np.asarray(self.upper, dtype=float)).copy()
        if lo.ndim != 1 or lo.shape != hi.shape or lo.size < 1:
            raise ValueError("lower and upper must be 1-D and of equal length >= 1")
        if not (np.all(np.isfinite(lo)) and np.all(np.isfinite(hi))):
            raise ValueError("bounds must be finite")
        if np.any(lo >= hi):
            raise ValueError("lower[d] < upper[d] required for every dimension")
        lo.setflags(write=False)
        hi.setflags(write=False)
        object.__setattr__(self, "lower", lo)
        object.__setattr__(self, "upper", hi)

    @classmethod
    def box(cls, lo: float, hi: float, n_dims: int) -> "Bounds":
        return cls(np.full(n_dims, float(lo)), np.full(n_dims, float(hi)))

    @property
    def n_dims(self) -> int:
        return self.lower.size

    @property
    def width(self) -> np.ndarray:
        return self.upper - self.lower

    def contains(self, m) -> bool:
        m = np.asarray(m, dtype=float)
        return bool(np.all(m >= self.lower) and np.all(m <= self.upper))


class EvalCounter:
    """Thread-safe tally of point evaluations."""

    def __init__(self):
        self._lock = threading.Lock()
        self._count = 0

    def add(self, n: int) -> None:
        with self._lock:
            self._count += int(n)

    @property
    def count(self) -> int:
        return self._count

    def reset(self) -> None:
        with self._lock:
            self._count = 0


@dataclass(eq=False)
class ObjectiveSpec:
    """A function F mapping a bounded subset of R^N to R.

    ``func`` takes a ``(B, N)`` array and returns ``(B,)`` values.  ``grad``
    has the same calling convention and returns ``(B, N)``; when it is None
    the gradient is taken by central differences with a step proportional to
    the bound width of each dimension.

    ``canonical`` optionally maps models to a representative of their
    invariance class (F constant along some directions); clustering compares
    canonical forms.
    """

    kind: str
    dimension: int
    bounds: Bounds
    func: Callable[[np.ndarray], np.ndarray]
    grad: Callable[[np.ndarray], np.ndarray] | None = None
    parameters: Mapping[str, float] = field(default_factory=dict)
    counter: EvalCounter = field(default_factory=EvalCounter)
    canonical: Callable[[np.ndarray], np.ndarray] | None = None

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError(f"unknown objective kind {self.kind!r}")
        if self.dimension < 1 or self.bounds.n_dims != self.dimension:
            raise ValueError("dimension must match bounds length")

    @property
    def evaluations(self) -> int:
        return self.counter.count

    def _check(self, X) -> np.ndarray:
        X = np.asarray(X, dtype=float)
        if X.ndim != 2 or X.shape[1] != self.dimension:
            raise ValueError(
                f"expected models of dimension {self.dimension}, got shape {X.shape}"
            )
        return X

    def values(self, X) -> np.ndarray:
        """Evaluate a batch.  Non-finite results are returned, not raised."""
        X = self._check(X)
        self.counter.add(X.shape[0])
        return np.asarray(self.func(X), dtype=float)

    def gradients(self, X) -> np.ndarray:
        X = self._check(X)
        if self.grad is not None:
            self.counter.add(X.shape[0])
            return np.asarray(self.grad(X), dtype=float)
        return self.fd_gradients(X)

    def fd_gradients(self, X, eps: float = FD_EPS) -> np.ndarray:
        X = self._check(X)
        B, N = X.shape
        h = eps * self.bounds.width
        # rows: for each point, +h_d for every d, then -h_d for every d
        P = np.repeat(X[:, None, :], 2 * N, axis=1)
        idx = np.arange(N)
        P[:, idx, idx] += h
        P[:, N + idx, idx] -= h
        f = self.values(P.reshape(B * 2 * N, N)).reshape(B, 2 * N)
        return (f[:, :N] - f[:, N:]) / (2.0 * h)


def evaluate(spec: ObjectiveSpec, m) -> float:
    m = np.asarray(m, dtype=float)
    if m.shape != (spec.dimension,):
        raise ValueError(f"model must have {spec.dimension} coordinates")
    value = float(spec.values(m[None, :])[0])
    if not math.isfinite(value):
        raise EvaluationFault(f"{spec.kind} returned {value} at {m}")
    return value


def gradient(spec: ObjectiveSpec, m) -> np.ndarray:
    m = np.asarray(m, dtype=float)
    if m.shape != (spec.dimension,):
        raise ValueError(f"model must have {spec.dimension} coordinates")
    g = spec.gradients(m[None, :])[0]
    if not np.all(np.isfinite(g)):
        raise EvaluationFault(f"{spec.kind} gradient not finite at {m}")
    return g


# ---------------------------------------------------------------------------
# built-in test functions


def _rosenbrock(X):
    head, tail = X[:, :-1], X[:, 1:]
    return np.sum(100.0 * (tail - head**2) ** 2 + (1.0 - head) ** 2, axis=1)


def _rosenbrock_grad(X):
    head, tail = X[:, :-1], X[:, 1:]
    r = tail - head**2
    G = np.zeros_like(X)
    G[:, :-1] += -400.0 * head * r - 2.0 * (1.0 - head)
    G[:, 1:] += 200.0 * r
    return G


def rosenbrock(n_dims: int, bounds: Bounds | None = None) -> ObjectiveSpec:
    if n_dims < 2:
        raise ValueError("rosenbrock needs at least 2 dimensions")
    bounds = bounds or Bounds.box(-2.0, 2.0, n_dims)
    return ObjectiveSpec("rosenbrock", n_dims, bounds, _rosenbrock, _rosenbrock_grad)


def _griewank_scales(n):
    return np.sqrt(np.arange(1, n + 1, dtype=float))


def _griewank(X):
    s = _griewank_scales(X.shape[1])
    return 1.0 + np.sum(X**2, axis=1) / 4000.0 - np.prod(np.cos(X / s), axis=1)


def _griewank_grad(X):
    s = _griewank_scales(X.shape[1])
    c = np.cos(X / s)
    sn = np.sin(X / s)
    # product over j != i, computed without dividing by cos (which may vanish)
    n = X.shape[1]
    left = np.ones_like(c)
    right = np.ones_like(c)
    if n > 1:
        left[:, 1:] = np.cumprod(c[:, :-1], axis=1)
        right[:, :-1] = np.cumprod(c[:, :0:-1], axis=1)[:, ::-1]
    others = left * right
    return X / 2000.0 + sn / s * others


def griewank(n_dims: int, bounds: Bounds | None = None) -> ObjectiveSpec:
    bounds = bounds or Bounds.box(-10.0, 10.0, n_dims)
    return ObjectiveSpec("griewank", n_dims, bounds, _griewank, _griewank_grad)


def quadratic(n_dims: int, bounds: Bounds | None = None, weights=None) -> ObjectiveSpec:
    """F(x) = sum_d w_d x_d**2 (unit weights by default)."""
    bounds = bounds or Bounds.box(-5.0, 5.0, n_dims)
    w = np.ones(n_dims) if weights is None else np.asarray(weights, dtype=float)
    if w.shape != (n_dims,) or np.any(w <= 0):
        raise ValueError("weights must be positive, one per dimension")
    params = {f"w{d}": float(w[d]) for d in range(n_dims)} if weights is not None else {}
    return ObjectiveSpec(
        "quadratic",
        n_dims,
        bounds,
        lambda X: np.sum(w * X**2, axis=1),
        lambda X: 2.0 * w * X,
        parameters=params,
    )


def make_cosine_family(
    n_basins: int,
    weighting: str = "equal",
    bounds: Bounds | None = None,
    steepness: float = 0.5,
    center: float | None = None,
) -> ObjectiveSpec:
    """One-dimensional functions with ``n_basins`` basins of equal width.

    The oscillation ``1 + cos(2 pi n (x - l) / (u - l))`` has its maxima on
    the bounds and its minima at the cell centres, so every basin has width
    ``(u - l) / n``.  ``"equal"`` uses it directly (all minima at 0);
    ``"centered-decay"`` multiplies ``1 + oscillation`` by
    ``1 + steepness * (x - center)**2`` so that minima deepen towards the
    centre.
    """
    if n_basins < 1:
        raise ValueError("n_basins must be >= 1")
    bounds = bounds or Bounds.box(0.0, float(n_basins), 1)
    if bounds.n_dims != 1:
        raise ValueError("cosine family is one-dimensional")
    lo, width = float(bounds.lower[0]), float(bounds.width[0])
    k = 2.0 * math.pi * n_basins / width

    def osc(x):
        return 1.0 + np.cos(k * (x - lo))

    def dosc(x):
        return -k * np.sin(k * (x - lo))

    if weighting == "equal":
        return ObjectiveSpec(
            "cosine-equal",
            1,
            bounds,
            lambda X: osc(X[:, 0]),
            lambda X: dosc(X),
            parameters={"n_basins": float(n_basins)},
        )
    if weighting != "centered-decay":
        raise ValueError(f"unknown weighting {weighting!r}")
    xc = lo + 0.5 * width if center is None else float(center)
    s = float(steepness)

    def f(X):
        x = X[:, 0]
        return (1.0 + osc(x)) * (1.0 + s * (x - xc) ** 2)

    def g(X):
        return dosc(X) * (1.0 + s * (X - xc) ** 2) + (1.0 + osc(X)) * 2.0 * s * (X - xc)

    return ObjectiveSpec(
        "cosine-weighted",
        1,
        bounds,
        f,
        g,
        parameters={"n_basins": float(n_basins), "steepness": s, "center": xc},
    )


def user_objective(
    func: Callable[[np.ndarray], float],
    bounds: Bounds,
    grad: Callable[[np.ndarray], np.ndarray] | None = None,
    vectorized: bool = False,
) -> ObjectiveSpec:
    """Wrap a user function.  Without ``vectorized`` it is called per model."""
    if vectorized:
        f = func
    else:
        def f(X):
            return np.array([func(x) for x in X], dtype=float)
    g = None
    if grad is not None:
        g = grad if vectorized else (lambda X: np.array([grad(x) for x in X], dtype=float))
    return ObjectiveSpec("user-registered", bounds.n_dims, bounds, f, g)


BUILTIN = {
    "rosenbrock": lambda n, b=None: rosenbrock(n, b),
    "griewank": lambda n, b=None: griewank(n, b),
    "quadratic": lambda n, b=None: quadratic(n, b),
}


# ---------------------------------------------------------------------------
# Rosenbrock Hessian and its conditioning


@dataclass(frozen=True)
class TridiagonalMatrix:
    """Diagonal ``a`` (N), sub-diagonal ``b`` (N-1, rows 1..N-1) and
    super-diagonal ``c`` (N-1, rows 0..N-2)."""

    a: np.ndarray
    b: np.ndarray
    c: np.ndarray

    def dense(self) -> np.ndarray:
        return np.diag(self.a) + np.diag(self.b, -1) + np.diag(self.c, 1)

    @property
    def is_symmetric(self) -> bool:
        return bool(np.array_equal(self.b, self.c))


def rosenbrock_hessian(m) -> TridiagonalMatrix:
    """Tridiagonal Hessian coefficients from the standard closed form.

    Away from the diagonal line ``x_0 = x_1 = ...`` this form's interior
    diagonal and super-diagonal are index-shifted relative to the true
    second derivatives; at (1, ..., 1) both agree.
    """
    x = np.asarray(m, dtype=float)
    n = x.size
    if n < 2:
        raise ValueError("rosenbrock Hessian needs N >= 2")
    a = np.empty(n)
    a[0] = 2.0 + 1200.0 * x[0] ** 2 - 400.0 * x[1]
    a[1:-1] = 202.0 + 1200.0 * x[:-2] ** 2 - 400.0 * x[1:-1]
    a[-1] = 200.0
    b = -400.0 * x[:-1]
    c = -400.0 * x[1:]
    return TridiagonalMatrix(a, b, c)


def _sturm_count(d: np.ndarray, e2: np.ndarray, x: float, pivmin: float) -> int:
    """Number of eigenvalues below ``x`` (LDL^T inertia).  Pivots smaller
    than ``pivmin`` in magnitude are replaced by ``-pivmin``."""
    count = 0
    q = d[0] - x
    for i in range(d.size):
        if i:
            q = d[i] - x - e2[i - 1] / q
        if abs(q) < pivmin:
            q = -pivmin
        if q < 0:
            count += 1
    return count


def tridiagonal_eigenvalue(d, e, k: int, rtol: float = 1e-10) -> float:
    """k-th smallest eigenvalue (0-based) of a symmetric tridiagonal matrix by
    Sturm-sequence bisection."""
    d = np.asarray(d, dtype=float)
    e = np.asarray(e, dtype=float)
    e2 = e**2
    ae = np.abs(e)
    radius = np.zeros_like(d)
    radius[:-1] += ae
    radius[1:] += ae
    lo = float(np.min(d - radius))
    hi = float(np.max(d + radius))
    pivmin = np.finfo(float).tiny * max(1.0, float(e2.max()) if e2.size else 1.0)
    while hi - lo > rtol * max(abs(lo), abs(hi)) * 0.25 and hi - lo > 1e-300:
        mid = 0.5 * (lo + hi)
        if mid == lo or mid == hi:
            break
        if _sturm_count(d, e2, mid, pivmin) > k:
            hi = mid
        else:
            lo = mid
    return 0.5 * (lo + hi)


def hessian_condition_number(n_dims: int) -> float:
    """lambda_max / lambda_min of the Rosenbrock Hessian at (1, ..., 1)."""
    if n_dims < 2:
        raise ValueError("n_dims must be >= 2")
    H = rosenbrock_hessian(np.ones(n_dims))
    lam_min = tridiagonal_eigenvalue(H.a, H.b, 0)
    lam_max = tridiagonal_eigenvalue(H.a, H.b, n_dims - 1)
    return lam_max / lam_min


# ---------------------------------------------------------------------------
# slices


def slice_objective(spec: ObjectiveSpec, mode: str = "diagonal", axis_index: int = 0,
                    samples: int = 201) -> list[tuple[float, float]]:
    """Evaluate F along a line through the box.

    ``diagonal`` evaluates F(t, ..., t) with t spanning the first dimension's
    bounds; ``axis`` holds every coordinate at 0 except ``axis_index``.
    """
    if samples < 2:
        raise ValueError("samples must be >= 2")
    n = spec.dimension
    if mode == "diagonal":
        lo, hi = spec.bounds.lower[0], spec.bounds.upper[0]
        t = np.linspace(lo, hi, samples)
        X = np.repeat(t[:, None], n, axis=1)
    elif mode == "axis":
        if not 0 <= axis_index < n:
            raise ValueError("axis_index out of range")
        lo, hi = spec.bounds.lower[axis_index], spec.bounds.upper[axis_index]
        t = np.linspace(lo, hi, samples)
        X = np.zeros((samples, n))
        X[:, axis_index] = t
    else:
        raise ValueError(f"unknown slice mode {mode!r}")
    f = spec.values(X)
    return [(float(a), float(b)) for a, b in zip(t, f)]


def count_local_minima(values: Sequence[float]) -> int:
    """Strict interior local minima of a sampled 1-D curve."""
    v = np.asarray(values, dtype=float)
    return int(np.sum((v[1:-1] < v[:-2]) & (v[1:-1] < v[2:])))
