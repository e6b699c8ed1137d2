"""Sampling error of basin frequencies and of the complexity estimate."""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import NamedTuple

import numpy as np

from .entropy import EntropyReport, Q_FLOOR, depth_weights, exact_entropy, tilted
from .rhc import DOMAIN_ORACLE, substream

# Acklam's rational approximation to the inverse normal CDF
_A = (-3.969683028665376e01, 2.209460984245205e02, -2.759285104469687e02,
      1.383577518672690e02, -3.066479806614716e01, 2.506628277459239e00)
_B = (-5.447609879822406e01, 1.615858368580409e02, -1.556989798598866e02,
      6.680131188771972e01, -1.328068155288572e01)
_C = (-7.784894002430293e-03, -3.223964580411365e-01, -2.400758277161838e00,
      -2.549732539343734e00, 4.374664141464968e00, 2.938163982698783e00)
_D = (7.784695709041462e-03, 3.224671290700398e-01, 2.445134137142996e00,
      3.754408661907416e00)
_P_LOW = 0.02425


def _ppf_rational(p: float) -> float:
    if p < _P_LOW:
        q = math.sqrt(-2.0 * math.log(p))
        return ((((((_C[0] * q + _C[1]) * q + _C[2]) * q + _C[3]) * q + _C[4]) * q + _C[5])
                / ((((_D[0] * q + _D[1]) * q + _D[2]) * q + _D[3]) * q + 1.0))
    if p <= 1.0 - _P_LOW:
        q = p - 0.5
        r = q * q
        return ((((((_A[0] * r + _A[1]) * r + _A[2]) * r + _A[3]) * r + _A[4]) * r + _A[5]) * q
                / (((((_B[0] * r + _B[1]) * r + _B[2]) * r + _B[3]) * r + _B[4]) * r + 1.0))
    return -_ppf_rational(1.0 - p)


def normal_ppf(p: float) -> float:
    """Inverse standard-normal CDF.

    The rational approximation (relative error ~1e-9) is polished by one
    Halley step against ``erfc``, which brings it to near machine precision.
    """
    if not 0.0 < p < 1.0:
        raise ValueError("p must lie in (0, 1)")
    x = _ppf_rational(p)
    e = 0.5 * math.erfc(-x / math.sqrt(2.0)) - p
    u = e * math.sqrt(2.0 * math.pi) * math.exp(0.5 * x * x)
    return x - u / (1.0 + 0.5 * x * u)


def normal_quantile(alpha: float) -> float:
    """beta with Pr(|z| <= beta) = 1 - alpha for standard normal z."""
    if not 0.0 < alpha < 1.0:
        raise ValueError("alpha must lie in (0, 1)")
    # upper tail computed from alpha/2 directly to avoid cancellation
    return -normal_ppf(0.5 * alpha)


@dataclass(frozen=True)
class ConfidenceSpec:
    alpha: float

    def __post_init__(self):
        if not 0.0 < self.alpha < 1.0:
            raise ValueError("alpha must lie in (0, 1)")

    @property
    def beta(self) -> float:
        return normal_quantile(self.alpha)

    @property
    def level(self) -> str:
        return f"{1.0 - self.alpha:.2f}"


class BasinInterval(NamedTuple):
    x: float
    half_width: float
    normal_ok: bool

    @property
    def lower(self) -> float:
        return self.x - self.half_width

    @property
    def upper(self) -> float:
        return self.x + self.half_width


def basin_probability_interval(k: int, K: int, alpha: float) -> BasinInterval:
    """Frequency estimate of a basin probability and its half-width.

    ``normal_ok`` reports whether K x >= 5, the proxy for the normal
    approximation to the binomial being adequate.
    """
    if K < 1 or not 0 <= k <= K:
        raise ValueError("need 0 <= k <= K and K >= 1")
    x = k / K
    hw = normal_quantile(alpha) * math.sqrt(x * (1.0 - x) / K)
    return BasinInterval(x, hw, bool(K * x >= 5 and 0 < k < K))


def min_population_for(p: float) -> int:
    """Smallest K with K p >= 5."""
    if not 0.0 < p < 1.0:
        raise ValueError("p must lie in (0, 1)")
    k = 5.0 / p
    # guard against 5/p landing a hair above an integer
    return int(math.ceil(k - 1e-9 * k))


def entropy_variance(q, v, c: float, K: int) -> float:
    """Linearised variance of the complexity estimate with c held fixed:
    ``sum(c v (1 + ln q)^2 q) / K - (1 - C)^2 / K``."""
    q = np.asarray(q, dtype=float)
    v = np.asarray(v, dtype=float)
    if q.shape != v.shape or c <= 0 or K < 1:
        raise ValueError("q and v must match, c > 0, K >= 1")
    lq = np.log(np.maximum(q, Q_FLOOR))
    ce = float(-np.sum(q * lq))
    return float(np.sum(c * v * (1.0 + lq) ** 2 * q) / K - (1.0 - ce) ** 2 / K)


def entropy_variance_normalized(q, v, c: float, K: int) -> float:
    """Delta-method variance that also linearises the normalisation c(x).

    Differentiating ``q_i = w_i x_i / sum_j w_j x_j`` gives
    ``sum(c v q (ln q + C)^2) / K``.  It coincides with
    :func:`entropy_variance` when all v_i are equal.
    """
    q = np.asarray(q, dtype=float)
    v = np.asarray(v, dtype=float)
    lq = np.log(np.maximum(q, Q_FLOOR))
    ce = float(-np.sum(q * lq))
    return float(np.sum(c * v * q * (lq + ce) ** 2) / K)


class ErrorBound(NamedTuple):
    delta: float
    delta_sq: float
    available: bool


def error_bound_from(c: float, ln_q_min: float, ce_hat: float, K: int) -> ErrorBound:
    """``delta^2 = (c/K)(1 - (2 + ln q_min) C) - (1 - C)^2 / K``.

    Values within rounding noise of zero become zero.  A genuinely negative
    plug-in value is reported with ``available=False`` and ``delta = 0``
    rather than clamped silently; for inputs taken from one consistent
    report it cannot occur, since c >= 1 and -ln q_min >= C.
    """
    if K < 1:
        raise ValueError("K must be >= 1")
    d2 = (c / K) * (1.0 - (2.0 + ln_q_min) * ce_hat) - (1.0 - ce_hat) ** 2 / K
    # n equal basins give exactly zero; treat cancellation noise as zero
    scale = (c * (1.0 + abs(2.0 + ln_q_min) * ce_hat) + (1.0 - ce_hat) ** 2) / K
    if abs(d2) < 16.0 * np.finfo(float).eps * scale:
        d2 = 0.0
    if d2 < 0:
        return ErrorBound(0.0, d2, False)
    return ErrorBound(math.sqrt(d2), d2, True)


def entropy_error_bound(report: EntropyReport, K: int | None = None) -> ErrorBound:
    return error_bound_from(report.c, report.ln_q_min, report.c_e_hat,
                            report.K if K is None else K)


def attach_intervals(report: EntropyReport, alphas=(0.10, 0.05)) -> EntropyReport:
    """Fill ``delta`` and the ``beta * delta`` half-widths of a report."""
    bound = entropy_error_bound(report)
    report.delta = bound.delta
    report.delta_sq = bound.delta_sq
    report.delta_available = bound.available
    report.intervals = {}
    for a in alphas:
        spec = ConfidenceSpec(a)
        report.intervals[spec.level] = spec.beta * bound.delta if bound.available else None
    return report


# ---------------------------------------------------------------------------
# Monte Carlo oracle


@dataclass(frozen=True)
class OracleSummary:
    K: int
    replicates: int
    mean_x: np.ndarray
    var_x: np.ndarray
    mean_ce: float
    var_ce: float
    exact_ce: float


def entropy_rows(counts: np.ndarray, values: np.ndarray) -> np.ndarray:
    """Complexity estimate for every row of a (R, n) count matrix.

    Basins with zero count in a row are treated as not found: they do not
    enter sigma, y_min or the entropy of that row.
    """
    k = np.asarray(counts, dtype=float)
    y = np.broadcast_to(np.asarray(values, dtype=float), k.shape)
    found = k > 0
    n_found = found.sum(axis=1)
    y_min = np.where(found, y, np.inf).min(axis=1, keepdims=True)
    depth = np.where(found, np.abs(y - y_min), 0.0)
    sigma = depth.sum(axis=1, keepdims=True) / n_found[:, None]
    with np.errstate(divide="ignore", invalid="ignore"):
        v = np.where(sigma > 0, np.exp(-depth / np.where(sigma > 0, sigma, 1.0)), 1.0)
    w = np.where(found, v * k, 0.0)
    q = w / w.sum(axis=1, keepdims=True)
    with np.errstate(divide="ignore", invalid="ignore"):
        terms = np.where(q > Q_FLOOR, q * np.log(np.where(q > Q_FLOOR, q, 1.0)), 0.0)
    return -terms.sum(axis=1)


def multinomial_oracle(p, values, K: int, replicates: int, seed: int,
                       block: int = 10_000) -> OracleSummary:
    """Empirical moments of x and of the complexity estimate under ideal
    multinomial sampling of K starts into basins with probabilities p.

    Replicates are drawn in blocks of ``block``, block b from counter
    substream b, so the result does not depend on how blocks are scheduled.
    """
    p = np.asarray(p, dtype=float)
    values = np.asarray(values, dtype=float)
    if abs(p.sum() - 1.0) > 1e-9 or np.any(p <= 0):
        raise ValueError("p must be a positive probability vector")
    if replicates < 100:
        raise ValueError("replicates must be >= 100")
    sum_x = np.zeros(p.size)
    sum_x2 = np.zeros(p.size)
    ce_all = []
    done = 0
    b = 0
    while done < replicates:
        n = min(block, replicates - done)
        k = substream(seed, b, DOMAIN_ORACLE).multinomial(K, p, size=n)
        x = k / K
        sum_x += x.sum(axis=0)
        sum_x2 += (x * x).sum(axis=0)
        ce_all.append(entropy_rows(k, values))
        done += n
        b += 1
    ce = np.concatenate(ce_all)
    mean_x = sum_x / replicates
    var_x = (sum_x2 - replicates * mean_x**2) / (replicates - 1)
    return OracleSummary(K, replicates, mean_x, var_x, float(ce.mean()),
                         float(ce.var(ddof=1)), exact_entropy(p, values))


def theoretical_moments(p, values, K: int) -> dict[str, float]:
    """Closed-form predictions matching :class:`OracleSummary` fields."""
    q, v, c = tilted(p, values)
    return {
        "exact_ce": exact_entropy(p, values),
        "var_ce": entropy_variance(q, v, c, K),
        "var_ce_normalized": entropy_variance_normalized(q, v, c, K),
    }


__all__ = [
    "BasinInterval", "ConfidenceSpec", "ErrorBound", "OracleSummary",
    "attach_intervals", "basin_probability_interval", "depth_weights",
    "entropy_error_bound", "entropy_rows", "entropy_variance",
    "entropy_variance_normalized", "error_bound_from", "min_population_for",
    "multinomial_oracle", "normal_ppf", "normal_quantile", "theoretical_moments",
]
