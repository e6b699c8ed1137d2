"""Depth-weighted entropy of basin probabilities.

For basins with probabilities p_i and minimum values y_i, the weights
``v_i = exp(-|y_i - y_min| / sigma)`` (sigma the mean absolute depth above the
global minimum) tilt p towards deep minima, and the complexity is the Shannon
entropy of the normalised product ``q_i = c v_i p_i``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .rhc import BasinTable

# q ln q -> 0 as q -> 0; below this the term is taken as zero.
Q_FLOOR = 1e-300


def depth_weights(values) -> tuple[np.ndarray, float, float]:
    """Return ``(v, sigma, y_min)`` for a set of minimum values."""
    y = np.asarray(values, dtype=float)
    if y.size == 0 or not np.all(np.isfinite(y)):
        raise ValueError("values must be non-empty and finite")
    y_min = float(y.min())
    depth = np.abs(y - y_min)
    sigma = float(np.mean(depth))
    if sigma == 0.0:
        return np.ones_like(y), 0.0, y_min
    return np.exp(-depth / sigma), sigma, y_min


def shannon(q) -> float:
    q = np.asarray(q, dtype=float)
    q = q[q > Q_FLOOR]
    return float(-np.sum(q * np.log(q))) + 0.0


def tilted(p, values) -> tuple[np.ndarray, np.ndarray, float]:
    """Normalised ``q = c v p``; returns ``(q, v, c)``."""
    p = np.asarray(p, dtype=float)
    v, _, _ = depth_weights(values)
    if v.shape != p.shape:
        raise ValueError("probabilities and values must have the same length")
    c = 1.0 / float(np.sum(v * p))
    return c * v * p, v, c


def exact_entropy(p, values) -> float:
    """Complexity of a landscape with known basin probabilities ``p``."""
    p = np.asarray(p, dtype=float)
    if p.ndim != 1 or p.size == 0 or np.any(p <= 0):
        raise ValueError("p must be a non-empty vector of positive probabilities")
    if abs(p.sum() - 1.0) > 1e-9:
        raise ValueError(f"p must sum to 1 (sums to {p.sum()!r})")
    q, _, _ = tilted(p, values)
    return shannon(q)


@dataclass
class EntropyReport:
    n_hat: int
    K: int
    failures: int
    counts: np.ndarray
    values: np.ndarray
    x: np.ndarray
    v: np.ndarray
    q_hat: np.ndarray
    sigma: float
    c: float
    y_min: float
    c_e_hat: float
    delta: float = float("nan")
    delta_sq: float = float("nan")
    delta_available: bool = False
    intervals: dict[str, float | None] = field(default_factory=dict)

    @property
    def ln_q_min(self) -> float:
        return float(np.log(max(float(self.q_hat.min()), Q_FLOOR)))


def entropy_from_counts(counts, values, K: int | None = None) -> EntropyReport:
    """Estimate from raw basin counts (zero counts are dropped)."""
    k = np.asarray(counts, dtype=np.int64)
    y = np.asarray(values, dtype=float)
    keep = k > 0
    k, y = k[keep], y[keep]
    if k.size == 0:
        raise ValueError("at least one basin with a positive count is required")
    K = int(k.sum()) if K is None else int(K)
    x = k / K
    v, sigma, y_min = depth_weights(y)
    w = v * x
    c = 1.0 / float(np.sum(w))
    q = c * w
    return EntropyReport(
        n_hat=int(k.size), K=K, failures=0, counts=k, values=y, x=x, v=v,
        q_hat=q, sigma=sigma, c=c, y_min=y_min, c_e_hat=shannon(q),
    )


def estimate_entropy(table: BasinTable, alphas=(0.10, 0.05)) -> EntropyReport:
    """Plug-in complexity estimate from a basin table, with error bound and
    confidence half-widths for each ``alpha``.

    x_i uses the full population K (failures included in the denominator);
    q is renormalised, so this only rescales c.
    """
    from .confidence import attach_intervals

    if table.n_hat < 1 or table.population < 1:
        raise ValueError("table must hold at least one minimum")
    report = entropy_from_counts(table.counts, table.values, K=table.population)
    report.failures = table.failures
    attach_intervals(report, alphas)
    return report


def max_entropy(n_hat: int) -> float:
    return math.log(n_hat) if n_hat > 0 else 0.0
