"""Random hill climbing: uniform random starts, parallel descent, clustering
of the converged endpoints into distinct minima."""

from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .descent import DescentBatch, DescentConfig, DescentResult, descend_batch
from .objective import Bounds, ObjectiveSpec

# Fixed work-unit size: the parallel split never changes which rows are
# descended together, so results are bit-identical for any worker count.
CHUNK = 256

# Domain tags keep the substreams of unrelated consumers of one seed apart.
DOMAIN_START = 0
DOMAIN_ORACLE = 1
DOMAIN_STATICS = 2


class EmptyBasinTable(RuntimeError):
    """No descent converged, so no minimum could be identified."""


def substream(seed: int, index: int, domain: int = DOMAIN_START) -> np.random.Generator:
    """Counter-based generator for substream ``index`` of ``seed``.

    The Philox key is the seed; the two high counter words hold the domain
    tag and the substream index, the low words count draws.
    """
    if seed < 0 or index < 0:
        raise ValueError("seed and index must be non-negative")
    bitgen = np.random.Philox(key=int(seed), counter=[0, 0, int(domain), int(index)])
    return np.random.Generator(bitgen)


def sample_uniform(bounds: Bounds, count: int, seed: int) -> np.ndarray:
    """``count`` models uniform on the box; row j comes from substream j."""
    if count < 1:
        raise ValueError("count must be >= 1")
    n = bounds.n_dims
    out = np.empty((count, n))
    for j in range(count):
        out[j] = substream(seed, j).random(n)
    return bounds.lower + out * bounds.width


@dataclass(frozen=True)
class RhcConfig:
    population: int = 1000
    seed: int = 0
    descent: DescentConfig = field(default_factory=DescentConfig)
    cluster_radius_rel: float = 1e-3
    cluster_value_tol_rel: float = 1e-6

    def __post_init__(self):
        if self.population < 1:
            raise ValueError("population must be >= 1")
        if not self.cluster_radius_rel > 0:
            raise ValueError("cluster_radius_rel must be positive")
        if self.cluster_value_tol_rel < 0:
            raise ValueError("cluster_value_tol_rel must be non-negative")
        if not 0 <= self.seed < 2**64:
            raise ValueError("seed must be an unsigned 64-bit integer")


@dataclass(frozen=True)
class Minimum:
    representative: np.ndarray
    value: float
    count: int


@dataclass
class BasinTable:
    minima: list[Minimum]
    population: int
    failures: int = 0
    descents: DescentBatch | None = field(default=None, repr=False, compare=False)

    @property
    def n_hat(self) -> int:
        return len(self.minima)

    @property
    def counts(self) -> np.ndarray:
        return np.array([m.count for m in self.minima], dtype=np.int64)

    @property
    def values(self) -> np.ndarray:
        return np.array([m.value for m in self.minima], dtype=float)

    @property
    def representatives(self) -> np.ndarray:
        return np.array([m.representative for m in self.minima])

    def same_as(self, other: "BasinTable") -> bool:
        """Exact equality of counts, values and representatives."""
        if (self.population, self.failures, self.n_hat) != (
                other.population, other.failures, other.n_hat):
            return False
        return all(
            a.count == b.count and a.value == b.value
            and np.array_equal(a.representative, b.representative)
            for a, b in zip(self.minima, other.minima)
        )


def _value_tolerance(values: np.ndarray, rel: float) -> float:
    # Scaled by the larger of the spread and the magnitude: when every
    # endpoint sits in one flat basin the spread alone collapses to the
    # descent's own round-off and would split that basin apart.
    if not values.size:
        return 1e-12
    scale = max(float(values.max() - values.min()), float(np.abs(values).max()))
    return max(rel * scale, 1e-12)


def cluster_points(points: np.ndarray, values: np.ndarray, weights: np.ndarray,
                   bounds: Bounds, radius_rel: float, value_tol: float) -> list[Minimum]:
    """Greedy clustering in ascending order of value.

    A point joins the first cluster whose representative lies within
    ``radius_rel * width`` in every dimension and within ``value_tol`` in
    value; otherwise it founds a new cluster and becomes its representative.
    """
    order = np.lexsort((np.arange(values.size), values))
    radius = radius_rel * bounds.width
    reps: list[np.ndarray] = []
    rep_vals: list[float] = []
    counts: list[int] = []
    rep_arr = np.empty((0, points.shape[1]))
    for i in order:
        p, v = points[i], values[i]
        if reps:
            near = np.all(np.abs(rep_arr - p) <= radius, axis=1)
            near &= np.abs(np.asarray(rep_vals) - v) <= value_tol
            hit = np.flatnonzero(near)
            if hit.size:
                counts[hit[0]] += int(weights[i])
                continue
        reps.append(p.copy())
        rep_vals.append(float(v))
        counts.append(int(weights[i]))
        rep_arr = np.asarray(reps)
    return [Minimum(r, v, k) for r, v, k in zip(reps, rep_vals, counts)]


def cluster_minima(results, spec: ObjectiveSpec, config: RhcConfig,
                   include_failures: bool = False) -> BasinTable:
    """Cluster descent endpoints into a :class:`BasinTable`.

    ``results`` is a :class:`DescentBatch` or a sequence of
    :class:`DescentResult`.  Non-converged endpoints are counted as failures
    unless ``include_failures`` is set, in which case they are clustered like
    the rest.
    """
    if isinstance(results, DescentBatch):
        batch = results
    else:
        results = list(results)
        batch = DescentBatch(
            np.array([r.start for r in results]),
            np.array([r.end for r in results]),
            np.array([r.value for r in results]),
            np.array([r.grad_norm for r in results]),
            np.array([r.iterations for r in results]),
            np.array([r.status for r in results]),
        )
    conv = batch.status == "converged"
    use = np.ones_like(conv) if include_failures else conv
    use = use & np.isfinite(batch.value)
    if not np.any(use):
        raise EmptyBasinTable("no converged descent to cluster")
    vals = batch.value[use]
    tol = _value_tolerance(vals, config.cluster_value_tol_rel)
    ends = batch.end[use]
    if spec.canonical is not None:
        ends = spec.canonical(ends)
    minima = cluster_points(ends, vals, np.ones(vals.size, dtype=np.int64),
                            spec.bounds, config.cluster_radius_rel, tol)
    return BasinTable(minima, len(batch), int(len(batch) - use.sum()), batch)


def recluster(table: BasinTable, spec: ObjectiveSpec, config: RhcConfig) -> BasinTable:
    """Cluster a table's representatives again, weighted by their counts."""
    vals = table.values
    tol = _value_tolerance(vals, config.cluster_value_tol_rel)
    minima = cluster_points(table.representatives, vals, table.counts, spec.bounds,
                            config.cluster_radius_rel, tol)
    return BasinTable(minima, table.population, table.failures)


def descend_many(spec: ObjectiveSpec, starts: np.ndarray, config: DescentConfig,
                 workers: int = 1) -> DescentBatch:
    starts = np.asarray(starts, dtype=float)
    chunks = [starts[i:i + CHUNK] for i in range(0, len(starts), CHUNK)]
    if workers <= 1 or len(chunks) == 1:
        parts = [descend_batch(spec, c, config) for c in chunks]
    else:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            parts = list(pool.map(lambda c: descend_batch(spec, c, config), chunks))
    return DescentBatch.concat(parts)


def run_rhc(spec: ObjectiveSpec, config: RhcConfig, workers: int = 1,
            starts: np.ndarray | None = None) -> BasinTable:
    """Descend from ``config.population`` uniform starts (or from ``starts``
    when given) and cluster the endpoints."""
    if starts is None:
        starts = sample_uniform(spec.bounds, config.population, config.seed)
    batch = descend_many(spec, starts, config.descent, workers)
    try:
        return cluster_minima(batch, spec, config)
    except EmptyBasinTable:
        raise EmptyBasinTable(
            f"all {len(batch)} descents failed on {spec.kind}; "
            "the landscape or descent configuration is unusable") from None


def results_from(table: BasinTable) -> list[DescentResult]:
    if table.descents is None:
        return []
    return table.descents.results()
