"""Multi-resolution random hill climbing.

A schedule of Gaussian low-pass operators, strongest at level L and the
identity at level 0, turns the statics objective into a sequence of
progressively rougher surfaces.  :func:`run_mrhc` chains the distinct minima
of each level into the starting population of the next;
:func:`level_complexity_experiment` instead analyses every level from fresh
random populations.
"""

from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass

import numpy as np

from .entropy import EntropyReport, estimate_entropy
from .objective import ObjectiveSpec
from .rhc import BasinTable, EmptyBasinTable, RhcConfig, run_rhc, sample_uniform
from .statics import StaticsProblem

CSV_HEADER = ("level", "mean_ce", "std_ce", "n_repeats")


@dataclass(frozen=True)
class SmoothingSchedule:
    """Level i > 0 smooths with a Gaussian of ``base_sigma * 2**(i-1)``
    samples; level 0 is the identity."""

    levels: int = 5
    base_sigma: float = 1.0

    def __post_init__(self):
        if self.levels < 0:
            raise ValueError("levels must be >= 0")
        if not self.base_sigma > 0:
            raise ValueError("base_sigma must be positive")

    def sigma(self, level: int) -> float:
        if not 0 <= level <= self.levels:
            raise ValueError(f"level {level} outside 0..{self.levels}")
        return 0.0 if level == 0 else self.base_sigma * 2.0 ** (level - 1)

    @property
    def operators(self) -> list[float]:
        """Kernel widths in execution order, level L first."""
        return [self.sigma(i) for i in range(self.levels, -1, -1)]


def smooth_objective(problem: StaticsProblem, level: int,
                     schedule: SmoothingSchedule | None = None) -> ObjectiveSpec:
    schedule = schedule or SmoothingSchedule()
    return problem.objective(schedule.sigma(level))


@dataclass
class LevelResult:
    level: int
    sigma: float
    table: BasinTable
    report: EntropyReport
    evaluations: int

    @property
    def starts(self) -> int:
        return self.table.population


def run_mrhc(problem: StaticsProblem, schedule: SmoothingSchedule, config: RhcConfig,
             workers: int = 1) -> list[LevelResult]:
    """Coarse-to-fine search, returned level L first.

    Level L descends from ``config.population`` uniform starts; every later
    level descends from the distinct minima found one level up.
    """
    out: list[LevelResult] = []
    starts = None
    for level in range(schedule.levels, -1, -1):
        spec = smooth_objective(problem, level, schedule)
        if starts is None:
            starts = sample_uniform(spec.bounds, config.population, config.seed)
        try:
            table = run_rhc(spec, config, workers=workers, starts=starts)
        except EmptyBasinTable as exc:
            raise EmptyBasinTable(f"MRHC level {level}: {exc}") from None
        out.append(LevelResult(level, schedule.sigma(level), table,
                               estimate_entropy(table), spec.evaluations))
        starts = table.representatives
    return out


@dataclass(frozen=True)
class LevelStat:
    level: int
    sigma: float
    mean_ce: float
    std_ce: float
    n_repeats: int
    ce: tuple[float, ...]
    n_hat: tuple[int, ...]
    failures: tuple[int, ...]
    evaluations: int = 0


def level_complexity_experiment(problem: StaticsProblem, schedule: SmoothingSchedule,
                                config: RhcConfig, repeats: int, workers: int = 1,
                                seeds=None) -> list[LevelStat]:
    """Complexity estimate per level, mean and standard deviation over
    ``repeats`` independent populations (seeds ``config.seed + r`` unless
    given explicitly)."""
    if repeats < 2:
        raise ValueError("repeats must be >= 2")
    if seeds is None:
        seeds = [config.seed + r for r in range(repeats)]
    seeds = list(seeds)
    if len(seeds) != repeats:
        raise ValueError("need one seed per repeat")
    stats = []
    for level in range(schedule.levels + 1):
        spec = smooth_objective(problem, level, schedule)
        ce, nh, fl = [], [], []
        for seed in seeds:
            cfg = RhcConfig(config.population, seed, config.descent,
                            config.cluster_radius_rel, config.cluster_value_tol_rel)
            table = run_rhc(spec, cfg, workers=workers)
            ce.append(estimate_entropy(table).c_e_hat)
            nh.append(table.n_hat)
            fl.append(table.failures)
        arr = np.array(ce)
        stats.append(LevelStat(level, schedule.sigma(level), float(arr.mean()),
                               float(arr.std(ddof=1)), repeats, tuple(ce), tuple(nh),
                               tuple(fl), spec.evaluations))
    return stats


def stats_csv(stats: list[LevelStat]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(CSV_HEADER)
    for s in stats:
        w.writerow([s.level, format(s.mean_ce, ".17g"), format(s.std_ce, ".17g"),
                    s.n_repeats])
    return buf.getvalue()


def gaussian_smoothed(spec: ObjectiveSpec, sigma: float, nodes: int = 40) -> ObjectiveSpec:
    """Gaussian blur of a one-dimensional objective, E[F(x + sigma Z)], by
    Gauss-Hermite quadrature.  ``sigma = 0`` returns ``spec`` itself."""
    if spec.dimension != 1:
        raise ValueError("gaussian_smoothed supports one-dimensional objectives")
    if sigma == 0:
        return spec
    z, w = np.polynomial.hermite.hermgauss(nodes)
    offsets = math.sqrt(2.0) * sigma * z
    weights = w / math.sqrt(math.pi)

    def f(X):
        P = X[:, 0:1] + offsets
        return spec.func(P.reshape(-1, 1)).reshape(P.shape) @ weights

    def g(X):
        P = X[:, 0:1] + offsets
        return (spec.gradients(P.reshape(-1, 1)).reshape(P.shape) @ weights)[:, None]

    params = dict(spec.parameters)
    params["sigma"] = float(sigma)
    return ObjectiveSpec(spec.kind, 1, spec.bounds, f, g, parameters=params)
