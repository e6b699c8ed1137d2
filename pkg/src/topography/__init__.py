"""Landscape complexity of optimisation problems.

Random hill climbing collects the local minima of an objective and the
fraction of random starts that reach each one; a depth-weighted entropy of
those fractions summarises how hard the landscape is to search.
"""

from .confidence import (
    ConfidenceSpec,
    basin_probability_interval,
    entropy_error_bound,
    entropy_variance,
    min_population_for,
    multinomial_oracle,
    normal_quantile,
)
from .descent import DescentConfig, DescentResult, descend, descend_batch
from .entropy import EntropyReport, entropy_from_counts, estimate_entropy, exact_entropy
from .mra import SmoothingSchedule, level_complexity_experiment, run_mrhc
from .objective import (
    Bounds,
    EvaluationFault,
    ObjectiveSpec,
    griewank,
    hessian_condition_number,
    make_cosine_family,
    quadratic,
    rosenbrock,
    slice_objective,
    user_objective,
)
from .rhc import BasinTable, EmptyBasinTable, RhcConfig, run_rhc
from .statics import StaticsGeometry, generate_problem, read_problem, write_problem

__version__ = "0.1.0"

__all__ = [
    "BasinTable", "Bounds", "ConfidenceSpec", "DescentConfig", "DescentResult",
    "EmptyBasinTable", "EntropyReport", "EvaluationFault", "ObjectiveSpec",
    "RhcConfig", "SmoothingSchedule", "StaticsGeometry", "basin_probability_interval",
    "descend", "descend_batch", "entropy_error_bound", "entropy_from_counts",
    "entropy_variance", "estimate_entropy", "exact_entropy", "generate_problem",
    "griewank", "hessian_condition_number", "level_complexity_experiment",
    "make_cosine_family", "min_population_for", "multinomial_oracle",
    "normal_quantile", "quadratic", "read_problem", "rosenbrock", "run_mrhc",
    "run_rhc", "slice_objective", "user_objective", "write_problem",
]
