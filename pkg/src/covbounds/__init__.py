"""Bounds on causal effects of a binary treatment when a binary covariate is available."""

__version__ = "0.1.0"

from .closedform import (
    BoundsInterval,
    ExpressionSet,
    averaged_bounds,
    base_bounds,
    compose_rd,
    eval_expression_set,
    get_expression_set,
    mirror_set,
)
from .dist import (
    ObservedDistribution,
    StructuralTruth,
    condition_on,
    load_distribution,
    marginalize_out,
    pushforward_observed,
)
from .engine import (
    Estimand,
    InfeasibleDistributionError,
    backdoor_rd,
    ca_bounds,
    cm_bounds,
    co_bounds,
    compute_bounds,
    model_constraint_violations,
    pointwise_sharpness_check,
    uniform_sharpness_check,
)
from .lp import LinearProgram, Sense, Status, solve_lp
from .model import CausalModel, builtin_model, load_model, parameterize
from .sim import run_simulation, sample_truth, summarize

__all__ = [name for name in dir() if not name.startswith("_")]
