"""Nehari-manifold solver for a fractional Kirchhoff concave-convex problem in one dimension.

The main entry points are re-exported here; see the README for a tour.
"""

__version__ = "0.1.0"

from .discretize import Direction, Discretization, build_discretization  # noqa: E402
from .extremal import ExtremalEstimate, estimate_lambda_star  # noqa: E402
from .fibering import FiberingData, ProjectionResult, lambda_of_direction, project  # noqa: E402
from .problem import Domain, ProblemSpec, WeightDescriptor  # noqa: E402
from .solver import (NehariBranch, NehariSolution, RestrictedSetParams,  # noqa: E402
                     continuation_at_extremal, minimize_branch, solve_beyond_extremal,
                     solve_pair, verify_solution)

__all__ = [
    "Direction", "Discretization", "Domain", "ExtremalEstimate", "FiberingData",
    "NehariBranch", "NehariSolution", "ProblemSpec", "ProjectionResult",
    "RestrictedSetParams", "WeightDescriptor", "build_discretization",
    "continuation_at_extremal", "estimate_lambda_star", "lambda_of_direction",
    "minimize_branch", "project", "solve_beyond_extremal", "solve_pair", "verify_solution",
]
