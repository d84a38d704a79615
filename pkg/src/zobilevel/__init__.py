"""Zeroth-order stochastic bilevel optimization toolkit.

Solves bilevel programs min_x f(x, y*(x)) s.t. y*(x) = argmin_y g(x, y) using
only noisy function-value queries: Gaussian-smoothing estimators for the
required first and second partial derivatives, an SGD subroutine for the
Hessian-inverse-vector product, a double-loop projected solver with schedules
for three outer-convexity regimes, and a statistical verification suite that
checks every closed-form guarantee on quadratic fixtures.
"""

from .errors import (ConfigurationError, DivergenceError, InvalidParameterError,
                     NumericError, SingularMatrixError, ZoBilevelError)
from .problems import (BlockPoint, FeasibleSet, NoiseModel, ProblemConstants,
                       QuadraticBilevel, ValueOracle, function_oracle,
                       random_quadratic_bilevel)
from .smoothing import (Estimate, SmoothingParams, estimate_grad_x,
                        estimate_grad_y, estimate_hess_xy,
                        estimate_hess_xy_action, estimate_hess_yy_action)
from .szhia import (SzhiaConfig, SzhiaResult, max_step_size,
                    mean_square_stable_gamma, run_szhia, run_szhia_ensemble)
from .verify import (BoundBundle, RateFit, check_hypergradient, check_inner_sgd,
                     check_moment_bounds, check_rates, check_smoothing_bounds,
                     check_stein, check_szhia, fit_rate)
from .zdsba import (REGIMES, RunRecord, Schedule, make_schedule, run_zdsba,
                    run_zdsba_ensemble, schedule_for_problem)

__version__ = "0.1.0"

__all__ = [
    "BlockPoint", "BoundBundle", "ConfigurationError", "DivergenceError",
    "Estimate", "FeasibleSet", "InvalidParameterError", "NoiseModel",
    "NumericError", "ProblemConstants", "QuadraticBilevel", "RateFit",
    "REGIMES", "RunRecord", "Schedule", "SingularMatrixError", "SmoothingParams",
    "SzhiaConfig", "SzhiaResult", "ValueOracle", "ZoBilevelError",
    "check_hypergradient", "check_inner_sgd", "check_moment_bounds",
    "check_rates", "check_smoothing_bounds", "check_stein", "check_szhia",
    "estimate_grad_x", "estimate_grad_y", "estimate_hess_xy",
    "estimate_hess_xy_action", "estimate_hess_yy_action", "fit_rate",
    "function_oracle", "make_schedule", "max_step_size",
    "mean_square_stable_gamma",
    "random_quadratic_bilevel", "run_szhia", "run_szhia_ensemble",
    "run_zdsba", "run_zdsba_ensemble", "schedule_for_problem",
]
