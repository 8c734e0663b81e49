"""Aggregated Tikhonov and rational Krylov (RatCG) regularization."""

from .classical import (AlphaSchedule, ScheduleError, SolveTrace, cgne, eval_g, eval_g_hat,
                        iterated_tikhonov, sigma, sigma_hat, tikhonov)
from .linop import DenseOperator, DiagonalOperator, DimensionError, LinearOperator
from .problems import InverseProblem, NoiseSpec, make_diagonal_problem, make_gravity_problem
from .ratkrylov import (AggregationResult, aggregate, detect_breakdown, factorized_aggregate,
                        factorized_ratcg, ratcg)
from .stopping import (DataConditionError, DiscrepancyConfig, ExhaustionError, make_schedule,
                       run_with_discrepancy)

__version__ = "0.1.0"
