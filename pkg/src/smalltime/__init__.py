"""smalltime: a numerical laboratory for the small-time behavior of double
stochastic integrals and for pricing and hedging under gamma constraints."""

from .matcore import (DomainError, GammaBand, SymMatrix, dpe_operator_f,
                      dpe_operator_fhat, eigen_extremes, jacobi_eigensystem,
                      lil_normalizer, operator_norm, support_function)
from .paths import (BrownianBundle, BundleSpec, TimeGrid, ergodic_grid,
                    geometric_grid, make_grid, refine_bisect, rotate_bundle,
                    sample_bundle, uniform_grid, union_grid)
from .stochint import (INTEGRAND_CATALOG, DoubleIntegralTrace, IntegrandSpec,
                       MartingaleDecomposition, VectorSpec, catalog_integrand,
                       closed_form_constant, closed_form_trace, drift_integral,
                       integrate_double, integrate_double_martingale,
                       unit_bound_names)
from .lilab import (ErgodicReport, Example36Report, GridMismatchError,
                    LilEstimate, MomentReport, TailBoundReport,
                    conditional_moment_fn, ergodic_liminf, example36_diag,
                    example36_rate, moment_dominance, moment_identity,
                    optimal_tail_lambda, ratio_sup, tail_bound_check,
                    tail_bound_value)
from .market import (MarketParams, Payoff, bs_price, call, face_lift,
                     payoff_from_csv, piecewise_linear, put, simulate_gbm,
                     tabulated)
from .dpe import (DpeSolution, OutOfGridError, PdeGrid, StabilityError,
                  greeks, solve_dpe)
from .hedge import (STRATEGY_CATALOG, GapReport, HedgeReport, StrategySpec,
                    replication_gap, simulate_hedge, strategy_from_catalog)

__version__ = "0.1.0"
