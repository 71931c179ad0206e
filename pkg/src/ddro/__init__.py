"""Wasserstein distributionally robust mean-CVaR portfolios.

Two ambiguity models are provided: the standard ball around the empirical
law of the scenarios, and a decision-dependent ball around the empirical law
of the loss values whose radius scales with the loss's Lipschitz constant.
"""

from .core import (FULL_SPACE, LIMITED_LOSS, AmbiguitySpec, DDROError, Decision,
                   DimensionMismatch, NonFinite, RiskConfig, SampleSet, SolveResult, Status,
                   SupportKind, SupportSpec, SupportViolation, UnsupportedConfiguration,
                   read_scenarios_csv, seeded_rng, write_scenarios_csv)
from .dro import (InfeasibleRadius, VarianceEstimateInput, solve_saa, solve_variance_wdroa_linear,
                  solve_wdroa, solve_wdros, wdroa_closed_form_value,
                  worst_case_variance_dual_numeric, worst_case_variance_known_mean)
from .losses import (PiecewiseMaxAffineLoss, comprehensive_oos_objective, cvar_empirical,
                     cvar_loss, linear_loss, portfolio_oos_objective)
from .transport import (DiscreteDistribution1D, best_case_mean_1d, discrete_wasserstein_p,
                        discrete_wasserstein_p_nd, worst_case_mean_1d)

__version__ = "0.1.0"
