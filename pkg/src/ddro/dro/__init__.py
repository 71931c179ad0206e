"""Portfolio DRO solvers and the variance model."""

from ..core import AmbiguitySpec, RiskConfig, SampleSet, SolveResult
from .portfolio import (check_portfolio_ambiguity, loss_supremum, solve_saa, solve_wdroa,
                        solve_wdros, wdroa_closed_form_value)
from .variance import (InfeasibleRadius, VarianceEstimateInput, solve_variance_wdroa_linear,
                       worst_case_variance_dual_numeric, worst_case_variance_known_mean)


def solve(sample: SampleSet, risk: RiskConfig, amb: AmbiguitySpec) -> SolveResult:
    """Dispatch on ``amb.decision_dependent``."""
    if amb.decision_dependent:
        return solve_wdroa(sample, risk, amb)
    return solve_wdros(sample, risk, amb)


__all__ = [
    "InfeasibleRadius", "VarianceEstimateInput", "check_portfolio_ambiguity", "loss_supremum",
    "solve", "solve_saa", "solve_variance_wdroa_linear", "solve_wdroa", "solve_wdros", "wdroa_closed_form_value",
    "worst_case_variance_dual_numeric", "worst_case_variance_known_mean",
]
