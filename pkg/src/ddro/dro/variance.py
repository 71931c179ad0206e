"""Worst-case variance over Wasserstein balls.

Two problems live here.  For a scalar sample with a known mean ``eta`` the
largest second moment about ``eta`` over a 2-Wasserstein ball of radius
``eps`` (restricted to laws with mean ``eta``) has the closed form

    (sqrt(s2 - d^2) + sqrt(eps^2 - d^2))^2,    d = zbar - eta,

and is infeasible when ``eps < |d|``.  For a linear portfolio loss the
decision-dependent variance DRO reduces to minimizing
``(std(<x, xi>) + eps * ||x||_2)^2`` over the simplex.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .. import conic
from ..conic import ProgramBuilder
from ..core import (DDROError, AmbiguitySpec, Decision, SampleSet, SolveResult, Status,
                    SupportKind, UnsupportedConfiguration, failed_result,
                    project_to_simplex, validate_sample)
from ..transport import DiscreteDistribution1D


class InfeasibleRadius(DDROError, ValueError):
    """The ball around the sample contains no law with the prescribed mean."""


@dataclass(frozen=True)
class VarianceEstimateInput:
    atoms: DiscreteDistribution1D
    eta: float
    epsilon: float

    def __post_init__(self):
        if not self.epsilon >= 0:
            raise ValueError(f"radius must be >= 0, got {self.epsilon}")
        if not math.isfinite(self.eta):
            raise ValueError("eta must be finite")

    @property
    def zbar(self) -> float:
        return self.atoms.mean

    @property
    def sigma2_hat(self) -> float:
        """Empirical second moment about ``eta`` (not about the sample mean)."""
        return float(self.atoms.weights @ (self.atoms.atoms - self.eta) ** 2)

    @property
    def gap(self) -> float:
        return self.zbar - self.eta


def _check_radius(inp: VarianceEstimateInput) -> tuple[float, float]:
    d = inp.gap
    # the mean shift needs at least |d| of transport; allow for rounding in zbar
    scale = max(abs(inp.eta), float(np.abs(inp.atoms.atoms).max()))
    if inp.epsilon < abs(d) - 1e-12 * max(abs(d), scale):
        raise InfeasibleRadius(f"radius {inp.epsilon} is below the mean gap {abs(d)}")
    # sigma2_hat = var + d^2 >= d^2; clamp rounding
    return d, max(inp.sigma2_hat - d * d, 0.0)


def worst_case_variance_known_mean(inp: VarianceEstimateInput) -> float:
    d, v = _check_radius(inp)
    slack = max(inp.epsilon**2 - d * d, 0.0)
    return (math.sqrt(v) + math.sqrt(slack)) ** 2


def worst_case_variance_dual_numeric(inp: VarianceEstimateInput, tol: float = 1e-13) -> float:
    """Minimize the scalar dual ``eps^2 + b (eta - zbar) + s2 + eps sqrt(b^2 + 4 b (eta - zbar) + 4 s2)``.

    With ``c = b - 2 d`` the objective is ``C + c (-d) + eps sqrt(c^2 + 4 v)``
    where ``v = s2 - d^2``.  It is convex in ``c``; the search runs over
    ``u in (-1, 1)`` with ``c = S u / (1 - u^2)`` so that an optimum at
    infinity (``eps = |d|``) is reached as ``u -> +-1``.
    """
    d, v = _check_radius(inp)
    eps = inp.epsilon
    s2 = inp.sigma2_hat
    if eps == 0.0:
        return s2
    const = eps * eps + s2 - 2.0 * d * d
    dd = -d  # coefficient of c, i.e. eta - zbar
    scale = 2.0 * max(math.sqrt(v), eps, abs(d))

    def objective(u: float) -> float:
        c = scale * u / (1.0 - u * u)
        root = math.sqrt(c * c + 4.0 * v)
        lin = c * dd
        if lin >= 0.0:
            return const + lin + eps * root
        # eps*root + lin cancels when eps ~ |d| and |c| is large
        return const + ((eps * eps - dd * dd) * c * c + 4.0 * eps * eps * v) / (eps * root - lin)

    edge = 1.0 - 1e-15
    res = conic.golden_section_min(objective, -edge, edge, tol=tol, max_iter=2000)
    return res.minimum


def solve_variance_wdroa_linear(sample: SampleSet, amb: AmbiguitySpec) -> SolveResult:
    """Decision-dependent variance DRO for the linear loss ``<x, xi>`` (p = q = 2).

    The objective ``(std + eps ||x||_2)^2`` has a nonnegative convex base, so
    the base is minimized as an SOCP and squared.  ``tau`` of the returned
    decision carries the sample mean of the portfolio return.
    """
    if amb.p != 2 or amb.q != 2.0:
        raise UnsupportedConfiguration("the variance model is wired for p = q = 2 only")
    if amb.support.kind is not SupportKind.FULL_SPACE:
        raise UnsupportedConfiguration("the variance model needs the full-space support")
    validate_sample(sample, amb.support)
    n, m = sample.n_scenarios, sample.dim
    centred = (sample.scenarios - sample.scenarios.mean(axis=0)) / math.sqrt(n)

    b = ProgramBuilder()
    x = b.add_var("x", m, lb=0.0)
    t_std = int(b.add_var("t_std", lb=0.0)[0])
    t_norm = int(b.add_var("t_norm", lb=0.0)[0])
    b.add_eq(x, 1.0, 1.0)
    b.add_soc([(x, row, 0.0) for row in centred], ([t_std], [1.0], 0.0))
    b.add_norm_epigraph(x, t_norm)
    b.set_objective([t_std, t_norm], [1.0, amb.epsilon])
    sol = conic.solve_with_fallback(b.build())
    if sol.status is not Status.OPTIMAL:
        return failed_result(Status.NUMERICAL_LIMIT, sol.iterations)
    xv = project_to_simplex(sol.values[x])
    if xv is None:
        return failed_result(Status.NUMERICAL_LIMIT, sol.iterations)
    port = sample.scenarios @ xv
    # re-evaluate at the projected point rather than trusting the epigraph slack
    base = float(np.std(port)) + amb.epsilon * float(np.linalg.norm(xv))
    return SolveResult(Decision(xv, float(port.mean())), base * base, Status.OPTIMAL, sol.iterations)
