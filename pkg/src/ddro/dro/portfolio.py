"""SAA, standard (WDROS) and decision-dependent (WDROA) mean-CVaR portfolios.

Supported ambiguity configurations:

===============  ======  ==================================================
support          order   formulation
===============  ======  ==================================================
FULL_SPACE       p = 1   LP/SOCP: SAA objective + eps * Lipschitz constant
                         (standard and decision-dependent coincide)
FULL_SPACE       p = 2   WDROA: SOCP, same regularized objective;
                         WDROS: quadratic-over-lambda constraints, solved by
                         a search over lambda (or jointly as one SOCP)
LIMITED_LOSS     p = 1   WDROA: LP + cap at the loss supremum;
                         WDROS: LP with per-scenario support multipliers
===============  ======  ==================================================

Any ground norm q in {1, 2, inf} is accepted; the dual norm of x enters
through the Lipschitz constant.
"""

from __future__ import annotations

import dataclasses
import math
from typing import Optional

import numpy as np

from .. import conic
from ..conic import ProgramBuilder
from ..core import (AmbiguitySpec, Decision, RiskConfig, SampleSet, SolveResult,
                    Status, SupportKind, SupportSpec, UnsupportedConfiguration,
                    dual_index, failed_result, project_to_simplex, validate_sample)
from ..losses import PiecewiseMaxAffineLoss, cvar_loss, lipschitz_norm
from ..transport import DiscreteDistribution1D, worst_case_mean_1d

LAMBDA_FLOOR = 1e-12
LAMBDA_GRID_POINTS = 25
LAMBDA_REL_TOL = 1e-5


class _Layout:
    """Column indices of the shared portfolio variables."""

    def __init__(self, b: ProgramBuilder, n_scen: int, m: int):
        self.x = b.add_var("x", m, lb=0.0)
        self.tau = int(b.add_var("tau")[0])
        self.s = b.add_var("s", n_scen)
        b.add_eq(self.x, 1.0, 1.0)
        b.set_objective(self.s, 1.0 / n_scen)


def _check_inputs(sample: SampleSet, support: SupportSpec) -> None:
    if support.kind is SupportKind.INTERVAL_1D:
        raise UnsupportedConfiguration("portfolio solvers need FULL_SPACE or LIMITED_LOSS support")
    validate_sample(sample, support)


def _piece_rows(b: ProgramBuilder, lay: _Layout, loss: PiecewiseMaxAffineLoss,
                scenarios: np.ndarray, extra=None) -> list[int]:
    """``a_k <x, xi_i> + b_k tau (+ extra(i, k)) <= s_i``; returns the row numbers."""
    rows = []
    for i, xi in enumerate(scenarios):
        for k in range(loss.n_pieces):
            idx = [*lay.x, lay.tau, lay.s[i]]
            coefs = [*(loss.a[k] * xi), loss.b[k], -1.0]
            if extra is not None:
                e_idx, e_coefs = extra(i, k)
                idx += list(e_idx)
                coefs += list(e_coefs)
            rows.append(b.n_ineq)
            b.add_le(idx, coefs, 0.0)
    return rows


def _dual_norm_le(b: ProgramBuilder, coords: list[tuple], bound: int, q_dual: float) -> None:
    """``||(e_1, ..., e_m)||_{q_dual} <= v[bound]`` for linear forms ``e_j = (idx, coefs)``."""
    if q_dual == 2.0:
        b.add_soc([(idx, coefs, 0.0) for idx, coefs in coords], ([bound], [1.0], 0.0))
    elif math.isinf(q_dual):
        for idx, coefs in coords:
            b.add_le([*idx, bound], [*coefs, -1.0], 0.0)
            b.add_le([*idx, bound], [*(-np.asarray(coefs)), -1.0], 0.0)
    else:
        u = b.add_var("u_abs", len(coords))
        for j, (idx, coefs) in enumerate(coords):
            b.add_le([*idx, u[j]], [*coefs, -1.0], 0.0)
            b.add_le([*idx, u[j]], [*(-np.asarray(coefs)), -1.0], 0.0)
        b.add_le([*u, bound], [*np.ones(len(coords)), -1.0], 0.0)


def _x_norm_bound(b: ProgramBuilder, lay: _Layout, q: float, scale: float = 1.0) -> int:
    """New variable t with ``||scale * x||_{q*} <= t``."""
    t = int(b.add_var("t", lb=0.0)[0])
    _dual_norm_le(b, [([j], [scale]) for j in lay.x], t, dual_index(q))
    return t


def _finish(sol: conic.ConicSolution, lay: _Layout, value: Optional[float] = None,
            lambda_star: Optional[float] = None, iterations: Optional[int] = None,
            auxiliary: Optional[dict] = None) -> SolveResult:
    iters = sol.iterations if iterations is None else iterations
    if sol.status is not Status.OPTIMAL:
        status = sol.status if sol.status is Status.INFEASIBLE else Status.NUMERICAL_LIMIT
        return failed_result(status, iters)
    x = project_to_simplex(sol.values[lay.x])
    if x is None:
        return failed_result(Status.NUMERICAL_LIMIT, iters)
    decision = Decision(x, sol.values[lay.tau])
    return SolveResult(decision, sol.objective if value is None else value, Status.OPTIMAL,
                       iters, lambda_star, auxiliary or {})


def solve_saa(sample: SampleSet, risk: RiskConfig) -> SolveResult:
    """Minimize the empirical mean of the two-piece CVaR loss over the simplex."""
    _check_inputs(sample, SupportSpec.full_space())
    loss = cvar_loss(risk)
    b = ProgramBuilder()
    lay = _Layout(b, sample.n_scenarios, sample.dim)
    _piece_rows(b, lay, loss, sample.scenarios)
    return _finish(conic.solve_with_fallback(b.build()), lay)


def check_portfolio_ambiguity(amb: AmbiguitySpec) -> None:
    kind = amb.support.kind
    if kind is SupportKind.FULL_SPACE and amb.p in (1, 2):
        return
    if kind is SupportKind.LIMITED_LOSS and amb.p == 1:
        return
    raise UnsupportedConfiguration(
        f"no reformulation wired for p={amb.p} with {kind.value} support "
        "(supported: p in {1, 2} on the full space, p = 1 on the limited-loss support)"
    )


def loss_supremum(loss: PiecewiseMaxAffineLoss, d: Decision, support: SupportSpec) -> float:
    """``sup_{xi in support} F(x, tau, xi)``; finite only when returns are bounded below."""
    x = d.x
    if support.kind is SupportKind.FULL_SPACE:
        lo_ret = -math.inf if np.any(x != 0) else 0.0
        hi_ret = math.inf if np.any(x != 0) else 0.0
    elif support.kind is SupportKind.LIMITED_LOSS:
        # <x, xi> with xi >= -1
        lo_ret = -math.inf if np.any(x < 0) else -float(x[x > 0].sum())
        hi_ret = math.inf if np.any(x > 0) else float(-x[x < 0].sum())
    else:
        raise UnsupportedConfiguration("loss supremum needs a vector support")
    best = -math.inf
    for a_k, b_k in zip(loss.a, loss.b):
        for r in (lo_ret, hi_ret):
            val = b_k * d.tau if a_k == 0.0 else a_k * r + b_k * d.tau
            best = max(best, val)
    return best


def wdroa_closed_form_value(sample: SampleSet, risk: RiskConfig, d: Decision,
                            amb: AmbiguitySpec) -> float:
    """Worst-case expectation over the decision-dependent ball at fixed ``(x, tau)``.

    The ball lives on the line, around the empirical law of the loss values,
    with radius ``eps * gamma``.  For p = 1 the worst mean is the empirical
    mean plus the radius, capped at the loss supremum; for unbounded loss
    images it is the mean plus the radius for every p.
    """
    loss = cvar_loss(risk)
    vals = loss.values(d.x, d.tau, sample.scenarios)
    mean = float(vals.mean())
    if amb.epsilon == 0.0:
        return mean
    radius = amb.epsilon * lipschitz_norm(loss, d.x, amb.q)
    sup_f = loss_supremum(loss, d, amb.support)
    if amb.p == 1:
        return min(mean + radius, sup_f)
    if math.isinf(sup_f):
        return mean + radius
    return worst_case_mean_1d(DiscreteDistribution1D.uniform(vals), radius, amb.p,
                              SupportSpec.interval(-math.inf, sup_f))


def _min_loss_supremum(loss: PiecewiseMaxAffineLoss, support: SupportSpec, m: int) -> tuple[float, float]:
    """``min_tau sup_xi F`` over the simplex on the limited-loss support; returns (value, tau).

    Every simplex point reaches <x, xi> = -1, so the supremum depends on tau only.
    """
    probe = Decision(np.full(m, 1.0 / m), 0.0)
    if not math.isfinite(loss_supremum(loss, probe, support)):
        return math.inf, 0.0
    b = ProgramBuilder()
    tau = int(b.add_var("tau")[0])
    z = int(b.add_var("z")[0])
    for a_k, b_k in zip(loss.a, loss.b):
        b.add_le([tau, z], [b_k, -1.0], a_k)  # -a_k + b_k tau <= z
    b.set_objective(z, 1.0)
    sol = conic.solve_with_fallback(b.build())
    if sol.status is not Status.OPTIMAL:
        return math.inf, 0.0
    return sol.objective, float(sol.values[tau])


def solve_wdroa(sample: SampleSet, risk: RiskConfig, amb: AmbiguitySpec) -> SolveResult:
    """Decision-dependent DRO: empirical loss plus ``eps`` times its Lipschitz constant."""
    check_portfolio_ambiguity(amb)
    _check_inputs(sample, amb.support)
    loss = cvar_loss(risk)
    b = ProgramBuilder()
    lay = _Layout(b, sample.n_scenarios, sample.dim)
    _piece_rows(b, lay, loss, sample.scenarios)
    t = _x_norm_bound(b, lay, amb.q)
    b.set_objective(t, amb.epsilon * loss.max_slope)
    res = _finish(conic.solve_with_fallback(b.build()), lay)
    if not res.ok or amb.support.kind is not SupportKind.LIMITED_LOSS or amb.epsilon == 0.0:
        return res
    cap, cap_tau = _min_loss_supremum(loss, amb.support, sample.dim)
    if cap < res.optimal_value:
        # the capped branch does not depend on x; report the equal-weight portfolio
        d = Decision(np.full(sample.dim, 1.0 / sample.dim), cap_tau)
        return dataclasses.replace(res, decision=d, optimal_value=cap,
                                   auxiliary={"cap_active": True})
    return res


def _wdros_lipschitz_program(sample, loss, amb) -> tuple[ProgramBuilder, _Layout, int]:
    # p = 1 on the full space: the inner sup is finite iff lam >= ||a_k x||_{q*}
    b = ProgramBuilder()
    lay = _Layout(b, sample.n_scenarios, sample.dim)
    _piece_rows(b, lay, loss, sample.scenarios)
    lam = int(b.add_var("lambda", lb=0.0)[0])
    qd = dual_index(amb.q)
    for a_k in loss.a:
        _dual_norm_le(b, [([j], [a_k]) for j in lay.x], lam, qd)
    b.set_objective(lam, amb.epsilon)
    return b, lay, lam


def _wdros_limited_program(sample, loss, amb) -> tuple[ProgramBuilder, _Layout, int, np.ndarray]:
    """LP with support multipliers gamma[i, k] >= 0 for {xi >= -1}."""
    n, m = sample.n_scenarios, sample.dim
    b = ProgramBuilder()
    lay = _Layout(b, n, m)
    lam = int(b.add_var("lambda", lb=0.0)[0])
    gam = np.array([[b.add_var(f"gamma_{i}_{k}", m, lb=0.0) for k in range(loss.n_pieces)]
                    for i in range(n)])
    xi = sample.scenarios

    def extra(i, k):
        return gam[i, k], 1.0 + xi[i]

    _piece_rows(b, lay, loss, xi, extra)
    qd = dual_index(amb.q)
    for i in range(n):
        for k, a_k in enumerate(loss.a):
            coords = [([gam[i, k, j], lay.x[j]], [1.0, a_k]) for j in range(m)]
            _dual_norm_le(b, coords, lam, qd)
    b.set_objective(lam, amb.epsilon)
    return b, lay, lam, gam


def _quadratic_program(sample, loss, amb) -> tuple[conic.ConicProgram, _Layout, int, list[int]]:
    """Inner program of the p = 2 standard DRO at a fixed multiplier.

    With ``g >= ||x||_{q*}^2`` the per-piece constraint reads
    ``a_k^2 / (4 lam) * g + a_k <x, xi_i> + b_k tau <= s_i``.  The column of
    ``g`` in those rows is the only place lambda enters, so
    :func:`_with_lambda` rescales it in place.
    """
    b = ProgramBuilder()
    lay = _Layout(b, sample.n_scenarios, sample.dim)
    g = int(b.add_var("g", lb=0.0)[0])

    def extra(i, k):
        return [g], [loss.a[k] ** 2]

    rows = _piece_rows(b, lay, loss, sample.scenarios, extra)
    if dual_index(amb.q) == 2.0:
        norm_terms = [([j], [1.0], 0.0) for j in lay.x]
    else:
        t = _x_norm_bound(b, lay, amb.q)
        norm_terms = [([t], [1.0], 0.0)]
    # ||v||^2 <= g  <=>  ||(v, (1 - g)/2)|| <= (1 + g)/2
    b.add_soc(norm_terms + [([g], [-0.5], 0.5)], ([g], [0.5], 0.5))
    return b.build(), lay, g, rows


def _with_lambda(prog: conic.ConicProgram, g: int, rows: list[int], a_sq: np.ndarray,
                 lam: float) -> conic.ConicProgram:
    ineq_A = prog.ineq_A.copy()
    ineq_A[rows, g] = a_sq / (4.0 * lam)
    return dataclasses.replace(prog, ineq_A=ineq_A)


def _initial_lambda(sample, risk, loss, amb) -> float:
    """Minimizer of ``lam eps^2 + a_max^2 ||x||^2 / (4 lam)`` at the SAA portfolio."""
    saa = solve_saa(sample, risk)
    x0 = saa.decision.x if saa.ok else np.full(sample.dim, 1.0 / sample.dim)
    x_norm = float(np.linalg.norm(x0, ord=dual_index(amb.q)))
    return max(loss.max_slope * x_norm / (2.0 * amb.epsilon), LAMBDA_FLOOR)


def _joint_quadratic_program(sample, risk, loss, amb) -> tuple[conic.ConicProgram, _Layout, int, float]:
    """The p = 2 standard DRO as one SOCP in ``(x, tau, lam, s, h)``.

    ``||x||_{q*}^2 / (4 lam)`` is jointly convex; with ``h`` as its epigraph
    ``||v||^2 <= 4 lam h`` is a rotated cone.  ``lam`` and ``h`` are stored
    in units of ``lam0`` and ``1 / (4 lam0)`` so both are O(1) at the optimum.
    Returns the program, layout, column of the scaled multiplier and ``lam0``.
    """
    lam0 = _initial_lambda(sample, risk, loss, amb)
    h0 = 1.0 / (4.0 * lam0)
    b = ProgramBuilder()
    lay = _Layout(b, sample.n_scenarios, sample.dim)
    ell = int(b.add_var("lambda_scaled", lb=0.0)[0])
    eta = int(b.add_var("h_scaled", lb=0.0)[0])

    def extra(i, k):
        return [eta], [loss.a[k] ** 2 * h0]

    _piece_rows(b, lay, loss, sample.scenarios, extra)
    if dual_index(amb.q) == 2.0:
        norm_terms = [([j], [1.0], 0.0) for j in lay.x]
    else:
        t = _x_norm_bound(b, lay, amb.q)
        norm_terms = [([t], [1.0], 0.0)]
    # ||v||^2 <= ell * eta
    b.add_soc(norm_terms + [([ell, eta], [0.5, -0.5], 0.0)], ([ell, eta], [0.5, 0.5], 0.0))
    b.set_objective(ell, amb.epsilon**2 * lam0)
    return b.build(), lay, ell, lam0


def _lambda_search(sample, risk, loss, amb) -> SolveResult:
    prog, lay, g, rows = _quadratic_program(sample, loss, amb)
    a_sq = np.repeat(loss.a[None, :] ** 2, sample.n_scenarios, axis=0).reshape(-1)
    eps2 = amb.epsilon**2
    cache: dict[float, conic.ConicSolution] = {}
    iterations = 0

    def value(log_lam: float) -> float:
        nonlocal iterations
        lam = max(math.exp(log_lam), LAMBDA_FLOOR)
        if lam not in cache:
            # a stalled multiplier must not read as +inf and misdirect the search
            sol = conic.solve_with_fallback(_with_lambda(prog, g, rows, a_sq, lam))
            iterations += sol.iterations
            cache[lam] = sol
        sol = cache[lam]
        if sol.status is not Status.OPTIMAL:
            return math.inf
        return lam * eps2 + sol.objective

    lam0 = _initial_lambda(sample, risk, loss, amb)
    lo, hi = math.log(lam0 / 64.0), math.log(lam0 * 64.0)
    step = math.log(4.0)
    for _ in range(40):
        if value(lo) <= value(lo + step) and math.exp(lo) > LAMBDA_FLOOR:
            lo -= 2 * step
        else:
            break
    for _ in range(40):
        if value(hi) <= value(hi - step):
            hi += 2 * step
        else:
            break

    grid = np.linspace(lo, hi, LAMBDA_GRID_POINTS)
    vals = [value(v) for v in grid]
    j = int(np.argmin(vals))
    left, right = grid[max(j - 1, 0)], grid[min(j + 1, len(grid) - 1)]
    conic.golden_section_min(value, left, right, tol=LAMBDA_REL_TOL)

    best_lam = min(cache, key=lambda lam: value(math.log(lam)))
    best_val = value(math.log(best_lam))
    if not math.isfinite(best_val):
        return failed_result(Status.NUMERICAL_LIMIT, iterations)
    return _finish(cache[best_lam], lay, value=best_val, lambda_star=best_lam,
                   iterations=iterations)


def solve_wdros(sample: SampleSet, risk: RiskConfig, amb: AmbiguitySpec,
                method: str = "lambda-search") -> SolveResult:
    """Standard Wasserstein DRO around the scenario empirical law.

    ``method`` only matters for p = 2 on the full space: ``"lambda-search"``
    solves a cone program per trial multiplier and searches over log-lambda;
    ``"joint"`` solves the equivalent single SOCP.
    """
    check_portfolio_ambiguity(amb)
    _check_inputs(sample, amb.support)
    loss = cvar_loss(risk)
    if amb.support.kind is SupportKind.LIMITED_LOSS:
        b, lay, lam, gam = _wdros_limited_program(sample, loss, amb)
        sol = conic.solve_with_fallback(b.build())
        aux = {"gamma": sol.values[gam]} if sol.status is Status.OPTIMAL else {}
        lam_star = float(sol.values[lam]) if sol.status is Status.OPTIMAL else None
        return _finish(sol, lay, lambda_star=lam_star, auxiliary=aux)
    if amb.p == 1:
        b, lay, lam = _wdros_lipschitz_program(sample, loss, amb)
        sol = conic.solve_with_fallback(b.build())
        lam_star = float(sol.values[lam]) if sol.status is Status.OPTIMAL else None
        return _finish(sol, lay, lambda_star=lam_star)
    if amb.epsilon == 0.0:
        # lam -> infinity; the ball collapses to the empirical law
        return solve_saa(sample, risk)
    if method == "lambda-search":
        return _lambda_search(sample, risk, loss, amb)
    if method == "joint":
        prog, lay, ell, lam0 = _joint_quadratic_program(sample, risk, loss, amb)
        sol = conic.solve_with_fallback(prog)
        lam_star = float(sol.values[ell]) * lam0 if sol.status is Status.OPTIMAL else None
        return _finish(sol, lay, lambda_star=lam_star)
    raise ValueError(f"unknown method {method!r}")
