import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from ddro.core import Decision, DimensionMismatch, RiskConfig, SampleSet
from ddro.losses import (BadAlpha, EmptyInput, PiecewiseMaxAffineLoss, comprehensive_oos_objective,
                         cvar_and_var, cvar_empirical, cvar_loss, evaluate, lipschitz_norm,
                         portfolio_oos_objective)

from oracles import cvar_by_definition, var_by_definition

CVAR = cvar_loss(RiskConfig(10.0, 0.2))


@pytest.mark.parametrize("rho,alpha,a,b", [
    (10.0, 0.2, (-1.0, -51.0), (10.0, -40.0)),
    (0.0, 0.5, (-1.0, -1.0), (0.0, 0.0)),
    (1.0, 1.0, (-1.0, -2.0), (1.0, 0.0)),
])
def test_cvar_loss_coefficients(rho, alpha, a, b):
    loss = cvar_loss(RiskConfig(rho, alpha))
    assert loss.a.tolist() == pytest.approx(a, abs=1e-12)
    assert loss.b.tolist() == pytest.approx(b, abs=1e-12)


def test_loss_validation():
    with pytest.raises(DimensionMismatch):
        PiecewiseMaxAffineLoss([], [])
    with pytest.raises(DimensionMismatch):
        PiecewiseMaxAffineLoss([1.0], [1.0, 2.0])
    with pytest.raises(ValueError):
        PiecewiseMaxAffineLoss([math.inf], [0.0])


def test_evaluate_examples():
    lin = cvar_loss(RiskConfig(0.0, 0.5))
    assert evaluate(lin, Decision([1.0, 0.0], 123.0), [0.3, 9.0]) == pytest.approx(-0.3)
    assert evaluate(CVAR, Decision([0.5, 0.5], 0.0), [0.1, 0.1]) == pytest.approx(-0.1)
    assert evaluate(CVAR, Decision([0.5, 0.5], 0.1), [0.1, 0.1]) == pytest.approx(0.9)
    with pytest.raises(DimensionMismatch):
        evaluate(CVAR, Decision([0.5, 0.5], 0.0), [0.1, 0.1, 0.1])


def test_lipschitz_examples():
    assert lipschitz_norm(PiecewiseMaxAffineLoss([-1, -3], [0, 0]), [1, 0], 2) == pytest.approx(3.0)
    assert lipschitz_norm(CVAR, [0.5, 0.5], 1) == pytest.approx(25.5)
    assert lipschitz_norm(PiecewiseMaxAffineLoss([-1, -1], [0, 0]), [0.6, 0.8], 2) == pytest.approx(1.0)
    assert lipschitz_norm(CVAR, [0.5, 0.5], math.inf) == pytest.approx(51.0)


@settings(max_examples=100, deadline=None)
@given(st.integers(0, 2**32 - 1), st.sampled_from([1.0, 2.0, math.inf]))
def test_loss_is_convex_and_lipschitz_in_xi(seed, q):
    rng = np.random.default_rng(seed)
    m = rng.integers(1, 5)
    d = Decision(rng.dirichlet(np.ones(m)), rng.normal())
    x1, x2 = rng.normal(size=m), rng.normal(size=m)
    th = rng.uniform()
    f1, f2 = evaluate(CVAR, d, x1), evaluate(CVAR, d, x2)
    assert evaluate(CVAR, d, th * x1 + (1 - th) * x2) <= th * f1 + (1 - th) * f2 + 1e-12
    gap = abs(f1 - f2)
    assert gap <= lipschitz_norm(CVAR, d.x, q) * np.linalg.norm(x1 - x2, ord=q) + 1e-12


def test_cvar_examples():
    assert cvar_empirical(np.arange(1, 11), 0.2) == pytest.approx(9.5)
    L = np.random.default_rng(1).normal(size=17)
    assert cvar_empirical(L, 1.0) == pytest.approx(L.mean())
    assert cvar_empirical([5.0], 0.3) == pytest.approx(5.0)
    with pytest.raises(EmptyInput):
        cvar_empirical([], 0.5)
    with pytest.raises(BadAlpha):
        cvar_empirical([1.0], 0.0)
    with pytest.raises(BadAlpha):
        cvar_empirical([1.0], 1.2)


@settings(max_examples=200, deadline=None)
@given(st.lists(st.floats(-100, 100), min_size=1, max_size=40), st.floats(0.001, 1.0))
def test_cvar_and_var_match_definition(losses, alpha):
    cvar, var = cvar_and_var(losses, alpha)
    assert cvar == pytest.approx(cvar_by_definition(losses, alpha), rel=1e-9, abs=1e-9)
    L = np.asarray(losses)
    # var attains the minimum of the representation
    at_var = var + np.maximum(L - var, 0).mean() / alpha
    assert at_var == pytest.approx(cvar, rel=1e-9, abs=1e-9)
    assert var == pytest.approx(var_by_definition(losses, alpha), rel=1e-9, abs=1e-9)


@settings(max_examples=100, deadline=None)
@given(st.lists(st.floats(-100, 100), min_size=1, max_size=30), st.floats(0.01, 1), st.floats(0.01, 1))
def test_cvar_nonincreasing_in_alpha(losses, a1, a2):
    lo, hi = sorted((a1, a2))
    assert cvar_empirical(losses, hi) <= cvar_empirical(losses, lo) + 1e-9


def test_cvar_single_atom_tail_is_max():
    L = np.random.default_rng(2).normal(size=13)
    assert cvar_empirical(L, 1.0 / 13) == pytest.approx(L.max())
    assert cvar_empirical(L, 0.5 / 13) == pytest.approx(L.max())


def test_cvar_ties_split_weight():
    assert cvar_empirical([1.0, 2.0, 2.0, 2.0], 0.5) == pytest.approx(2.0)
    assert cvar_empirical([0.0, 0.0, 1.0, 3.0], 0.375) == pytest.approx((3 + 0.5 * 1) / 1.5)


def test_portfolio_oos_examples():
    xi = np.array([[0.2, 0.1]])
    val, tau = portfolio_oos_objective([0.5, 0.5], SampleSet(xi), RiskConfig(3.0, 0.2))
    assert val == pytest.approx(-0.15 * 4.0) and tau == pytest.approx(-0.15)

    rng = np.random.default_rng(4)
    s = SampleSet(rng.normal(size=(20, 2)))
    x = np.array([0.3, 0.7])
    val, tau = portfolio_oos_objective(x, s, RiskConfig(0.0, 0.2))
    assert val == pytest.approx(-(s.scenarios @ x).mean())
    assert tau == pytest.approx(var_by_definition(-(s.scenarios @ x), 0.2))

    s = SampleSet(np.column_stack([-np.arange(1, 11.0), np.zeros(10)]))
    val, _ = portfolio_oos_objective([1.0, 0.0], s, RiskConfig(1.0, 0.2))
    assert val == pytest.approx(15.0)
    with pytest.raises(DimensionMismatch):
        portfolio_oos_objective([1.0], s, RiskConfig())


def test_comprehensive_oos():
    rng = np.random.default_rng(6)
    s = SampleSet(rng.normal(0.05, 0.1, size=(50, 3)))
    risk = RiskConfig()
    x = np.array([0.2, 0.3, 0.5])
    val, tau = portfolio_oos_objective(x, s, risk)
    assert comprehensive_oos_objective(Decision(x, tau), s, risk) == pytest.approx(val, abs=1e-12)
    for t in rng.normal(size=10):
        assert comprehensive_oos_objective(Decision(x, t), s, risk) >= val - 1e-12
    lin = RiskConfig(0.0, 0.2)
    assert comprehensive_oos_objective(Decision(x, 5.0), s, lin) == pytest.approx(-(s.scenarios @ x).mean())
    # hand-computable three scenarios
    s3 = SampleSet([[0.1, 0.0], [-0.2, 0.1], [0.0, -0.3]])
    d = Decision([0.5, 0.5], 0.05)
    by_hand = np.mean([max(-r + 0.5, -51 * r - 2.0) for r in (0.05, -0.05, -0.15)])
    assert comprehensive_oos_objective(d, s3, risk) == pytest.approx(by_hand)
