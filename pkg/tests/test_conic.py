import math

import numpy as np
import pytest

from ddro.conic import ConicProgram, ProgramBuilder, golden_section_min, solve
from ddro.core import Status

from oracles import lp_vertex_enumeration


def test_one_dimensional_lp():
    b = ProgramBuilder()
    v = b.add_var("v", lb=3.0)
    b.set_objective(v, 1.0)
    sol = solve(b.build())
    assert sol.status is Status.OPTIMAL
    assert sol.values[0] == pytest.approx(3.0, abs=1e-8)
    assert sol.objective == pytest.approx(3.0, abs=1e-8)


def test_norm_epigraph():
    b = ProgramBuilder()
    v = b.add_var("v", 2)
    t = int(b.add_var("t")[0])
    b.add_eq([v[0]], [1.0], 3.0)
    b.add_eq([v[1]], [1.0], 4.0)
    b.add_norm_epigraph(v, t)
    b.set_objective(t, 1.0)
    sol = solve(b.build())
    assert sol.status is Status.OPTIMAL
    assert sol.objective == pytest.approx(5.0, abs=1e-8)


def test_unbounded_and_infeasible():
    b = ProgramBuilder()
    v = b.add_var("v")
    b.set_objective(v, -1.0)
    assert solve(b.build()).status is Status.UNBOUNDED

    b = ProgramBuilder()
    v = b.add_var("v", lb=0.0)
    b.add_le(v, 1.0, -1.0)
    b.set_objective(v, 1.0)
    sol = solve(b.build())
    assert sol.status is Status.INFEASIBLE and sol.values is None


def test_program_validation():
    with pytest.raises(ValueError):
        ConicProgram(2, np.zeros(3), np.zeros((0, 2)), np.zeros(0), np.zeros((0, 2)), np.zeros(0))
    with pytest.raises(ValueError):
        ConicProgram(1, np.zeros(1), np.zeros((0, 1)), np.zeros(0), np.zeros((0, 1)), np.zeros(0),
                     lower=np.array([1.0]), upper=np.array([0.0]))


def _random_lp(rng, n):
    # box plus random cuts: bounded, usually with a unique vertex optimum
    m = rng.integers(1, 4)
    A = np.vstack([np.eye(n), -np.eye(n), rng.normal(size=(m, n))])
    b = np.concatenate([np.ones(n), np.ones(n), rng.uniform(0.1, 1.0, m)])
    return rng.normal(size=n), A, b


def _lp_program(c, A, b):
    bld = ProgramBuilder()
    v = bld.add_var("v", len(c))
    for row, rhs in zip(A, b):
        bld.add_le(v, row, rhs)
    bld.set_objective(v, c)
    return bld.build()


def test_lp_matches_vertex_enumeration():
    rng = np.random.default_rng(0)
    for _ in range(40):
        n = int(rng.integers(1, 5))
        c, A, b = _random_lp(rng, n)
        sol = solve(_lp_program(c, A, b))
        assert sol.status is Status.OPTIMAL
        assert sol.objective == pytest.approx(lp_vertex_enumeration(c, A, b), abs=1e-7)


def test_row_permutation_invariance():
    rng = np.random.default_rng(1)
    for _ in range(10):
        n = 3
        c, A, b = _random_lp(rng, n)
        bld = ProgramBuilder()
        v = bld.add_var("v", n)
        t = bld.add_var("t", 2)
        for row, rhs in zip(A, b):
            bld.add_le(v, row, rhs)
        bld.add_norm_epigraph(v[:2], int(t[0]))
        bld.add_soc([([v[2]], [1.0], 0.5)], ([t[1]], [1.0], 0.0))
        bld.add_eq(v, np.ones(n), 0.1)
        bld.set_objective(np.concatenate([v, t]), np.concatenate([c, [1.0, 0.5]]))
        prog = bld.build()
        base = solve(prog)
        perm = prog.permuted(ineq_order=rng.permutation(len(prog.ineq_b)), soc_order=[1, 0])
        assert solve(perm).objective == pytest.approx(base.objective, abs=1e-9)


def test_solve_is_deterministic():
    rng = np.random.default_rng(2)
    c, A, b = _random_lp(rng, 4)
    prog = _lp_program(c, A, b)
    a1, a2 = solve(prog), solve(prog)
    assert np.array_equal(a1.values, a2.values)


def test_lp_text_dump():
    b = ProgramBuilder()
    x = b.add_var("x", 2, lb=0.0)
    t = int(b.add_var("t")[0])
    b.add_eq(x, 1.0, 1.0)
    b.add_norm_epigraph(x, t)
    b.set_objective(t, 1.0)
    text = b.build().to_lp_text()
    assert text.startswith("minimize\n") and text.endswith("end\n")
    assert "x[0]" in text and "t free" in text and "||" in text


def test_golden_section_examples():
    r = golden_section_min(lambda v: (v - 2.0) ** 2, 0.0, 10.0, tol=1e-6)
    assert r.argmin == pytest.approx(2.0, abs=1e-6)
    r = golden_section_min(lambda v: v + 1.0 / v, 0.01, 100.0, tol=1e-6)
    assert r.argmin == pytest.approx(1.0, abs=1e-5) and r.minimum == pytest.approx(2.0, abs=1e-10)
    r = golden_section_min(lambda v: v, 1.0, 2.0, tol=1e-6)
    assert r.argmin == 1.0
    r = golden_section_min(lambda v: -v, 1.0, 2.0, tol=1e-6)
    assert r.argmin == 2.0
    with pytest.raises(ValueError):
        golden_section_min(lambda v: v, 1.0, 1.0)


def test_golden_section_handles_infinite_values():
    r = golden_section_min(lambda v: math.inf if v < 0.5 else (v - 0.7) ** 2, 0.0, 1.0, tol=1e-9)
    assert r.argmin == pytest.approx(0.7, abs=1e-8)


def test_fallback_solve():
    from ddro.conic import solve_with_fallback
    rng = np.random.default_rng(3)
    c, A, b = _random_lp(rng, 3)
    prog = _lp_program(c, A, b)
    assert solve_with_fallback(prog).objective == pytest.approx(solve(prog).objective, abs=1e-12)
    bld = ProgramBuilder()
    v = bld.add_var("v", lb=0.0)
    bld.add_le(v, 1.0, -1.0)
    bld.set_objective(v, 1.0)
    assert solve_with_fallback(bld.build()).status is Status.INFEASIBLE
