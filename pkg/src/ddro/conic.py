"""Linear/second-order-cone programs and the backend that solves them.

A :class:`ConicProgram` is an immutable description

    minimize    c . v
    subject to  A_eq v == b_eq
                A_ub v <= b_ub
                ||A_j v + b_j||_2 <= c_j . v + d_j      for each cone j
                lo <= v <= hi

The science code only builds programs through :class:`ProgramBuilder` and
calls :func:`solve`; the interior-point backend (Clarabel) is an
implementation detail of this module.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, NamedTuple, Optional, Sequence

import clarabel
import numpy as np
import scipy.sparse as sp

from .core import Status

_GOLDEN = (math.sqrt(5.0) - 1.0) / 2.0


@dataclass(frozen=True)
class SocConstraint:
    """``||A v + b||_2 <= c . v + d``."""

    A: np.ndarray
    b: np.ndarray
    c: np.ndarray
    d: float


@dataclass(frozen=True, eq=False)
class ConicProgram:
    n_vars: int
    objective: np.ndarray
    eq_A: np.ndarray
    eq_b: np.ndarray
    ineq_A: np.ndarray
    ineq_b: np.ndarray
    soc_constraints: tuple[SocConstraint, ...] = ()
    lower: Optional[np.ndarray] = None
    upper: Optional[np.ndarray] = None
    var_names: tuple[str, ...] = ()

    def __post_init__(self):
        n = self.n_vars
        if self.objective.shape != (n,):
            raise ValueError("objective length does not match n_vars")
        for name in ("eq", "ineq"):
            A, b = getattr(self, f"{name}_A"), getattr(self, f"{name}_b")
            if A.ndim != 2 or A.shape[1] != n or A.shape[0] != b.shape[0]:
                raise ValueError(f"inconsistent {name} constraint block {A.shape} / {b.shape}")
        for cone in self.soc_constraints:
            if cone.A.shape[1] != n or cone.c.shape != (n,) or cone.A.shape[0] != cone.b.shape[0]:
                raise ValueError("inconsistent second-order cone dimensions")
        lo = np.full(n, -np.inf) if self.lower is None else np.asarray(self.lower, float)
        hi = np.full(n, np.inf) if self.upper is None else np.asarray(self.upper, float)
        if lo.shape != (n,) or hi.shape != (n,) or np.any(lo > hi):
            raise ValueError("variable bounds must satisfy lo <= hi")
        object.__setattr__(self, "lower", lo)
        object.__setattr__(self, "upper", hi)

    def permuted(self, eq_order=None, ineq_order=None, soc_order=None) -> ConicProgram:
        """Same program with constraint rows reordered."""
        eq_order = np.arange(len(self.eq_b)) if eq_order is None else np.asarray(eq_order)
        ineq_order = np.arange(len(self.ineq_b)) if ineq_order is None else np.asarray(ineq_order)
        socs = self.soc_constraints if soc_order is None else tuple(self.soc_constraints[i] for i in soc_order)
        return ConicProgram(self.n_vars, self.objective, self.eq_A[eq_order], self.eq_b[eq_order],
                            self.ineq_A[ineq_order], self.ineq_b[ineq_order], socs,
                            self.lower, self.upper, self.var_names)

    def to_lp_text(self) -> str:
        """Plain-text dump in an LP-like layout, for eyeballing small programs."""
        names = list(self.var_names) or [f"v{j}" for j in range(self.n_vars)]

        def expr(row, const=0.0):
            terms = [f"{coef:+.12g} {names[j]}" for j, coef in enumerate(row) if coef != 0.0]
            if const:
                terms.append(f"{const:+.12g}")
            return " ".join(terms) or "0"

        lines = ["minimize", f"  obj: {expr(self.objective)}", "subject to"]
        for i, (row, rhs) in enumerate(zip(self.eq_A, self.eq_b)):
            lines.append(f"  e{i}: {expr(row)} = {rhs:.12g}")
        for i, (row, rhs) in enumerate(zip(self.ineq_A, self.ineq_b)):
            lines.append(f"  u{i}: {expr(row)} <= {rhs:.12g}")
        for i, cone in enumerate(self.soc_constraints):
            parts = ", ".join(expr(r, c) for r, c in zip(cone.A, cone.b))
            lines.append(f"  q{i}: || {parts} ||_2 <= {expr(cone.c, cone.d)}")
        lines.append("bounds")
        for j in range(self.n_vars):
            lo, hi = self.lower[j], self.upper[j]
            if np.isinf(lo) and np.isinf(hi):
                lines.append(f"  {names[j]} free")
            else:
                lines.append(f"  {lo:.12g} <= {names[j]} <= {hi:.12g}")
        lines.append("end")
        return "\n".join(lines) + "\n"


class ProgramBuilder:
    """Accumulates variables and constraints, then freezes a ConicProgram.

    Variables are allocated in named blocks; ``add_var`` returns the integer
    column indices of the block so callers can write rows by index.
    """

    def __init__(self):
        self._names: list[str] = []
        self._lo: list[float] = []
        self._hi: list[float] = []
        self._obj: dict[int, float] = {}
        self._eq: list[tuple[dict, float]] = []
        self._ineq: list[tuple[dict, float]] = []
        self._soc: list[tuple[list[tuple[dict, float]], tuple[dict, float]]] = []

    @property
    def n_vars(self) -> int:
        return len(self._names)

    @property
    def n_ineq(self) -> int:
        return len(self._ineq)

    def add_var(self, name: str, size: int = 1, lb: float = -np.inf, ub: float = np.inf) -> np.ndarray:
        start = len(self._names)
        if size == 1:
            self._names.append(name)
        else:
            self._names.extend(f"{name}[{k}]" for k in range(size))
        self._lo.extend([lb] * size)
        self._hi.extend([ub] * size)
        return np.arange(start, start + size)

    def set_objective(self, idx, coefs) -> None:
        for j, c in zip(np.atleast_1d(idx), np.broadcast_to(coefs, np.shape(np.atleast_1d(idx)))):
            self._obj[int(j)] = self._obj.get(int(j), 0.0) + float(c)

    @staticmethod
    def _row(idx, coefs) -> dict:
        row: dict[int, float] = {}
        idx = np.atleast_1d(idx)
        for j, c in zip(idx, np.broadcast_to(coefs, idx.shape)):
            row[int(j)] = row.get(int(j), 0.0) + float(c)
        return row

    def add_eq(self, idx, coefs, rhs: float) -> None:
        self._eq.append((self._row(idx, coefs), float(rhs)))

    def add_le(self, idx, coefs, rhs: float) -> None:
        self._ineq.append((self._row(idx, coefs), float(rhs)))

    def add_soc(self, rows: Sequence[tuple], bound: tuple) -> None:
        """``||(r_1 . v + k_1, ..., r_n . v + k_n)||_2 <= t . v + k_t``.

        Each entry of ``rows`` and ``bound`` is ``(idx, coefs, const)``.
        """
        lhs = [(self._row(i, c), float(k)) for i, c, k in rows]
        i, c, k = bound
        self._soc.append((lhs, (self._row(i, c), float(k))))

    def add_norm_epigraph(self, idx, t: int) -> None:
        """``||v[idx]||_2 <= v[t]``."""
        self.add_soc([([j], [1.0], 0.0) for j in np.atleast_1d(idx)], ([t], [1.0], 0.0))

    def build(self) -> ConicProgram:
        n = self.n_vars

        def dense(rows):
            A = np.zeros((len(rows), n))
            b = np.zeros(len(rows))
            for r, (row, rhs) in enumerate(rows):
                for j, c in row.items():
                    A[r, j] = c
                b[r] = rhs
            return A, b

        def vec(row):
            out = np.zeros(n)
            for j, c in row.items():
                out[j] = c
            return out

        obj = vec(self._obj)
        eq_A, eq_b = dense(self._eq)
        ineq_A, ineq_b = dense(self._ineq)
        socs = []
        for lhs, (trow, tconst) in self._soc:
            A = np.array([vec(r) for r, _ in lhs]).reshape(len(lhs), n)
            b = np.array([k for _, k in lhs])
            socs.append(SocConstraint(A, b, vec(trow), tconst))
        return ConicProgram(n, obj, eq_A, eq_b, ineq_A, ineq_b, tuple(socs),
                            np.array(self._lo), np.array(self._hi), tuple(self._names))


class ConicSolution(NamedTuple):
    values: Optional[np.ndarray]
    objective: float
    status: Status
    iterations: int


_STATUS_MAP = {
    "Solved": Status.OPTIMAL,
    "PrimalInfeasible": Status.INFEASIBLE,
    "DualInfeasible": Status.UNBOUNDED,
}


def _settings(tol: float) -> clarabel.DefaultSettings:
    st = clarabel.DefaultSettings()
    st.verbose = False
    st.tol_gap_abs = tol
    st.tol_gap_rel = tol
    st.tol_feas = tol
    st.max_iter = 200
    st.max_threads = 1
    return st


def solve(prog: ConicProgram, tol: float = 1e-9) -> ConicSolution:
    """Solve ``prog`` with an interior-point method.

    Only a fully converged run is reported as OPTIMAL; runs that stall at
    reduced accuracy come back as NUMERICAL_LIMIT with no values.
    """
    n = prog.n_vars
    blocks_A, blocks_b, cones = [], [], []
    if len(prog.eq_b):
        blocks_A.append(prog.eq_A)
        blocks_b.append(prog.eq_b)
        cones.append(clarabel.ZeroConeT(len(prog.eq_b)))

    lin_A = [prog.ineq_A]
    lin_b = [prog.ineq_b]
    eye = np.eye(n)
    fin_hi = np.isfinite(prog.upper)
    fin_lo = np.isfinite(prog.lower)
    lin_A += [eye[fin_hi], -eye[fin_lo]]
    lin_b += [prog.upper[fin_hi], -prog.lower[fin_lo]]
    lin_A = np.vstack(lin_A)
    lin_b = np.concatenate(lin_b)
    if len(lin_b):
        blocks_A.append(lin_A)
        blocks_b.append(lin_b)
        cones.append(clarabel.NonnegativeConeT(len(lin_b)))

    for cone in prog.soc_constraints:
        # s = [c.v + d; A v + b] must lie in the cone, and s = b' - A' v
        blocks_A.append(-np.vstack([cone.c[None, :], cone.A]))
        blocks_b.append(np.concatenate([[cone.d], cone.b]))
        cones.append(clarabel.SecondOrderConeT(1 + cone.A.shape[0]))

    if not blocks_A:
        # Clarabel needs at least one constraint row; 0 . v <= 1 is vacuous
        blocks_A.append(np.zeros((1, n)))
        blocks_b.append(np.ones(1))
        cones.append(clarabel.NonnegativeConeT(1))

    A = sp.csc_matrix(np.vstack(blocks_A))
    b = np.concatenate(blocks_b)
    P = sp.csc_matrix((n, n))
    solver = clarabel.DefaultSolver(P, prog.objective.astype(float), A, b, cones, _settings(tol))
    res = solver.solve()
    status = _STATUS_MAP.get(str(res.status), Status.NUMERICAL_LIMIT)
    if status is not Status.OPTIMAL:
        obj = -math.inf if status is Status.UNBOUNDED else math.nan
        if status is Status.INFEASIBLE:
            obj = math.inf
        return ConicSolution(None, obj, status, int(res.iterations))
    values = np.array(res.x)
    return ConicSolution(values, float(prog.objective @ values), status, int(res.iterations))


TOL_LADDER = (1e-9, 1e-8, 1e-7)


def solve_with_fallback(prog: ConicProgram, tols: Sequence[float] = TOL_LADDER) -> ConicSolution:
    """Solve at the first tolerance in ``tols`` that converges.

    Interior-point runs occasionally stall just short of a tight tolerance on
    well-posed problems; a looser retry converges in a handful of iterations.
    Iterations are summed over all attempts.
    """
    total = 0
    sol = None
    for tol in tols:
        sol = solve(prog, tol=tol)
        total += sol.iterations
        if sol.status is Status.OPTIMAL or sol.status in (Status.INFEASIBLE, Status.UNBOUNDED):
            break
    return sol._replace(iterations=total)


class ScalarMin(NamedTuple):
    argmin: float
    minimum: float
    evaluations: int


def golden_section_min(f: Callable[[float], float], lo: float, hi: float,
                       tol: float = 1e-8, max_iter: int = 500) -> ScalarMin:
    """Golden-section search for a minimizer of ``f`` on ``[lo, hi]``.

    Both endpoints are evaluated too, and the best point seen is returned,
    so a monotone ``f`` yields the correct boundary minimizer.
    """
    if not lo < hi:
        raise ValueError(f"need lo < hi, got [{lo}, {hi}]")
    best = [lo, math.inf]
    evals = 0

    def g(x):
        nonlocal evals
        evals += 1
        fx = f(x)
        if fx < best[1]:
            best[0], best[1] = x, fx
        return fx

    g(lo)
    g(hi)
    a, b = lo, hi
    x1 = b - _GOLDEN * (b - a)
    x2 = a + _GOLDEN * (b - a)
    f1, f2 = g(x1), g(x2)
    for _ in range(max_iter):
        if b - a <= tol:
            break
        if f1 <= f2:
            b, x2, f2 = x2, x1, f1
            x1 = b - _GOLDEN * (b - a)
            f1 = g(x1)
        else:
            a, x1, f1 = x1, x2, f2
            x2 = a + _GOLDEN * (b - a)
            f2 = g(x2)
    return ScalarMin(best[0], best[1], evals)
