"""Scalar Wasserstein worst/best-case means and exact discrete transport.

The worst-case mean over a p-Wasserstein ball around a discrete law has a
closed form when p = 1 or when the support is unbounded above: the mean
moves up by exactly the radius, capped at the top of the support for p = 1.
For p > 1 with a finite upper end it is computed from the scalar dual

    inf_{lam >= 0}  lam * eps**p + sum_i w_i * sup_{z in support} (z - lam * |z - z_i|**p)

whose inner suprema are available in closed form.  The dual is exposed on
its own (``worst_case_mean_1d_dual``) so the closed forms can be checked
against it.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass

import numpy as np
from scipy.optimize import linear_sum_assignment

from .conic import golden_section_min
from .core import (DDROError, Decision, SampleSet, SupportKind, SupportSpec,
                   check_norm_index)
from .losses import PiecewiseMaxAffineLoss, lipschitz_norm


class AtomOutsideSupport(DDROError, ValueError):
    pass


class AtomCountMismatch(DDROError, ValueError):
    pass


REAL_LINE = SupportSpec.interval()


@dataclass(frozen=True, eq=False)
class DiscreteDistribution1D:
    atoms: np.ndarray
    weights: np.ndarray

    def __post_init__(self):
        atoms = np.array(self.atoms, dtype=float).reshape(-1)
        weights = np.array(self.weights, dtype=float).reshape(-1)
        if atoms.size == 0 or atoms.shape != weights.shape:
            raise ValueError("atoms and weights must be non-empty and of equal length")
        if not np.all(np.isfinite(atoms)):
            raise ValueError("atoms must be finite")
        if np.any(weights < 0) or abs(weights.sum() - 1.0) > 1e-12:
            raise ValueError("weights must be nonnegative and sum to 1")
        atoms.setflags(write=False)
        weights.setflags(write=False)
        object.__setattr__(self, "atoms", atoms)
        object.__setattr__(self, "weights", weights)

    @classmethod
    def uniform(cls, atoms) -> DiscreteDistribution1D:
        atoms = np.asarray(atoms, dtype=float).reshape(-1)
        return cls(atoms, np.full(atoms.size, 1.0 / atoms.size))

    @property
    def mean(self) -> float:
        return float(self.weights @ self.atoms)

    def negated(self) -> DiscreteDistribution1D:
        return DiscreteDistribution1D(-self.atoms, self.weights)


def _interval(support: SupportSpec) -> tuple[float, float]:
    if support.kind is not SupportKind.INTERVAL_1D:
        raise ValueError("scalar transport needs an Interval1D support")
    return support.lo, support.hi


def _check_inside(dist: DiscreteDistribution1D, support: SupportSpec) -> tuple[float, float]:
    lo, hi = _interval(support)
    if np.any(dist.atoms < lo) or np.any(dist.atoms > hi):
        raise AtomOutsideSupport(f"atoms must lie in [{lo}, {hi}]")
    return lo, hi


def _check_order(p) -> float:
    p = float(p)
    if not p >= 1.0:
        raise ValueError(f"Wasserstein order must be >= 1, got {p}")
    return p


def _atom_sup(atoms: np.ndarray, lam: float, p: float, hi: float) -> np.ndarray:
    """``sup_{z <= hi} (z - lam |z - a|^p)`` per atom ``a``; moving down never helps."""
    room = hi - atoms
    if p == 1.0:
        if lam >= 1.0:
            return atoms.copy()
        with np.errstate(invalid="ignore"):
            return np.where(np.isinf(room), np.inf, atoms + (1.0 - lam) * room)
    if lam <= 0.0:
        return atoms + room
    shift = np.minimum((1.0 / (lam * p)) ** (1.0 / (p - 1.0)), room)
    return atoms + shift - lam * shift**p


def worst_case_mean_1d_dual(dist: DiscreteDistribution1D, eps: float, p: float,
                            support: SupportSpec = REAL_LINE, tol: float = 1e-12) -> float:
    """Worst-case mean from a golden-section search over the dual multiplier."""
    p = _check_order(p)
    _, hi = _check_inside(dist, support)
    if eps == 0.0:
        return dist.mean
    w = dist.weights

    def dual(lam: float) -> float:
        return lam * eps**p + float(w @ _atom_sup(dist.atoms, lam, p, hi))

    # without the upper cap every atom shifts by eps at lam = 1/(p eps^(p-1));
    # a cap only lowers the optimal multiplier
    lam_hi = 1.0 / (p * eps ** (p - 1.0))
    res = golden_section_min(dual, 0.0, lam_hi, tol=tol * max(1.0, lam_hi))
    return res.minimum


def worst_case_mean_1d(dist: DiscreteDistribution1D, eps: float, p: float,
                       support: SupportSpec = REAL_LINE) -> float:
    """Supremum of the mean over the p-Wasserstein ball of radius ``eps``."""
    p = _check_order(p)
    if eps < 0:
        raise ValueError(f"radius must be >= 0, got {eps}")
    _, hi = _check_inside(dist, support)
    if eps == 0.0:
        return dist.mean
    if p == 1.0:
        return min(dist.mean + eps, hi)
    if math.isinf(hi):
        return dist.mean + eps
    return worst_case_mean_1d_dual(dist, eps, p, support)


def best_case_mean_1d(dist: DiscreteDistribution1D, eps: float, p: float,
                      support: SupportSpec = REAL_LINE) -> float:
    """Infimum of the mean over the ball, via the mirrored worst case."""
    lo, hi = _interval(support)
    mirrored = SupportSpec.interval(-hi, -lo)
    return -worst_case_mean_1d(dist.negated(), eps, p, mirrored)


def discrete_wasserstein_p(mu: DiscreteDistribution1D, nu: DiscreteDistribution1D, p: float) -> float:
    """Exact W_p on the line through the monotone (quantile) coupling."""
    p = _check_order(p)
    mu_order = np.argsort(mu.atoms, kind="stable")
    nu_order = np.argsort(nu.atoms, kind="stable")
    xa, wa = mu.atoms[mu_order], np.cumsum(mu.weights[mu_order])
    xb, wb = nu.atoms[nu_order], np.cumsum(nu.weights[nu_order])
    wa[-1] = wb[-1] = 1.0
    levels = np.union1d(wa, wb)
    widths = np.diff(np.concatenate([[0.0], levels]))
    # quantile functions are left-continuous step functions; evaluate each
    # piece at its right end
    ia = np.minimum(np.searchsorted(wa, levels, side="left"), xa.size - 1)
    ib = np.minimum(np.searchsorted(wb, levels, side="left"), xb.size - 1)
    cost = float(widths @ np.abs(xa[ia] - xb[ib]) ** p)
    return max(cost, 0.0) ** (1.0 / p)


def _ground_costs(a: np.ndarray, b: np.ndarray, p: float, q: float) -> np.ndarray:
    diff = a[:, None, :] - b[None, :, :]
    return np.linalg.norm(diff, ord=q, axis=2) ** p


def discrete_wasserstein_p_nd(mu_atoms, nu_atoms, p: float, q: float = 2.0) -> float:
    """Exact W_p between two equally weighted point clouds of the same size.

    Small clouds (N <= 7) are solved by enumerating every matching; larger
    ones by the Hungarian method.
    """
    p = _check_order(p)
    q = check_norm_index(q)
    a = np.atleast_2d(np.asarray(mu_atoms, dtype=float))
    b = np.atleast_2d(np.asarray(nu_atoms, dtype=float))
    if a.shape != b.shape:
        raise AtomCountMismatch(f"need equal atom counts and dimensions, got {a.shape} and {b.shape}")
    n = a.shape[0]
    cost = _ground_costs(a, b, p, q)
    if n <= 7:
        perms = np.array(list(itertools.permutations(range(n))))
        best = cost[np.arange(n), perms].sum(axis=1).min()
    else:
        rows, cols = linear_sum_assignment(cost)
        best = cost[rows, cols].sum()
    return float(best / n) ** (1.0 / p)


def check_lipschitz_contraction(sample_a: SampleSet, sample_b: SampleSet,
                                loss: PiecewiseMaxAffineLoss, decision: Decision,
                                p: float, q: float = 2.0) -> tuple[float, float]:
    """Both sides of ``W_p(F#a, F#b) <= gamma * W_p(a, b)``.

    The left side compares the scalar laws of the loss values, the right side
    the scenario clouds under the ``q``-norm ground cost.
    """
    if sample_a.scenarios.shape != sample_b.scenarios.shape:
        raise AtomCountMismatch("samples must have the same number of atoms and dimension")
    fa = loss.values(decision.x, decision.tau, sample_a.scenarios)
    fb = loss.values(decision.x, decision.tau, sample_b.scenarios)
    lhs = discrete_wasserstein_p(DiscreteDistribution1D.uniform(fa), DiscreteDistribution1D.uniform(fb), p)
    gamma = lipschitz_norm(loss, decision.x, q)
    rhs = gamma * discrete_wasserstein_p_nd(sample_a.scenarios, sample_b.scenarios, p, q)
    return lhs, rhs
