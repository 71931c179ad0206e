"""Piecewise-max-affine losses in (x, tau) and the empirical risk functionals."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .core import (DDROError, Decision, DimensionMismatch, RiskConfig, SampleSet,
                   check_norm_index, dual_index)


class EmptyInput(DDROError, ValueError):
    pass


class BadAlpha(DDROError, ValueError):
    pass


@dataclass(frozen=True, eq=False)
class PiecewiseMaxAffineLoss:
    """``F(x, tau, xi) = max_k (a[k] * <x, xi> + b[k] * tau)``."""

    a: np.ndarray
    b: np.ndarray

    def __post_init__(self):
        a = np.array(self.a, dtype=float).reshape(-1)
        b = np.array(self.b, dtype=float).reshape(-1)
        if a.size < 1 or a.shape != b.shape:
            raise DimensionMismatch("need K >= 1 pieces with matching slope/offset lengths")
        if not (np.all(np.isfinite(a)) and np.all(np.isfinite(b))):
            raise ValueError("loss coefficients must be finite")
        a.setflags(write=False)
        b.setflags(write=False)
        object.__setattr__(self, "a", a)
        object.__setattr__(self, "b", b)

    @property
    def n_pieces(self) -> int:
        return self.a.size

    @property
    def max_slope(self) -> float:
        return float(np.abs(self.a).max())

    def pieces(self, x: np.ndarray, tau: float, scenarios: np.ndarray) -> np.ndarray:
        """Matrix of piece values, shape (N, K)."""
        ret = np.asarray(scenarios, dtype=float) @ np.asarray(x, dtype=float)
        return np.outer(ret, self.a) + self.b * tau

    def values(self, x: np.ndarray, tau: float, scenarios: np.ndarray) -> np.ndarray:
        return self.pieces(x, tau, scenarios).max(axis=1)


def cvar_loss(risk: RiskConfig) -> PiecewiseMaxAffineLoss:
    """Two-piece encoding of ``-<x,xi> + rho * CVaR_alpha(-<x,xi>)`` with auxiliary tau."""
    rho, alpha = risk.rho, risk.alpha
    return PiecewiseMaxAffineLoss(a=[-1.0, -1.0 - rho / alpha], b=[rho, rho * (1.0 - 1.0 / alpha)])


def linear_loss() -> PiecewiseMaxAffineLoss:
    """``F = <x, xi>``."""
    return PiecewiseMaxAffineLoss(a=[1.0], b=[0.0])


def evaluate(loss: PiecewiseMaxAffineLoss, d: Decision, xi) -> float:
    xi = np.asarray(xi, dtype=float).reshape(-1)
    if xi.shape != d.x.shape:
        raise DimensionMismatch(f"scenario has {xi.size} entries, decision has {d.x.size}")
    return float(np.max(loss.a * float(d.x @ xi) + loss.b * d.tau))


def lipschitz_norm(loss: PiecewiseMaxAffineLoss, x, q: float) -> float:
    """Lipschitz constant of ``xi -> F(x, tau, xi)`` w.r.t. the ground norm ``||.||_q``.

    It is the dual norm of ``x`` times the largest absolute slope.
    """
    x = np.asarray(x, dtype=float)
    return float(np.linalg.norm(x, ord=dual_index(check_norm_index(q)))) * loss.max_slope


def _tail_count(n: int, alpha: float) -> float:
    k = alpha * n
    nearest = round(k)
    # alpha * n is meant as an integer count when it is one up to rounding noise
    if abs(k - nearest) <= 1e-9 * max(1.0, k):
        k = float(nearest)
    return k


def _check_cvar_inputs(losses, alpha: float) -> np.ndarray:
    arr = np.asarray(losses, dtype=float).reshape(-1)
    if arr.size == 0:
        raise EmptyInput("CVaR of an empty sample is undefined")
    if not 0.0 < alpha <= 1.0:
        raise BadAlpha(f"alpha must lie in (0, 1], got {alpha}")
    return arr


def cvar_and_var(losses, alpha: float) -> tuple[float, float]:
    """Empirical ``(CVaR_alpha, VaR_alpha)`` of equally weighted losses.

    CVaR is the mean of the worst ``alpha`` fraction of probability mass, the
    boundary atom contributing fractionally.  VaR is the smallest minimizer
    of ``tau + mean((L - tau)_+) / alpha``, i.e. the lower
    ``(1 - alpha)``-quantile.
    """
    arr = _check_cvar_inputs(losses, alpha)
    n = arr.size
    k = _tail_count(n, alpha)
    whole = int(math.floor(k))
    frac = k - whole
    # only the top ceil(k)+1 order statistics matter
    need = min(n, whole + 2)
    top = np.sort(np.partition(arr, n - need)[n - need:])[::-1]
    tail_sum = top[:whole].sum()
    if frac > 0.0:
        tail_sum += frac * top[whole]
    cvar = tail_sum / k
    var_rank = max(1, math.ceil(n - k))  # 1-based ascending rank
    var = top[n - var_rank]
    return float(cvar), float(var)


def cvar_empirical(losses, alpha: float) -> float:
    return cvar_and_var(losses, alpha)[0]


def portfolio_oos_objective(x, eval_sample: SampleSet, risk: RiskConfig) -> tuple[float, float]:
    """Mean-CVaR objective of portfolio ``x`` under the empirical law of ``eval_sample``.

    Returns ``(value, tau_star)`` where ``tau_star`` is the empirical VaR,
    the minimizing tau of the two-piece representation.
    """
    x = np.asarray(x, dtype=float)
    if x.shape != (eval_sample.dim,):
        raise DimensionMismatch(f"portfolio has {x.size} weights, sample has {eval_sample.dim} assets")
    port_losses = -(eval_sample.scenarios @ x)
    cvar, var = cvar_and_var(port_losses, risk.alpha)
    return float(port_losses.mean() + risk.rho * cvar), var


def comprehensive_oos_objective(d: Decision, eval_sample: SampleSet, risk: RiskConfig) -> float:
    """Empirical mean of the two-piece loss at the sample-produced ``(x, tau)``."""
    if d.x.shape != (eval_sample.dim,):
        raise DimensionMismatch(f"portfolio has {d.x.size} weights, sample has {eval_sample.dim} assets")
    return float(cvar_loss(risk).values(d.x, d.tau, eval_sample.scenarios).mean())
