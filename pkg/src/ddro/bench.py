"""Synthetic-market experiments: radius sweeps, reliabilities, holdout selection."""

from __future__ import annotations

import math
import warnings
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence

import numpy as np

from .core import (DDROError, FULL_SPACE, AmbiguitySpec, RiskConfig, SampleSet, SolveResult,
                   Status, SupportSpec, seeded_rng)
from .dro import solve_saa, solve_wdroa, solve_wdros
from .losses import comprehensive_oos_objective, portfolio_oos_objective

APPROACHES = ("S", "A", "SAA")
EVAL_STREAM = 0
TRAIN_STREAM_BASE = 1000


class EmptyCell(DDROError, ValueError):
    pass


class UnpairedRecords(DDROError, ValueError):
    pass


@dataclass(frozen=True)
class ReturnModel:
    """One common factor plus independent asset-specific normals.

    Asset ``i`` (1-based) returns ``psi + zeta_i`` with ``psi ~ N(0, systematic_std^2)``
    and ``zeta_i ~ N(i * idio_mean_slope, (i * idio_std_slope)^2)``.  With
    ``floor`` set, draws are clipped from below (e.g. -1 for assets that cannot
    lose more than their value).
    """

    m: int
    systematic_std: float = 0.02
    idio_mean_slope: float = 0.03
    idio_std_slope: float = 0.025
    floor: Optional[float] = None

    def __post_init__(self):
        if int(self.m) != self.m or self.m < 1:
            raise ValueError(f"need m >= 1 assets, got {self.m}")
        for name in ("systematic_std", "idio_mean_slope", "idio_std_slope"):
            if not getattr(self, name) > 0:
                raise ValueError(f"{name} must be positive")

    @property
    def means(self) -> np.ndarray:
        return self.idio_mean_slope * np.arange(1, self.m + 1)

    @property
    def idio_stds(self) -> np.ndarray:
        return self.idio_std_slope * np.arange(1, self.m + 1)


def generate_returns(model: ReturnModel, n: int, rng: np.random.Generator) -> SampleSet:
    if n < 1:
        raise ValueError(f"need n >= 1 scenarios, got {n}")
    psi = rng.normal(0.0, model.systematic_std, size=(n, 1))
    zeta = rng.normal(model.means, model.idio_stds, size=(n, model.m))
    xi = psi + zeta
    if model.floor is not None:
        xi = np.maximum(xi, model.floor)
    return SampleSet(xi)


@dataclass(frozen=True)
class SyntheticTrainer:
    """Picklable training-sample factory: run ``r`` draws from its own stream."""

    model: ReturnModel
    n: int
    seed: int = 0

    def __call__(self, run: int) -> SampleSet:
        return generate_returns(self.model, self.n, seeded_rng(self.seed, TRAIN_STREAM_BASE + run))


def evaluation_sample(model: ReturnModel, n_eval: int, seed: int = 0) -> SampleSet:
    return generate_returns(model, n_eval, seeded_rng(seed, EVAL_STREAM))


@dataclass(frozen=True, eq=False)
class Record:
    eps: float
    run: int
    approach: str
    status: Status
    j_hat: float
    j_oos_portfolio: float
    j_oos_comprehensive: float
    tau_hat: float
    tau_star: float
    portfolio: np.ndarray
    lambda_star: Optional[float] = None

    @property
    def ok(self) -> bool:
        return self.status is Status.OPTIMAL

    @property
    def tau_diff(self) -> float:
        return abs(self.tau_hat - self.tau_star)


@dataclass(frozen=True)
class SummaryRow:
    eps: float
    approach: str
    n_runs: int
    mean_j_hat: float
    mean_oos_portfolio: float
    q20_oos_portfolio: float
    q80_oos_portfolio: float
    mean_oos_comprehensive: float
    q20_oos_comprehensive: float
    q80_oos_comprehensive: float
    reliability_portfolio: float
    reliability_comprehensive: float
    mean_tau_diff: float
    q20_tau_diff: float
    q80_tau_diff: float
    mean_portfolio_linf_diff: float


@dataclass
class ExperimentReport:
    records: list[Record]
    summaries: list[SummaryRow] = field(default_factory=list)
    n_solves: int = 0
    n_failures: int = 0

    @property
    def failure_rate(self) -> float:
        return self.n_failures / self.n_solves if self.n_solves else 0.0

    def summary(self, eps: float, approach: str) -> SummaryRow:
        for row in self.summaries:
            if row.eps == eps and row.approach == approach:
                return row
        raise KeyError((eps, approach))


def _solver(approach: str) -> Callable[..., SolveResult]:
    if approach == "S":
        return solve_wdros
    if approach == "A":
        return solve_wdroa
    raise ValueError(f"unknown approach {approach!r}")


def _record(eps, run, approach, res: SolveResult, eval_sample, risk) -> Record:
    if not res.ok:
        nan = math.nan
        return Record(eps, run, approach, res.status, nan, nan, nan, nan, nan,
                      np.full(eval_sample.dim, nan))
    d = res.decision
    j_port, tau_star = portfolio_oos_objective(d.x, eval_sample, risk)
    j_comp = comprehensive_oos_objective(d, eval_sample, risk)
    return Record(eps, run, approach, res.status, res.optimal_value, j_port, j_comp,
                  d.tau, tau_star, d.x.copy(), res.lambda_star)


@dataclass(frozen=True)
class _RunTask:
    train_fn: Callable[[int], SampleSet]
    eps_grid: tuple
    risk: RiskConfig
    amb: AmbiguitySpec
    approaches: tuple


def _run_one(task: _RunTask, run: int, eval_sample: SampleSet) -> list[Record]:
    sample = task.train_fn(run)
    out = []
    saa = solve_saa(sample, task.risk) if "SAA" in task.approaches else None
    for eps in task.eps_grid:
        amb = task.amb.with_epsilon(eps)
        for approach in task.approaches:
            if approach == "SAA":
                res = saa
            else:
                try:
                    res = _solver(approach)(sample, task.risk, amb)
                except DDROError:
                    raise
                except Exception:  # backend crash on one instance: count it, keep going
                    res = SolveResult(None, math.nan, Status.NUMERICAL_LIMIT)
            out.append(_record(eps, run, approach, res, eval_sample, task.risk))
    return out


_WORKER_EVAL: Optional[SampleSet] = None


def _worker_init(eval_sample: SampleSet) -> None:
    global _WORKER_EVAL
    _WORKER_EVAL = eval_sample


def _worker_run(task: _RunTask, run: int) -> list[Record]:
    return _run_one(task, run, _WORKER_EVAL)


def epsilon_sweep(train_fn: Callable[[int], SampleSet], eps_grid: Sequence[float], runs: int,
                  eval_sample: SampleSet, risk: RiskConfig, p: int = 2, q: float = 2.0,
                  support: SupportSpec = FULL_SPACE, approaches: Sequence[str] = ("S", "A"),
                  workers: int = 1, progress: Optional[Callable[[int, int], None]] = None
                  ) -> ExperimentReport:
    """Solve every approach at every radius for ``runs`` fresh training samples.

    ``train_fn(run)`` must return the training sample of run ``run``; with
    ``workers > 1`` it must be picklable.  Records come back ordered by
    (run, eps, approach) whatever the worker count.
    """
    eps_grid = tuple(float(e) for e in eps_grid)
    if list(eps_grid) != sorted(eps_grid):
        raise ValueError("eps_grid must be sorted ascending")
    if runs < 1:
        raise ValueError("need at least one run")
    for a in approaches:
        if a not in APPROACHES:
            raise ValueError(f"unknown approach {a!r}")
    task = _RunTask(train_fn, eps_grid, risk, AmbiguitySpec(p, q, 0.0, support), tuple(approaches))

    records: list[Record] = []
    if workers <= 1:
        for run in range(runs):
            records.extend(_run_one(task, run, eval_sample))
            if progress:
                progress(run + 1, runs)
    else:
        with ProcessPoolExecutor(max_workers=workers, initializer=_worker_init,
                                 initargs=(eval_sample,)) as pool:
            for done, chunk in enumerate(pool.map(_worker_run, [task] * runs, range(runs)), start=1):
                records.extend(chunk)
                if progress:
                    progress(done, runs)

    solved = [r for r in records if r.approach != "SAA"]
    n_fail = sum(not r.ok for r in solved)
    if n_fail:
        warnings.warn(f"{n_fail} of {len(solved)} solves failed and are excluded from summaries",
                      RuntimeWarning, stacklevel=2)
    report = ExperimentReport(records, n_solves=len(solved), n_failures=n_fail)
    report.summaries = summarize(records)
    return report


def _complete(records: Sequence[Record]) -> list[Record]:
    """Drop every (eps, run) cell in which any approach failed."""
    bad = {(r.eps, r.run) for r in records if not r.ok}
    return [r for r in records if (r.eps, r.run) not in bad]


def _by_eps(records: Sequence[Record], approach: str) -> dict[float, list[Record]]:
    cells: dict[float, list[Record]] = {}
    for r in records:
        if r.approach == approach:
            cells.setdefault(r.eps, []).append(r)
    return cells


def reliability(records: Sequence[Record], approach: str, kind: str = "portfolio") -> dict[float, float]:
    """Per radius, the fraction of runs whose estimate upper-bounds the out-of-sample value."""
    if kind not in ("portfolio", "comprehensive"):
        raise ValueError(f"kind must be 'portfolio' or 'comprehensive', got {kind!r}")
    cells = _by_eps(records, approach)
    if not cells:
        raise EmptyCell(f"no records for approach {approach!r}")
    out = {}
    for eps, cell in sorted(cells.items()):
        good = [r for r in cell if r.ok]
        if not good:
            raise EmptyCell(f"no successful runs for approach {approach!r} at eps={eps}")
        oos = [r.j_oos_portfolio if kind == "portfolio" else r.j_oos_comprehensive for r in good]
        out[eps] = float(np.mean([o <= r.j_hat for o, r in zip(oos, good)]))
    return out


def _pairs(records: Sequence[Record]) -> dict[float, list[tuple[Record, Record]]]:
    s = {(r.eps, r.run): r for r in records if r.approach == "S"}
    a = {(r.eps, r.run): r for r in records if r.approach == "A"}
    if s.keys() != a.keys():
        missing = sorted(s.keys() ^ a.keys())[0]
        raise UnpairedRecords(f"no matching S/A record for eps={missing[0]}, run={missing[1]}")
    out: dict[float, list[tuple[Record, Record]]] = {}
    for key in sorted(s):
        if s[key].ok and a[key].ok:
            out.setdefault(key[0], []).append((s[key], a[key]))
    return out


def portfolio_difference_stats(records: Sequence[Record]) -> dict[float, tuple[float, float, float]]:
    """Per radius: mean, 20% and 80% quantiles of ``||x_S - x_A||_inf`` over runs."""
    out = {}
    for eps, pairs in _pairs(records).items():
        diffs = np.array([np.max(np.abs(s.portfolio - a.portfolio)) for s, a in pairs])
        out[eps] = (float(diffs.mean()), float(np.quantile(diffs, 0.2)), float(np.quantile(diffs, 0.8)))
    return out


def _band(values) -> tuple[float, float, float]:
    v = np.asarray(values, dtype=float)
    return float(v.mean()), float(np.quantile(v, 0.2)), float(np.quantile(v, 0.8))


def summarize(records: Sequence[Record]) -> list[SummaryRow]:
    """One row per (eps, approach), computed over complete cells only."""
    complete = _complete(records)
    has_pairs = any(r.approach == "S" for r in records) and any(r.approach == "A" for r in records)
    diffs = portfolio_difference_stats(complete) if has_pairs else {}
    rows = []
    for approach in APPROACHES:
        cells = _by_eps(complete, approach)
        if not cells:
            continue
        rel_p = reliability(complete, approach, "portfolio")
        rel_c = reliability(complete, approach, "comprehensive")
        for eps, cell in sorted(cells.items()):
            oos_p = _band([r.j_oos_portfolio for r in cell])
            oos_c = _band([r.j_oos_comprehensive for r in cell])
            tau = _band([r.tau_diff for r in cell])
            rows.append(SummaryRow(
                eps, approach, len(cell), float(np.mean([r.j_hat for r in cell])),
                *oos_p, *oos_c, rel_p[eps], rel_c[eps], *tau,
                diffs.get(eps, (math.nan,))[0],
            ))
    rows.sort(key=lambda r: (r.eps, APPROACHES.index(r.approach)))
    return rows


def holdout_cv_epsilon(sample: SampleSet, split: float, eps_grid: Sequence[float], risk: RiskConfig,
                       approach: str = "A", p: int = 2, q: float = 2.0,
                       support: SupportSpec = FULL_SPACE,
                       rng: Optional[np.random.Generator] = None) -> float:
    """Pick the radius whose trained portfolio does best on a held-out split.

    The first ``round(split * N)`` rows of a random permutation train, the
    rest score with the mean-CVaR objective; ties go to the smaller radius.
    """
    if not 0.0 < split < 1.0:
        raise ValueError(f"split must lie in (0, 1), got {split}")
    n = sample.n_scenarios
    n_train = int(round(split * n))
    if n_train < 2 or n_train >= n:
        raise ValueError(f"split {split} of {n} scenarios leaves no usable train/holdout partition")
    if not eps_grid:
        raise ValueError("eps_grid is empty")
    rng = rng if rng is not None else seeded_rng(0)
    perm = rng.permutation(n)
    train, hold = sample.subset(perm[:n_train]), sample.subset(perm[n_train:])
    solver = _solver(approach)
    best_eps, best_val = None, math.inf
    for eps in sorted(float(e) for e in eps_grid):
        res = solver(train, risk, AmbiguitySpec(p, q, eps, support))
        val = portfolio_oos_objective(res.decision.x, hold, risk)[0] if res.ok else math.inf
        if best_eps is None or val < best_val:
            best_eps, best_val = eps, val
    return best_eps
