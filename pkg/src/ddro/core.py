"""Domain types, errors, scenario CSV I/O and deterministic random streams."""

from __future__ import annotations

import csv
import enum
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional, Union

import numpy as np

SOLVER_TOL = 1e-8
PROJECTION_TOL = 1e-6


class DDROError(Exception):
    """Base class for all errors raised by this package."""


class DimensionMismatch(DDROError, ValueError):
    pass


class SupportViolation(DDROError, ValueError):
    pass


class NonFinite(DDROError, ValueError):
    pass


class UnsupportedConfiguration(DDROError, ValueError):
    pass


class SupportKind(str, enum.Enum):
    FULL_SPACE = "full"
    LIMITED_LOSS = "limited"
    INTERVAL_1D = "interval"


@dataclass(frozen=True)
class SupportSpec:
    """Support of the uncertain parameter.

    ``FULL_SPACE`` is R^m, ``LIMITED_LOSS`` is {xi >= -1} (no asset loses more
    than its value) and ``INTERVAL_1D`` is the scalar interval [lo, hi], either
    end possibly infinite.
    """

    kind: SupportKind
    lo: float = -math.inf
    hi: float = math.inf

    def __post_init__(self):
        if self.kind is SupportKind.INTERVAL_1D and not self.lo < self.hi:
            raise ValueError(f"interval support needs lo < hi, got [{self.lo}, {self.hi}]")

    @classmethod
    def full_space(cls) -> SupportSpec:
        return cls(SupportKind.FULL_SPACE)

    @classmethod
    def limited_loss(cls) -> SupportSpec:
        return cls(SupportKind.LIMITED_LOSS)

    @classmethod
    def interval(cls, lo: float = -math.inf, hi: float = math.inf) -> SupportSpec:
        return cls(SupportKind.INTERVAL_1D, float(lo), float(hi))

    def contains(self, values: np.ndarray) -> np.ndarray:
        values = np.asarray(values, dtype=float)
        if self.kind is SupportKind.FULL_SPACE:
            return np.ones(values.shape, dtype=bool)
        if self.kind is SupportKind.LIMITED_LOSS:
            return values >= -1.0
        return (values >= self.lo) & (values <= self.hi)


FULL_SPACE = SupportSpec.full_space()
LIMITED_LOSS = SupportSpec.limited_loss()


def dual_index(q: float) -> float:
    """Hoelder conjugate of a ground-norm index restricted to {1, 2, inf}."""
    q = check_norm_index(q)
    if q == 1:
        return math.inf
    if q == 2:
        return 2.0
    return 1.0


def check_norm_index(q: float) -> float:
    q = float(q)
    if q not in (1.0, 2.0, math.inf):
        raise UnsupportedConfiguration(f"norm index must be 1, 2 or inf, got {q}")
    return q


@dataclass(frozen=True)
class AmbiguitySpec:
    """Wasserstein ball: order ``p``, ground norm ``q``, radius ``epsilon``.

    With ``decision_dependent`` the ball is taken around the pushforward
    empirical law of the loss values with radius ``epsilon`` times the loss's
    Lipschitz constant; otherwise around the scenario empirical law.
    """

    p: int = 2
    q: float = 2.0
    epsilon: float = 0.0
    support: SupportSpec = FULL_SPACE
    decision_dependent: bool = False

    def __post_init__(self):
        if self.p < 1 or int(self.p) != self.p:
            raise ValueError(f"Wasserstein order must be an integer >= 1, got {self.p}")
        if not self.epsilon >= 0:
            raise ValueError(f"radius must be >= 0, got {self.epsilon}")
        object.__setattr__(self, "q", check_norm_index(self.q))

    def with_epsilon(self, epsilon: float) -> AmbiguitySpec:
        return AmbiguitySpec(self.p, self.q, float(epsilon), self.support, self.decision_dependent)


@dataclass(frozen=True)
class RiskConfig:
    """Mean-CVaR preferences: risk-aversion weight ``rho`` and CVaR level ``alpha``."""

    rho: float = 10.0
    alpha: float = 0.2

    def __post_init__(self):
        if not 0.0 < self.alpha <= 1.0:
            raise ValueError(f"alpha must lie in (0, 1], got {self.alpha}")
        if not self.rho >= 0.0:
            raise ValueError(f"rho must be >= 0, got {self.rho}")


@dataclass(frozen=True, eq=False)
class SampleSet:
    """N scenarios of an m-dimensional return vector, one per row."""

    scenarios: np.ndarray

    def __post_init__(self):
        arr = np.array(self.scenarios, dtype=np.float64)
        if arr.ndim == 1:
            arr = arr.reshape(-1, 1)
        if arr.ndim != 2:
            raise DimensionMismatch(f"scenarios must be a matrix, got shape {arr.shape}")
        arr.setflags(write=False)
        object.__setattr__(self, "scenarios", arr)

    @property
    def n_scenarios(self) -> int:
        return self.scenarios.shape[0]

    @property
    def dim(self) -> int:
        return self.scenarios.shape[1]

    def subset(self, rows) -> SampleSet:
        return SampleSet(self.scenarios[rows])


@dataclass(frozen=True, eq=False)
class Decision:
    """Portfolio weights ``x`` and the VaR surrogate ``tau``."""

    x: np.ndarray
    tau: float

    def __post_init__(self):
        x = np.array(self.x, dtype=np.float64).reshape(-1)
        x.setflags(write=False)
        object.__setattr__(self, "x", x)
        object.__setattr__(self, "tau", float(self.tau))

    def is_feasible(self, tol: float = SOLVER_TOL) -> bool:
        return bool(self.x.min() >= -tol and abs(self.x.sum() - 1.0) <= tol)


class Status(str, enum.Enum):
    OPTIMAL = "Optimal"
    INFEASIBLE = "Infeasible"
    UNBOUNDED = "Unbounded"
    NUMERICAL_LIMIT = "NumericalLimit"


@dataclass(frozen=True, eq=False)
class SolveResult:
    decision: Optional[Decision]
    optimal_value: float
    status: Status
    solver_iterations: int = 0
    lambda_star: Optional[float] = None
    auxiliary: dict = field(default_factory=dict)

    @property
    def ok(self) -> bool:
        return self.status is Status.OPTIMAL


def failed_result(status: Status, iterations: int = 0) -> SolveResult:
    return SolveResult(None, math.nan, status, iterations)


def project_to_simplex(x: np.ndarray, tol: float = PROJECTION_TOL) -> Optional[np.ndarray]:
    """Clip-and-renormalize a nearly feasible solver output.

    Returns None when the simplex violation exceeds ``tol``; callers report
    that as a numerical failure instead of silently repairing it.
    """
    x = np.asarray(x, dtype=float)
    violation = max(-float(x.min()), abs(float(x.sum()) - 1.0))
    if not np.all(np.isfinite(x)) or violation > tol:
        return None
    x = np.clip(x, 0.0, None)
    return x / x.sum()


def validate_sample(sample: SampleSet, support: SupportSpec = FULL_SPACE,
                    dim: Optional[int] = None) -> None:
    """Raise if ``sample`` breaks the SampleSet invariants under ``support``."""
    arr = sample.scenarios
    if arr.shape[0] < 1 or arr.shape[1] < 1:
        raise DimensionMismatch(f"need at least one scenario and one asset, got {arr.shape}")
    if dim is not None and arr.shape[1] != dim:
        raise DimensionMismatch(f"expected {dim} columns, got {arr.shape[1]}")
    if support.kind is SupportKind.INTERVAL_1D and arr.shape[1] != 1:
        raise DimensionMismatch("interval support applies to scalar samples only")
    if not np.all(np.isfinite(arr)):
        raise NonFinite("scenario matrix contains NaN or infinite entries")
    bad = ~support.contains(arr)
    if bad.any():
        row, col = np.argwhere(bad)[0]
        raise SupportViolation(
            f"scenario {row} coordinate {col} = {arr[row, col]!r} lies outside the support"
        )


def seeded_rng(seed: int, stream: int = 0) -> np.random.Generator:
    """Counter-based generator keyed by ``(seed, stream)``.

    Philox is counter based, so each (seed, stream) pair gives the same draws
    on every platform regardless of the order tasks run in.
    """
    ss = np.random.SeedSequence(entropy=int(seed) & (2**64 - 1), spawn_key=(int(stream),))
    return np.random.Generator(np.random.Philox(ss))


def write_scenarios_csv(sample: SampleSet, path: Union[str, Path]) -> None:
    # repr() gives the shortest string that round-trips to the same double
    with open(path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow([f"xi_{j + 1}" for j in range(sample.dim)])
        for row in sample.scenarios:
            writer.writerow([repr(float(v)) for v in row])


def read_scenarios_csv(path: Union[str, Path]) -> SampleSet:
    with open(path, encoding="utf-8", newline="") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise DimensionMismatch(f"{path} is empty") from None
        expected = [f"xi_{j + 1}" for j in range(len(header))]
        if [h.strip() for h in header] != expected:
            raise DimensionMismatch(f"{path}: header must be xi_1,...,xi_m, got {header}")
        rows = []
        for lineno, row in enumerate(reader, start=2):
            if not row:
                continue
            if len(row) != len(header):
                raise DimensionMismatch(f"{path}:{lineno}: expected {len(header)} fields, got {len(row)}")
            rows.append([float(v) for v in row])
    if not rows:
        raise DimensionMismatch(f"{path} has no scenarios")
    return SampleSet(np.array(rows))
