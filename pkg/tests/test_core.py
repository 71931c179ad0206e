import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from ddro.core import (FULL_SPACE, LIMITED_LOSS, AmbiguitySpec, Decision, DimensionMismatch,
                       NonFinite, RiskConfig, SampleSet, SolveResult, Status, SupportSpec,
                       SupportViolation, UnsupportedConfiguration, dual_index, project_to_simplex,
                       read_scenarios_csv, seeded_rng, validate_sample, write_scenarios_csv)


def test_validate_sample_accepts_finite_full_space():
    validate_sample(SampleSet([[0.0, 0.0], [0.1, -0.2]]), FULL_SPACE)


def test_validate_sample_rejects_below_floor():
    with pytest.raises(SupportViolation):
        validate_sample(SampleSet([[-1.5, 0.0]]), LIMITED_LOSS)


def test_validate_sample_accepts_floor_itself():
    validate_sample(SampleSet([[-1.0, 0.0]]), LIMITED_LOSS)


def test_validate_sample_rejects_nan():
    with pytest.raises(NonFinite):
        validate_sample(SampleSet([[math.nan]]), FULL_SPACE)


def test_validate_sample_dimension_checks():
    with pytest.raises(DimensionMismatch):
        validate_sample(SampleSet(np.zeros((0, 3))))
    with pytest.raises(DimensionMismatch):
        validate_sample(SampleSet(np.zeros((2, 3))), dim=4)
    with pytest.raises(DimensionMismatch):
        SampleSet(np.zeros((2, 2, 2)))


def test_sample_is_read_only():
    s = SampleSet([[1.0, 2.0]])
    with pytest.raises(ValueError):
        s.scenarios[0, 0] = 3.0
    assert s.n_scenarios == 1 and s.dim == 2


def test_interval_support_needs_lo_below_hi():
    with pytest.raises(ValueError):
        SupportSpec.interval(1.0, 1.0)
    assert SupportSpec.interval(-math.inf, 0.0).contains([-5.0, 0.0, 0.1]).tolist() == [True, True, False]


def test_ambiguity_spec_validation():
    with pytest.raises(ValueError):
        AmbiguitySpec(epsilon=-0.1)
    with pytest.raises(ValueError):
        AmbiguitySpec(p=0)
    with pytest.raises(UnsupportedConfiguration):
        AmbiguitySpec(q=3)
    assert AmbiguitySpec(q=math.inf).with_epsilon(0.5).epsilon == 0.5


def test_risk_config_validation():
    for bad in (dict(alpha=0.0), dict(alpha=1.5), dict(rho=-1.0)):
        with pytest.raises(ValueError):
            RiskConfig(**bad)
    RiskConfig(rho=0.0, alpha=1.0)


def test_dual_index():
    assert dual_index(1) == math.inf
    assert dual_index(2) == 2.0
    assert dual_index(math.inf) == 1.0


def test_seeded_rng_determinism_and_separation():
    a = seeded_rng(42, 0).standard_normal(100)
    assert np.array_equal(a, seeded_rng(42, 0).standard_normal(100))
    assert not np.array_equal(a, seeded_rng(42, 1).standard_normal(100))
    assert not np.array_equal(a, seeded_rng(43, 0).standard_normal(100))


def test_project_to_simplex_repairs_small_violations_only():
    x = project_to_simplex(np.array([0.5 + 1e-8, 0.5, -1e-9]))
    assert x is not None and x.min() >= 0 and abs(x.sum() - 1) < 1e-15
    assert project_to_simplex(np.array([0.6, 0.5])) is None
    assert project_to_simplex(np.array([1.0 + 1e-3, -1e-3])) is None


def test_decision_feasibility():
    assert Decision([0.3, 0.7], 0.0).is_feasible()
    assert not Decision([0.3, 0.6], 0.0).is_feasible()
    assert not Decision([1.1, -0.1], 0.0).is_feasible()


def test_failed_result_has_no_decision():
    r = SolveResult(None, math.nan, Status.NUMERICAL_LIMIT)
    assert not r.ok


@settings(max_examples=50, deadline=None)
@given(arrays(np.float64, st.tuples(st.integers(1, 6), st.integers(1, 4)),
              elements=st.floats(-1e6, 1e6, allow_nan=False, allow_subnormal=True)))
def test_csv_round_trip_is_bit_identical(tmp_path_factory, arr):
    path = tmp_path_factory.mktemp("csv") / "s.csv"
    write_scenarios_csv(SampleSet(arr), path)
    back = read_scenarios_csv(path)
    assert back.scenarios.tobytes() == SampleSet(arr).scenarios.tobytes()


def test_csv_format(tmp_path):
    path = tmp_path / "s.csv"
    write_scenarios_csv(SampleSet([[0.1, -0.25]]), path)
    raw = path.read_bytes()
    assert raw == b"xi_1,xi_2\n0.1,-0.25\n"


def test_csv_rejects_bad_header_and_ragged_rows(tmp_path):
    p = tmp_path / "bad.csv"
    p.write_text("a,b\n1,2\n")
    with pytest.raises(DimensionMismatch):
        read_scenarios_csv(p)
    p.write_text("xi_1,xi_2\n1,2\n3\n")
    with pytest.raises(DimensionMismatch):
        read_scenarios_csv(p)
    p.write_text("xi_1\n")
    with pytest.raises(DimensionMismatch):
        read_scenarios_csv(p)
