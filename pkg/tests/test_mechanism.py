import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from hdpriv import mechanism, oracle
from hdpriv.dp_core import NOISELESS, InvalidParameterError, derive_rng, laplacian_mechanism
from hdpriv.mechanism import (
    ContractViolationError,
    PrivacyVector,
    ShrinkageMatrix,
    UnsupportedQueryError,
    build_stretch_spec,
    distortion_bound,
    hdp_estimate,
    scalar_product_query,
    solve_shrink_weight,
    stretch_profile,
    weighted_sum_query,
)


@pytest.mark.parametrize("d,w,expected", [
    ((1, 1, 0), (1, 1, 1), (1, 1, 0)),
    ((1, 1, 1), (0.5, 0, 1), (0.5, 0, 1)),
    ((2, 4), (0.25, 0.5), (0.5, 2)),
])
def test_stretch_profile_examples(d, w, expected):
    assert stretch_profile(d, ShrinkageMatrix(w)).tolist() == list(expected)


def test_stretch_dimension_mismatch():
    with pytest.raises(InvalidParameterError):
        stretch_profile([1, 0], ShrinkageMatrix([1.0, 1.0, 1.0]))


def test_types_validate_unit_interval():
    with pytest.raises(InvalidParameterError):
        PrivacyVector([0.5, 1.2])
    with pytest.raises(InvalidParameterError):
        ShrinkageMatrix([-0.1])
    assert PrivacyVector.from_partial(4, {1: 0.2}).weights.tolist() == [1, 0.2, 1, 1]
    assert ShrinkageMatrix.identity(3).diagonal.tolist() == [1, 1, 1]


def test_solver_scalar_product_examples():
    q = scalar_product_query(3)
    assert solve_shrink_weight(q, 2, 0.7) == pytest.approx(0.7, abs=1e-9)
    assert solve_shrink_weight(q, 4, 1.0) == 1.0
    assert solve_shrink_weight(q, 0, 0.0) == 0.0


def test_solver_returns_largest_feasible_point():
    q = scalar_product_query(2)
    w = solve_shrink_weight(q, 1, 0.3)
    assert w <= 0.3 and 0.3 - w <= 1e-9


def test_solver_weighted_sum_matches_analytic():
    q = weighted_sum_query([2.0, 0.5, -1.0])
    rng = np.random.default_rng(1)
    for _ in range(20):
        v = rng.random(3)
        analytic = q.analytic_weights(v)
        solved = [solve_shrink_weight(q, i, v[i]) for i in range(3)]
        assert solved == pytest.approx(analytic, abs=1e-8)


def test_solver_on_bruteforce_query():
    dom = oracle.EnumerableDomain.binary(3)
    q = mechanism.bruteforce_query(lambda X: X[:, 0] * X[:, 1] + X[:, 2], dom)
    assert q.sensitivity == 1.0
    assert solve_shrink_weight(q, 0, 0.4) == pytest.approx(0.4, abs=1e-8)


def _query_with(modular, sensitivity=1.0):
    return mechanism.QuerySpec(
        name="probe", dimension=1, evaluate=lambda X: X[:, 0],
        sensitivity=sensitivity, modular_sensitivity=modular,
    )


def test_solver_detects_non_monotone_evaluator():
    # Peaks above S_i(1) in the middle of the bracket.
    q = _query_with(lambda w, i: 2.0 if 0.4 < w[i] < 0.6 else w[i])
    with pytest.raises(ContractViolationError):
        solve_shrink_weight(q, 0, 0.3)


def test_solver_rejects_positive_sensitivity_at_zero():
    q = _query_with(lambda w, i: 0.5 + 0.5 * w[i])
    with pytest.raises(ContractViolationError):
        solve_shrink_weight(q, 0, 0.1)


@pytest.mark.parametrize("bad", [-0.1, 1.5])
def test_solver_rejects_bad_weight(bad):
    with pytest.raises(InvalidParameterError):
        solve_shrink_weight(scalar_product_query(1), 0, bad)


def test_spec_all_ones_is_identity():
    spec = build_stretch_spec(scalar_product_query(3), PrivacyVector.ones(6))
    assert spec.shrink.diagonal.tolist() == [1.0] * 6


def test_spec_example_weights():
    q = scalar_product_query(3)
    v = [0.5, 1, 0, 1, 1, 1]
    spec = build_stretch_spec(q, PrivacyVector(v))
    assert spec.shrink.diagonal.tolist() == v
    solved = build_stretch_spec(q, PrivacyVector(v), use_analytic=False)
    assert solved.shrink.diagonal == pytest.approx(v, abs=1e-9)


@settings(max_examples=30, deadline=None)
@given(st.lists(st.floats(0, 1), min_size=8, max_size=8))
def test_spec_certified_bounds_hold_by_bruteforce(v):
    q = scalar_product_query(4)
    spec = build_stretch_spec(q, PrivacyVector(v))
    brute = oracle.all_modular_sensitivities(oracle.stretched(q.evaluate, spec.shrink.diagonal), q.domain)
    for i in range(8):
        assert brute[i] <= v[i] + 1e-12
        assert spec.certified_modular_sensitivities[i].value == pytest.approx(brute[i])


def test_spec_rejects_wrong_length():
    with pytest.raises(InvalidParameterError):
        build_stretch_spec(scalar_product_query(2), PrivacyVector([1.0, 1.0]))


def test_estimate_noiseless_half_weights():
    q = scalar_product_query(2)
    out = hdp_estimate(q, [1, 1, 1, 1], PrivacyVector([0.5] * 4), 1.0, NOISELESS)
    assert out.released == pytest.approx(0.5)
    brute = oracle.stretched(q.evaluate, [0.5] * 4)(np.ones((1, 4)))[0]
    assert out.released == pytest.approx(brute)


def test_estimate_with_unit_weights_is_plain_laplace():
    q = scalar_product_query(2)
    d = [1, 0, 1, 1]
    a = hdp_estimate(q, d, PrivacyVector.ones(4), 0.7, derive_rng(3))
    b = laplacian_mechanism(q.value(np.array(d, float)), 1.0, 0.7, derive_rng(3))
    assert a.released == b.released


def test_estimate_domain_violation():
    with pytest.raises(InvalidParameterError):
        hdp_estimate(scalar_product_query(1), [0.5, 1], PrivacyVector.ones(2), 1.0, NOISELESS)


def test_estimate_allows_all_zero_profile():
    out = hdp_estimate(scalar_product_query(2), [0, 0, 0, 0], PrivacyVector([0.3] * 4), 1.0, NOISELESS)
    assert out.released == 0.0


def test_noise_scale_is_public():
    rng = np.random.default_rng(8)
    q = scalar_product_query(3)
    for _ in range(25):
        eps = float(rng.choice([0.1, 0.5, 1, 2, 3]))
        d = rng.integers(0, 2, 6)
        out = hdp_estimate(q, d, PrivacyVector(rng.random(6)), eps, derive_rng(0))
        assert out.noise_scale.sigma == pytest.approx(1.0 / eps)


def test_distortion_bound_zero_for_identity():
    q = scalar_product_query(2)
    spec = build_stretch_spec(q, PrivacyVector.ones(4))
    assert distortion_bound(q, [1, 1, 0, 1], spec) == 0.0


def test_distortion_bound_example_value():
    q = scalar_product_query(2)
    d = np.array([1, 1, 1, 1.0])
    rng = np.random.default_rng(4)
    for _ in range(1000):
        v = 0.5 + 0.5 * rng.random(4)
        v[int(rng.integers(0, 4))] = 0.5
        spec = build_stretch_spec(q, PrivacyVector(v))
        bound = distortion_bound(q, d, spec)
        assert bound == pytest.approx(2.0)
        assert abs(q.value(d) - q.value(spec.shrink.diagonal * d)) <= bound + 1e-12


def test_generic_grid_bound_matches_closed_form():
    q = scalar_product_query(3)
    rng = np.random.default_rng(12)
    for _ in range(50):
        d = rng.integers(0, 2, 6).astype(float)
        spec = build_stretch_spec(q, PrivacyVector(rng.random(6)))
        closed = distortion_bound(q, d, spec)
        grid = distortion_bound(q, d, spec, closed_form=False)
        # The gradient norm peaks at c = 1 where B = I, so both forms agree.
        assert grid == pytest.approx(closed, rel=1e-12, abs=1e-12)


def test_distortion_needs_gradient_and_grid():
    dom = oracle.EnumerableDomain.binary(2)
    q = mechanism.bruteforce_query(lambda X: X.sum(axis=1), dom)
    spec = build_stretch_spec(q, PrivacyVector([0.5, 0.5]))
    with pytest.raises(UnsupportedQueryError):
        distortion_bound(q, [1, 1], spec)
    sq = scalar_product_query(1)
    with pytest.raises(InvalidParameterError):
        distortion_bound(sq, [1, 1], build_stretch_spec(sq, PrivacyVector([0.5, 1])), grid=1)


def test_shrinkage_compose():
    a = ShrinkageMatrix([0.5, 1.0])
    b = ShrinkageMatrix([0.5, 0.25])
    assert a.compose(b).diagonal.tolist() == [0.25, 0.25]
    assert math.isclose(float(np.prod(a.compose(b).diagonal)), 0.0625)
