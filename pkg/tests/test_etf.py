import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

import oracles
from dmdsc.errors import DimensionError, MarginConstraintError, ValidationError
from dmdsc.etf import (
    build_centers,
    dynamic_margins,
    margin_at,
    max_margin_bound,
    pairwise_center_distance,
    uniform_margins,
    verify_ball_disjointness,
)


def brute_pairwise(centers):
    s = centers.centers
    c = len(s)
    return [math.dist(s[i], s[j]) for i in range(c) for j in range(c) if i != j]


def test_two_classes_are_antipodal():
    e = build_centers(2, 1, 100.0)
    assert sorted(e.centers[:, 0].tolist()) == pytest.approx([-100.0, 100.0], abs=1e-12)
    assert brute_pairwise(e)[0] == pytest.approx(200.0, abs=1e-9)
    assert pairwise_center_distance(2, 100.0) == pytest.approx(100 * math.sqrt(4 / 1))


def test_four_classes_pairwise_distance():
    e = build_centers(4, 3, 100.0)
    expected = 100.0 * math.sqrt(8.0 / 3.0)
    assert expected == pytest.approx(163.2993, abs=1e-4)
    for dist in brute_pairwise(e):
        assert dist == pytest.approx(expected, abs=1e-9 * 100)
    assert pairwise_center_distance(4, 100.0) == pytest.approx(expected, abs=1e-12)


def test_padding_norms_and_inner_products():
    e = build_centers(3, 5, 1.0)
    s = e.centers
    assert np.all(s[:, 2:] == 0.0)
    np.testing.assert_allclose(np.linalg.norm(s, axis=1), 1.0, atol=1e-12)
    for i in range(3):
        for j in range(3):
            if i != j:
                assert float(s[i] @ s[j]) == pytest.approx(-0.5, abs=1e-12)


def test_pairwise_distance_limit_from_above():
    big = pairwise_center_distance(10**6, 100.0)
    assert big > 100.0 * math.sqrt(2.0)
    assert big == pytest.approx(100.0 * math.sqrt(2.0), abs=1e-3)
    assert pairwise_center_distance(2, 1.0) == 2.0


@pytest.mark.parametrize(
    "args, exc",
    [
        ((4, 2, 1.0), DimensionError),
        ((1, 3, 1.0), ValidationError),
        ((3, 3, 0.0), ValidationError),
        ((3, 3, -1.0), ValidationError),
    ],
)
def test_build_centers_rejects(args, exc):
    with pytest.raises(exc):
        build_centers(*args)


def test_pairwise_distance_rejects_bad_input():
    with pytest.raises(ValidationError):
        pairwise_center_distance(1, 1.0)
    with pytest.raises(ValidationError):
        pairwise_center_distance(3, 0.0)


def test_centers_are_read_only():
    e = build_centers(3, 2, 1.0)
    with pytest.raises(ValueError):
        e.centers[0, 0] = 1.0


@settings(max_examples=60, deadline=None)
@given(
    c=st.integers(2, 64),
    extra=st.integers(0, 64),
    radius=st.floats(0.1, 1000.0),
)
def test_etf_invariants(c, extra, radius):
    d = c - 1 + extra % (c + 2)
    e = build_centers(c, d, radius)
    s = e.centers
    tol = 1e-9 * radius
    np.testing.assert_allclose(np.linalg.norm(s, axis=1), radius, atol=tol)
    diff = s[:, None, :] - s[None, :, :]
    dist = np.sqrt((diff**2).sum(-1))
    off = dist[~np.eye(c, dtype=bool)]
    np.testing.assert_allclose(off, radius * math.sqrt(2 * c / (c - 1)), atol=tol)
    np.testing.assert_allclose(s.sum(axis=0), 0.0, atol=tol)
    assert np.array_equal(s, build_centers(c, d, radius).centers)


# --- margin schedule ----------------------------------------------------------


def test_balanced_counts_give_equal_margins():
    m = dynamic_margins([100, 100, 100, 100], 35.0, 65.0, 100.0)
    np.testing.assert_allclose(m.per_class_margin, 35 + 30 * 0.75, atol=1e-12)
    assert m.per_class_margin[0] == pytest.approx(57.5)


def test_single_class_gets_minimum():
    m = dynamic_margins([1], 35.0, 55.0, 100.0)
    assert m.per_class_margin[0] == 35.0


def test_minority_gets_larger_margin():
    m = dynamic_margins([999, 1], 35.0, 55.0, 100.0)
    assert m.per_class_margin[0] == pytest.approx(35.02, abs=1e-12)
    assert m.per_class_margin[1] == pytest.approx(54.98, abs=1e-12)
    assert m.per_class_margin[1] > m.per_class_margin[0]


@pytest.mark.parametrize(
    "m_min, m_max, radius",
    [(35, 80, 100), (35, 71, 100), (0, 50, 100), (50, 40, 100), (-1, 10, 100), (35, 35, 100)],
)
def test_margin_constraint(m_min, m_max, radius):
    with pytest.raises(MarginConstraintError, match=r"R/sqrt\(2\) = 70\.71"):
        dynamic_margins([10, 5], m_min, m_max, radius)


def test_margin_constraint_edge_just_below_bound_is_accepted():
    dynamic_margins([3, 1], 35.0, math.nextafter(max_margin_bound(100.0), 0), 100.0)


@pytest.mark.parametrize("counts", [[], [3, 0], [2, -1], [1.5, 2]])
def test_bad_counts(counts):
    with pytest.raises(ValidationError):
        dynamic_margins(counts, 35.0, 55.0, 100.0)


def test_uniform_margins_use_midpoint():
    m = uniform_margins([500, 5, 50], 35.0, 55.0, 100.0)
    np.testing.assert_array_equal(m.per_class_margin, 45.0)


def test_margin_function_endpoints_are_exact():
    assert margin_at(0.0, 35.0, 65.0) == 65.0
    assert margin_at(1.0, 35.0, 65.0) == 35.0
    assert margin_at(0.0, 0.1, 0.7) == 0.7
    assert margin_at(1.0, 0.1, 0.7) == 0.1


counts_strategy = st.lists(st.integers(1, 10**6), min_size=1, max_size=50)
margin_pair = st.tuples(st.floats(0.01, 69.0), st.floats(0.01, 69.0)).filter(
    lambda t: abs(t[0] - t[1]) > 1e-6
)


@settings(max_examples=200, deadline=None)
@given(counts=counts_strategy, pair=margin_pair)
def test_boundedness_and_monotonicity(counts, pair):
    lo, hi = sorted(pair)
    m = dynamic_margins(counts, lo, hi, 100.0).per_class_margin
    assert np.all(m >= lo)
    assert np.all(m < hi)
    order = np.argsort(-np.array(counts), kind="stable")
    assert np.all(np.diff(m[order]) >= 0)


def test_extremes_by_dilution():
    # Majority share p -> 1 as N grows: margin falls towards m_min.
    prev_major = math.inf
    prev_minor = -math.inf
    for n in [10, 100, 1000, 10**4, 10**5, 10**6, 10**7]:
        m = dynamic_margins([n - 2, 1, 1], 35.0, 55.0, 100.0).per_class_margin
        assert m[0] < prev_major
        assert m[1] > prev_minor
        prev_major, prev_minor = m[0], m[1]
    assert prev_major == pytest.approx(35.0, abs=1e-4)
    assert prev_minor == pytest.approx(55.0, abs=1e-4)


@settings(max_examples=100, deadline=None)
@given(counts=st.lists(st.integers(1, 1000), min_size=2, max_size=30), pair=margin_pair)
def test_affine_recovery(counts, pair):
    lo, hi = sorted(pair)
    if len(set(counts)) < 2:
        counts = counts + [counts[0] + 1]
    sched = dynamic_margins(counts, lo, hi, 100.0)
    p = np.array(counts) / sum(counts)
    slope, intercept = oracles.affine_fit(p, sched.per_class_margin)
    # Last-bit rounding of each margin is amplified by 1/spread(p) in any fit.
    tol = 1e-12 + 4 * np.spacing(hi) / np.ptp(p)
    assert slope == pytest.approx(-(hi - lo), abs=tol)
    assert intercept == pytest.approx(hi, abs=tol)


# --- ball disjointness ----------------------------------------------------------


def test_disjointness_examples():
    e = build_centers(4, 3, 100.0)
    assert verify_ball_disjointness(e, 65.0)
    assert not verify_ball_disjointness(e, 82.0)


@pytest.mark.parametrize("c", range(2, 65))
def test_uniform_bound_guarantees_disjointness(c):
    e = build_centers(c, c, 100.0)
    assert verify_ball_disjointness(e, max_margin_bound(100.0) - 1e-9)
    per_pair = 100.0 * math.sqrt(c / (2 * (c - 1)))
    assert not verify_ball_disjointness(e, per_pair + 1e-6)
