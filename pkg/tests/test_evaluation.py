import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

import oracles
from dmdsc.checkpoint import Checkpoint
from dmdsc.datasets import LabeledDataset, SynthConfig, generate_synthetic
from dmdsc.errors import DimensionError, ValidationError
from dmdsc.etf import build_centers, dynamic_margins
from dmdsc.evaluation import (
    EvalReport,
    accuracy,
    auroc,
    average_reports,
    classify,
    evaluate_features,
    evaluate_trial,
    oscr,
    score_features,
)
from dmdsc.net import NetConfig, NetParams, init

CENTERS = build_centers(4, 3, 100.0)


def test_point_on_center_is_that_class():
    pred = classify(CENTERS.centers[[3]], CENTERS, -math.inf)
    assert pred.tolist() == [3]
    _, score = score_features(CENTERS.centers[[3]], CENTERS)
    assert score[0] == 0.0


def test_origin_ties_go_to_lowest_index():
    assert classify(np.zeros((1, 3)), CENTERS, -math.inf).tolist() == [0]


def test_far_point_is_rejected():
    # a point 2R from every center: sit on the axis orthogonal to the simplex
    probe = build_centers(4, 4, 100.0)
    far = np.array([[0.0, 0.0, 0.0, 100.0 * math.sqrt(3.0)]])
    assert np.allclose(np.linalg.norm(probe.centers - far, axis=1), 200.0)
    assert classify(far, probe, -(100.0 / math.sqrt(2.0)) ** 2).tolist() == [4]


@settings(max_examples=50, deadline=None)
@given(seed=st.integers(0, 2**32 - 1))
def test_infinite_thresholds(seed):
    f = np.random.default_rng(seed).normal(scale=200.0, size=(10, 3))
    assert np.all(classify(f, CENTERS, -math.inf) < 4)
    assert np.all(classify(f, CENTERS, math.inf) == 4)


@settings(max_examples=50, deadline=None)
@given(seed=st.integers(0, 2**32 - 1), c=st.integers(0, 3), t=st.floats(0.01, 0.99))
def test_score_decreases_radially(seed, c, t):
    direction = np.random.default_rng(seed).normal(size=3)
    direction /= np.linalg.norm(direction)
    s = CENTERS.centers[c]
    # stay well inside the nearest-center cell so the nearest center is fixed
    near = s + t * 10.0 * direction
    farther = s + (t + 0.5) * 10.0 * direction
    _, a = score_features(np.stack([near, farther]), CENTERS)
    assert a[1] < a[0]


def test_score_dimension_check():
    with pytest.raises(DimensionError):
        score_features(np.zeros((2, 2)), CENTERS)


def test_accuracy_examples():
    assert accuracy([0, 1, 2, 2], [0, 1, 1, 2]) == 0.75
    with pytest.raises(ValidationError):
        accuracy([], [])
    with pytest.raises(DimensionError):
        accuracy([0, 1], [0])


def test_auroc_examples():
    assert auroc([3, 4], [1, 2]) == 1.0
    assert auroc([1, 2, 3], [1, 2, 3]) == 0.5
    assert auroc([3, 1], [2, 0]) == 0.75
    with pytest.raises(ValidationError):
        auroc([], [1.0])


def test_oscr_examples():
    area, curve = oscr([5, 6], [True, True], [1, 2])
    assert area == 1.0
    assert curve[0].tolist() == [0.0, 0.0] and curve[-1].tolist() == [1.0, 1.0]
    assert oscr([5, 6], [False, False], [1, 7])[0] == 0.0
    known = [0.9, 0.4, 0.7, 0.1]
    correct = [True, True, False, True]
    unknown = [0.5, 0.8, 0.2, 0.05]
    assert oscr(known, correct, unknown)[0] == pytest.approx(
        oracles.oscr(known, correct, unknown), abs=1e-12
    )
    with pytest.raises(DimensionError):
        oscr([1.0], [True, False], [0.0])


def random_scores(rng):
    nk = int(rng.integers(1, 33))
    nu = int(rng.integers(1, 33))
    # small integer grid forces plenty of ties
    k = rng.integers(-5, 6, nk).astype(float)
    u = rng.integers(-5, 6, nu).astype(float)
    if rng.random() < 0.5:
        k = k + rng.normal(size=nk)
        u = u + rng.normal(size=nu)
    return k, rng.random(nk) < 0.7, u


def test_metrics_match_brute_force():
    rng = np.random.default_rng(123)
    for _ in range(200):
        k, correct, u = random_scores(rng)
        assert auroc(k, u) == pytest.approx(oracles.auroc(k, u), abs=1e-12)
        assert oscr(k, correct, u)[0] == pytest.approx(oracles.oscr(k, correct, u), abs=1e-12)


@settings(max_examples=100, deadline=None)
@given(seed=st.integers(0, 2**32 - 1))
def test_auroc_rank_invariance(seed):
    k, _, u = random_scores(np.random.default_rng(seed))
    assert auroc(np.exp(k), np.exp(u)) == auroc(k, u)
    assert auroc(3.0 * k - 7.0, 3.0 * u - 7.0) == auroc(k, u)


@settings(max_examples=100, deadline=None)
@given(seed=st.integers(0, 2**32 - 1))
def test_oscr_bounded_by_accuracy(seed):
    k, correct, u = random_scores(np.random.default_rng(seed))
    assert oscr(k, correct, u)[0] <= correct.mean() + 1e-12


@settings(max_examples=100, deadline=None)
@given(seed=st.integers(0, 2**32 - 1))
def test_oscr_equals_auroc_when_all_correct(seed):
    k, _, u = random_scores(np.random.default_rng(seed))
    area, curve = oscr(k, np.ones(len(k), bool), u)
    assert area == pytest.approx(auroc(k, u), abs=1e-12)
    assert np.all(np.diff(curve[:, 0]) >= 0) and np.all(np.diff(curve[:, 1]) >= 0)


# --- end to end ---------------------------------------------------------------------


def identity_checkpoint(num_classes=3, radius=100.0):
    """Network whose embedding is the input itself."""
    d = num_classes
    cfg = NetConfig(d, d, (), "relu", seed=0)
    params = NetParams([np.eye(d)], [np.zeros(d)])
    centers = build_centers(num_classes, d, radius)
    margins = dynamic_margins([1] * num_classes, 35.0, 55.0, radius)
    return Checkpoint(cfg, params, centers, margins)


def test_idealised_collapse_scores_perfectly():
    ckpt = identity_checkpoint()
    s = ckpt.centers.centers
    known = LabeledDataset(s[[0, 1, 2, 1]], [0, 1, 2, 1], "known-test")
    # both probes sit more than R away from every center
    far = np.array([[1000.0, 1000.0, 1000.0], [-1000.0, 0.0, 2000.0]])
    unknown = LabeledDataset(far, [3, 3], "unknown-test")
    assert np.all(np.linalg.norm(far[:, None] - s[None], axis=2) > 100.0)
    rep = evaluate_trial(ckpt, known, unknown)
    assert (rep.acc, rep.auroc, rep.oscr) == (1.0, 1.0, 1.0)
    assert rep.num_known_test == 4 and rep.num_unknown_test == 2
    assert rep.curve_csv().splitlines()[0] == "fpr,ccr"
    assert rep.to_dict()["acc"] == 1.0


def test_empty_unknown_set_is_an_error():
    ckpt = identity_checkpoint()
    known = LabeledDataset(ckpt.centers.centers, [0, 1, 2], "known-test")
    empty = LabeledDataset(np.zeros((0, 3)), np.zeros(0, int), "unknown-test")
    with pytest.raises(ValidationError):
        evaluate_trial(ckpt, known, empty)
    with pytest.raises(ValidationError):
        evaluate_features(np.zeros((0, 3)), [], np.zeros((1, 3)), ckpt.centers)


def test_untrained_network_is_near_chance():
    cfg = SynthConfig(num_known=4, num_unknown=2, input_dim=8, samples_per_majority_class=100,
                      imbalance_ratio=1, bg_samples=0, samples_per_unknown_class=50)
    values = []
    for seed in range(20):
        c = SynthConfig(**{**cfg.__dict__, "seed": seed})
        _, test_known, test_unknown, _ = generate_synthetic(c)
        net = NetConfig(8, 4, (32,), seed=seed)
        params = init(net)
        centers = build_centers(4, 4, 100.0)
        margins = dynamic_margins([1] * 4, 35.0, 55.0, 100.0)
        rep = evaluate_trial(Checkpoint(net, params, centers, margins), test_known, test_unknown)
        values.append(rep.auroc)
    assert 0.3 <= float(np.mean(values)) <= 0.7


def test_average_reports():
    a = EvalReport(0.9, 0.8, 0.7, 10, 5)
    b = EvalReport(0.7, 0.6, 0.5, 10, 5)
    avg = average_reports([a, b])
    assert avg.acc == pytest.approx(0.8) and avg.auroc == pytest.approx(0.7)
    assert avg.oscr == pytest.approx(0.6)
    assert average_reports([b, a]).to_dict() == avg.to_dict()
    assert average_reports([a]).to_dict() == a.to_dict()
    with pytest.raises(ValidationError):
        average_reports([])
