"""Nearest-center classification with rejection, and open-set metrics.

The known-ness score of an embedding is the negated squared distance to its
nearest class center, so higher means "more known".  Class labels are
0-based; the rejected/unknown label is ``num_classes``.
"""

from __future__ import annotations

import io
import json
import math
from dataclasses import dataclass, field

import numpy as np

from dmdsc.errors import DimensionError, ValidationError
from dmdsc.net import embed


def _sq_dist(features, centers):
    f = np.asarray(features, dtype=np.float64)
    s = centers.centers
    if f.ndim != 2 or f.shape[1] != s.shape[1]:
        raise DimensionError(f"features of shape {f.shape} do not match center dim {s.shape[1]}")
    diff = f[:, None, :] - s[None, :, :]
    return np.einsum("ijk,ijk->ij", diff, diff)


def score_features(features, centers):
    """Return ``(predicted_class, score)``; argmin ties go to the lowest class index."""
    d2 = _sq_dist(features, centers)
    pred = np.argmin(d2, axis=1)
    return pred, -d2[np.arange(len(pred)), pred]


def classify(features, centers, threshold):
    """Nearest center when ``score >= threshold``, otherwise ``centers.num_classes``."""
    pred, score = score_features(features, centers)
    return np.where(score >= threshold, pred, centers.num_classes)


def accuracy(predicted, true_labels):
    predicted = np.asarray(predicted)
    true_labels = np.asarray(true_labels)
    if len(true_labels) == 0:
        raise ValidationError("accuracy of an empty known set is undefined")
    if predicted.shape != true_labels.shape:
        raise DimensionError("predicted and true labels differ in length")
    return float(np.count_nonzero(predicted == true_labels)) / len(true_labels)


def _nonempty(name, a):
    a = np.asarray(a, dtype=np.float64).ravel()
    if len(a) == 0:
        raise ValidationError(f"{name} is empty")
    return a


def auroc(known_scores, unknown_scores):
    """P(known score > unknown score) + 0.5 * P(tie), over all pairs."""
    k = _nonempty("known_scores", known_scores)
    u = np.sort(_nonempty("unknown_scores", unknown_scores))
    below = np.searchsorted(u, k, side="left")
    ties = np.searchsorted(u, k, side="right") - below
    wins = int(below.sum()) + 0.5 * int(ties.sum())
    return wins / (len(k) * len(u))


def oscr(known_scores, known_correct, unknown_scores):
    """Area under correct-classification rate vs false-positive rate.

    Thresholds sweep from ``+inf`` down through every observed score; a
    sample is accepted when its score is ``>= threshold``.  Returns
    ``(area, curve)`` with ``curve`` an (n, 2) array of ``(fpr, ccr)``
    points ordered by non-decreasing fpr.
    """
    k = _nonempty("known_scores", known_scores)
    u = _nonempty("unknown_scores", unknown_scores)
    correct = np.asarray(known_correct, dtype=bool).ravel()
    if correct.shape != k.shape:
        raise DimensionError("known_correct must align with known_scores")
    thresholds = np.concatenate([[np.inf], np.unique(np.concatenate([k, u]))[::-1]])
    ck = np.sort(k[correct])
    us = np.sort(u)
    cc = len(ck) - np.searchsorted(ck, thresholds, side="left")
    fp = len(us) - np.searchsorted(us, thresholds, side="left")
    ccr = cc / len(k)
    fpr = fp / len(u)
    area = math.fsum(0.5 * np.diff(fpr) * (ccr[1:] + ccr[:-1]))
    return area, np.column_stack([fpr, ccr])


@dataclass(eq=False)
class EvalReport:
    acc: float
    auroc: float
    oscr: float
    num_known_test: int
    num_unknown_test: int
    ccr_fpr_curve: np.ndarray | None = field(default=None, repr=False)

    def to_dict(self):
        return {
            "acc": self.acc,
            "auroc": self.auroc,
            "oscr": self.oscr,
            "num_known_test": self.num_known_test,
            "num_unknown_test": self.num_unknown_test,
        }

    def to_json(self):
        return json.dumps(self.to_dict(), indent=2, sort_keys=True) + "\n"

    def curve_csv(self):
        buf = io.StringIO()
        buf.write("fpr,ccr\n")
        if self.ccr_fpr_curve is not None:
            for fpr, ccr in self.ccr_fpr_curve.tolist():
                buf.write(f"{fpr!r},{ccr!r}\n")
        return buf.getvalue()


def evaluate_features(known_features, known_labels, unknown_features, centers):
    """Metrics for embeddings that are already in feature space."""
    if len(unknown_features) == 0:
        raise ValidationError("open-set metrics need at least one unknown test sample")
    if len(known_features) == 0:
        raise ValidationError("open-set metrics need at least one known test sample")
    pred_k, score_k = score_features(known_features, centers)
    _, score_u = score_features(unknown_features, centers)
    labels = np.asarray(known_labels)
    correct = pred_k == labels
    area, curve = oscr(score_k, correct, score_u)
    return EvalReport(
        acc=accuracy(pred_k, labels),
        auroc=auroc(score_k, score_u),
        oscr=area,
        num_known_test=len(labels),
        num_unknown_test=len(score_u),
        ccr_fpr_curve=curve,
    )


def evaluate_trial(checkpoint, test_known, test_unknown):
    if len(test_unknown) == 0:
        raise ValidationError("test_unknown is empty; open-set metrics are undefined")
    act = checkpoint.net_config.activation
    fk = embed(checkpoint.params, test_known.features, act)
    fu = embed(checkpoint.params, test_unknown.features, act)
    return evaluate_features(fk, test_known.labels, fu, checkpoint.centers)


def average_reports(reports):
    """Arithmetic mean of the scalar metrics; the curve is dropped."""
    reports = list(reports)
    if not reports:
        raise ValidationError("cannot average an empty list of reports")
    n = len(reports)
    return EvalReport(
        acc=math.fsum(r.acc for r in reports) / n,
        auroc=math.fsum(r.auroc for r in reports) / n,
        oscr=math.fsum(r.oscr for r in reports) / n,
        num_known_test=sum(r.num_known_test for r in reports),
        num_unknown_test=sum(r.num_unknown_test for r in reports),
    )
