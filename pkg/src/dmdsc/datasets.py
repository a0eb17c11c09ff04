"""Synthetic open-set benchmarks with controllable class imbalance, plus CSV I/O.

Known classes are Gaussian blobs whose sizes decay geometrically from the
majority class to the minority class, so the max/min count ratio equals the
configured imbalance ratio.  Unknown classes are blobs of the same kind that
only ever appear at test time.  Background samples are drawn uniformly from
the (inflated) bounding box of the known centers.
"""

from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass
from typing import Optional

import numpy as np

from dmdsc._io import atomic_write_text
from dmdsc.errors import DimensionError, ParseError, ValidationError

ROLES = ("known-train", "known-test", "unknown-test", "background")
BACKGROUND_LABEL = -1
TRAIN_FRACTION = 0.8
MAX_CENTER_ATTEMPTS = 1000


class InfeasibleSeparationError(ValidationError):
    pass


@dataclass(frozen=True, eq=False)
class LabeledDataset:
    features: np.ndarray
    labels: np.ndarray
    role: str

    def __post_init__(self):
        x = np.asarray(self.features, dtype=np.float64)
        y = np.asarray(self.labels, dtype=np.int64)
        if x.ndim != 2:
            raise DimensionError(f"features must be 2-D, got shape {x.shape}")
        if y.shape != (len(x),):
            raise DimensionError(f"{len(y)} labels for {len(x)} samples")
        if not np.all(np.isfinite(x)):
            raise ValidationError("features contain non-finite values")
        if self.role not in ROLES:
            raise ValidationError(f"role must be one of {ROLES}, got {self.role!r}")
        x.setflags(write=False)
        y.setflags(write=False)
        object.__setattr__(self, "features", x)
        object.__setattr__(self, "labels", y)

    def __len__(self):
        return len(self.labels)

    @property
    def input_dim(self):
        return self.features.shape[1]

    @property
    def class_counts(self):
        """``{label: count}`` in ascending label order."""
        labels, counts = np.unique(self.labels, return_counts=True)
        return {int(k): int(n) for k, n in zip(labels, counts)}

    def counts_array(self, num_classes):
        """Counts for labels ``0..num_classes-1`` (background/out-of-range labels ignored)."""
        y = self.labels[(self.labels >= 0) & (self.labels < num_classes)]
        return np.bincount(y, minlength=num_classes)


@dataclass(frozen=True)
class SynthConfig:
    num_known: int = 6
    num_unknown: int = 2
    input_dim: int = 16
    samples_per_majority_class: int = 500
    imbalance_ratio: float = 10.0
    cluster_std: float = 1.0
    center_separation: float = 3.0
    bg_samples: int = 1000
    samples_per_unknown_class: int = 100
    seed: int = 0

    def validate(self):
        if self.num_known < 2:
            raise ValidationError(f"num_known must be >= 2, got {self.num_known}")
        if self.num_unknown < 1:
            raise ValidationError(f"num_unknown must be >= 1, got {self.num_unknown}")
        if self.input_dim < 2:
            raise ValidationError(f"input_dim must be >= 2, got {self.input_dim}")
        if not self.imbalance_ratio >= 1:
            raise ValidationError(f"imbalance ratio must be >= 1, got {self.imbalance_ratio}")
        if self.samples_per_majority_class < 1:
            raise ValidationError("samples_per_majority_class must be >= 1")
        if not (self.cluster_std > 0 and self.center_separation > 0):
            raise ValidationError("cluster_std and center_separation must be positive")
        if self.bg_samples < 0 or self.samples_per_unknown_class < 1:
            raise ValidationError("bg_samples must be >= 0 and samples_per_unknown_class >= 1")
        return self


@dataclass(frozen=True)
class TrialSplit:
    trial_index: int
    known_class_ids: tuple[int, ...]
    unknown_class_ids: tuple[int, ...]


def imbalanced_counts(majority, num_classes, imbalance_ratio):
    """Geometric profile from ``majority`` down to ``ceil(majority / IR)``."""
    counts = []
    for c in range(num_classes):
        if c == num_classes - 1:
            n = math.ceil(majority / imbalance_ratio)
        else:
            n = math.floor(majority * imbalance_ratio ** (-c / (num_classes - 1)) + 0.5)
        counts.append(max(1, int(n)))
    return counts


def _train_size(n):
    if n < 2:
        return n
    return min(n - 1, max(1, math.floor(TRAIN_FRACTION * n + 0.5)))


def _draw_centers(rng, count, dim, radius, min_dist):
    centers = []
    for c in range(count):
        for _ in range(MAX_CENTER_ATTEMPTS):
            v = rng.standard_normal(dim)
            v *= radius / np.linalg.norm(v)
            if all(np.linalg.norm(v - u) >= min_dist for u in centers):
                centers.append(v)
                break
        else:
            raise InfeasibleSeparationError(
                f"could not place class center {c} at distance >= {min_dist:g} from the others "
                f"after {MAX_CENTER_ATTEMPTS} attempts; increase center_separation or input_dim"
            )
    return np.array(centers)


def class_means(config):
    """All ``num_known + num_unknown`` blob centers for this config's seed."""
    config.validate()
    rng = np.random.default_rng([config.seed, 0])
    total = config.num_known + config.num_unknown
    return _draw_centers(
        rng, total, config.input_dim, config.center_separation, 3.0 * config.cluster_std
    )


def generate_synthetic(config, split: Optional[TrialSplit] = None):
    """Return ``(train, test_known, test_unknown, background)``.

    ``split`` chooses which generated blobs play the known classes; known
    classes are relabelled ``0..K-1`` in the split's order and unknown ones
    ``K..K+U-1``.  Without a split the first ``num_known`` blobs are known.
    """
    config.validate()
    k, u = config.num_known, config.num_unknown
    if split is None:
        split = TrialSplit(0, tuple(range(k)), tuple(range(k, k + u)))
    if len(split.known_class_ids) != k or len(split.unknown_class_ids) != u:
        raise ValidationError("trial split sizes do not match num_known/num_unknown")
    means = class_means(config)
    rng = np.random.default_rng([config.seed, 1, split.trial_index])
    counts = imbalanced_counts(config.samples_per_majority_class, k, config.imbalance_ratio)
    std = config.cluster_std
    d = config.input_dim

    tr_x, tr_y, te_x, te_y = [], [], [], []
    for label, (cid, n) in enumerate(zip(split.known_class_ids, counts)):
        x = means[cid] + std * rng.standard_normal((n, d))
        n_tr = _train_size(n)
        tr_x.append(x[:n_tr])
        tr_y.append(np.full(n_tr, label))
        te_x.append(x[n_tr:])
        te_y.append(np.full(n - n_tr, label))
    un_x, un_y = [], []
    for j, cid in enumerate(split.unknown_class_ids):
        n = config.samples_per_unknown_class
        un_x.append(means[cid] + std * rng.standard_normal((n, d)))
        un_y.append(np.full(n, k + j))

    known_means = means[list(split.known_class_ids)]
    lo = known_means.min(axis=0) - 3.0 * std
    hi = known_means.max(axis=0) + 3.0 * std
    bg_rng = np.random.default_rng([config.seed, 2, split.trial_index])
    bg_x = bg_rng.uniform(lo, hi, size=(config.bg_samples, d))

    return (
        LabeledDataset(np.concatenate(tr_x), np.concatenate(tr_y), "known-train"),
        LabeledDataset(np.concatenate(te_x), np.concatenate(te_y), "known-test"),
        LabeledDataset(np.concatenate(un_x), np.concatenate(un_y), "unknown-test"),
        LabeledDataset(bg_x, np.full(config.bg_samples, BACKGROUND_LABEL), "background"),
    )


def make_trial_splits(num_classes, num_known, num_trials, seed=0):
    """Random known/unknown partitions, one per trial, distinct while possible."""
    if not (1 <= num_known < num_classes):
        raise ValidationError(
            f"need 1 <= num_known < num_classes, got num_known={num_known}, num_classes={num_classes}"
        )
    if num_trials < 1:
        raise ValidationError(f"num_trials must be >= 1, got {num_trials}")
    n_distinct = math.comb(num_classes, num_known)
    seen = set()
    splits = []
    for t in range(num_trials):
        rng = np.random.default_rng([seed, 3, t])
        for _ in range(1000):
            known = tuple(sorted(int(c) for c in rng.permutation(num_classes)[:num_known]))
            if known not in seen or len(seen) >= n_distinct:
                break
        seen.add(known)
        unknown = tuple(c for c in range(num_classes) if c not in known)
        splits.append(TrialSplit(t, known, unknown))
    return splits


def write_csv(dataset, path):
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["label"] + [f"f{j + 1}" for j in range(dataset.input_dim)])
    for y, x in zip(dataset.labels.tolist(), dataset.features.tolist()):
        w.writerow([y] + [repr(v) for v in x])
    atomic_write_text(path, buf.getvalue())


def read_csv(path, role):
    with open(path, encoding="utf-8", newline="") as fh:
        rows = list(csv.reader(fh))
    if not rows:
        raise ParseError(f"{path}: file is empty")
    header = rows[0]
    if not header or header[0].strip() != "label" or len(header) < 2:
        raise ParseError(f"{path}: header must be 'label,f1,...,fD'", line=1)
    width = len(header)
    labels, feats = [], []
    for lineno, row in enumerate(rows[1:], start=2):
        if not row:
            continue
        if len(row) != width:
            raise DimensionError(
                f"{path}: line {lineno} has {len(row)} columns, header has {width}"
            )
        try:
            labels.append(int(row[0]))
        except ValueError:
            raise ParseError(f"{path}: label {row[0]!r} is not an integer", lineno, 1) from None
        vals = []
        for col, cell in enumerate(row[1:], start=2):
            try:
                v = float(cell)
            except ValueError:
                raise ParseError(f"{path}: {cell!r} is not a number", lineno, col) from None
            if not math.isfinite(v):
                raise ParseError(f"{path}: non-finite value {cell!r}", lineno, col)
            vals.append(v)
        feats.append(vals)
    if not feats:
        raise ParseError(f"{path}: no data rows")
    return LabeledDataset(np.array(feats), np.array(labels), role)

