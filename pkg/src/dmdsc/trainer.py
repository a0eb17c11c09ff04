"""Mini-batch training of the embedding network against fixed simplex centers."""

from __future__ import annotations

import io
import logging
import math
from dataclasses import asdict, dataclass, field
from typing import Optional

import numpy as np

from dmdsc.checkpoint import Checkpoint
from dmdsc.errors import (
    DimensionError,
    MissingBackgroundError,
    TrainingDivergedError,
    ValidationError,
)
from dmdsc.etf import build_centers, check_margin_constraint, dynamic_margins, uniform_margins
from dmdsc.evaluation import score_features
from dmdsc.losses import FeatureBatch, total_loss
from dmdsc.net import NetParams, backward, embed, forward, init

log = logging.getLogger(__name__)

MARGIN_MODES = ("dynamic", "uniform")


@dataclass(frozen=True)
class TrainConfig:
    epochs: int = 100
    batch_size_known: int = 64
    # None means "same as batch_size_known"
    batch_size_bg: Optional[int] = None
    learning_rate: float = 2e-3
    rms_decay: float = 0.9
    rms_epsilon: float = 1e-8
    lambda_inter: float = 0.1
    lambda_bg: float = 0.1
    m_min: float = 35.0
    m_max: float = 55.0
    radius: float = 100.0
    seed: int = 0
    eval_every: int = 1
    margin_mode: str = "dynamic"
    square_margin: bool = False

    def __post_init__(self):
        if self.epochs < 1:
            raise ValidationError(f"epochs must be >= 1, got {self.epochs}")
        if self.batch_size_known < 1:
            raise ValidationError(f"batch_size_known must be >= 1, got {self.batch_size_known}")
        if self.batch_size_bg is not None and self.batch_size_bg < 1:
            raise ValidationError(f"batch_size_bg must be >= 1, got {self.batch_size_bg}")
        if not self.learning_rate > 0:
            raise ValidationError(f"learning_rate must be > 0, got {self.learning_rate}")
        if not 0 < self.rms_decay < 1:
            raise ValidationError(f"rms_decay must lie in (0, 1), got {self.rms_decay}")
        if not self.rms_epsilon > 0:
            raise ValidationError(f"rms_epsilon must be > 0, got {self.rms_epsilon}")
        if self.lambda_inter < 0 or self.lambda_bg < 0:
            raise ValidationError("lambda_inter and lambda_bg must be >= 0")
        if self.eval_every < 1:
            raise ValidationError(f"eval_every must be >= 1, got {self.eval_every}")
        if self.margin_mode not in MARGIN_MODES:
            raise ValidationError(f"margin_mode must be one of {MARGIN_MODES}")
        if not self.radius > 0:
            raise ValidationError(f"radius must be > 0, got {self.radius}")
        check_margin_constraint(self.m_min, self.m_max, self.radius)

    @property
    def bg_batch(self):
        return self.batch_size_known if self.batch_size_bg is None else self.batch_size_bg


@dataclass(frozen=True)
class TrainRecord:
    epoch: int
    intra: float
    inter: float
    bg: float
    total: float
    train_acc: float


@dataclass
class TrainLog:
    records: list[TrainRecord] = field(default_factory=list)

    COLUMNS = ("epoch", "intra", "inter", "bg", "total", "train_acc")

    def __len__(self):
        return len(self.records)

    def column(self, name):
        return np.array([getattr(r, name) for r in self.records])

    def to_csv(self):
        buf = io.StringIO()
        buf.write(",".join(self.COLUMNS) + "\n")
        for r in self.records:
            buf.write(",".join(repr(v) for v in asdict(r).values()) + "\n")
        return buf.getvalue()


def rmsprop_step(params, grads, state, lr, decay=0.9, epsilon=1e-8):
    """One RMSprop update over parallel lists of arrays; inputs are not modified.

    ``state' = decay*state + (1-decay)*grad**2`` and
    ``param' = param - lr*grad / (sqrt(state') + epsilon)``.
    """
    if not (len(params) == len(grads) == len(state)):
        raise DimensionError("params, grads and state must have the same number of arrays")
    new_params, new_state = [], []
    for p, g, s in zip(params, grads, state):
        p, g, s = np.asarray(p, dtype=np.float64), np.asarray(g), np.asarray(s)
        if not (p.shape == g.shape == s.shape):
            raise DimensionError(f"shape mismatch: param {p.shape}, grad {g.shape}, state {s.shape}")
        s2 = decay * s + (1.0 - decay) * g * g
        new_state.append(s2)
        new_params.append(p - lr * g / (np.sqrt(s2) + epsilon))
    return new_params, new_state


def margin_schedule(counts, cfg):
    make = dynamic_margins if cfg.margin_mode == "dynamic" else uniform_margins
    return make(counts, cfg.m_min, cfg.m_max, cfg.radius)


def _class_counts(dataset):
    y = dataset.labels
    if len(y) == 0:
        raise ValidationError("training set is empty")
    if y.min() < 0:
        raise ValidationError("training labels must be >= 0")
    counts = np.bincount(y)
    missing = np.flatnonzero(counts == 0)
    if len(missing):
        raise ValidationError(f"classes {missing.tolist()} have no training samples")
    return counts.tolist()


def _batches(n, size):
    return [(i, min(i + size, n)) for i in range(0, n, size)]


def train(dataset, bg_dataset, net_config, train_config, resume: Optional[Checkpoint] = None):
    """Fit the embedding network; returns ``(Checkpoint, TrainLog)``.

    Each epoch shuffles the known data with a generator seeded by
    ``(seed, epoch)`` and pairs every known batch with the next slice of an
    independently shuffled background stream.  With ``resume`` the run
    continues after the checkpoint's last completed epoch.
    """
    cfg = train_config
    use_bg = cfg.lambda_bg > 0
    if use_bg and (bg_dataset is None or len(bg_dataset) == 0):
        raise MissingBackgroundError("lambda_bg > 0 but no background samples were supplied")
    if dataset.input_dim != net_config.input_dim:
        raise DimensionError(
            f"dataset has {dataset.input_dim} features, network expects {net_config.input_dim}"
        )
    if use_bg and bg_dataset.input_dim != net_config.input_dim:
        raise DimensionError("background feature dimension does not match the training data")

    counts = _class_counts(dataset)
    num_classes = len(counts)
    centers = build_centers(num_classes, net_config.embed_dim, cfg.radius)
    margins = margin_schedule(counts, cfg)
    loss_margins = margins.squared() if cfg.square_margin else margins

    if resume is None:
        params = init(net_config)
        state = [np.zeros_like(a) for a in params.arrays()]
        start_epoch, steps = 0, 0
    else:
        if resume.net_config != net_config:
            raise ValidationError("checkpoint network config differs from the requested one")
        params = resume.params.copy()
        state = [a.copy() for a in resume.optimizer_state]
        start_epoch = int(resume.metadata["epoch"])
        steps = int(resume.metadata.get("steps", 0))

    x, y = dataset.features, dataset.labels
    act = net_config.activation
    bk = cfg.batch_size_known
    bb = cfg.bg_batch
    trainlog = TrainLog()

    for epoch in range(start_epoch, cfg.epochs):
        order = np.random.default_rng([cfg.seed, epoch]).permutation(len(y))
        if use_bg:
            bg_rng = np.random.default_rng([cfg.seed, epoch, 1])
            bg_order = bg_rng.permutation(len(bg_dataset))
            bg_pos = 0
        sums = {"intra": [], "inter": [], "bg": [], "total": []}
        for b, (lo, hi) in enumerate(_batches(len(y), bk)):
            idx = order[lo:hi]
            xb = x[idx]
            if use_bg:
                take = np.arange(bg_pos, bg_pos + bb) % len(bg_order)
                bg_pos = (bg_pos + bb) % len(bg_order)
                xb = np.concatenate([xb, bg_dataset.features[bg_order[take]]])
            feats, tape = forward(params, xb, act)
            if not np.all(np.isfinite(feats)):
                raise TrainingDivergedError(epoch + 1, b, math.nan)
            known = FeatureBatch(feats[: hi - lo], y[idx])
            bg_batch = FeatureBatch.background(feats[hi - lo :]) if use_bg else None
            # overflow is caught by the finiteness check below
            with np.errstate(over="ignore", invalid="ignore"):
                parts, (g_known, g_bg) = total_loss(
                    known, bg_batch, centers, loss_margins, cfg.lambda_inter, cfg.lambda_bg
                )
            if not math.isfinite(parts.total):
                raise TrainingDivergedError(epoch + 1, b, parts.total)
            g = g_known if g_bg is None else np.concatenate([g_known, g_bg])
            grads = backward(params, tape, g)
            new, state = rmsprop_step(
                params.arrays(), grads.arrays(), state, cfg.learning_rate, cfg.rms_decay, cfg.rms_epsilon
            )
            params = NetParams.from_arrays(new)
            steps += 1
            w = hi - lo
            for key in sums:
                sums[key].append(w * getattr(parts, key))

        n = len(y)
        epoch_no = epoch + 1
        if epoch_no % cfg.eval_every == 0 or epoch_no == cfg.epochs:
            pred, _ = score_features(embed(params, x, act), centers)
            train_acc = float(np.count_nonzero(pred == y)) / n
        else:
            train_acc = math.nan
        rec = TrainRecord(
            epoch_no,
            math.fsum(sums["intra"]) / n,
            math.fsum(sums["inter"]) / n,
            math.fsum(sums["bg"]) / n,
            math.fsum(sums["total"]) / n,
            train_acc,
        )
        trainlog.records.append(rec)
        log.debug(
            "epoch %d: total=%.6g intra=%.6g inter=%.6g bg=%.6g acc=%.4f",
            rec.epoch, rec.total, rec.intra, rec.inter, rec.bg, rec.train_acc,
        )

    metadata = {
        "epoch": max(cfg.epochs, start_epoch),
        "steps": steps,
        "train_config": asdict(cfg),
        "num_classes": num_classes,
    }
    ckpt = Checkpoint(net_config, params, centers, margins, metadata, state)
    return ckpt, trainlog
