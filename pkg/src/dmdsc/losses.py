"""Margin losses around fixed class centers, with analytic gradients.

All three terms act on squared Euclidean distances between embeddings and
centers.  Values are reduced with ``math.fsum`` so they are exactly
rounded and therefore independent of sample order.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional

import numpy as np

from dmdsc.errors import InvalidBatchError, MissingBackgroundError, ValidationError

KNOWN = "known"
BACKGROUND = "background"


@dataclass(frozen=True, eq=False)
class FeatureBatch:
    """Embeddings ``features`` (B, d); ``labels`` (B,) are 0-based and unset for background."""

    features: np.ndarray
    labels: Optional[np.ndarray] = None
    role: str = KNOWN

    def __post_init__(self):
        f = np.asarray(self.features, dtype=np.float64)
        if f.ndim != 2:
            raise InvalidBatchError(f"features must be 2-D (B, d), got shape {f.shape}")
        if not np.all(np.isfinite(f)):
            raise InvalidBatchError("features contain non-finite values")
        object.__setattr__(self, "features", f)
        if self.role not in (KNOWN, BACKGROUND):
            raise InvalidBatchError(f"unknown batch role {self.role!r}")
        if self.role == KNOWN:
            if self.labels is None:
                raise InvalidBatchError("known batch needs labels")
            y = np.asarray(self.labels)
            if y.shape != (len(f),):
                raise InvalidBatchError(f"labels shape {y.shape} does not match {len(f)} features")
            object.__setattr__(self, "labels", y.astype(np.int64))

    def __len__(self):
        return len(self.features)

    @classmethod
    def background(cls, features):
        return cls(features, None, BACKGROUND)


@dataclass(frozen=True)
class LossBreakdown:
    intra: float
    inter: float
    bg: float
    total: float
    active_inter_pairs: int = 0
    active_bg_pairs: int = 0


def _check_known(batch, centers):
    if batch.role != KNOWN:
        raise InvalidBatchError(f"expected a known batch, got role {batch.role!r}")
    if len(batch) == 0:
        raise InvalidBatchError("batch is empty")
    if batch.features.shape[1] != centers.embed_dim:
        raise InvalidBatchError(
            f"feature dim {batch.features.shape[1]} != center dim {centers.embed_dim}"
        )
    y = batch.labels
    if y.min() < 0 or y.max() >= centers.num_classes:
        raise InvalidBatchError(
            f"labels must lie in [0, {centers.num_classes - 1}], got range [{y.min()}, {y.max()}]"
        )


def _check_margins(centers, margins):
    if margins.num_classes != centers.num_classes:
        raise ValidationError(
            f"margin schedule has {margins.num_classes} classes, centers have {centers.num_classes}"
        )


def _sq_dist(a, b):
    diff = a[:, None, :] - b[None, :, :]
    return np.einsum("ijk,ijk->ij", diff, diff)


def intra_loss(batch, centers):
    """Mean squared distance of each feature to its own class center."""
    _check_known(batch, centers)
    f, y = batch.features, batch.labels
    b = len(f)
    r = f - centers.centers[y]
    per_sample = np.einsum("ij,ij->i", r, r)
    return math.fsum(per_sample) / b, (2.0 / b) * r


def _inter_terms(batch, centers, margins):
    _check_known(batch, centers)
    _check_margins(centers, margins)
    f, y = batch.features, batch.labels
    s = centers.centers
    b = len(f)
    d_all = _sq_dist(f, s)
    d_own = d_all[np.arange(b), y]
    hinge = margins.per_class_margin[y][:, None] + d_own[:, None] - d_all
    active = hinge > 0
    active[np.arange(b), y] = False
    loss = math.fsum(hinge[active]) / b
    # d/df [|f - s_y|^2 - |f - s_c|^2] = 2 (s_c - s_y)
    n_active = active.sum(axis=1)
    grad = (2.0 / b) * (active.astype(np.float64) @ s - n_active[:, None] * s[y])
    return loss, grad, int(active.sum())


def inter_loss(batch, centers, margins):
    """Hinge on own-center vs rival-center squared distance, averaged over the batch."""
    loss, grad, _ = _inter_terms(batch, centers, margins)
    return loss, grad


def _bg_terms(known, background, centers, margins):
    _check_known(known, centers)
    _check_margins(centers, margins)
    if background.role != BACKGROUND:
        raise InvalidBatchError(f"expected a background batch, got role {background.role!r}")
    if len(background) == 0:
        raise InvalidBatchError("background batch is empty")
    if background.features.shape[1] != centers.embed_dim:
        raise InvalidBatchError(
            f"background dim {background.features.shape[1]} != center dim {centers.embed_dim}"
        )
    f, y = known.features, known.labels
    g = background.features
    s = centers.centers
    bk, bb = len(f), len(g)
    norm = 1.0 / (bk * bb)
    own = s[y]
    r = f - own
    d_own = np.einsum("ij,ij->i", r, r)
    # (B_k, B_b): distance from every background feature to each known sample's center
    d_bg = _sq_dist(g, s)[:, y].T
    hinge = margins.per_class_margin[y][:, None] + d_own[:, None] - d_bg
    active = hinge > 0
    loss = math.fsum(hinge[active]) * norm
    act = active.astype(np.float64)
    grad_known = (2.0 * norm) * act.sum(axis=1)[:, None] * r
    grad_bg = -(2.0 * norm) * (act.sum(axis=0)[:, None] * g - act.T @ own)
    return loss, grad_known, grad_bg, int(active.sum())


def bg_loss(known, background, centers, margins):
    """Hinge requiring background features to sit farther from each known center
    than that class's own samples, by the class margin.

    Returns ``(loss, grad_known, grad_bg)``.
    """
    loss, gk, gb, _ = _bg_terms(known, background, centers, margins)
    return loss, gk, gb


def total_loss(known, background, centers, margins, lambda_inter=0.0, lambda_bg=0.0):
    """Weighted objective ``intra + lambda_inter*inter + lambda_bg*bg``.

    Terms with a zero weight are skipped entirely (reported as 0).  Returns
    ``(LossBreakdown, (grad_known, grad_bg))``; ``grad_bg`` is None when no
    background term was evaluated.
    """
    if lambda_inter < 0 or lambda_bg < 0:
        raise ValidationError(
            f"loss weights must be >= 0, got lambda_inter={lambda_inter}, lambda_bg={lambda_bg}"
        )
    if lambda_bg > 0 and background is None:
        raise MissingBackgroundError("lambda_bg > 0 requires a background batch")

    intra, grad_known = intra_loss(known, centers)
    inter = bg = 0.0
    n_inter = n_bg = 0
    grad_bg = None
    if lambda_inter > 0:
        inter, g_inter, n_inter = _inter_terms(known, centers, margins)
        grad_known = grad_known + lambda_inter * g_inter
    if lambda_bg > 0:
        bg, g_known_bg, g_bg, n_bg = _bg_terms(known, background, centers, margins)
        grad_known = grad_known + lambda_bg * g_known_bg
        grad_bg = lambda_bg * g_bg
    total = intra + lambda_inter * inter + lambda_bg * bg
    breakdown = LossBreakdown(intra, inter, bg, total, n_inter, n_bg)
    return breakdown, (grad_known, grad_bg)
