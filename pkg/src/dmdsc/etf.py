"""Fixed simplex-ETF class centers and the class-adaptive margin schedule.

Centers are the vertices of a regular simplex inscribed in a sphere of
radius ``R``.  They never move during training; the network is pulled
towards them instead.  Margins are assigned per class from training
frequencies so that rare classes get the widest margin.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from dmdsc.errors import DimensionError, MarginConstraintError, ValidationError

__all__ = [
    "EtfCenters",
    "MarginSchedule",
    "build_centers",
    "check_margin_constraint",
    "dynamic_margins",
    "helmert_basis",
    "margin_at",
    "max_margin_bound",
    "pairwise_center_distance",
    "uniform_margins",
    "verify_ball_disjointness",
]


def _frozen(a):
    a = np.array(a, dtype=np.float64)
    a.setflags(write=False)
    return a


@dataclass(frozen=True, eq=False)
class EtfCenters:
    """``num_classes`` prototypes stacked row-wise in ``centers`` (C, d)."""

    num_classes: int
    embed_dim: int
    radius: float
    centers: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "centers", _frozen(self.centers))
        if self.centers.shape != (self.num_classes, self.embed_dim):
            raise DimensionError(
                f"centers have shape {self.centers.shape}, expected "
                f"({self.num_classes}, {self.embed_dim})"
            )

    def __getitem__(self, c):
        return self.centers[c]

    def __len__(self):
        return self.num_classes


@dataclass(frozen=True, eq=False)
class MarginSchedule:
    per_class_margin: np.ndarray
    m_min: float
    m_max: float
    class_counts: tuple[int, ...]

    def __post_init__(self):
        object.__setattr__(self, "per_class_margin", _frozen(self.per_class_margin))
        object.__setattr__(self, "class_counts", tuple(int(n) for n in self.class_counts))

    @property
    def num_classes(self):
        return len(self.per_class_margin)

    def squared(self):
        """Schedule whose margins are the squares of these (for the squared-margin mode)."""
        return MarginSchedule(
            self.per_class_margin**2, self.m_min**2, self.m_max**2, self.class_counts
        )


def helmert_basis(n):
    """Orthonormal basis of the sum-zero subspace of R^n, as an (n-1, n) array.

    Row k (0-based) is ``(1, ..., 1, -(k+1), 0, ..., 0) / sqrt((k+1)(k+2))``
    with ``k+1`` leading ones.
    """
    h = np.zeros((n - 1, n))
    for k in range(1, n):
        h[k - 1, :k] = 1.0
        h[k - 1, k] = -float(k)
        h[k - 1] /= math.sqrt(k * (k + 1))
    return h


def build_centers(num_classes, embed_dim, radius):
    """Regular simplex vertices on the radius-``radius`` sphere in ``embed_dim`` dims.

    The centered basis directions ``e_i - 1/C`` are expressed in the Helmert
    basis, which places them in the first ``C-1`` coordinates; the rest are
    zero.  Every vertex has norm ``radius`` and all pairwise inner products
    equal ``-radius**2 / (C-1)``.
    """
    if num_classes < 2:
        raise ValidationError(f"num_classes must be >= 2, got {num_classes}")
    if not radius > 0:
        raise ValidationError(f"radius must be positive, got {radius}")
    if embed_dim < num_classes - 1:
        raise DimensionError(
            f"embed_dim={embed_dim} is too small for {num_classes} classes "
            f"(need embed_dim >= {num_classes - 1})"
        )
    c = num_classes
    # Columns of the Helmert basis are the coordinates of e_i - 1/C, each with
    # norm sqrt((C-1)/C).
    coords = helmert_basis(c).T * (radius * math.sqrt(c / (c - 1)))
    centers = np.zeros((c, embed_dim))
    centers[:, : c - 1] = coords
    return EtfCenters(num_classes, embed_dim, float(radius), centers)


def pairwise_center_distance(num_classes, radius):
    if num_classes < 2:
        raise ValidationError(f"num_classes must be >= 2, got {num_classes}")
    if not radius > 0:
        raise ValidationError(f"radius must be positive, got {radius}")
    return radius * math.sqrt(2.0 * num_classes / (num_classes - 1))


def max_margin_bound(radius):
    """Uniform upper bound ``R / sqrt(2)`` on admissible margins."""
    return radius / math.sqrt(2.0)


def check_margin_constraint(m_min, m_max, radius):
    bound = max_margin_bound(radius)
    if not (0 < m_min < m_max < bound):
        raise MarginConstraintError(
            f"margins must satisfy 0 < m_min < m_max < R/sqrt(2) = {bound:.4f} "
            f"(R={radius:g}); got m_min={m_min:g}, m_max={m_max:g}"
        )


def margin_at(p, m_min, m_max):
    """Margin for a class holding fraction ``p`` of the training set.

    Written as the convex combination ``m_max*(1-p) + m_min*p`` so the end
    points ``p=0`` and ``p=1`` give ``m_max`` and ``m_min`` exactly.
    """
    p = np.asarray(p, dtype=np.float64)
    return m_max * (1.0 - p) + m_min * p


def _validate_counts(class_counts):
    counts = list(class_counts)
    if not counts:
        raise ValidationError("class_counts is empty")
    for c, n in enumerate(counts):
        if int(n) != n or n < 1:
            raise ValidationError(f"class {c} has count {n!r}; every class needs >= 1 sample")
    return [int(n) for n in counts]


def dynamic_margins(class_counts, m_min, m_max, radius):
    counts = _validate_counts(class_counts)
    check_margin_constraint(m_min, m_max, radius)
    total = math.fsum(counts)
    p = np.array([n / total for n in counts])
    return MarginSchedule(margin_at(p, m_min, m_max), m_min, m_max, counts)


def uniform_margins(class_counts, m_min, m_max, radius):
    """Frequency-blind baseline: every class gets the midpoint ``(m_min+m_max)/2``."""
    counts = _validate_counts(class_counts)
    check_margin_constraint(m_min, m_max, radius)
    mid = 0.5 * (m_min + m_max)
    return MarginSchedule(np.full(len(counts), mid), m_min, m_max, counts)


def verify_ball_disjointness(centers, m_max):
    """True iff radius-``m_max`` balls around the centers cannot overlap."""
    s = centers.centers
    diff = s[:, None, :] - s[None, :, :]
    dist = np.sqrt(np.einsum("ijk,ijk->ij", diff, diff))
    np.fill_diagonal(dist, np.inf)
    return bool(2.0 * m_max < dist.min())
