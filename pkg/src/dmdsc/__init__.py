"""Dynamic-margin deep simplex classifier for open-set recognition."""

from dmdsc.errors import (
    CheckpointError,
    CheckpointIntegrityError,
    CheckpointVersionError,
    ConfigError,
    DimensionError,
    InvalidBatchError,
    MarginConstraintError,
    MissingBackgroundError,
    ParseError,
    TrainingDivergedError,
    ValidationError,
)
from dmdsc.etf import (
    EtfCenters,
    MarginSchedule,
    build_centers,
    dynamic_margins,
    pairwise_center_distance,
    uniform_margins,
    verify_ball_disjointness,
)

__version__ = "0.1.0"

__all__ = [
    "CheckpointError",
    "CheckpointIntegrityError",
    "CheckpointVersionError",
    "ConfigError",
    "DimensionError",
    "EtfCenters",
    "InvalidBatchError",
    "MarginConstraintError",
    "MarginSchedule",
    "MissingBackgroundError",
    "ParseError",
    "TrainingDivergedError",
    "ValidationError",
    "build_centers",
    "dynamic_margins",
    "pairwise_center_distance",
    "uniform_margins",
    "verify_ball_disjointness",
]
