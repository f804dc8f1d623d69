"""Public package API for tagcal.

Re-exports the pieces most callers need: the domain types, the simulator,
the calibration network and the evaluation entry points.
"""

from .calibration import (
    CalibModel,
    FeatureVector,
    TrainConfig,
    TrainingError,
    assemble_features,
    forward,
    load_model,
    save_model,
    train,
)
from .core import (
    Anchor,
    AnchorLayout,
    Area,
    BleRecord,
    GeometryError,
    Point2,
    Point3,
    Scenario,
    Session,
    Technology,
    UwbRecord,
    euclidean_error,
    moving_average,
)
from .evaluation import EvaluationError, ks_two_sample, make_report, run_cv
from .simulator import NoiseProfile, gen_dataset

__all__ = [
    "Anchor",
    "AnchorLayout",
    "Area",
    "BleRecord",
    "CalibModel",
    "EvaluationError",
    "FeatureVector",
    "GeometryError",
    "NoiseProfile",
    "Point2",
    "Point3",
    "Scenario",
    "Session",
    "Technology",
    "TrainConfig",
    "TrainingError",
    "UwbRecord",
    "assemble_features",
    "euclidean_error",
    "forward",
    "gen_dataset",
    "ks_two_sample",
    "load_model",
    "make_report",
    "moving_average",
    "run_cv",
    "save_model",
    "train",
]
