from .errors import InputError, NumericError, ReconError, ReportExistsError
from .models import (
    CouplingPlan,
    ExperimentReport,
    GroundTruthSpec,
    InputNorm,
    LossKind,
    NeighborhoodIndex,
    PointCloud,
    SampleSet,
    TrainConfig,
    Trajectory,
)

__version__ = "0.3.0"

__all__ = [
    "CouplingPlan",
    "ExperimentReport",
    "GroundTruthSpec",
    "InputError",
    "InputNorm",
    "LossKind",
    "NeighborhoodIndex",
    "NumericError",
    "PointCloud",
    "ReconError",
    "ReportExistsError",
    "SampleSet",
    "TrainConfig",
    "Trajectory",
]
