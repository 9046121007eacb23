"""Multimorbidity progression modeling, risk prediction, and behavior planning.

The model is a network of chronic conditions whose acquisition rates are
log-linear in patient covariates and in already-acquired parent conditions.
On top of it: exact forward probability trajectories, stochastic simulation,
penalized likelihood fitting with structure selection, incremental updates,
and receding-horizon behavior planning.
"""

from .conditions import (
    DEFAULT_CONDITIONS,
    FIXED_FACTORS,
    MODIFIABLE_BEHAVIORS,
    ConditionSet,
    CovariateLayout,
    RiskFactorVector,
)
from .dataset import SufficientStats, TrajectoryDataset, TransitionRecord, sufficient_stats
from .diagnosis import DiagnosisResult, MeasurementPanel, diagnose
from .errors import (
    BoundsError,
    CapacityError,
    CovariateLayoutError,
    DataError,
    MccPlanError,
    NumericOverflowError,
    SchemaError,
    StepSizeError,
    ValidationError,
)
from .estimators import FctbnEstimator
from .forward import TrajectoryResult, forward_trajectory
from .io import read_dataset, read_model, write_dataset, write_model
from .learning import (
    FitReport,
    OnlineUpdateConfig,
    ParameterPacker,
    RegularizationSpec,
    StructurePath,
    fit_mle,
    log_likelihood,
    online_update,
    penalized_objective,
    structure_path,
)
from .model import (
    FctbnModel,
    acquisition_intensity,
    joint_generator,
    sojourn_cdf,
    sojourn_pdf,
    state_intensities,
)
from .planner import (
    BehaviorBounds,
    InterventionPlan,
    PlannerConfig,
    RecedingHorizonResult,
    plan,
    receding_horizon_run,
    sensitivity_report,
    stage_risk,
)
from .sampling import empirical_marginals, sample_trajectory
from .synth import PRESET_NAMES, CohortSpec, generate, preset_model

__version__ = "0.1.0"

__all__ = [
    "BehaviorBounds",
    "BoundsError",
    "CapacityError",
    "CohortSpec",
    "ConditionSet",
    "CovariateLayout",
    "CovariateLayoutError",
    "DEFAULT_CONDITIONS",
    "DataError",
    "DiagnosisResult",
    "FIXED_FACTORS",
    "FctbnEstimator",
    "FctbnModel",
    "FitReport",
    "InterventionPlan",
    "MODIFIABLE_BEHAVIORS",
    "MccPlanError",
    "MeasurementPanel",
    "NumericOverflowError",
    "OnlineUpdateConfig",
    "PRESET_NAMES",
    "ParameterPacker",
    "PlannerConfig",
    "RecedingHorizonResult",
    "RegularizationSpec",
    "RiskFactorVector",
    "SchemaError",
    "StepSizeError",
    "StructurePath",
    "SufficientStats",
    "TrajectoryDataset",
    "TrajectoryResult",
    "TransitionRecord",
    "ValidationError",
    "acquisition_intensity",
    "diagnose",
    "empirical_marginals",
    "fit_mle",
    "forward_trajectory",
    "generate",
    "joint_generator",
    "log_likelihood",
    "online_update",
    "penalized_objective",
    "plan",
    "preset_model",
    "read_dataset",
    "read_model",
    "receding_horizon_run",
    "sample_trajectory",
    "sensitivity_report",
    "sojourn_cdf",
    "sojourn_pdf",
    "stage_risk",
    "state_intensities",
    "structure_path",
    "sufficient_stats",
    "write_dataset",
    "write_model",
]
