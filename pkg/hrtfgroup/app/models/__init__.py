"""
Domain types and on-disk schemas

Modules:
    - domain: directions, the measurement grid, subjects, datasets
    - preproc: anthropometric/min-max statistics, HRTF vectors, manifests
    - grouping: group ids, diffraction-effect masks, routers
    - evaluation: split plans, evaluation records, ANOVA results
    - model_set: trained per-group models of one fold
    - schemas: pydantic models of the JSON artifacts
"""
from app.models.domain import (
    Dataset, Direction, MeasurementGrid, Subject, build_cipic_grid, interaural_polar_to_cartesian,
)
from app.models.evaluation import AnovaResult, EvalRecord, SplitPlan
from app.models.grouping import DeMask, GroupId, GroupLabel, LEGAL_LABELS, Router
from app.models.preproc import (
    AnthroProfile, AnthroStats, FrequencyAxis, Hrtf, MinMaxStats, PreprocManifest, SpectralConfig,
)

__all__ = [
    "AnovaResult",
    "AnthroProfile",
    "AnthroStats",
    "Dataset",
    "DeMask",
    "Direction",
    "EvalRecord",
    "FrequencyAxis",
    "GroupId",
    "GroupLabel",
    "Hrtf",
    "LEGAL_LABELS",
    "MeasurementGrid",
    "MinMaxStats",
    "PreprocManifest",
    "Router",
    "SpectralConfig",
    "SplitPlan",
    "Subject",
    "build_cipic_grid",
    "interaural_polar_to_cartesian",
]
