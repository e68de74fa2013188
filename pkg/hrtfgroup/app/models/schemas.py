"""
Pydantic models for on-disk artifacts (manifest.json, router.json,
checkpoints, summary.json)
"""
from typing import Any, Dict, List, Optional, Tuple

from pydantic import BaseModel, ConfigDict, Field, field_validator

from app.config import ExperimentConfig
from app.models.domain import HRIR_LENGTH, SAMPLE_RATE_HZ


# ============================================================================
# Dataset directory
# ============================================================================

class DatasetManifestFile(BaseModel):
    """manifest.json of a dataset directory"""
    model_config = ConfigDict(extra="forbid")

    sample_rate_hz: int = Field(SAMPLE_RATE_HZ, description="Sampling rate of every HRIR")
    hrir_len: int = Field(HRIR_LENGTH, description="Samples per HRIR")
    grid: str = Field("cipic", description="Measurement grid name")
    subjects: List[str] = Field(..., description="Subject ids, one hrir_<id>.f64 each")

    @field_validator("sample_rate_hz")
    @classmethod
    def _rate(cls, v):
        if v != SAMPLE_RATE_HZ:
            raise ValueError(f"sample_rate_hz must be {SAMPLE_RATE_HZ}")
        return v

    @field_validator("hrir_len")
    @classmethod
    def _length(cls, v):
        if v != HRIR_LENGTH:
            raise ValueError(f"hrir_len must be {HRIR_LENGTH}")
        return v

    @field_validator("grid")
    @classmethod
    def _grid(cls, v):
        if v != "cipic":
            raise ValueError("only the 'cipic' grid is supported")
        return v


# ============================================================================
# Router
# ============================================================================

class DeMaskFile(BaseModel):
    side: str
    threshold: float
    band_hz: Tuple[float, float]
    direction_indices: List[int]
    energies: List[float]
    source_subject_ids: List[str]


class RouterFile(BaseModel):
    """router.json: fully self-describing direction -> group assignment"""
    model_config = ConfigDict(extra="forbid")

    strategy: str
    threshold: Optional[float] = None
    band_hz: Optional[Tuple[float, float]] = None
    labels: List[Optional[str]] = Field(..., description="Group label per grid direction, null outside the domain")
    de_mask: Optional[DeMaskFile] = None


# ============================================================================
# Checkpoints
# ============================================================================

class TensorEntry(BaseModel):
    """One array, base64 of its little-endian float64 bytes"""
    shape: List[int]
    dtype: str = "<f8"
    data: str


class CheckpointFile(BaseModel):
    """Parameters and buffers of one network at full precision"""
    model_config = ConfigDict(extra="forbid")

    format_version: int = 1
    kind: str = Field(..., description="'vae' or 'predictor'")
    architecture: Dict[str, Any]
    tensors: Dict[str, TensorEntry]
    manifest_hash: str
    training: Dict[str, Any] = Field(default_factory=dict)


class GroupProvenanceFile(BaseModel):
    label: str
    subject_ids: List[str]
    direction_indices: List[int]
    n_examples: int
    vae_history: List[float] = Field(default_factory=list)
    dnn_history: List[float] = Field(default_factory=list)
    dnn_best_epoch: Optional[int] = None
    vae_reconstruction_lsd: Optional[float] = None


class FoldIndexFile(BaseModel):
    """fold.json: ties a fold's router, plan and group checkpoints together"""
    model_config = ConfigDict(extra="forbid")

    fold_subject_id: str
    train_subject_ids: List[str]
    seen_direction_indices: List[int]
    unseen_direction_indices: List[int]
    seed: int
    strategy: str
    groups: List[GroupProvenanceFile]


class RunFile(BaseModel):
    """run_config.json: fully-resolved configuration beside a run's outputs"""
    command: str
    experiment: Optional[ExperimentConfig] = None
    arguments: Dict[str, Any] = Field(default_factory=dict)


# ============================================================================
# Evaluation summary
# ============================================================================

class MeanLsdEntry(BaseModel):
    """Mean LSD (dB) of one slice of the records; null when the slice is empty"""
    seen: Optional[float] = None
    unseen: Optional[float] = None
    all: Optional[float] = None
    n_records: int = 0


class AnovaEntry(BaseModel):
    F: Optional[float] = Field(..., description="null when infinite_f is set")
    df: List[int]
    p: float
    infinite_f: bool = False
    groups: List[str] = Field(default_factory=list)


class ComparisonEntry(BaseModel):
    run_a: str
    run_b: str
    mean_a: MeanLsdEntry
    mean_b: MeanLsdEntry
    seen: Optional[AnovaEntry] = None
    unseen: Optional[AnovaEntry] = None


class SummaryFile(BaseModel):
    """summary.json: per-slice mean LSD plus ANOVA tests"""
    model_config = ConfigDict(extra="forbid")

    run: str
    strategy: Optional[str] = None
    n_records: int
    n_subjects: int
    seen_mean_lsd: Optional[float] = None
    unseen_mean_lsd: Optional[float] = None
    overall_mean_lsd: Optional[float] = None
    per_side: Dict[str, MeanLsdEntry]
    per_group: Dict[str, MeanLsdEntry]
    per_subject: Dict[str, MeanLsdEntry]
    side_anova: Dict[str, Optional[AnovaEntry]] = Field(default_factory=dict)
    comparison: Optional[ComparisonEntry] = None
