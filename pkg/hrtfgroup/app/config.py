"""
Configuration management for hrtfgroup
Loads environment variables into Settings and describes experiment.json
"""
import json
from enum import Enum
from pathlib import Path
from typing import List, Optional, Tuple

from pydantic import BaseModel, ConfigDict, Field, field_validator, model_validator
from pydantic_settings import BaseSettings, SettingsConfigDict

from app.errors import ConfigurationError

PACKAGE_DIR = Path(__file__).resolve().parent


class Settings(BaseSettings):
    """Process-wide settings loaded from environment variables / .env"""

    model_config = SettingsConfigDict(
        env_file=".env",
        env_file_encoding='utf-8',
        env_prefix="HRTFGROUP_",
        case_sensitive=False,
        extra='ignore'
    )

    # Logging
    log_level: str = "INFO"
    progress: bool = True  # tqdm bars on long loops

    # Execution
    workers: int = 1
    default_seed: int = 7

    # Paths
    anthro_distributions: Path = PACKAGE_DIR / "data" / "anthro_distributions.yaml"


# Global settings instance
settings = Settings()


# ============================================================================
# Experiment configuration (experiment.json)
# ============================================================================

class Strategy(str, Enum):
    SL = "sl"
    DE = "de"
    HYBRID = "hybrid"
    GLOBAL = "global"


class MinMaxMode(str, Enum):
    GLOBAL = "global"    # one scalar (min, max) pair
    PER_BIN = "per_bin"  # one pair per frequency bin


class MinMaxScope(str, Enum):
    PER_GROUP = "per_group"  # statistics fit on each group's training HRTFs
    FOLD = "fold"            # one set of statistics for the whole fold


class SideName(str, Enum):
    IPSILATERAL = "ipsilateral"
    CONTRALATERAL = "contralateral"


class _Section(BaseModel):
    model_config = ConfigDict(extra="forbid")


class PreprocConfig(_Section):
    sample_rate_hz: int = 44100
    dft_size: int = 512
    q_factor: float = 8.0
    f_lo_hz: float = 200.0
    f_hi_hz: float = 15000.0
    n_bins: int = 173
    minmax_mode: MinMaxMode = MinMaxMode.GLOBAL
    minmax_scope: MinMaxScope = MinMaxScope.PER_GROUP
    std_ddof: int = Field(0, ge=0, le=1, description="0 = population std in the sigmoid normalization")

    @model_validator(mode="after")
    def _check_band(self):
        if not 0 < self.f_lo_hz < self.f_hi_hz <= self.sample_rate_hz / 2:
            raise ValueError("need 0 < f_lo_hz < f_hi_hz <= Nyquist")
        if self.n_bins < 2:
            raise ValueError("n_bins must be at least 2")
        return self


class GroupingConfig(_Section):
    de_threshold: float = 0.5
    de_band_hz: Tuple[float, float] = (200.0, 500.0)
    de_side: SideName = SideName.CONTRALATERAL
    zero_azimuth_ipsilateral: bool = True  # azimuth 0 belongs to the left (ipsilateral) side
    elevation_split_deg: float = 90.0      # [-45, split) front, [split, 230.625] back

    @field_validator("de_band_hz")
    @classmethod
    def _band_order(cls, v):
        if v[0] >= v[1]:
            raise ValueError("de_band_hz must be (low, high) with low < high")
        return v


class VaeTrainConfig(_Section):
    learning_rate: float = 1e-5
    epochs: int = 300
    batch_size: int = 256
    beta: float = 1e-3  # KL weight
    adam_beta1: float = 0.9
    adam_beta2: float = 0.999
    adam_eps: float = 1e-8
    log_every: int = 10


class DnnTrainConfig(_Section):
    learning_rate: float = 1e-4
    epochs: int = 300
    batch_size: int = 256
    lambda_lsd: float = 0.01
    patience: int = 30
    validation_fraction: float = Field(0.1, ge=0.0, lt=1.0)
    adam_beta1: float = 0.9
    adam_beta2: float = 0.999
    adam_eps: float = 1e-8
    log_every: int = 10


class ExperimentConfig(_Section):
    """Fully-resolved experiment description, written beside every run"""
    strategy: Strategy = Strategy.HYBRID
    seed: int = 7
    unseen_fraction: float = Field(0.2, gt=0.0, lt=1.0)
    folds: Optional[List[str]] = None  # subject ids to hold out; None = all (LOOCV)
    preproc: PreprocConfig = Field(default_factory=PreprocConfig)
    grouping: GroupingConfig = Field(default_factory=GroupingConfig)
    vae: VaeTrainConfig = Field(default_factory=VaeTrainConfig)
    dnn: DnnTrainConfig = Field(default_factory=DnnTrainConfig)


def load_experiment_config(path: Optional[Path]) -> ExperimentConfig:
    """
    Load experiment.json, or return the default schedule when path is None

    Raises:
        ConfigurationError: unreadable file or schema violation
    """
    if path is None:
        return ExperimentConfig()
    try:
        text = Path(path).read_text(encoding="utf-8")
        return ExperimentConfig.model_validate_json(text)
    except OSError as e:
        raise ConfigurationError(f"Cannot read experiment config {path}: {e}") from e
    except ValueError as e:
        raise ConfigurationError(f"Invalid experiment config {path}: {e}") from e


def apply_overrides(config: ExperimentConfig, **overrides) -> ExperimentConfig:
    """
    Apply CLI flag values on top of a loaded config (flags win)

    Keys use dotted paths for nested sections, e.g. ``vae.epochs``.
    None values are ignored so unset flags keep the file's value.
    """
    data = json.loads(config.model_dump_json())
    for key, value in overrides.items():
        if value is None:
            continue
        node = data
        parts = key.split(".")
        for part in parts[:-1]:
            node = node[part]
        node[parts[-1]] = value.value if isinstance(value, Enum) else value
    try:
        return ExperimentConfig.model_validate(data)
    except ValueError as e:
        raise ConfigurationError(f"Invalid override: {e}") from e
