"""
Preprocessing types: anthropometric statistics, frequency axis, HRTF vectors,
min-max statistics and the preprocessing manifest that freezes them
"""
import hashlib
from dataclasses import dataclass, field
from typing import List, Optional

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, model_validator

from app.errors import DegenerateParameterError, DegenerateRangeError, InvalidArgumentError
from app.models.domain import N_ANTHRO


@dataclass(frozen=True)
class AnthroStats:
    """Per-parameter mean and standard deviation across training subjects"""
    mean: np.ndarray
    std: np.ndarray

    def __post_init__(self):
        mean = np.asarray(self.mean, dtype=np.float64)
        std = np.asarray(self.std, dtype=np.float64)
        if mean.shape != (N_ANTHRO,) or std.shape != (N_ANTHRO,):
            raise InvalidArgumentError(f"AnthroStats needs {N_ANTHRO} means and stds")
        zero = np.flatnonzero(~(std > 0))
        if zero.size:
            raise DegenerateParameterError(int(zero[0]))
        object.__setattr__(self, "mean", mean)
        object.__setattr__(self, "std", std)


@dataclass(frozen=True)
class AnthroProfile:
    """27 anthropometric values, raw or sigmoid-normalized"""
    values: np.ndarray
    normalized: bool = False

    def __post_init__(self):
        values = np.asarray(self.values, dtype=np.float64)
        if values.shape != (N_ANTHRO,):
            raise InvalidArgumentError(f"AnthroProfile needs {N_ANTHRO} values, got {values.shape}")
        if not np.all(np.isfinite(values)):
            raise InvalidArgumentError("AnthroProfile values must be finite")
        if self.normalized and not np.all((values > 0.0) & (values < 1.0)):
            raise InvalidArgumentError("Normalized anthropometric values must lie strictly in (0, 1)")
        object.__setattr__(self, "values", values)


@dataclass(frozen=True)
class FrequencyAxis:
    """Log-spaced analysis centers between f_lo and f_hi (inclusive)"""
    f_lo: float = 200.0
    f_hi: float = 15000.0
    n_bins: int = 173
    centers_hz: np.ndarray = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        # geomspace pins both endpoints exactly
        centers = np.geomspace(self.f_lo, self.f_hi, self.n_bins)
        centers.setflags(write=False)
        object.__setattr__(self, "centers_hz", centers)

    def band_indices(self, lo_hz: float, hi_hz: float) -> np.ndarray:
        """Indices of centers lying in [lo_hz, hi_hz]"""
        return np.flatnonzero((self.centers_hz >= lo_hz) & (self.centers_hz <= hi_hz))


@dataclass(frozen=True)
class MinMaxStats:
    """
    Min-max normalization bounds in dB

    lo/hi are 0-d arrays for global normalization or (n_bins,) arrays
    for per-bin normalization.
    """
    lo: np.ndarray
    hi: np.ndarray

    def __post_init__(self):
        lo = np.asarray(self.lo, dtype=np.float64)
        hi = np.asarray(self.hi, dtype=np.float64)
        if lo.shape != hi.shape:
            raise InvalidArgumentError("MinMaxStats bounds must share a shape")
        if not np.all(hi > lo):
            raise DegenerateRangeError(f"Degenerate min-max range: min={lo.min()} max={hi.max()}")
        object.__setattr__(self, "lo", lo)
        object.__setattr__(self, "hi", hi)

    @property
    def span(self) -> np.ndarray:
        return self.hi - self.lo

    def __eq__(self, other) -> bool:
        if not isinstance(other, MinMaxStats):
            return NotImplemented
        return np.array_equal(self.lo, other.lo) and np.array_equal(self.hi, other.hi)

    __hash__ = None


@dataclass(frozen=True)
class Hrtf:
    """One log-magnitude response on the frequency axis"""
    bins: np.ndarray
    normalized: bool
    direction_index: int
    subject_id: Optional[str] = None

    def __post_init__(self):
        bins = np.asarray(self.bins, dtype=np.float64)
        if bins.ndim != 1 or not np.all(np.isfinite(bins)):
            raise InvalidArgumentError("HRTF bins must be a finite vector")
        if self.normalized and not np.all((bins >= 0.0) & (bins <= 1.0)):
            raise InvalidArgumentError("Normalized HRTF bins must lie in [0, 1]")
        object.__setattr__(self, "bins", bins)

    @property
    def units(self) -> str:
        return "normalized" if self.normalized else "dB"


# ============================================================================
# Manifest (preproc_manifest.json)
# ============================================================================

class SpectralConfig(BaseModel):
    """The parts of the HRIR -> HRTF chain a model depends on"""
    model_config = ConfigDict(extra="forbid", frozen=True)

    sample_rate_hz: int = 44100
    dft_size: int = 512
    q_factor: float = 8.0
    f_lo_hz: float = 200.0
    f_hi_hz: float = 15000.0
    n_bins: int = 173

    @property
    def axis(self) -> FrequencyAxis:
        return FrequencyAxis(self.f_lo_hz, self.f_hi_hz, self.n_bins)


class PreprocManifest(BaseModel):
    """
    Frozen train-time statistics for one model

    Every checkpoint stores the hash of its manifest, so a model can only be
    applied to data preprocessed the same way.
    """
    model_config = ConfigDict(extra="forbid")

    version: int = 1
    spectral: SpectralConfig = Field(default_factory=SpectralConfig)
    anthro_mean: List[float]
    anthro_std: List[float]
    std_ddof: int = 0
    minmax_mode: str = "global"
    min_db: List[float]
    max_db: List[float]
    source_fingerprint: str = ""
    group: Optional[str] = None

    @model_validator(mode="after")
    def _check(self):
        if len(self.anthro_mean) != N_ANTHRO or len(self.anthro_std) != N_ANTHRO:
            raise ValueError(f"anthro statistics must have {N_ANTHRO} entries")
        if len(self.min_db) != len(self.max_db):
            raise ValueError("min_db and max_db lengths differ")
        if any(hi <= lo for lo, hi in zip(self.min_db, self.max_db)):
            raise ValueError("global_max_db must exceed global_min_db")
        return self

    @classmethod
    def build(cls, stats: AnthroStats, minmax: MinMaxStats, spectral: SpectralConfig,
              std_ddof: int = 0, source_fingerprint: str = "", group: Optional[str] = None) -> "PreprocManifest":
        per_bin = minmax.lo.ndim == 1
        return cls(
            spectral=spectral,
            anthro_mean=stats.mean.tolist(),
            anthro_std=stats.std.tolist(),
            std_ddof=std_ddof,
            minmax_mode="per_bin" if per_bin else "global",
            min_db=np.atleast_1d(minmax.lo).tolist(),
            max_db=np.atleast_1d(minmax.hi).tolist(),
            source_fingerprint=source_fingerprint,
            group=group,
        )

    @property
    def anthro_stats(self) -> AnthroStats:
        return AnthroStats(np.array(self.anthro_mean), np.array(self.anthro_std))

    @property
    def minmax(self) -> MinMaxStats:
        if self.minmax_mode == "global":
            return MinMaxStats(np.float64(self.min_db[0]), np.float64(self.max_db[0]))
        return MinMaxStats(np.array(self.min_db), np.array(self.max_db))

    def content_hash(self) -> str:
        """sha256 of the canonical JSON form"""
        return hashlib.sha256(self.model_dump_json().encode("utf-8")).hexdigest()
