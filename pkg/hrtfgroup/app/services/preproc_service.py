"""
Preprocessing service
HRIR -> HRTF chain, anthropometric normalization, min-max normalization and
model-input assembly
"""
import logging
from functools import lru_cache
from typing import Optional, Sequence, Tuple, Union

import numpy as np
from scipy.special import expit
from tqdm import tqdm

from app.config import MinMaxMode, PreprocConfig, settings
from app.errors import DegenerateInputError, InvalidArgumentError
from app.models.domain import HRIR_LENGTH, N_ANTHRO, Dataset, Direction
from app.models.preproc import AnthroProfile, AnthroStats, FrequencyAxis, Hrtf, MinMaxStats, SpectralConfig

logger = logging.getLogger(__name__)

# Keeps sigmoid outputs strictly inside (0, 1) when the argument saturates
_OPEN_UNIT_EPS = np.finfo(np.float64).eps


def spectral_config_from(preproc: PreprocConfig) -> SpectralConfig:
    return SpectralConfig(
        sample_rate_hz=preproc.sample_rate_hz, dft_size=preproc.dft_size, q_factor=preproc.q_factor,
        f_lo_hz=preproc.f_lo_hz, f_hi_hz=preproc.f_hi_hz, n_bins=preproc.n_bins,
    )


class HrtfTransform:
    """
    HRIR -> log-magnitude HRTF on the log-spaced frequency axis

    Steps: zero-pad to the DFT size and take the power spectrum; average the
    power over the DFT bins whose centers lie in [f(1 - 1/2Q), f(1 + 1/2Q)]
    around each bin center (nearest bin when that band is empty); convert to
    dB; interpolate linearly in (log f, dB) onto the axis centers. The
    smoothing and interpolation steps are precomputed matrices.
    """

    def __init__(self, spectral: Optional[SpectralConfig] = None):
        self.spectral = spectral or SpectralConfig()
        self.axis: FrequencyAxis = self.spectral.axis
        n = self.spectral.dft_size
        self.bin_hz = np.fft.rfftfreq(n, d=1.0 / self.spectral.sample_rate_hz)
        if self.axis.centers_hz[0] <= self.bin_hz[1] or self.axis.centers_hz[-1] >= self.bin_hz[-1]:
            raise InvalidArgumentError(
                f"Frequency axis [{self.axis.f_lo}, {self.axis.f_hi}] Hz must lie strictly between "
                f"the first non-DC bin and Nyquist"
            )
        self.smoothing = self._smoothing_matrix()
        self.interpolation = self._interpolation_matrix()

    def _smoothing_matrix(self) -> np.ndarray:
        """(n_bins_linear - 1, n_bins_linear): rows for every non-DC bin center"""
        f = self.bin_hz
        half = 1.0 / (2.0 * self.spectral.q_factor)
        rows = []
        for center in f[1:]:
            inside = (f >= center * (1.0 - half)) & (f <= center * (1.0 + half))
            if not inside.any():
                inside = np.zeros_like(f, dtype=bool)
                inside[int(np.argmin(np.abs(f - center)))] = True
            rows.append(inside / inside.sum())
        return np.array(rows)

    def _interpolation_matrix(self) -> np.ndarray:
        """(n_axis, n_bins_linear - 1): linear interpolation in log frequency"""
        log_f = np.log(self.bin_hz[1:])
        log_c = np.log(self.axis.centers_hz)
        pos = np.clip(np.searchsorted(log_f, log_c, side="right") - 1, 0, log_f.size - 2)
        t = (log_c - log_f[pos]) / (log_f[pos + 1] - log_f[pos])
        w = np.zeros((log_c.size, log_f.size))
        rows = np.arange(log_c.size)
        w[rows, pos] = 1.0 - t
        w[rows, pos + 1] = t
        return w

    def __call__(self, hrirs: np.ndarray) -> np.ndarray:
        return self.transform(hrirs)

    def transform(self, hrirs: np.ndarray) -> np.ndarray:
        """
        Args:
            hrirs: (200,) or (n, 200) impulse responses

        Returns:
            (n_bins,) or (n, n_bins) dB values

        Raises:
            InvalidArgumentError: wrong length or non-finite samples
            DegenerateInputError: all-zero HRIR (or a spectral band of zero power)
        """
        x = np.asarray(hrirs, dtype=np.float64)
        single = x.ndim == 1
        x = np.atleast_2d(x)
        if x.shape[-1] != HRIR_LENGTH:
            raise InvalidArgumentError(f"HRIR length must be {HRIR_LENGTH}, got {x.shape[-1]}")
        if not np.all(np.isfinite(x)):
            raise InvalidArgumentError("HRIR contains non-finite samples")
        zero_rows = np.flatnonzero(~np.any(x != 0.0, axis=1))
        if zero_rows.size:
            raise DegenerateInputError(f"All-zero HRIR at row {int(zero_rows[0])}: log-magnitude undefined")

        spectrum = np.fft.rfft(x, n=self.spectral.dft_size, axis=1)
        power = spectrum.real ** 2 + spectrum.imag ** 2
        smoothed = power @ self.smoothing.T
        if np.any(smoothed <= 0.0):
            raise DegenerateInputError("Smoothed power spectrum has an empty band")
        db = 10.0 * np.log10(smoothed) @ self.interpolation.T
        return db[0] if single else db


@lru_cache(maxsize=8)
def get_transform(spectral: SpectralConfig = SpectralConfig()) -> HrtfTransform:
    return HrtfTransform(spectral)


def hrir_to_hrtf_db(hrir: np.ndarray, spectral: Optional[SpectralConfig] = None) -> np.ndarray:
    """173 dB values for one HRIR (or a stack of them)"""
    return get_transform(spectral or SpectralConfig()).transform(hrir)


def compute_db_table(dataset: Dataset, spectral: Optional[SpectralConfig] = None) -> np.ndarray:
    """
    dB HRTFs of every subject and direction, (n_subjects, n_directions, n_bins)

    Computed once per run and shared read-only by all folds.
    """
    transform = get_transform(spectral or SpectralConfig())
    table = np.empty((len(dataset), len(dataset.grid), transform.axis.n_bins))
    for k, subject in enumerate(tqdm(dataset.subjects, desc="HRIR -> HRTF", leave=False,
                                     disable=not settings.progress)):
        try:
            table[k] = transform.transform(subject.hrirs)
        except (DegenerateInputError, InvalidArgumentError) as e:
            logger.error(f"Subject {subject.id}: {e}")
            raise
    table.setflags(write=False)
    logger.info(f"Computed dB table {table.shape} for {len(dataset)} subjects")
    return table


# ============================================================================
# Anthropometric normalization
# ============================================================================

def _anthro_matrix(profiles: Union[Sequence[AnthroProfile], np.ndarray]) -> np.ndarray:
    if isinstance(profiles, np.ndarray):
        return np.atleast_2d(profiles).astype(np.float64)
    if any(p.normalized for p in profiles):
        raise InvalidArgumentError("fit_anthro_stats expects raw profiles")
    return np.stack([p.values for p in profiles]) if profiles else np.empty((0, N_ANTHRO))


def fit_anthro_stats(profiles: Union[Sequence[AnthroProfile], np.ndarray], ddof: int = 0) -> AnthroStats:
    """
    Per-parameter mean and standard deviation across subjects

    Args:
        profiles: raw profiles, or an (n_subjects, 27) matrix
        ddof: 0 for the population standard deviation

    Raises:
        InvalidArgumentError: fewer than two profiles
        DegenerateParameterError: a parameter with zero spread
    """
    values = _anthro_matrix(profiles)
    if values.shape[0] < 2 or values.shape[1] != N_ANTHRO:
        raise InvalidArgumentError(f"Need at least 2 profiles of {N_ANTHRO} values, got {values.shape}")
    return AnthroStats(mean=values.mean(axis=0), std=values.std(axis=0, ddof=ddof))


def normalize_anthro_values(values: np.ndarray, stats: AnthroStats) -> np.ndarray:
    """Logistic normalization of raw values, any leading shape"""
    out = expit((np.asarray(values, dtype=np.float64) - stats.mean) / stats.std)
    return np.clip(out, _OPEN_UNIT_EPS, 1.0 - _OPEN_UNIT_EPS)


def normalize_anthro(profile: AnthroProfile, stats: AnthroStats) -> AnthroProfile:
    if profile.normalized:
        raise InvalidArgumentError("Profile is already normalized")
    return AnthroProfile(normalize_anthro_values(profile.values, stats), normalized=True)


# ============================================================================
# Min-max normalization
# ============================================================================

def fit_minmax(db_hrtfs: np.ndarray, mode: MinMaxMode = MinMaxMode.GLOBAL) -> MinMaxStats:
    """
    Min and max over training HRTFs, globally or per frequency bin

    Raises:
        InvalidArgumentError: empty or non-finite input
        DegenerateRangeError: max == min
    """
    values = np.asarray(db_hrtfs, dtype=np.float64)
    if values.size == 0:
        raise InvalidArgumentError("Cannot fit min-max statistics on an empty set")
    if not np.all(np.isfinite(values)):
        raise InvalidArgumentError("Min-max input contains non-finite values")
    if mode is MinMaxMode.PER_BIN:
        flat = values.reshape(-1, values.shape[-1])
        return MinMaxStats(flat.min(axis=0), flat.max(axis=0))
    return MinMaxStats(np.float64(values.min()), np.float64(values.max()))


def apply_minmax(db_values: np.ndarray, minmax: MinMaxStats, clamp: bool = True) -> Tuple[np.ndarray, bool]:
    """
    (v - min) / (max - min)

    Returns:
        (normalized values, clamped flag); values outside [0, 1] are clamped
        and flagged when clamp is set
    """
    normalized = (np.asarray(db_values, dtype=np.float64) - minmax.lo) / minmax.span
    outside = (normalized < 0.0) | (normalized > 1.0)
    flagged = bool(np.any(outside))
    if clamp and flagged:
        normalized = np.clip(normalized, 0.0, 1.0)
    return normalized, flagged


def inverse_minmax(normalized: np.ndarray, minmax: MinMaxStats) -> np.ndarray:
    return np.asarray(normalized, dtype=np.float64) * minmax.span + minmax.lo


def normalize_hrtf(hrtf: Hrtf, minmax: MinMaxStats) -> Tuple[Hrtf, bool]:
    if hrtf.normalized:
        raise InvalidArgumentError("HRTF is already normalized")
    values, clamped = apply_minmax(hrtf.bins, minmax)
    if clamped:
        logger.warning(f"HRTF of subject {hrtf.subject_id} direction {hrtf.direction_index} "
                       f"exceeds the training range; clamped")
    return Hrtf(values, True, hrtf.direction_index, hrtf.subject_id), clamped


def denormalize_hrtf(hrtf: Hrtf, minmax: MinMaxStats) -> Hrtf:
    if not hrtf.normalized:
        raise InvalidArgumentError("HRTF is already in dB")
    return Hrtf(inverse_minmax(hrtf.bins, minmax), False, hrtf.direction_index, hrtf.subject_id)


# ============================================================================
# Model input
# ============================================================================

def build_model_input(profile: AnthroProfile, direction: Direction) -> np.ndarray:
    """[27 normalized anthropometric values, x, y, z]"""
    if not profile.normalized:
        raise InvalidArgumentError("Model input needs a normalized anthropometric profile")
    return np.concatenate([profile.values, np.asarray(direction.cartesian, dtype=np.float64)])


def build_model_inputs(anthro_normalized: np.ndarray, cartesian: np.ndarray) -> np.ndarray:
    """Row-wise build_model_input: (n, 27) and (n, 3) -> (n, 30)"""
    anthro = np.atleast_2d(anthro_normalized)
    xyz = np.atleast_2d(cartesian)
    if anthro.shape[0] != xyz.shape[0]:
        raise InvalidArgumentError(f"Row counts differ: {anthro.shape[0]} anthropometric vs {xyz.shape[0]} locations")
    return np.hstack([anthro, xyz])
