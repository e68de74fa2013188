"""
Dataset service
Reads and writes the dataset directory format and synthesizes
spherical-head datasets for desk-scale experiments

Directory format:
    manifest.json     {"sample_rate_hz": 44100, "hrir_len": 200, "grid": "cipic", "subjects": [...]}
    anthro.csv        id,p1..p27
    hrir_<id>.f64     little-endian float64, 1250 x 200 row-major, grid order
"""
import hashlib
import logging
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, List, Optional, Sequence, Union

import numpy as np
import pandas as pd
import yaml
from pydantic import ValidationError
from tqdm import tqdm

from app.config import settings
from app.errors import (
    DatasetError, DatasetFileMissingError, IncompleteSubjectError,
    InvalidArgumentError, MalformedDataError,
)
from app.models.domain import (
    HRIR_LENGTH, N_ANTHRO, SAMPLE_RATE_HZ, Dataset, MeasurementGrid, Subject, build_cipic_grid,
)
from app.models.schemas import DatasetManifestFile

logger = logging.getLogger(__name__)

ANTHRO_COLUMNS = ["id"] + [f"p{i}" for i in range(1, N_ANTHRO + 1)]
MANIFEST_NAME = "manifest.json"
ANTHRO_NAME = "anthro.csv"
HRIR_DTYPE = np.dtype("<f8")

PathLike = Union[str, Path]


def hrir_filename(subject_id: str) -> str:
    return f"hrir_{subject_id}.f64"


# ============================================================================
# Loading
# ============================================================================

def _read_manifest(root: Path) -> DatasetManifestFile:
    path = root / MANIFEST_NAME
    if not path.is_file():
        raise DatasetFileMissingError(f"Missing dataset manifest: {path}", path=str(path))
    try:
        return DatasetManifestFile.model_validate_json(path.read_text(encoding="utf-8"))
    except ValidationError as e:
        raise MalformedDataError(f"Invalid manifest {path}: {e}", path=str(path)) from e


def _read_anthro(root: Path) -> pd.DataFrame:
    path = root / ANTHRO_NAME
    if not path.is_file():
        raise DatasetFileMissingError(f"Missing anthropometrics file: {path}", path=str(path))
    try:
        frame = pd.read_csv(path, dtype={"id": str}, float_precision="round_trip")
    except (ValueError, pd.errors.ParserError) as e:
        raise MalformedDataError(f"Cannot parse {path}: {e}", path=str(path)) from e
    if list(frame.columns) != ANTHRO_COLUMNS:
        raise MalformedDataError(
            f"{path}: header must be id,p1..p{N_ANTHRO}, got {','.join(map(str, frame.columns))}",
            path=str(path),
        )
    values = frame[ANTHRO_COLUMNS[1:]]
    for row_index in range(len(frame)):
        row = pd.to_numeric(values.iloc[row_index], errors="coerce").to_numpy(dtype=np.float64)
        if not np.all(np.isfinite(row)):
            raise MalformedDataError(
                f"{path}: row {row_index} (subject {frame['id'].iloc[row_index]}) has a non-numeric or non-finite value",
                path=str(path), subject_id=str(frame["id"].iloc[row_index]), row_index=row_index,
            )
    if frame["id"].duplicated().any():
        raise MalformedDataError(f"{path}: duplicate subject ids", path=str(path))
    return frame.set_index("id")


def _read_hrirs(root: Path, subject_id: str, n_directions: int) -> np.ndarray:
    """
    Read one subject's HRIR matrix

    Raises:
        DatasetFileMissingError: file absent
        MalformedDataError: trailing partial row, extra rows or non-finite samples
        IncompleteSubjectError: fewer complete rows than grid directions
    """
    path = root / hrir_filename(subject_id)
    if not path.is_file():
        raise DatasetFileMissingError(f"Missing HRIR file for subject {subject_id}: {path}",
                                      path=str(path), subject_id=subject_id)
    flat = np.fromfile(path, dtype=HRIR_DTYPE)
    full_rows, remainder = divmod(flat.size, HRIR_LENGTH)
    if remainder:
        raise MalformedDataError(
            f"Subject {subject_id}: HRIR row {full_rows} has length {remainder}, expected {HRIR_LENGTH}",
            path=str(path), subject_id=subject_id, row_index=full_rows,
        )
    if full_rows > n_directions:
        raise MalformedDataError(
            f"Subject {subject_id}: {full_rows} HRIR rows, grid has {n_directions}",
            path=str(path), subject_id=subject_id, row_index=n_directions,
        )
    if full_rows < n_directions:
        raise IncompleteSubjectError(
            f"Subject {subject_id}: {full_rows} of {n_directions} directions measured",
            path=str(path), subject_id=subject_id,
        )
    hrirs = flat.reshape(n_directions, HRIR_LENGTH).astype(np.float64)
    bad = np.flatnonzero(~np.all(np.isfinite(hrirs), axis=1))
    if bad.size:
        raise MalformedDataError(
            f"Subject {subject_id}: HRIR row {int(bad[0])} contains non-finite samples",
            path=str(path), subject_id=subject_id, row_index=int(bad[0]),
        )
    return hrirs


def load_dataset(path: PathLike, strict: bool = False) -> Dataset:
    """
    Load and validate a dataset directory

    Args:
        path: Dataset directory
        strict: Hard-fail on incomplete subjects instead of skipping them

    Returns:
        Dataset holding every complete subject, in manifest order
    """
    root = Path(path)
    if not root.is_dir():
        raise DatasetFileMissingError(f"Dataset directory does not exist: {root}", path=str(root))

    manifest = _read_manifest(root)
    anthro = _read_anthro(root)
    grid = build_cipic_grid()

    subjects: List[Subject] = []
    for subject_id in manifest.subjects:
        if subject_id not in anthro.index:
            raise MalformedDataError(f"Subject {subject_id} listed in manifest but absent from {ANTHRO_NAME}",
                                     path=str(root / ANTHRO_NAME), subject_id=subject_id)
        try:
            hrirs = _read_hrirs(root, subject_id, len(grid))
        except IncompleteSubjectError as e:
            if strict:
                logger.error(str(e))
                raise
            logger.warning(f"Skipping incomplete subject {subject_id}: {e}")
            continue
        row = anthro.loc[subject_id].to_numpy(dtype=np.float64)
        subjects.append(Subject(id=subject_id, anthro_raw=row, hrirs=hrirs))

    if not subjects:
        raise DatasetError(f"No complete subjects in {root}", path=str(root))
    logger.info(f"Loaded {len(subjects)} subjects from {root} ({len(manifest.subjects) - len(subjects)} skipped)")
    return Dataset(subjects=tuple(subjects), grid=grid, sample_rate_hz=manifest.sample_rate_hz)


def write_dataset(dataset: Dataset, path: PathLike) -> Path:
    """Write a dataset in the directory format; returns the directory"""
    root = Path(path)
    try:
        root.mkdir(parents=True, exist_ok=True)
        manifest = DatasetManifestFile(
            sample_rate_hz=dataset.sample_rate_hz, hrir_len=HRIR_LENGTH,
            grid=dataset.grid.name, subjects=dataset.subject_ids,
        )
        (root / MANIFEST_NAME).write_text(manifest.model_dump_json(indent=2) + "\n", encoding="utf-8")

        frame = pd.DataFrame(dataset.anthro_matrix(), columns=ANTHRO_COLUMNS[1:])
        frame.insert(0, "id", dataset.subject_ids)
        frame.to_csv(root / ANTHRO_NAME, index=False, lineterminator="\n")

        for subject in dataset.subjects:
            np.ascontiguousarray(subject.hrirs, dtype=HRIR_DTYPE).tofile(root / hrir_filename(subject.id))
    except OSError as e:
        logger.error(f"Failed writing dataset to {root}: {e}")
        raise
    return root


def dataset_fingerprint(dataset: Dataset, subject_ids: Optional[Sequence[str]] = None) -> str:
    """sha256 over ids, anthropometrics and HRIRs of the given subjects"""
    digest = hashlib.sha256()
    for subject_id in (dataset.subject_ids if subject_ids is None else subject_ids):
        subject = dataset.subject(subject_id)
        digest.update(subject_id.encode("utf-8"))
        digest.update(np.ascontiguousarray(subject.anthro_raw, dtype=HRIR_DTYPE).tobytes())
        digest.update(np.ascontiguousarray(subject.hrirs, dtype=HRIR_DTYPE).tobytes())
    return digest.hexdigest()


# ============================================================================
# Synthetic spherical-head generator
# ============================================================================

@dataclass(frozen=True)
class AnthroDistribution:
    name: str
    unit: str
    mean: float
    std: float


@dataclass(frozen=True)
class SphericalHeadModel:
    """
    Parametric left-ear magnitude model

    Per direction the log-magnitude is the sum of:
      * a broadband term: path-length loss plus a contralateral loss growing
        with the incidence angle to the left ear
      * a single-pole/single-zero head-shadow shelf whose corner follows the
        head radius and whose high-frequency gain follows the incidence angle
      * a low-frequency bright-spot gain centred on the shadow axis
      * a measurement-system high-pass
      * a concha resonance and an elevation-dependent pinna notch
    The magnitude is turned into a 200-sample minimum-phase HRIR.
    """
    speed_of_sound: float = 343.0
    source_distance: float = 1.0
    alpha_min: float = 0.1
    theta_min_deg: float = 150.0
    contralateral_loss_db: float = 6.0
    bright_spot_db: float = 24.0
    bright_spot_width_deg: float = 25.0
    bright_spot_corner_hz: float = 800.0
    highpass_hz: float = 400.0
    concha_resonance_db: float = 10.0
    concha_resonance_octaves: float = 0.5
    notch_depth_db: float = 10.0
    notch_octaves: float = 0.12
    notch_span: float = 0.6
    headroom_db: float = 20.0
    synthesis_fft: int = 4096

    # Anthropometric column indices used by the model
    HEAD_WIDTH, HEAD_HEIGHT, HEAD_DEPTH = 0, 1, 2
    CAVUM_HEIGHT, CAVUM_WIDTH, CAVUM_DEPTH = 17, 19, 24
    PINNA_ROTATION, PINNA_FLARE = 25, 26

    @classmethod
    def head_radius_m(cls, anthro: np.ndarray) -> float:
        # Weighted width/height/depth fit for the effective sphere radius (cm)
        a_cm = (0.51 * anthro[cls.HEAD_WIDTH] / 2 + 0.019 * anthro[cls.HEAD_HEIGHT] / 2
                + 0.18 * anthro[cls.HEAD_DEPTH] / 2 + 3.2)
        return a_cm / 100.0

    def incidence_deg(self, azimuth_deg: np.ndarray) -> np.ndarray:
        """Angle between source direction and the left-ear axis (0 = on axis)"""
        # cos(incidence) = -y = -sin(azimuth) on the unit sphere
        return np.degrees(np.arccos(np.clip(-np.sin(np.radians(azimuth_deg)), -1.0, 1.0)))

    def path_gain_db(self, incidence_deg: np.ndarray, radius: float) -> np.ndarray:
        r = self.source_distance
        psi = np.radians(incidence_deg)
        tangent_angle = math.acos(radius / r)
        direct = np.sqrt(r * r + radius * radius - 2.0 * r * radius * np.cos(psi))
        wrapped = math.sqrt(r * r - radius * radius) + radius * (psi - tangent_angle)
        d = np.where(psi <= tangent_angle, direct, wrapped)
        return 20.0 * np.log10(r / d)

    def magnitude_db(self, freqs: np.ndarray, azimuth_deg: np.ndarray,
                     elevation_deg: np.ndarray, anthro: np.ndarray) -> np.ndarray:
        """(n_directions, n_freqs) log-magnitude in dB"""
        a = self.head_radius_m(anthro)
        f = freqs[None, :]
        f_safe = np.maximum(f, 1.0)
        psi = self.incidence_deg(azimuth_deg)[:, None]

        broadband = (
            self.path_gain_db(psi, a)
            - self.contralateral_loss_db * (1.0 - np.cos(np.radians(psi))) / 2.0
        )

        f0 = self.speed_of_sound / (2.0 * math.pi * a)
        alpha = (1.0 + self.alpha_min / 2.0) + (1.0 - self.alpha_min / 2.0) * np.cos(
            np.radians(psi / self.theta_min_deg * 180.0))
        x = f / (2.0 * f0)
        shadow = 10.0 * np.log10((1.0 + (alpha * x) ** 2) / (1.0 + x ** 2))

        spot = np.exp(-((180.0 - psi) / self.bright_spot_width_deg) ** 2)
        bright = self.bright_spot_db * spot / (1.0 + (f / self.bright_spot_corner_hz) ** 2)

        ratio = (f / self.highpass_hz) ** 4
        with np.errstate(divide="ignore"):
            highpass = 10.0 * np.log10(ratio / (1.0 + ratio))

        c_cm = self.speed_of_sound * 100.0
        resonance_hz = c_cm / (4.0 * (anthro[self.CAVUM_DEPTH] + 0.5 * anthro[self.CAVUM_WIDTH]))
        resonance = self.concha_resonance_db * np.exp(
            -0.5 * (np.log2(f_safe / resonance_hz) / self.concha_resonance_octaves) ** 2)

        notch_base = c_cm / (4.0 * 0.7 * anthro[self.CAVUM_HEIGHT])
        notch_base *= 1.0 + 0.005 * (anthro[self.PINNA_ROTATION] - 24.0)
        rise = (elevation_deg[:, None] + 45.0) / 275.625
        notch_hz = notch_base * (1.0 + self.notch_span * rise)
        depth = max(0.0, self.notch_depth_db * (1.0 + 0.005 * (anthro[self.PINNA_FLARE] - 27.0)))
        notch = -depth * np.exp(-0.5 * (np.log2(f_safe / notch_hz) / self.notch_octaves) ** 2)

        total = broadband + shadow + bright + highpass + resonance + notch - self.headroom_db
        return np.maximum(total, -120.0)

    def synthesize_hrirs(self, grid: MeasurementGrid, anthro: np.ndarray,
                         sample_rate_hz: int = SAMPLE_RATE_HZ) -> np.ndarray:
        """(n_directions, 200) minimum-phase HRIRs for one subject"""
        n = self.synthesis_fft
        freqs = np.fft.rfftfreq(n, d=1.0 / sample_rate_hz)
        db = self.magnitude_db(freqs, grid.azimuth_array(), grid.elevation_array(), anthro)
        log_mag = db * (math.log(10.0) / 20.0)

        # Minimum phase by folding the real cepstrum
        cepstrum = np.fft.irfft(log_mag, n=n, axis=-1)
        fold = np.zeros_like(cepstrum)
        fold[:, 0] = cepstrum[:, 0]
        fold[:, 1:n // 2] = 2.0 * cepstrum[:, 1:n // 2]
        fold[:, n // 2] = cepstrum[:, n // 2]
        spectrum = np.exp(np.fft.rfft(fold, n=n, axis=-1))
        hrirs = np.fft.irfft(spectrum, n=n, axis=-1)[:, :HRIR_LENGTH]

        peak = np.max(np.abs(hrirs))
        if peak > 1.0:
            hrirs = hrirs / peak
        return hrirs


def load_generator_config(path: Optional[PathLike] = None):
    """Read anthropometric distributions and head-model constants from YAML"""
    path = Path(path or settings.anthro_distributions)
    try:
        raw = yaml.safe_load(path.read_text(encoding="utf-8"))
    except (OSError, yaml.YAMLError) as e:
        raise DatasetError(f"Cannot read generator config {path}: {e}", path=str(path)) from e
    distributions = [AnthroDistribution(**p) for p in raw["parameters"]]
    if len(distributions) != N_ANTHRO:
        raise DatasetError(f"{path}: expected {N_ANTHRO} parameter distributions, got {len(distributions)}",
                           path=str(path))
    model = SphericalHeadModel(**raw.get("head_model", {}))
    logger.debug(f"Generator config version {raw.get('version')} from {path}")
    return distributions, model


def draw_anthro(distributions: Sequence[AnthroDistribution], rng: np.random.Generator) -> np.ndarray:
    mean = np.array([d.mean for d in distributions])
    std = np.array([d.std for d in distributions])
    draw = rng.normal(mean, std)
    return np.clip(draw, mean - 3.0 * std, mean + 3.0 * std)


def generate_synthetic_dataset(n_subjects: int, seed: int,
                               config_path: Optional[PathLike] = None) -> Dataset:
    """
    Deterministic spherical-head dataset of n_subjects subjects

    Raises:
        InvalidArgumentError: n_subjects < 1
    """
    if not isinstance(n_subjects, (int, np.integer)) or n_subjects < 1:
        raise InvalidArgumentError(f"n_subjects must be >= 1, got {n_subjects}")
    distributions, model = load_generator_config(config_path)
    grid = build_cipic_grid()
    rng = np.random.default_rng(seed)

    subjects = []
    ids: Iterable[int] = range(int(n_subjects))
    for k in tqdm(ids, desc="Synthesizing subjects", disable=not settings.progress or n_subjects < 4):
        anthro = draw_anthro(distributions, rng)
        hrirs = model.synthesize_hrirs(grid, anthro)
        subjects.append(Subject(id=f"S{k + 1:03d}", anthro_raw=anthro, hrirs=hrirs))
    logger.info(f"Synthesized {n_subjects} subjects (seed={seed})")
    return Dataset(subjects=tuple(subjects), grid=grid, sample_rate_hz=SAMPLE_RATE_HZ)
