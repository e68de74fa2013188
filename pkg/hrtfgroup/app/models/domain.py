"""
Core domain types: directions, the CIPIC measurement grid, subjects, datasets

All values are immutable after construction (arrays are made read-only) so
they can be shared between folds and worker threads.
"""
import math
from dataclasses import dataclass, field
from functools import lru_cache
from typing import Dict, Iterator, List, Sequence, Tuple

import numpy as np

from app.errors import InvalidArgumentError

N_ANTHRO = 27
HRIR_LENGTH = 200
SAMPLE_RATE_HZ = 44100

# CIPIC interaural-polar sampling
CIPIC_AZIMUTHS: Tuple[float, ...] = (
    (-80.0, -65.0, -55.0)
    + tuple(float(a) for a in range(-45, 50, 5))
    + (55.0, 65.0, 80.0)
)
ELEVATION_START_DEG = -45.0
ELEVATION_STEP_DEG = 360.0 / 64.0
N_ELEVATIONS = 50


def interaural_polar_to_cartesian(azimuth_deg: float, elevation_deg: float,
                                  radius: float = 1.0) -> Tuple[float, float, float]:
    """
    Convert interaural-polar angles to Cartesian coordinates

    (x, y, z) = (R cos(az) cos(el), R sin(az), R cos(az) sin(el))

    Raises:
        InvalidArgumentError: non-finite input or radius <= 0
    """
    if not all(math.isfinite(v) for v in (azimuth_deg, elevation_deg, radius)):
        raise InvalidArgumentError(
            f"Non-finite direction: azimuth={azimuth_deg}, elevation={elevation_deg}, radius={radius}"
        )
    if radius <= 0:
        raise InvalidArgumentError(f"Radius must be positive, got {radius}")
    theta = math.radians(azimuth_deg)
    phi = math.radians(elevation_deg)
    return (
        radius * math.cos(theta) * math.cos(phi),
        radius * math.sin(theta),
        radius * math.cos(theta) * math.sin(phi),
    )


@dataclass(frozen=True)
class Direction:
    """One measurement direction in interaural-polar coordinates"""
    azimuth_deg: float
    elevation_deg: float
    radius: float = 1.0
    cartesian: Tuple[float, float, float] = field(init=False)

    def __post_init__(self):
        object.__setattr__(
            self, "cartesian",
            interaural_polar_to_cartesian(self.azimuth_deg, self.elevation_deg, self.radius),
        )

    @property
    def is_ipsilateral(self) -> bool:
        # Left ear: non-positive azimuth faces the measured ear
        return self.azimuth_deg <= 0.0

    def angle_to_pole_deg(self, pole: Tuple[float, float, float] = (0.0, 1.0, 0.0)) -> float:
        """Great-circle angle between this direction and a unit pole vector"""
        x, y, z = (c / self.radius for c in self.cartesian)
        dot = x * pole[0] + y * pole[1] + z * pole[2]
        return math.degrees(math.acos(max(-1.0, min(1.0, dot))))


@dataclass(frozen=True)
class MeasurementGrid:
    """Ordered set of measurement directions, azimuth-major"""
    azimuths: Tuple[float, ...]
    elevations: Tuple[float, ...]
    directions: Tuple[Direction, ...]
    name: str = "cipic"

    def __post_init__(self):
        if len(self.directions) != len(self.azimuths) * len(self.elevations):
            raise InvalidArgumentError("Grid directions must be azimuths x elevations")

    def __len__(self) -> int:
        return len(self.directions)

    def __iter__(self) -> Iterator[Direction]:
        return iter(self.directions)

    def index_of(self, direction: Direction) -> int:
        """Row-major index of a direction lying on the grid"""
        try:
            a = self.azimuths.index(direction.azimuth_deg)
            e = self.elevations.index(direction.elevation_deg)
        except ValueError:
            raise InvalidArgumentError(
                f"Direction ({direction.azimuth_deg}, {direction.elevation_deg}) is not on the {self.name} grid"
            ) from None
        return a * len(self.elevations) + e

    def azimuth_array(self) -> np.ndarray:
        return np.array([d.azimuth_deg for d in self.directions])

    def elevation_array(self) -> np.ndarray:
        return np.array([d.elevation_deg for d in self.directions])

    def cartesian_array(self) -> np.ndarray:
        """(n_directions, 3) Cartesian coordinates"""
        return np.array([d.cartesian for d in self.directions])

    def ipsilateral_mask(self, zero_azimuth_ipsilateral: bool = True) -> np.ndarray:
        az = self.azimuth_array()
        return az <= 0.0 if zero_azimuth_ipsilateral else az < 0.0


@lru_cache(maxsize=1)
def build_cipic_grid() -> MeasurementGrid:
    """
    The 25 x 50 CIPIC grid: 1250 directions, elevation step 360/64 degrees
    """
    elevations = tuple(ELEVATION_START_DEG + k * ELEVATION_STEP_DEG for k in range(N_ELEVATIONS))
    directions = tuple(
        Direction(azimuth_deg=az, elevation_deg=el, radius=1.0)
        for az in CIPIC_AZIMUTHS
        for el in elevations
    )
    return MeasurementGrid(azimuths=CIPIC_AZIMUTHS, elevations=elevations, directions=directions)


def _frozen(array, dtype=np.float64) -> np.ndarray:
    out = np.array(array, dtype=dtype, copy=True)
    out.setflags(write=False)
    return out


@dataclass(frozen=True)
class Subject:
    """
    One subject: 27 left-relevant anthropometric values and left-ear HRIRs

    Attributes:
        id: Subject identifier
        anthro_raw: 17 torso/head + 10 left-pinna parameters, raw units
        hrirs: (n_directions, 200) impulse responses in grid order
    """
    id: str
    anthro_raw: np.ndarray
    hrirs: np.ndarray

    def __post_init__(self):
        anthro = _frozen(self.anthro_raw)
        hrirs = _frozen(self.hrirs)
        if anthro.shape != (N_ANTHRO,):
            raise InvalidArgumentError(f"Subject {self.id}: expected {N_ANTHRO} anthropometric values, got {anthro.shape}")
        if not np.all(np.isfinite(anthro)):
            raise InvalidArgumentError(f"Subject {self.id}: non-finite anthropometric value")
        if hrirs.ndim != 2 or hrirs.shape[1] != HRIR_LENGTH:
            raise InvalidArgumentError(f"Subject {self.id}: HRIR matrix must be (n, {HRIR_LENGTH}), got {hrirs.shape}")
        object.__setattr__(self, "anthro_raw", anthro)
        object.__setattr__(self, "hrirs", hrirs)

    def __eq__(self, other) -> bool:
        if not isinstance(other, Subject):
            return NotImplemented
        return (
            self.id == other.id
            and np.array_equal(self.anthro_raw, other.anthro_raw)
            and np.array_equal(self.hrirs, other.hrirs)
        )

    __hash__ = None


@dataclass(frozen=True)
class Dataset:
    """Validated collection of subjects sharing one grid"""
    subjects: Tuple[Subject, ...]
    grid: MeasurementGrid
    sample_rate_hz: int = SAMPLE_RATE_HZ

    def __post_init__(self):
        object.__setattr__(self, "subjects", tuple(self.subjects))
        ids = [s.id for s in self.subjects]
        if len(set(ids)) != len(ids):
            raise InvalidArgumentError(f"Duplicate subject ids: {ids}")
        for s in self.subjects:
            if s.hrirs.shape[0] != len(self.grid):
                raise InvalidArgumentError(
                    f"Subject {s.id} has {s.hrirs.shape[0]} directions, grid has {len(self.grid)}"
                )

    def __len__(self) -> int:
        return len(self.subjects)

    @property
    def subject_ids(self) -> List[str]:
        return [s.id for s in self.subjects]

    def subject(self, subject_id: str) -> Subject:
        for s in self.subjects:
            if s.id == subject_id:
                return s
        raise InvalidArgumentError(f"Unknown subject id {subject_id!r}")

    def index_of(self, subject_id: str) -> int:
        return self.subject_ids.index(subject_id)

    def anthro_matrix(self, subject_ids: Sequence[str] = None) -> np.ndarray:
        """(n_subjects, 27) raw anthropometrics"""
        ids = self.subject_ids if subject_ids is None else subject_ids
        return np.stack([self.subject(i).anthro_raw for i in ids])

    def by_id(self) -> Dict[str, Subject]:
        return {s.id: s for s in self.subjects}
