"""
Grouping types: group identifiers, diffraction-effect masks and routers
"""
from dataclasses import dataclass
from enum import Enum
from typing import Dict, Optional, Tuple

import numpy as np

from app.config import SideName, Strategy
from app.errors import InvalidArgumentError, PartitionError, RoutingError, WrongSideError


class GroupLabel(str, Enum):
    LEFT_FRONT = "LeftFront"
    LEFT_BACK = "LeftBack"
    RIGHT_FRONT = "RightFront"
    RIGHT_BACK = "RightBack"
    INNER = "Inner"
    OUTER = "Outer"
    ALL = "All"


LEGAL_LABELS: Dict[Strategy, Tuple[GroupLabel, ...]] = {
    Strategy.SL: (GroupLabel.LEFT_FRONT, GroupLabel.LEFT_BACK, GroupLabel.RIGHT_FRONT, GroupLabel.RIGHT_BACK),
    Strategy.DE: (GroupLabel.INNER, GroupLabel.OUTER),
    Strategy.HYBRID: (GroupLabel.LEFT_FRONT, GroupLabel.LEFT_BACK, GroupLabel.INNER, GroupLabel.OUTER),
    Strategy.GLOBAL: (GroupLabel.ALL,),
}


@dataclass(frozen=True)
class GroupId:
    strategy: Strategy
    label: GroupLabel

    def __post_init__(self):
        if self.label not in LEGAL_LABELS[self.strategy]:
            raise InvalidArgumentError(f"Label {self.label.value} is not legal for strategy {self.strategy.value}")

    def __str__(self) -> str:
        return f"{self.strategy.value}:{self.label.value}"


@dataclass(frozen=True)
class DeMask:
    """
    Inner/Outer split of one side of the grid by mean low-band energy

    Attributes:
        side: Which side of the grid the mask covers
        direction_indices: Grid indices on that side, ascending
        energies: Mean normalized low-band value per covered direction,
            averaged over the source subjects
        threshold: Inner iff energy > threshold
        band_hz: Frequency band the energy is averaged over
        source_subject_ids: Training subjects the energies come from
    """
    side: SideName
    direction_indices: np.ndarray
    energies: np.ndarray
    threshold: float
    band_hz: Tuple[float, float]
    source_subject_ids: Tuple[str, ...]

    def __post_init__(self):
        idx = np.asarray(self.direction_indices, dtype=np.int64)
        energies = np.asarray(self.energies, dtype=np.float64)
        if idx.shape != energies.shape:
            raise InvalidArgumentError("DeMask indices and energies must align")
        idx.setflags(write=False)
        energies.setflags(write=False)
        object.__setattr__(self, "direction_indices", idx)
        object.__setattr__(self, "energies", energies)
        object.__setattr__(self, "_position", {int(i): k for k, i in enumerate(idx)})

    @property
    def inner(self) -> np.ndarray:
        return self.energies > self.threshold

    def covers(self, direction_index: int) -> bool:
        return int(direction_index) in self._position

    def is_inner(self, direction_index: int) -> bool:
        try:
            k = self._position[int(direction_index)]
        except KeyError:
            raise WrongSideError(
                f"Direction index {direction_index} is not on the {self.side.value} side covered by the mask"
            ) from None
        return bool(self.energies[k] > self.threshold)

    def inner_indices(self) -> np.ndarray:
        return self.direction_indices[self.inner]

    def __eq__(self, other) -> bool:
        if not isinstance(other, DeMask):
            return NotImplemented
        return (
            self.side == other.side
            and np.array_equal(self.direction_indices, other.direction_indices)
            and np.array_equal(self.energies, other.energies)
            and self.threshold == other.threshold
            and tuple(self.band_hz) == tuple(other.band_hz)
            and tuple(self.source_subject_ids) == tuple(other.source_subject_ids)
        )

    __hash__ = None


@dataclass(frozen=True)
class Router:
    """
    Dispatches grid directions to group models

    labels holds one entry per grid direction; None marks directions
    outside the router's domain (only possible for side-restricted DE runs).
    """
    strategy: Strategy
    labels: Tuple[Optional[GroupLabel], ...]
    de_mask: Optional[DeMask] = None

    def __post_init__(self):
        object.__setattr__(self, "labels", tuple(self.labels))
        legal = LEGAL_LABELS[self.strategy]
        for i, label in enumerate(self.labels):
            if label is not None and label not in legal:
                raise PartitionError(f"Direction {i} carries label {label.value}, illegal for {self.strategy.value}")
        domain = self.domain_indices()
        if self.strategy is not Strategy.DE and domain.size != len(self.labels):
            raise PartitionError(
                f"{self.strategy.value} router leaves {len(self.labels) - domain.size} directions unassigned"
            )
        if self.strategy is Strategy.DE:
            if self.de_mask is None:
                raise PartitionError("DE router requires its mask")
            if not np.array_equal(domain, self.de_mask.direction_indices):
                raise PartitionError("DE router domain differs from the mask's side")

    def __len__(self) -> int:
        return len(self.labels)

    def domain_indices(self) -> np.ndarray:
        return np.array([i for i, label in enumerate(self.labels) if label is not None], dtype=np.int64)

    @property
    def groups(self) -> Dict[GroupLabel, np.ndarray]:
        """Per-group direction index sets, in the strategy's label order"""
        out = {}
        for label in LEGAL_LABELS[self.strategy]:
            out[label] = np.array([i for i, lab in enumerate(self.labels) if lab is label], dtype=np.int64)
        return out

    def route(self, direction_index: int) -> GroupId:
        i = int(direction_index)
        label = self.labels[i] if 0 <= i < len(self.labels) else None
        if label is None:
            raise RoutingError(f"Direction {direction_index} is outside the {self.strategy.value} router's domain")
        return GroupId(self.strategy, label)

    def label_array(self) -> np.ndarray:
        """Labels as strings ('' outside the domain), one per direction"""
        return np.array([label.value if label is not None else "" for label in self.labels], dtype=object)
