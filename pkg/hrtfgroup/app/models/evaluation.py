"""
Experiment types: seen/unseen split plans, evaluation records, ANOVA results
"""
from dataclasses import asdict, dataclass
from typing import Any, Dict, Tuple

import numpy as np

from app.errors import InvalidArgumentError


@dataclass(frozen=True)
class SplitPlan:
    """
    One leave-one-out fold: a held-out subject and the seen/unseen direction split

    The unseen set is shared by every training subject of the fold.
    """
    fold_subject_id: str
    train_subject_ids: Tuple[str, ...]
    seen_direction_indices: np.ndarray
    unseen_direction_indices: np.ndarray
    seed: int

    def __post_init__(self):
        seen = np.sort(np.asarray(self.seen_direction_indices, dtype=np.int64))
        unseen = np.sort(np.asarray(self.unseen_direction_indices, dtype=np.int64))
        if np.intersect1d(seen, unseen).size:
            raise InvalidArgumentError("Seen and unseen direction sets overlap")
        if self.fold_subject_id in self.train_subject_ids:
            raise InvalidArgumentError(f"Held-out subject {self.fold_subject_id} is also a training subject")
        seen.setflags(write=False)
        unseen.setflags(write=False)
        object.__setattr__(self, "seen_direction_indices", seen)
        object.__setattr__(self, "unseen_direction_indices", unseen)
        object.__setattr__(self, "train_subject_ids", tuple(self.train_subject_ids))

    @property
    def n_directions(self) -> int:
        return int(self.seen_direction_indices.size + self.unseen_direction_indices.size)

    @property
    def training_count(self) -> int:
        return len(self.train_subject_ids) * int(self.seen_direction_indices.size)

    @property
    def seen_eval_count(self) -> int:
        return int(self.seen_direction_indices.size)

    @property
    def unseen_eval_count(self) -> int:
        return int(self.unseen_direction_indices.size)

    def is_seen(self, direction_index: int) -> bool:
        i = np.searchsorted(self.seen_direction_indices, direction_index)
        return bool(i < self.seen_direction_indices.size and self.seen_direction_indices[i] == direction_index)

    def __eq__(self, other) -> bool:
        if not isinstance(other, SplitPlan):
            return NotImplemented
        return (
            self.fold_subject_id == other.fold_subject_id
            and self.train_subject_ids == other.train_subject_ids
            and np.array_equal(self.seen_direction_indices, other.seen_direction_indices)
            and np.array_equal(self.unseen_direction_indices, other.unseen_direction_indices)
            and self.seed == other.seed
        )

    __hash__ = None


@dataclass(frozen=True)
class EvalRecord:
    """LSD of one predicted HRTF of a held-out subject"""
    subject_id: str
    direction_index: int
    group: str
    side: str
    seen: bool
    lsd_db: float

    def __post_init__(self):
        if not self.lsd_db >= 0.0:
            raise InvalidArgumentError(f"LSD must be non-negative, got {self.lsd_db}")

    def to_dict(self) -> Dict[str, Any]:
        return asdict(self)


@dataclass(frozen=True)
class AnovaResult:
    """One-way ANOVA outcome"""
    f_stat: float
    df_between: int
    df_within: int
    p_value: float
    infinite_f: bool = False

    def __post_init__(self):
        if self.df_between <= 0 or self.df_within <= 0:
            raise InvalidArgumentError("ANOVA degrees of freedom must be positive")
        if not self.f_stat >= 0.0:
            raise InvalidArgumentError(f"F statistic must be non-negative, got {self.f_stat}")
        if not 0.0 <= self.p_value <= 1.0:
            raise InvalidArgumentError(f"p-value outside [0, 1]: {self.p_value}")

    def to_dict(self) -> Dict[str, Any]:
        return {
            "F": self.f_stat if not self.infinite_f else "inf",
            "df": [self.df_between, self.df_within],
            "p": self.p_value,
        }

    def __str__(self) -> str:
        f = "inf" if self.infinite_f else f"{self.f_stat:.2f}"
        return f"F({self.df_between},{self.df_within})={f}, p={self.p_value:.4g}"
