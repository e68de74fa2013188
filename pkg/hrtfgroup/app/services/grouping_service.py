"""
Grouping service
Assigns grid directions to subspaces under the SL, DE, hybrid and global
strategies and builds the router that dispatches data to group models
"""
import json
import logging
from pathlib import Path
from typing import Optional, Sequence, Union

import numpy as np
import pandas as pd

from app.config import GroupingConfig, MinMaxMode, SideName, Strategy
from app.errors import ConfigurationError, InvalidArgumentError, PartitionError
from app.models.domain import Direction, MeasurementGrid
from app.models.grouping import DeMask, GroupId, GroupLabel, Router
from app.models.preproc import FrequencyAxis
from app.models.schemas import DeMaskFile, RouterFile
from app.services.preproc_service import apply_minmax, fit_minmax

logger = logging.getLogger(__name__)

DEFAULT_GROUPING = GroupingConfig()


def sl_group(direction: Direction, config: GroupingConfig = DEFAULT_GROUPING) -> GroupId:
    """
    Quadrant by azimuth sign and the elevation split

    Azimuth 0 is left unless configured otherwise; elevations in
    [-45, split) are front, [split, 230.625] back.
    """
    az = direction.azimuth_deg
    left = az <= 0.0 if config.zero_azimuth_ipsilateral else az < 0.0
    front = direction.elevation_deg < config.elevation_split_deg
    if left:
        label = GroupLabel.LEFT_FRONT if front else GroupLabel.LEFT_BACK
    else:
        label = GroupLabel.RIGHT_FRONT if front else GroupLabel.RIGHT_BACK
    return GroupId(Strategy.SL, label)


def side_mask(grid: MeasurementGrid, side: SideName, config: GroupingConfig = DEFAULT_GROUPING) -> np.ndarray:
    ipsi = grid.ipsilateral_mask(config.zero_azimuth_ipsilateral)
    return ipsi if side is SideName.IPSILATERAL else ~ipsi


def side_of(direction: Direction, config: GroupingConfig = DEFAULT_GROUPING) -> SideName:
    az = direction.azimuth_deg
    ipsi = az <= 0.0 if config.zero_azimuth_ipsilateral else az < 0.0
    return SideName.IPSILATERAL if ipsi else SideName.CONTRALATERAL


def compute_de_mask(normalized_hrtfs: np.ndarray, grid: MeasurementGrid, axis: FrequencyAxis,
                    source_subject_ids: Sequence[str],
                    config: GroupingConfig = DEFAULT_GROUPING) -> DeMask:
    """
    Inner/Outer split of one side by mean normalized low-band energy

    Args:
        normalized_hrtfs: (n_subjects, n_directions, n_bins) min-max
            normalized HRTFs of the training subjects over the full grid
        grid: measurement grid the second axis follows
        axis: frequency axis of the last axis
        source_subject_ids: ids of the subjects along the first axis
        config: threshold, band and side

    Raises:
        InvalidArgumentError: shape mismatch or values outside [0, 1]
        ConfigurationError: no frequency bin inside the band
    """
    values = np.asarray(normalized_hrtfs, dtype=np.float64)
    if values.ndim != 3 or values.shape[1] != len(grid) or values.shape[2] != axis.n_bins:
        raise InvalidArgumentError(
            f"Expected (subjects, {len(grid)}, {axis.n_bins}) normalized HRTFs, got {values.shape}"
        )
    if values.shape[0] != len(source_subject_ids):
        raise InvalidArgumentError("One subject id per HRTF slab required")
    if np.any(values < 0.0) or np.any(values > 1.0):
        raise InvalidArgumentError("DE mask needs min-max normalized HRTFs in [0, 1]")

    lo, hi = config.de_band_hz
    band = axis.band_indices(lo, hi)
    if band.size == 0:
        raise ConfigurationError(f"No frequency bins in the DE band [{lo}, {hi}] Hz")

    indices = np.flatnonzero(side_mask(grid, config.de_side, config))
    energies = values[:, indices][:, :, band].mean(axis=2).mean(axis=0)
    mask = DeMask(
        side=config.de_side, direction_indices=indices, energies=energies, threshold=config.de_threshold,
        band_hz=(float(lo), float(hi)), source_subject_ids=tuple(source_subject_ids),
    )
    logger.info(f"DE mask ({config.de_side.value}, {band.size} band bins): "
                f"{int(mask.inner.sum())} inner / {int((~mask.inner).sum())} outer")
    return mask


def de_mask_from_db(db_hrtfs: np.ndarray, grid: MeasurementGrid, axis: FrequencyAxis,
                    source_subject_ids: Sequence[str], config: GroupingConfig = DEFAULT_GROUPING,
                    minmax_mode: MinMaxMode = MinMaxMode.GLOBAL) -> DeMask:
    """Normalize training dB HRTFs with their own min-max statistics, then compute the mask"""
    minmax = fit_minmax(db_hrtfs, minmax_mode)
    normalized, _ = apply_minmax(db_hrtfs, minmax)
    return compute_de_mask(normalized, grid, axis, source_subject_ids, config)


def de_group(direction_index: int, mask: DeMask) -> GroupId:
    """
    Raises:
        WrongSideError: direction is not on the mask's side
    """
    label = GroupLabel.INNER if mask.is_inner(direction_index) else GroupLabel.OUTER
    return GroupId(Strategy.DE, label)


def hybrid_group(direction_index: int, grid: MeasurementGrid, mask: DeMask,
                 config: GroupingConfig = DEFAULT_GROUPING) -> GroupId:
    """SL quadrant on the ipsilateral side, DE split on the contralateral side"""
    if mask.side is not SideName.CONTRALATERAL:
        raise ConfigurationError("Hybrid grouping needs a contralateral DE mask")
    direction = grid.directions[direction_index]
    if side_of(direction, config) is SideName.IPSILATERAL:
        return GroupId(Strategy.HYBRID, sl_group(direction, config).label)
    return GroupId(Strategy.HYBRID, de_group(direction_index, mask).label)


def build_router(strategy: Strategy, grid: MeasurementGrid, de_mask: Optional[DeMask] = None,
                 config: GroupingConfig = DEFAULT_GROUPING) -> Router:
    """
    Router over the grid for one strategy

    Raises:
        ConfigurationError: DE/HYBRID without a mask
        PartitionError: the resulting groups do not partition the domain
    """
    if strategy in (Strategy.DE, Strategy.HYBRID) and de_mask is None:
        raise ConfigurationError(f"{strategy.value} routing needs a DE mask")

    labels = []
    for i, direction in enumerate(grid.directions):
        if strategy is Strategy.SL:
            labels.append(sl_group(direction, config).label)
        elif strategy is Strategy.GLOBAL:
            labels.append(GroupLabel.ALL)
        elif strategy is Strategy.HYBRID:
            labels.append(hybrid_group(i, grid, de_mask, config).label)
        else:
            labels.append(de_group(i, de_mask).label if de_mask.covers(i) else None)

    router = Router(strategy=strategy, labels=tuple(labels), de_mask=de_mask)
    sizes = {label.value: int(idx.size) for label, idx in router.groups.items()}
    logger.info(f"Router {strategy.value}: {sizes}")
    return router


def check_partition(router: Router) -> None:
    """Groups must be disjoint and cover the router's domain"""
    seen = np.zeros(len(router), dtype=int)
    for idx in router.groups.values():
        seen[idx] += 1
    domain = router.domain_indices()
    if np.any(seen[domain] != 1) or np.any(np.delete(seen, domain) != 0):
        raise PartitionError(f"{router.strategy.value} groups do not partition their domain")


# ============================================================================
# Persistence and group maps
# ============================================================================

def router_to_file(router: Router) -> RouterFile:
    mask = router.de_mask
    return RouterFile(
        strategy=router.strategy.value,
        threshold=mask.threshold if mask else None,
        band_hz=tuple(mask.band_hz) if mask else None,
        labels=[label.value if label is not None else None for label in router.labels],
        de_mask=DeMaskFile(
            side=mask.side.value, threshold=mask.threshold, band_hz=tuple(mask.band_hz),
            direction_indices=mask.direction_indices.tolist(), energies=mask.energies.tolist(),
            source_subject_ids=list(mask.source_subject_ids),
        ) if mask else None,
    )


def router_from_file(data: RouterFile) -> Router:
    mask = None
    if data.de_mask is not None:
        m = data.de_mask
        mask = DeMask(
            side=SideName(m.side), direction_indices=np.array(m.direction_indices, dtype=np.int64),
            energies=np.array(m.energies, dtype=np.float64), threshold=m.threshold,
            band_hz=tuple(m.band_hz), source_subject_ids=tuple(m.source_subject_ids),
        )
    labels = tuple(GroupLabel(v) if v is not None else None for v in data.labels)
    return Router(strategy=Strategy(data.strategy), labels=labels, de_mask=mask)


def save_router(router: Router, path: Union[str, Path]) -> Path:
    path = Path(path)
    path.write_text(router_to_file(router).model_dump_json(indent=2) + "\n", encoding="utf-8")
    return path


def load_router(path: Union[str, Path]) -> Router:
    path = Path(path)
    try:
        data = RouterFile.model_validate(json.loads(path.read_text(encoding="utf-8")))
    except (OSError, ValueError) as e:
        logger.error(f"Cannot load router {path}: {e}")
        raise
    return router_from_file(data)


def group_map_frame(router: Router, grid: MeasurementGrid) -> pd.DataFrame:
    """One row per grid direction: azimuth, elevation, x, y, z, group"""
    if len(router) != len(grid):
        raise InvalidArgumentError("Router and grid sizes differ")
    xyz = grid.cartesian_array()
    return pd.DataFrame({
        "azimuth": grid.azimuth_array(),
        "elevation": grid.elevation_array(),
        "x": xyz[:, 0],
        "y": xyz[:, 1],
        "z": xyz[:, 2],
        "group": router.label_array(),
    })
