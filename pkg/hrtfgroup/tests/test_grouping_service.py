"""SL / DE / hybrid / global grouping and routers"""
import numpy as np
import pytest

from app.config import GroupingConfig, SideName, Strategy
from app.errors import ConfigurationError, InvalidArgumentError, PartitionError, RoutingError, WrongSideError
from app.models.domain import Direction
from app.models.grouping import GroupId, GroupLabel, Router
from app.models.preproc import FrequencyAxis
from app.services.dataset_service import generate_synthetic_dataset
from app.services.grouping_service import (
    build_router, check_partition, compute_de_mask, de_group, de_mask_from_db, group_map_frame, hybrid_group,
    load_router, save_router, sl_group,
)
from app.services.preproc_service import compute_db_table

AXIS = FrequencyAxis()


@pytest.fixture(scope="module")
def crafted_mask(grid):
    """Contralateral directions at azimuth >= 65 carry high low-band energy"""
    values = np.full((2, len(grid), AXIS.n_bins), 0.1)
    hot = grid.azimuth_array() >= 65.0
    values[:, hot, :] = 0.9
    return compute_de_mask(values, grid, AXIS, ["A", "B"])


@pytest.fixture(scope="module")
def cohort():
    return generate_synthetic_dataset(10, seed=11)


@pytest.fixture(scope="module")
def cohort_db(cohort):
    return compute_db_table(cohort)


@pytest.fixture(scope="module")
def cohort_mask(grid, cohort, cohort_db):
    return de_mask_from_db(cohort_db, grid, AXIS, cohort.subject_ids)


class TestSlGrouping:

    def test_quadrant_sizes(self, grid):
        router = build_router(Strategy.SL, grid)
        sizes = {label: idx.size for label, idx in router.groups.items()}
        assert sizes == {
            GroupLabel.LEFT_FRONT: 13 * 24,
            GroupLabel.LEFT_BACK: 13 * 26,
            GroupLabel.RIGHT_FRONT: 12 * 24,
            GroupLabel.RIGHT_BACK: 12 * 26,
        }
        check_partition(router)

    def test_boundaries(self):
        assert sl_group(Direction(0.0, 0.0)).label is GroupLabel.LEFT_FRONT
        assert sl_group(Direction(0.0, 90.0)).label is GroupLabel.LEFT_BACK
        assert sl_group(Direction(5.0, 84.375)).label is GroupLabel.RIGHT_FRONT
        assert sl_group(Direction(80.0, 230.625)).label is GroupLabel.RIGHT_BACK

    def test_zero_azimuth_configurable(self):
        config = GroupingConfig(zero_azimuth_ipsilateral=False)
        assert sl_group(Direction(0.0, 0.0), config).label is GroupLabel.RIGHT_FRONT

    def test_illegal_label(self):
        with pytest.raises(InvalidArgumentError):
            GroupId(Strategy.SL, GroupLabel.INNER)


class TestDeMask:

    def test_crafted_split(self, grid, crafted_mask):
        assert crafted_mask.side is SideName.CONTRALATERAL
        assert crafted_mask.direction_indices.size == 600
        inner = crafted_mask.inner_indices()
        assert inner.size == 100
        assert set(grid.azimuth_array()[inner]) == {65.0, 80.0}

    def test_synthetic_split_is_two_sided(self, grid, dataset, db_table):
        mask = de_mask_from_db(db_table, grid, AXIS, dataset.subject_ids)
        assert mask.direction_indices.size == 600
        assert 0 < mask.inner_indices().size < 600
        assert np.all((mask.energies >= 0.0) & (mask.energies <= 1.0))

    def test_deterministic(self, grid, dataset, db_table):
        a = de_mask_from_db(db_table, grid, AXIS, dataset.subject_ids)
        b = de_mask_from_db(db_table, grid, AXIS, dataset.subject_ids)
        assert a == b

    def test_threshold_is_strict(self, grid):
        values = np.full((1, len(grid), AXIS.n_bins), 0.5)
        mask = compute_de_mask(values, grid, AXIS, ["A"])
        assert mask.inner_indices().size == 0

    def test_rejects_unnormalized(self, grid):
        values = np.full((1, len(grid), AXIS.n_bins), 1.5)
        with pytest.raises(InvalidArgumentError):
            compute_de_mask(values, grid, AXIS, ["A"])

    def test_empty_band(self, grid):
        values = np.full((1, len(grid), AXIS.n_bins), 0.5)
        config = GroupingConfig(de_band_hz=(100.0, 150.0))
        with pytest.raises(ConfigurationError):
            compute_de_mask(values, grid, AXIS, ["A"], config)

    def test_wrong_side(self, crafted_mask):
        with pytest.raises(WrongSideError):
            de_group(0, crafted_mask)

    def test_de_group_labels(self, grid, crafted_mask):
        assert de_group(grid.index_of(Direction(80.0, 0.0)), crafted_mask).label is GroupLabel.INNER
        assert de_group(grid.index_of(Direction(20.0, 0.0)), crafted_mask).label is GroupLabel.OUTER

    def test_higher_threshold_never_adds_inner(self, grid, cohort_db, cohort):
        previous = None
        for threshold in (0.3, 0.4, 0.5, 0.6, 0.7):
            config = GroupingConfig(de_threshold=threshold)
            inner = set(de_mask_from_db(cohort_db, grid, AXIS, cohort.subject_ids, config).inner_indices().tolist())
            if previous is not None:
                assert inner <= previous
            previous = inner


class TestSyntheticBrightSpot:

    def test_inner_lies_nearer_the_contralateral_pole(self, grid, cohort_mask):
        inner = cohort_mask.inner
        distances = np.array([grid.directions[i].angle_to_pole_deg() for i in cohort_mask.direction_indices])
        assert 0 < inner.sum() < inner.size
        assert distances[inner].mean() < distances[~inner].mean()

    def test_shadowed_direction_is_inner(self, grid, cohort_mask):
        assert de_group(grid.index_of(Direction(80.0, 90.0)), cohort_mask).label is GroupLabel.INNER

class TestRouters:

    def test_hybrid_labels(self, grid, crafted_mask):
        router = build_router(Strategy.HYBRID, grid, crafted_mask)
        check_partition(router)
        sizes = {label: idx.size for label, idx in router.groups.items()}
        assert sizes[GroupLabel.LEFT_FRONT] == 312 and sizes[GroupLabel.LEFT_BACK] == 338
        assert sizes[GroupLabel.INNER] == 100 and sizes[GroupLabel.OUTER] == 500

    def test_hybrid_needs_contralateral(self, grid):
        values = np.full((1, len(grid), AXIS.n_bins), 0.2)
        ipsi_mask = compute_de_mask(values, grid, AXIS, ["A"], GroupingConfig(de_side=SideName.IPSILATERAL))
        with pytest.raises(ConfigurationError):
            hybrid_group(0, grid, ipsi_mask)

    def test_de_router_is_side_restricted(self, grid, crafted_mask):
        router = build_router(Strategy.DE, grid, crafted_mask)
        check_partition(router)
        assert router.domain_indices().size == 600
        with pytest.raises(RoutingError):
            router.route(grid.index_of(Direction(-30.0, 0.0)))

    def test_global(self, grid):
        router = build_router(Strategy.GLOBAL, grid)
        assert list(router.groups) == [GroupLabel.ALL]
        assert router.groups[GroupLabel.ALL].size == 1250

    def test_mask_required(self, grid):
        with pytest.raises(ConfigurationError):
            build_router(Strategy.DE, grid)

    def test_route_out_of_range(self, grid):
        with pytest.raises(RoutingError):
            build_router(Strategy.SL, grid).route(5000)

    @pytest.mark.parametrize("index", [-1, -1250])
    def test_route_rejects_negative_index(self, grid, index):
        with pytest.raises(RoutingError):
            build_router(Strategy.SL, grid).route(index)

    def test_incomplete_labels(self, grid):
        labels = [GroupLabel.ALL] * 1249 + [None]
        with pytest.raises(PartitionError):
            Router(Strategy.GLOBAL, tuple(labels))

    def test_save_load(self, tmp_path, grid, crafted_mask):
        router = build_router(Strategy.HYBRID, grid, crafted_mask)
        restored = load_router(save_router(router, tmp_path / "router.json"))
        assert restored.labels == router.labels
        assert restored.de_mask == router.de_mask
        assert restored.strategy is Strategy.HYBRID


class TestGroupMap:

    def test_sl_map(self, grid):
        frame = group_map_frame(build_router(Strategy.SL, grid), grid)
        assert len(frame) == 1250
        assert list(frame.columns) == ["azimuth", "elevation", "x", "y", "z", "group"]
        assert frame["group"].nunique() == 4

    def test_de_map_leaves_other_side_blank(self, grid, crafted_mask):
        frame = group_map_frame(build_router(Strategy.DE, grid, crafted_mask), grid)
        contra = frame[frame["azimuth"] > 0.0]
        assert set(contra["group"]) == {"Inner", "Outer"}
        assert set(frame.loc[frame["azimuth"] <= 0.0, "group"]) == {""}
