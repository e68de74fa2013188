"""Directions, the interaural-polar conversion and the measurement grid"""
import math

import numpy as np
import pytest

from app.errors import InvalidArgumentError
from app.models.domain import (
    CIPIC_AZIMUTHS, Dataset, Direction, Subject, build_cipic_grid, interaural_polar_to_cartesian,
)


class TestCartesianConversion:

    def test_front(self):
        np.testing.assert_allclose(interaural_polar_to_cartesian(0.0, 0.0), (1.0, 0.0, 0.0), atol=1e-15)

    def test_interaural_axis(self):
        np.testing.assert_allclose(interaural_polar_to_cartesian(90.0, 37.0), (0.0, 1.0, 0.0), atol=1e-15)

    def test_overhead_and_behind(self):
        np.testing.assert_allclose(interaural_polar_to_cartesian(0.0, 90.0), (0.0, 0.0, 1.0), atol=1e-15)
        np.testing.assert_allclose(interaural_polar_to_cartesian(0.0, 180.0), (-1.0, 0.0, 0.0), atol=1e-15)

    def test_radius_scales(self):
        x, y, z = interaural_polar_to_cartesian(-30.0, 120.0, radius=2.5)
        assert math.sqrt(x * x + y * y + z * z) == pytest.approx(2.5, rel=1e-14)

    @pytest.mark.parametrize("args", [(float("nan"), 0.0, 1.0), (0.0, float("inf"), 1.0), (0.0, 0.0, 0.0)])
    def test_invalid(self, args):
        with pytest.raises(InvalidArgumentError):
            interaural_polar_to_cartesian(*args)


class TestGrid:

    def test_size(self, grid):
        assert len(grid) == 1250
        assert len(grid.azimuths) == 25
        assert len(grid.elevations) == 50

    def test_elevation_spacing(self, grid):
        assert grid.elevations[0] == -45.0
        assert grid.elevations[-1] == pytest.approx(230.625)
        np.testing.assert_allclose(np.diff(grid.elevations), 5.625)

    def test_azimuth_set(self, grid):
        assert grid.azimuths == CIPIC_AZIMUTHS
        assert grid.azimuths[0] == -80.0 and grid.azimuths[-1] == 80.0
        assert 0.0 in grid.azimuths

    def test_row_major_index(self, grid):
        for index in (0, 49, 50, 777, 1249):
            assert grid.index_of(grid.directions[index]) == index
        assert grid.index_of(Direction(grid.azimuths[3], grid.elevations[7])) == 3 * 50 + 7

    def test_off_grid_direction(self, grid):
        with pytest.raises(InvalidArgumentError):
            grid.index_of(Direction(1.0, 0.0))

    def test_unit_vectors(self, grid):
        np.testing.assert_allclose(np.linalg.norm(grid.cartesian_array(), axis=1), 1.0, atol=1e-14)

    def test_cached(self):
        assert build_cipic_grid() is build_cipic_grid()

    def test_side_split(self, grid):
        ipsi = grid.ipsilateral_mask()
        assert int(ipsi.sum()) == 13 * 50
        assert int(grid.ipsilateral_mask(zero_azimuth_ipsilateral=False).sum()) == 12 * 50


class TestSubject:

    def test_immutable_arrays(self, dataset):
        subject = dataset.subjects[0]
        with pytest.raises(ValueError):
            subject.hrirs[0, 0] = 1.0

    def test_rejects_wrong_shapes(self):
        with pytest.raises(InvalidArgumentError):
            Subject("X", np.zeros(26), np.zeros((1250, 200)))
        with pytest.raises(InvalidArgumentError):
            Subject("X", np.zeros(27), np.zeros((1250, 199)))

    def test_duplicate_ids(self, dataset):
        subject = dataset.subjects[0]
        with pytest.raises(InvalidArgumentError):
            Dataset((subject, subject), dataset.grid)
