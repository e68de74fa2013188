"""Dataset directory format and the synthetic generator"""
import json

import numpy as np
import pandas as pd
import pytest

from app.errors import (
    DatasetError, DatasetFileMissingError, IncompleteSubjectError, InvalidArgumentError, MalformedDataError,
)
from app.models.domain import HRIR_LENGTH, Direction
from app.services.dataset_service import (
    ANTHRO_NAME, HRIR_DTYPE, MANIFEST_NAME, SphericalHeadModel, dataset_fingerprint,
    generate_synthetic_dataset, hrir_filename, load_dataset, write_dataset,
)


@pytest.fixture
def dataset_dir(tmp_path, dataset):
    return write_dataset(dataset, tmp_path / "data")


class TestRoundTrip:

    def test_load_what_was_written(self, dataset, dataset_dir):
        loaded = load_dataset(dataset_dir)
        assert loaded.subject_ids == dataset.subject_ids
        for original, restored in zip(dataset.subjects, loaded.subjects):
            assert original == restored
        assert loaded.sample_rate_hz == 44100

    def test_file_layout(self, dataset, dataset_dir):
        manifest = json.loads((dataset_dir / MANIFEST_NAME).read_text())
        assert manifest["subjects"] == dataset.subject_ids
        assert manifest["hrir_len"] == HRIR_LENGTH
        assert (dataset_dir / hrir_filename("S001")).stat().st_size == 1250 * 200 * 8
        header = (dataset_dir / ANTHRO_NAME).read_text().splitlines()[0]
        assert header == "id," + ",".join(f"p{i}" for i in range(1, 28))

    def test_fingerprint_tracks_content(self, dataset):
        assert dataset_fingerprint(dataset) == dataset_fingerprint(dataset)
        assert dataset_fingerprint(dataset, ["S001"]) != dataset_fingerprint(dataset, ["S002"])


class TestMalformedInput:

    def test_missing_directory(self, tmp_path):
        with pytest.raises(DatasetFileMissingError):
            load_dataset(tmp_path / "nope")

    def test_missing_manifest(self, dataset_dir):
        (dataset_dir / MANIFEST_NAME).unlink()
        with pytest.raises(DatasetFileMissingError):
            load_dataset(dataset_dir)

    def test_missing_hrir_file(self, dataset_dir):
        (dataset_dir / hrir_filename("S002")).unlink()
        with pytest.raises(DatasetFileMissingError) as info:
            load_dataset(dataset_dir)
        assert info.value.subject_id == "S002"

    def test_partial_row(self, dataset_dir):
        path = dataset_dir / hrir_filename("S002")
        flat = np.fromfile(path, dtype=HRIR_DTYPE)
        flat[:1249 * 200 + 150].tofile(path)
        with pytest.raises(MalformedDataError) as info:
            load_dataset(dataset_dir)
        assert info.value.row_index == 1249
        assert "S002" in str(info.value)

    def test_non_finite_sample(self, dataset_dir):
        path = dataset_dir / hrir_filename("S003")
        flat = np.fromfile(path, dtype=HRIR_DTYPE)
        flat[17 * 200 + 3] = np.nan
        flat.tofile(path)
        with pytest.raises(MalformedDataError) as info:
            load_dataset(dataset_dir)
        assert info.value.row_index == 17

    def test_non_numeric_anthro(self, dataset_dir):
        path = dataset_dir / ANTHRO_NAME
        frame = pd.read_csv(path, dtype={"id": str})
        frame["p5"] = frame["p5"].astype(object)
        frame.loc[1, "p5"] = "abc"
        frame.to_csv(path, index=False)
        with pytest.raises(MalformedDataError) as info:
            load_dataset(dataset_dir)
        assert info.value.row_index == 1

    def test_wrong_header(self, dataset_dir):
        path = dataset_dir / ANTHRO_NAME
        lines = path.read_text().splitlines()
        lines[0] = lines[0].replace("p27", "q27")
        path.write_text("\n".join(lines) + "\n")
        with pytest.raises(MalformedDataError):
            load_dataset(dataset_dir)


class TestIncompleteSubjects:

    @pytest.fixture
    def truncated_dir(self, dataset_dir):
        path = dataset_dir / hrir_filename("S002")
        np.fromfile(path, dtype=HRIR_DTYPE)[:1000 * 200].tofile(path)
        return dataset_dir

    def test_skipped_by_default(self, truncated_dir):
        loaded = load_dataset(truncated_dir)
        assert loaded.subject_ids == ["S001", "S003"]

    def test_strict_hard_fails(self, truncated_dir):
        with pytest.raises(IncompleteSubjectError) as info:
            load_dataset(truncated_dir, strict=True)
        assert info.value.subject_id == "S002"

    def test_nothing_left(self, tmp_path, dataset):
        root = write_dataset(dataset, tmp_path / "d")
        for subject_id in dataset.subject_ids:
            path = root / hrir_filename(subject_id)
            np.fromfile(path, dtype=HRIR_DTYPE)[:200].tofile(path)
        with pytest.raises(DatasetError):
            load_dataset(root)


class TestSyntheticGenerator:

    def test_deterministic(self, dataset):
        again = generate_synthetic_dataset(3, seed=7)
        for a, b in zip(dataset.subjects, again.subjects):
            assert a == b

    def test_seed_changes_subjects(self, dataset):
        other = generate_synthetic_dataset(3, seed=8)
        assert not np.array_equal(other.subjects[0].anthro_raw, dataset.subjects[0].anthro_raw)

    def test_ids_and_shapes(self, dataset):
        assert dataset.subject_ids == ["S001", "S002", "S003"]
        for subject in dataset.subjects:
            assert subject.hrirs.shape == (1250, 200)
            assert subject.anthro_raw.shape == (27,)

    def test_bounded_nonzero_impulses(self, dataset):
        for subject in dataset.subjects:
            assert np.all(np.isfinite(subject.hrirs))
            assert np.max(np.abs(subject.hrirs)) <= 1.0
            assert np.all(np.any(subject.hrirs != 0.0, axis=1))

    def test_plausible_head_widths(self, dataset):
        widths = dataset.anthro_matrix()[:, 0]
        assert np.all((widths > 10.0) & (widths < 20.0))

    @pytest.mark.parametrize("n", [0, -2])
    def test_rejects_empty(self, n):
        with pytest.raises(InvalidArgumentError):
            generate_synthetic_dataset(n, seed=1)

    def test_written_bytes_repeat(self, tmp_path, dataset):
        a = write_dataset(dataset, tmp_path / "a")
        b = write_dataset(generate_synthetic_dataset(3, seed=7), tmp_path / "b")
        for name in (MANIFEST_NAME, ANTHRO_NAME, hrir_filename("S003")):
            assert (a / name).read_bytes() == (b / name).read_bytes()

    def test_shadowed_side_is_quieter(self, dataset, grid):
        near = grid.index_of(Direction(-80.0, 0.0))
        far = grid.index_of(Direction(80.0, 0.0))
        for subject in dataset.subjects:
            energy = np.sum(subject.hrirs ** 2, axis=1)
            assert energy[near] > energy[far], subject.id


class TestSphericalHeadModel:

    def test_radius_from_head_dimensions(self):
        anthro = np.zeros(27)
        anthro[[SphericalHeadModel.HEAD_WIDTH, SphericalHeadModel.HEAD_HEIGHT, SphericalHeadModel.HEAD_DEPTH]] = (
            15.0, 20.0, 19.0)
        assert SphericalHeadModel.head_radius_m(anthro) == pytest.approx(0.08925)

    def test_radius_ignores_pinna_columns(self, dataset):
        anthro = dataset.subjects[0].anthro_raw.copy()
        model = SphericalHeadModel()
        before = model.head_radius_m(anthro)
        anthro[SphericalHeadModel.CAVUM_HEIGHT] += 1.0
        anthro[SphericalHeadModel.PINNA_FLARE] += 5.0
        assert model.head_radius_m(anthro) == before

    def test_wider_head_is_larger(self, dataset):
        anthro = dataset.subjects[0].anthro_raw.copy()
        before = SphericalHeadModel.head_radius_m(anthro)
        anthro[SphericalHeadModel.HEAD_WIDTH] += 2.0
        assert SphericalHeadModel.head_radius_m(anthro) > before
