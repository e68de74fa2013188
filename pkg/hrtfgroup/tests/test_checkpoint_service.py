"""Tensor encoding, network checkpoints and per-fold model sets on disk"""
import json

import numpy as np
import pytest

from app.errors import CheckpointError, ManifestMismatchError
from app.models.preproc import AnthroStats, MinMaxStats, PreprocManifest, SpectralConfig
from app.neuralnet.networks import PredictorDnn, VaeModel
from app.services.checkpoint_service import (
    MANIFEST_NAME, PREDICTOR_NAME, VAE_NAME, decode_tensor, encode_tensor, load_manifest, load_model_set,
    load_network, save_manifest, save_model_set, save_network,
)
from app.services.pipeline_service import predict_directions


@pytest.fixture(scope="module")
def saved_fold(tmp_path_factory, hybrid_models, fold_plan):
    fold_dir = tmp_path_factory.mktemp("fold") / "S001"
    return save_model_set(hybrid_models, fold_dir, fold_plan, {"strategy": "hybrid"})


class TestTensors:

    def test_bit_exact(self):
        values = np.array([0.1, -0.0, 1e-300, 5e-324, np.nextafter(1.0, 2.0), 1.7976931348623157e308, -3.25])
        restored = decode_tensor(encode_tensor(values))
        assert restored.tobytes() == values.tobytes()
        assert np.signbit(restored[1])

    def test_shape_kept(self, rng):
        values = rng.normal(size=(3, 4, 5))
        restored = decode_tensor(encode_tensor(values))
        assert restored.shape == (3, 4, 5)
        np.testing.assert_array_equal(restored, values)


class TestNetworkCheckpoints:

    def test_round_trip_includes_buffers(self, tmp_path, rng):
        vae = VaeModel(seed=3).train()
        vae.forward(rng.uniform(size=(8, 173)))
        path = save_network(vae, tmp_path / "vae.json", manifest_hash="abc")
        restored, checkpoint = load_network(path, "vae")
        assert checkpoint.manifest_hash == "abc"
        original = vae.state_dict()
        for key, value in restored.state_dict().items():
            assert value.tobytes() == original[key].tobytes(), key

    def test_kind_checked(self, tmp_path):
        path = save_network(PredictorDnn(seed=1), tmp_path / "p.json", manifest_hash="x")
        with pytest.raises(CheckpointError):
            load_network(path, "vae")

    def test_missing_file_names_group(self, tmp_path):
        with pytest.raises(CheckpointError) as info:
            load_network(tmp_path / "absent.json", "vae", group="Inner")
        assert info.value.group == "Inner"
        assert "Inner" in str(info.value)

    def test_manifest_hash_stable(self, tmp_path, dataset):
        stats = AnthroStats(dataset.anthro_matrix().mean(axis=0), dataset.anthro_matrix().std(axis=0))
        manifest = PreprocManifest.build(stats, MinMaxStats(np.float64(-61.3), np.float64(7.9)), SpectralConfig())
        restored = load_manifest(save_manifest(manifest, tmp_path / MANIFEST_NAME))
        assert restored.content_hash() == manifest.content_hash()
        assert restored.minmax == manifest.minmax


class TestModelSets:

    def test_layout(self, saved_fold, hybrid_models):
        assert (saved_fold / "router.json").is_file()
        assert (saved_fold / "fold.json").is_file()
        for label in hybrid_models.labels():
            for name in (MANIFEST_NAME, VAE_NAME, PREDICTOR_NAME):
                assert (saved_fold / label.value / name).is_file()

    def test_predictions_survive_reload(self, saved_fold, hybrid_models, dataset, fold_plan):
        restored, plan = load_model_set(saved_fold, dataset.grid)
        assert plan == fold_plan
        assert restored.labels() == hybrid_models.labels()
        anthro = dataset.subject("S001").anthro_raw
        directions = np.arange(len(dataset.grid))
        np.testing.assert_array_equal(
            predict_directions(restored, anthro, directions),
            predict_directions(hybrid_models, anthro, directions),
        )

    def test_missing_checkpoint_names_group(self, tmp_path, hybrid_models, fold_plan, dataset):
        fold_dir = save_model_set(hybrid_models, tmp_path / "S001", fold_plan)
        label = hybrid_models.labels()[-1].value
        (fold_dir / label / VAE_NAME).unlink()
        with pytest.raises(CheckpointError) as info:
            load_model_set(fold_dir, dataset.grid)
        assert info.value.group == label
        assert label in str(info.value)

    def test_manifest_mismatch(self, tmp_path, hybrid_models, fold_plan, dataset):
        fold_dir = save_model_set(hybrid_models, tmp_path / "S001", fold_plan)
        path = fold_dir / hybrid_models.labels()[0].value / MANIFEST_NAME
        data = json.loads(path.read_text())
        data["min_db"][0] -= 1.0
        path.write_text(json.dumps(data))
        with pytest.raises(ManifestMismatchError):
            load_model_set(fold_dir, dataset.grid)

    def test_missing_fold_index(self, tmp_path, dataset):
        with pytest.raises(CheckpointError):
            load_model_set(tmp_path / "nothing", dataset.grid)
