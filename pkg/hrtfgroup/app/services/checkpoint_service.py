"""
Checkpoint service
Persists networks, preprocessing manifests and whole per-fold model sets

Fold directory layout:
    fold.json                 split plan and per-group provenance
    router.json               direction -> group assignment
    <Group>/preproc_manifest.json
    <Group>/vae.json
    <Group>/predictor.json
"""
import base64
import json
import logging
from pathlib import Path
from typing import Any, Dict, Optional, Tuple, Type, TypeVar, Union

import numpy as np
from pydantic import BaseModel, ValidationError

from app.config import GroupingConfig, Strategy
from app.errors import CheckpointError, ManifestMismatchError
from app.models.domain import MeasurementGrid
from app.models.evaluation import SplitPlan
from app.models.grouping import GroupId, GroupLabel
from app.models.model_set import GroupModel, GroupedModelSet
from app.models.preproc import PreprocManifest
from app.models.schemas import CheckpointFile, FoldIndexFile, TensorEntry
from app.neuralnet.networks import Network, PredictorDnn, VaeModel, build_network
from app.services.grouping_service import load_router, save_router

logger = logging.getLogger(__name__)

PathLike = Union[str, Path]
Model = TypeVar("Model", bound=BaseModel)

MANIFEST_NAME = "preproc_manifest.json"
VAE_NAME = "vae.json"
PREDICTOR_NAME = "predictor.json"
ROUTER_NAME = "router.json"
FOLD_INDEX_NAME = "fold.json"


def encode_tensor(array: np.ndarray) -> TensorEntry:
    data = np.ascontiguousarray(array, dtype="<f8").tobytes()
    return TensorEntry(shape=list(np.shape(array)), data=base64.b64encode(data).decode("ascii"))


def decode_tensor(entry: TensorEntry) -> np.ndarray:
    raw = np.frombuffer(base64.b64decode(entry.data), dtype=np.dtype(entry.dtype))
    return raw.astype(np.float64).reshape(entry.shape)


def write_json_model(model: BaseModel, path: PathLike) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(model.model_dump_json(indent=2) + "\n", encoding="utf-8")
    return path


def read_json_model(cls: Type[Model], path: PathLike, group: Optional[str] = None) -> Model:
    """Parse with the stdlib decoder (exact float round trip), validate with pydantic"""
    path = Path(path)
    if not path.is_file():
        raise CheckpointError(f"Missing {path.name} for group {group}: {path}" if group else f"Missing {path}",
                              group=group, path=str(path))
    try:
        return cls.model_validate(json.loads(path.read_text(encoding="utf-8")))
    except (ValueError, ValidationError) as e:
        logger.error(f"Unreadable {path}: {e}")
        raise CheckpointError(f"Unreadable {path}: {e}", group=group, path=str(path)) from e


# ============================================================================
# Networks
# ============================================================================

def network_to_file(network: Network, manifest_hash: str, training: Optional[Dict[str, Any]] = None) -> CheckpointFile:
    return CheckpointFile(
        kind=network.kind,
        architecture=network.architecture(),
        tensors={name: encode_tensor(value) for name, value in network.state_dict().items()},
        manifest_hash=manifest_hash,
        training=training or {},
    )


def network_from_file(checkpoint: CheckpointFile) -> Network:
    network = build_network(checkpoint.kind, checkpoint.architecture)
    network.load_state_dict({name: decode_tensor(t) for name, t in checkpoint.tensors.items()})
    return network.eval()


def save_network(network: Network, path: PathLike, manifest_hash: str,
                 training: Optional[Dict[str, Any]] = None) -> Path:
    return write_json_model(network_to_file(network, manifest_hash, training), path)


def load_network(path: PathLike, kind: str, group: Optional[str] = None) -> Tuple[Network, CheckpointFile]:
    checkpoint = read_json_model(CheckpointFile, path, group)
    if checkpoint.kind != kind:
        raise CheckpointError(f"{path}: expected a {kind} checkpoint, found {checkpoint.kind}",
                              group=group, path=str(path))
    return network_from_file(checkpoint), checkpoint


def save_manifest(manifest: PreprocManifest, path: PathLike) -> Path:
    return write_json_model(manifest, path)


def load_manifest(path: PathLike, group: Optional[str] = None) -> PreprocManifest:
    return read_json_model(PreprocManifest, path, group)


# ============================================================================
# Fold model sets
# ============================================================================

def save_model_set(model_set: GroupedModelSet, fold_dir: PathLike, plan: SplitPlan,
                   training: Optional[Dict[str, Any]] = None) -> Path:
    """Write every artifact of one trained fold"""
    fold_dir = Path(fold_dir)
    try:
        fold_dir.mkdir(parents=True, exist_ok=True)
        save_router(model_set.router, fold_dir / ROUTER_NAME)
        for label, model in model_set.models.items():
            group_dir = fold_dir / label.value
            save_manifest(model.manifest, group_dir / MANIFEST_NAME)
            save_network(model.vae, group_dir / VAE_NAME, model.manifest_hash, training)
            save_network(model.predictor, group_dir / PREDICTOR_NAME, model.manifest_hash, training)
        index = FoldIndexFile(
            fold_subject_id=plan.fold_subject_id,
            train_subject_ids=list(plan.train_subject_ids),
            seen_direction_indices=plan.seen_direction_indices.tolist(),
            unseen_direction_indices=plan.unseen_direction_indices.tolist(),
            seed=plan.seed,
            strategy=model_set.strategy.value,
            groups=[m.provenance for m in model_set.models.values() if m.provenance is not None],
        )
        write_json_model(index, fold_dir / FOLD_INDEX_NAME)
    except OSError as e:
        logger.error(f"Failed writing fold artifacts to {fold_dir}: {e}")
        raise
    logger.info(f"Saved {len(model_set)} group models to {fold_dir}")
    return fold_dir


def load_fold_index(fold_dir: PathLike) -> FoldIndexFile:
    return read_json_model(FoldIndexFile, Path(fold_dir) / FOLD_INDEX_NAME)


def plan_from_index(index: FoldIndexFile) -> SplitPlan:
    return SplitPlan(
        fold_subject_id=index.fold_subject_id,
        train_subject_ids=tuple(index.train_subject_ids),
        seen_direction_indices=np.array(index.seen_direction_indices, dtype=np.int64),
        unseen_direction_indices=np.array(index.unseen_direction_indices, dtype=np.int64),
        seed=index.seed,
    )


def load_model_set(fold_dir: PathLike, grid: MeasurementGrid,
                   grouping: Optional[GroupingConfig] = None) -> Tuple[GroupedModelSet, SplitPlan]:
    """
    Load a trained fold

    Raises:
        CheckpointError: a group's manifest or checkpoint is missing or unreadable
        ManifestMismatchError: a checkpoint references another manifest
    """
    fold_dir = Path(fold_dir)
    index = load_fold_index(fold_dir)
    plan = plan_from_index(index)
    router_path = fold_dir / ROUTER_NAME
    if not router_path.is_file():
        raise CheckpointError(f"Missing router: {router_path}", path=str(router_path))
    router = load_router(router_path)
    if router.strategy is not Strategy(index.strategy):
        raise CheckpointError(f"{fold_dir}: router strategy {router.strategy.value} != {index.strategy}")

    provenance = {p.label: p for p in index.groups}
    models: Dict[GroupLabel, GroupModel] = {}
    for label, directions in router.groups.items():
        if directions.size == 0:
            continue
        group_dir = fold_dir / label.value
        manifest = load_manifest(group_dir / MANIFEST_NAME, group=label.value)
        manifest_hash = manifest.content_hash()
        vae, vae_file = load_network(group_dir / VAE_NAME, VaeModel.kind, group=label.value)
        predictor, dnn_file = load_network(group_dir / PREDICTOR_NAME, PredictorDnn.kind, group=label.value)
        for name, checkpoint in (("vae", vae_file), ("predictor", dnn_file)):
            if checkpoint.manifest_hash != manifest_hash:
                raise ManifestMismatchError(
                    f"Group {label.value}: {name} checkpoint was trained under a different preprocessing manifest"
                )
        models[label] = GroupModel(
            group_id=GroupId(router.strategy, label), manifest=manifest, manifest_hash=manifest_hash,
            vae=vae.freeze(), predictor=predictor, provenance=provenance.get(label.value),
        )
    if not models:
        raise CheckpointError(f"No group models in {fold_dir}", path=str(fold_dir))

    anthro_stats = next(iter(models.values())).manifest.anthro_stats
    model_set = GroupedModelSet(router=router, models=models, anthro_stats=anthro_stats, grid=grid,
                                grouping=grouping or GroupingConfig(), plan=plan)
    return model_set, plan
