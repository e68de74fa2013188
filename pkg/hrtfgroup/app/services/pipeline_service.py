"""
Pipeline service
Leave-one-out folds, seen/unseen direction splits, per-group training,
prediction and LSD evaluation
"""
import logging
import zlib
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from pathlib import Path
from typing import Callable, Dict, List, Optional, Sequence, Union

import numpy as np

from app.config import ExperimentConfig, GroupingConfig, MinMaxScope, SideName, Strategy
from app.errors import (
    CheckpointError, DegenerateGroupError, InvalidArgumentError, ManifestMismatchError, PartitionError,
)
from app.models.domain import Dataset, Direction, MeasurementGrid
from app.models.evaluation import EvalRecord, SplitPlan
from app.models.grouping import GroupId, GroupLabel, LEGAL_LABELS, Router
from app.models.model_set import GroupModel, GroupedModelSet, RoutingTrace
from app.models.preproc import AnthroProfile, AnthroStats, Hrtf, MinMaxStats, PreprocManifest, SpectralConfig
from app.models.schemas import GroupProvenanceFile
from app.neuralnet.networks import PredictorDnn, VaeModel
from app.neuralnet.training import predict_normalized, reconstruction_lsd, train_predictor, train_vae
from app.services.checkpoint_service import load_model_set, save_model_set
from app.services.dataset_service import dataset_fingerprint
from app.services.grouping_service import build_router, check_partition, de_mask_from_db, side_mask
from app.services.preproc_service import (
    apply_minmax, build_model_input, build_model_inputs, compute_db_table, fit_anthro_stats,
    fit_minmax, inverse_minmax, normalize_anthro, normalize_anthro_values, spectral_config_from,
)
from app.services.stats_service import lsd_batch

logger = logging.getLogger(__name__)


# ============================================================================
# Split plans
# ============================================================================

def fold_seed_sequence(seed: int, fold_subject_id: str) -> np.random.SeedSequence:
    """Per-fold entropy: the run seed mixed with a stable hash of the fold id"""
    return np.random.SeedSequence([int(seed), zlib.crc32(fold_subject_id.encode("utf-8"))])


def make_split_plan(grid: MeasurementGrid, subject_ids: Sequence[str], fold_subject_id: str,
                    seed: int, unseen_fraction: float = 0.2) -> SplitPlan:
    """
    Hold out one subject and a shared random subset of directions

    The unseen set is uniform over the grid, round(fraction * n) directions,
    identical for every training subject of the fold.

    Raises:
        InvalidArgumentError: unknown fold subject or fraction outside (0, 1)
    """
    subject_ids = list(subject_ids)
    if fold_subject_id not in subject_ids:
        raise InvalidArgumentError(f"Fold subject {fold_subject_id!r} is not in the dataset")
    if not 0.0 < unseen_fraction < 1.0:
        raise InvalidArgumentError(f"unseen_fraction must lie in (0, 1), got {unseen_fraction}")
    n = len(grid)
    n_unseen = int(round(n * unseen_fraction))
    rng = np.random.default_rng(fold_seed_sequence(seed, fold_subject_id))
    unseen = np.sort(rng.choice(n, size=n_unseen, replace=False))
    seen = np.setdiff1d(np.arange(n), unseen)
    return SplitPlan(
        fold_subject_id=fold_subject_id,
        train_subject_ids=tuple(s for s in subject_ids if s != fold_subject_id),
        seen_direction_indices=seen,
        unseen_direction_indices=unseen,
        seed=int(seed),
    )


def fold_subjects(dataset: Dataset, config: ExperimentConfig) -> List[str]:
    """Subjects to hold out: the configured list or every subject (LOOCV)"""
    if not config.folds:
        return dataset.subject_ids
    unknown = [s for s in config.folds if s not in dataset.subject_ids]
    if unknown:
        raise InvalidArgumentError(f"Unknown fold subjects: {unknown}")
    return list(config.folds)


# ============================================================================
# Training
# ============================================================================

def build_fold_router(strategy: Strategy, grid: MeasurementGrid, train_db: np.ndarray,
                      train_subject_ids: Sequence[str], spectral: SpectralConfig,
                      config: ExperimentConfig) -> Router:
    """Router for one fold; DE masks come from the fold's training subjects only"""
    grouping = config.grouping
    mask = None
    if strategy in (Strategy.DE, Strategy.HYBRID):
        if strategy is Strategy.HYBRID:
            grouping = grouping.model_copy(update={"de_side": SideName.CONTRALATERAL})
        mask = de_mask_from_db(train_db, grid, spectral.axis, train_subject_ids, grouping,
                               config.preproc.minmax_mode)
    router = build_router(strategy, grid, mask, grouping)
    check_partition(router)
    return router


@dataclass
class _GroupData:
    """Training rows of one group, with provenance per row"""
    subject_rows: np.ndarray    # index into the fold's training subjects
    direction_rows: np.ndarray  # grid index
    db: np.ndarray
    inputs: np.ndarray


def _group_data(directions: np.ndarray, train_db: np.ndarray, anthro_normalized: np.ndarray,
                grid: MeasurementGrid) -> _GroupData:
    n_subjects = train_db.shape[0]
    subject_rows = np.repeat(np.arange(n_subjects), directions.size)
    direction_rows = np.tile(directions, n_subjects)
    cartesian = grid.cartesian_array()
    return _GroupData(
        subject_rows=subject_rows,
        direction_rows=direction_rows,
        db=train_db[subject_rows, direction_rows],
        inputs=build_model_inputs(anthro_normalized[subject_rows], cartesian[direction_rows]),
    )


def _batch_guard(label: GroupLabel, router: Router, plan: SplitPlan, direction_rows: np.ndarray,
                 subject_ids: Sequence[str]) -> Callable[[np.ndarray], None]:
    """Checks that a batch holds only seen directions of this group from training subjects"""
    member = np.zeros(len(router), dtype=bool)
    member[router.groups[label]] = True
    member[plan.unseen_direction_indices] = False
    if plan.fold_subject_id in subject_ids:
        raise PartitionError(f"Held-out subject {plan.fold_subject_id} among training subjects")

    def guard(rows: np.ndarray):
        dirs = direction_rows[rows]
        if not np.all(member[dirs]):
            bad = int(dirs[~member[dirs]][0])
            raise PartitionError(f"Training batch for {label.value} contains direction {bad} "
                                 f"outside the group's seen set")
    return guard


def _train_group(label: GroupLabel, router: Router, plan: SplitPlan, directions: np.ndarray,
                 train_db: np.ndarray, anthro_normalized: np.ndarray, anthro_stats: AnthroStats,
                 fold_minmax: Optional[MinMaxStats], spectral: SpectralConfig, fingerprint: str,
                 config: ExperimentConfig, grid: MeasurementGrid,
                 seed_sequence: np.random.SeedSequence) -> GroupModel:
    group_id = GroupId(router.strategy, label)
    tag = f"{plan.fold_subject_id}/{label.value}"
    data = _group_data(directions, train_db, anthro_normalized, grid)
    minmax = fold_minmax if fold_minmax is not None else fit_minmax(data.db, config.preproc.minmax_mode)
    normalized, _ = apply_minmax(data.db, minmax)

    vae_seed, dnn_seed = (int(s) for s in seed_sequence.generate_state(2))
    split_rng, vae_rng, dnn_rng = (np.random.default_rng(s) for s in seed_sequence.spawn(3))

    n_rows = normalized.shape[0]
    n_val = int(round(n_rows * config.dnn.validation_fraction))
    if n_rows - n_val < 2:
        n_val = 0
    order = split_rng.permutation(n_rows)
    val_rows = np.sort(order[:n_val])
    fit_rows = np.sort(order[n_val:])

    fit_guard_rows = data.direction_rows[fit_rows]
    guard = _batch_guard(label, router, plan, fit_guard_rows, plan.train_subject_ids)
    logger.info(f"[{tag}] {directions.size} directions x {train_db.shape[0]} subjects = {n_rows} rows "
                f"({n_val} validation)")

    vae = VaeModel(seed=vae_seed)
    vae_history = train_vae(vae, normalized[fit_rows], config.vae, vae_rng, label=tag, guard=guard)
    recon_lsd = reconstruction_lsd(vae, normalized[fit_rows], minmax)
    logger.info(f"[{tag}] VAE reconstruction LSD {recon_lsd:.3f} dB")
    predictor = PredictorDnn(seed=dnn_seed)
    dnn_history = train_predictor(
        predictor, vae, data.inputs[fit_rows], normalized[fit_rows], minmax, config.dnn, dnn_rng,
        val_inputs=data.inputs[val_rows], val_targets=normalized[val_rows], label=tag, guard=guard,
    )

    manifest = PreprocManifest.build(anthro_stats, minmax, spectral, config.preproc.std_ddof, fingerprint,
                                     group=str(group_id))
    provenance = GroupProvenanceFile(
        label=label.value,
        subject_ids=list(plan.train_subject_ids),
        direction_indices=directions.tolist(),
        n_examples=int(n_rows),
        vae_history=vae_history.losses,
        dnn_history=dnn_history.losses,
        dnn_best_epoch=dnn_history.best_epoch,
        vae_reconstruction_lsd=recon_lsd,
    )
    return GroupModel(group_id=group_id, manifest=manifest, manifest_hash=manifest.content_hash(),
                      vae=vae, predictor=predictor, provenance=provenance)


def train_grouped(dataset: Dataset, config: ExperimentConfig, plan: SplitPlan,
                  db_table: Optional[np.ndarray] = None) -> GroupedModelSet:
    """
    Train one VAE + predictor pair per group of the configured strategy

    Preprocessing statistics, the DE mask and all training rows come from
    the fold's training subjects; training rows use seen directions only.

    Raises:
        DegenerateGroupError: a group has no seen directions
    """
    spectral = spectral_config_from(config.preproc)
    table = db_table if db_table is not None else compute_db_table(dataset, spectral)
    grid = dataset.grid
    train_ids = list(plan.train_subject_ids)
    if len(train_ids) < 2:
        raise InvalidArgumentError("A fold needs at least two training subjects")
    train_db = table[[dataset.index_of(s) for s in train_ids]]

    anthro_raw = dataset.anthro_matrix(train_ids)
    anthro_stats = fit_anthro_stats(anthro_raw, ddof=config.preproc.std_ddof)
    anthro_normalized = normalize_anthro_values(anthro_raw, anthro_stats)

    router = build_fold_router(config.strategy, grid, train_db, train_ids, spectral, config)
    seen = plan.seen_direction_indices
    fold_minmax = None
    if config.preproc.minmax_scope is MinMaxScope.FOLD:
        fold_minmax = fit_minmax(train_db[:, seen], config.preproc.minmax_mode)
    fingerprint = dataset_fingerprint(dataset, train_ids)

    legal = LEGAL_LABELS[router.strategy]
    seeds = fold_seed_sequence(config.seed, plan.fold_subject_id).spawn(len(legal))
    models: Dict[GroupLabel, GroupModel] = {}
    for k, label in enumerate(legal):
        if router.groups[label].size == 0:
            logger.warning(f"Fold {plan.fold_subject_id}: group {label.value} is empty; no model trained")
            continue
        directions = np.intersect1d(router.groups[label], seen)
        if directions.size == 0:
            logger.error(f"Fold {plan.fold_subject_id}: group {label.value} has no seen directions")
            raise DegenerateGroupError(label.value)
        models[label] = _train_group(label, router, plan, directions, train_db, anthro_normalized,
                                     anthro_stats, fold_minmax, spectral, fingerprint, config, grid, seeds[k])

    return GroupedModelSet(router=router, models=models, anthro_stats=anthro_stats, grid=grid,
                           grouping=config.grouping, plan=plan)


# ============================================================================
# Prediction and evaluation
# ============================================================================

def predict_hrtf(models: GroupedModelSet, profile: AnthroProfile, direction: Union[int, Direction],
                 trace: Optional[List[RoutingTrace]] = None) -> Hrtf:
    """
    Predicted dB HRTF for a raw anthropometric profile and a grid direction

    Route -> predictor (eval) -> latent mean -> frozen decoder -> denormalize.
    """
    index = direction if isinstance(direction, (int, np.integer)) else models.grid.index_of(direction)
    model = models.model_for(int(index))
    if trace is not None:
        trace.append(RoutingTrace.of(int(index), model))
    logger.debug(f"direction {index} -> {model.group_id}")
    x = build_model_input(normalize_anthro(profile, models.anthro_stats), models.grid.directions[int(index)])
    decoded = predict_normalized(model.predictor, model.vae, x[None, :])[0]
    return Hrtf(inverse_minmax(decoded, model.manifest.minmax), False, int(index))


def predict_directions(models: GroupedModelSet, anthro_raw: np.ndarray,
                       direction_indices: np.ndarray) -> np.ndarray:
    """Batched predict_hrtf for one subject over many directions, (n, n_bins) dB"""
    direction_indices = np.asarray(direction_indices, dtype=np.int64)
    anthro = normalize_anthro_values(anthro_raw, models.anthro_stats)
    cartesian = models.grid.cartesian_array()
    labels = models.router.label_array()[direction_indices]
    outside = np.flatnonzero(labels == "")
    if outside.size:
        models.router.route(int(direction_indices[outside[0]]))
    out = np.empty((direction_indices.size, models.models[next(iter(models.models))].manifest.spectral.n_bins))
    for label, model in models.models.items():
        rows = np.flatnonzero(labels == label.value)
        if rows.size == 0:
            continue
        dirs = direction_indices[rows]
        inputs = build_model_inputs(np.repeat(anthro[None, :], rows.size, axis=0), cartesian[dirs])
        db = inverse_minmax(predict_normalized(model.predictor, model.vae, inputs), model.manifest.minmax)
        out[rows] = db
    return out


def evaluate_fold(models: GroupedModelSet, dataset: Dataset, plan: SplitPlan,
                  db_table: Optional[np.ndarray] = None,
                  spectral: Optional[SpectralConfig] = None) -> List[EvalRecord]:
    """
    LSD of every held-out-subject direction in the router's domain

    Records are ordered by direction index and tagged with group, side and
    seen/unseen status.
    """
    subject = dataset.subject(plan.fold_subject_id)
    if db_table is not None:
        truth = db_table[dataset.index_of(subject.id)]
    else:
        truth = compute_db_table(Dataset((subject,), dataset.grid, dataset.sample_rate_hz), spectral)[0]

    domain = models.router.domain_indices()
    predicted = predict_directions(models, subject.anthro_raw, domain)
    values = lsd_batch(truth[domain], predicted)

    ipsilateral = side_mask(models.grid, SideName.IPSILATERAL, models.grouping)
    labels = models.router.label_array()
    seen = np.zeros(len(models.grid), dtype=bool)
    seen[plan.seen_direction_indices] = True
    records = [
        EvalRecord(
            subject_id=subject.id,
            direction_index=int(i),
            group=str(labels[i]),
            side=(SideName.IPSILATERAL if ipsilateral[i] else SideName.CONTRALATERAL).value,
            seen=bool(seen[i]),
            lsd_db=float(v),
        )
        for i, v in zip(domain, values)
    ]
    logger.info(f"Fold {subject.id}: mean LSD {np.mean(values):.3f} dB over {len(records)} directions")
    return records


# ============================================================================
# Multi-fold runs
# ============================================================================

def run_folds(fold_ids: Sequence[str], work: Callable[[str], object], workers: int = 1) -> List[object]:
    """
    Apply work to every fold, optionally on a thread pool

    Results come back in fold order whatever the worker count.
    """
    if workers <= 1 or len(fold_ids) <= 1:
        return [work(f) for f in fold_ids]
    with ThreadPoolExecutor(max_workers=workers, thread_name_prefix="fold") as pool:
        return list(pool.map(work, fold_ids))


def train_and_evaluate(dataset: Dataset, config: ExperimentConfig, workers: int = 1,
                       db_table: Optional[np.ndarray] = None) -> List[EvalRecord]:
    """In-memory LOOCV: train every fold, evaluate it, concatenate records"""
    spectral = spectral_config_from(config.preproc)
    table = db_table if db_table is not None else compute_db_table(dataset, spectral)

    def fold(subject_id: str) -> List[EvalRecord]:
        plan = make_split_plan(dataset.grid, dataset.subject_ids, subject_id, config.seed, config.unseen_fraction)
        models = train_grouped(dataset, config, plan, table)
        return evaluate_fold(models, dataset, plan, table)

    per_fold = run_folds(fold_subjects(dataset, config), fold, workers)
    return [r for records in per_fold for r in records]


def verify_manifests(models: GroupedModelSet, dataset: Dataset, plan: SplitPlan) -> SpectralConfig:
    """
    Check that the evaluation data matches what each group was trained on

    Returns:
        the shared spectral configuration of the fold's manifests

    Raises:
        ManifestMismatchError: training subjects missing or changed, or groups
            trained with different spectral settings
    """
    missing = [s for s in plan.train_subject_ids + (plan.fold_subject_id,) if s not in dataset.subject_ids]
    if missing:
        raise ManifestMismatchError(f"Fold {plan.fold_subject_id}: subjects {missing} absent from the data")
    fingerprint = dataset_fingerprint(dataset, plan.train_subject_ids)
    spectral = None
    for label, model in models.models.items():
        if model.manifest.source_fingerprint != fingerprint:
            raise ManifestMismatchError(
                f"Fold {plan.fold_subject_id}, group {label.value}: training data fingerprint differs "
                f"from the supplied dataset"
            )
        if spectral is not None and model.manifest.spectral != spectral:
            raise ManifestMismatchError(f"Fold {plan.fold_subject_id}: groups disagree on spectral settings")
        spectral = model.manifest.spectral
    return spectral


# ============================================================================
# Runs on disk
# ============================================================================

FOLDS_DIR = "folds"


def fold_dir_for(models_dir: Path, fold_subject_id: str) -> Path:
    return Path(models_dir) / FOLDS_DIR / fold_subject_id


def train_folds_to_disk(dataset: Dataset, config: ExperimentConfig, models_dir: Path,
                        workers: int = 1) -> List[Path]:
    """
    Train every configured fold and write its artifacts under models_dir/folds/<id>

    Returns:
        the fold directories in fold order
    """
    spectral = spectral_config_from(config.preproc)
    table = compute_db_table(dataset, spectral)
    training = {"strategy": config.strategy.value, "seed": config.seed,
                "vae": config.vae.model_dump(), "dnn": config.dnn.model_dump()}

    def fold(subject_id: str) -> Path:
        plan = make_split_plan(dataset.grid, dataset.subject_ids, subject_id, config.seed, config.unseen_fraction)
        logger.info(f"Training fold {subject_id}: {len(plan.train_subject_ids)} subjects, "
                    f"{plan.seen_eval_count} seen / {plan.unseen_eval_count} unseen directions")
        models = train_grouped(dataset, config, plan, table)
        return save_model_set(models, fold_dir_for(models_dir, subject_id), plan, training)

    return run_folds(fold_subjects(dataset, config), fold, workers)


def saved_fold_ids(models_dir: Path) -> List[str]:
    root = Path(models_dir) / FOLDS_DIR
    if not root.is_dir():
        raise CheckpointError(f"No trained folds under {models_dir}", path=str(root))
    ids = sorted(p.name for p in root.iterdir() if p.is_dir())
    if not ids:
        raise CheckpointError(f"No trained folds under {models_dir}", path=str(root))
    return ids


def evaluate_saved_folds(models_dir: Path, dataset: Dataset, workers: int = 1,
                         grouping: Optional[GroupingConfig] = None) -> List[EvalRecord]:
    """
    Load every trained fold, check it against the dataset and evaluate it

    Raises:
        CheckpointError: missing or unreadable artifacts
        ManifestMismatchError: the dataset differs from the one the folds were
            trained on
    """
    def fold(subject_id: str) -> List[EvalRecord]:
        models, plan = load_model_set(fold_dir_for(models_dir, subject_id), dataset.grid, grouping)
        spectral = verify_manifests(models, dataset, plan)
        return evaluate_fold(models, dataset, plan, spectral=spectral)

    per_fold = run_folds(saved_fold_ids(models_dir), fold, workers)
    return [r for records in per_fold for r in records]
