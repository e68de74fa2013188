"""
train: leave-one-out training of a grouped model set
"""
import logging
from pathlib import Path
from typing import Optional, Tuple

import click

from app.commands.common import existing_dir, handle_errors, output_dir, resolve_experiment, write_run_config
from app.config import Strategy, settings
from app.services.dataset_service import load_dataset
from app.services.pipeline_service import fold_subjects, train_folds_to_disk

logger = logging.getLogger(__name__)


@click.command("train")
@click.option("--data", "data_dir", type=existing_dir, required=True, help="Dataset directory")
@click.option("--strategy", type=click.Choice([s.value for s in Strategy]), default=None,
              help="Grouping strategy (overrides the config file)")
@click.option("--config", "config_path", type=click.Path(exists=True, dir_okay=False, path_type=Path),
              default=None, help="experiment.json")
@click.option("--out", "out_dir", type=output_dir, required=True, help="Model directory to write")
@click.option("--fold", "folds", multiple=True, help="Train only the named held-out subject(s)")
@click.option("--seed", type=int, default=None)
@click.option("--workers", type=click.IntRange(min=1), default=None, help="Folds trained concurrently")
@click.option("--strict", is_flag=True, help="Fail on incomplete subjects instead of skipping them")
@handle_errors
def command(data_dir: Path, strategy: Optional[str], config_path: Optional[Path], out_dir: Path,
            folds: Tuple[str, ...], seed: Optional[int], workers: Optional[int], strict: bool):
    """Train per-group VAE + predictor pairs for every fold."""
    experiment = resolve_experiment(config_path, strategy=strategy, seed=seed, folds=list(folds) or None)
    workers = workers or settings.workers

    # Everything that can be validated is validated before training starts
    dataset = load_dataset(data_dir, strict=strict)
    fold_ids = fold_subjects(dataset, experiment)
    write_run_config(out_dir, "train", experiment, {
        "data": data_dir, "config": config_path, "workers": workers, "folds": fold_ids,
    })

    logger.info("=" * 50)
    logger.info(f"🎧 Training {experiment.strategy.value} on {len(dataset)} subjects, {len(fold_ids)} fold(s)")
    logger.info("=" * 50)
    fold_dirs = train_folds_to_disk(dataset, experiment, out_dir, workers)
    click.echo(f"Trained {len(fold_dirs)} fold(s) into {out_dir}")
