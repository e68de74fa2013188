"""
groupmap: per-direction group labels for plotting
"""
import logging
from pathlib import Path
from typing import Optional

import click

from app.commands.common import existing_dir, handle_errors, resolve_experiment
from app.config import Strategy
from app.services.dataset_service import load_dataset
from app.services.grouping_service import group_map_frame
from app.services.pipeline_service import build_fold_router
from app.services.preproc_service import compute_db_table, spectral_config_from

logger = logging.getLogger(__name__)


@click.command("groupmap")
@click.option("--data", "data_dir", type=existing_dir, required=True, help="Dataset directory")
@click.option("--strategy", type=click.Choice([s.value for s in Strategy]), default=None)
@click.option("--config", "config_path", type=click.Path(exists=True, dir_okay=False, path_type=Path),
              default=None, help="experiment.json")
@click.option("--out", "out_csv", type=click.Path(dir_okay=False, path_type=Path), required=True)
@handle_errors
def command(data_dir: Path, strategy: Optional[str], config_path: Optional[Path], out_csv: Path):
    """Write azimuth, elevation, x, y, z and group for every direction."""
    experiment = resolve_experiment(config_path, strategy=strategy)
    dataset = load_dataset(data_dir)
    spectral = spectral_config_from(experiment.preproc)
    table = compute_db_table(dataset, spectral)
    router = build_fold_router(experiment.strategy, dataset.grid, table, dataset.subject_ids, spectral, experiment)

    frame = group_map_frame(router, dataset.grid)
    out_csv.parent.mkdir(parents=True, exist_ok=True)
    frame.to_csv(out_csv, index=False, lineterminator="\n")
    counts = frame.loc[frame["group"] != "", "group"].value_counts().sort_index()
    click.echo(f"Wrote {len(frame)} directions to {out_csv}")
    for label, count in counts.items():
        click.echo(f"  {label}: {count}")
