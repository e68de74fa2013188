"""
synth: write a deterministic spherical-head dataset
"""
import logging
from pathlib import Path
from typing import Optional

import click

from app.commands.common import handle_errors, output_dir, write_run_config
from app.config import settings
from app.services.dataset_service import generate_synthetic_dataset, write_dataset

logger = logging.getLogger(__name__)


@click.command("synth")
@click.option("--subjects", "n_subjects", type=click.IntRange(min=1), default=3, show_default=True,
              help="Number of synthetic subjects")
@click.option("--seed", type=int, default=None, help="Generator seed (default: HRTFGROUP_DEFAULT_SEED)")
@click.option("--out", "out_dir", type=output_dir, required=True, help="Dataset directory to write")
@click.option("--distributions", type=click.Path(exists=True, dir_okay=False, path_type=Path), default=None,
              help="Anthropometric distributions YAML")
@handle_errors
def command(n_subjects: int, seed: Optional[int], out_dir: Path, distributions: Optional[Path]):
    """Generate a synthetic dataset in the on-disk dataset format."""
    seed = settings.default_seed if seed is None else seed
    dataset = generate_synthetic_dataset(n_subjects, seed, distributions)
    write_dataset(dataset, out_dir)
    write_run_config(out_dir, "synth", arguments={
        "subjects": n_subjects, "seed": seed, "distributions": distributions,
    })
    click.echo(f"Wrote {len(dataset)} subjects x {len(dataset.grid)} directions to {out_dir}")
    for subject in dataset.subjects:
        click.echo(f"  {subject.id}: head width {subject.anthro_raw[0]:.2f} cm, "
                   f"HRIR peak {abs(subject.hrirs).max():.3f}")
