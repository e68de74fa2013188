"""
hrtfgroup - spatially grouped personalized HRTF prediction

Provides:
- Synthetic spherical-head datasets for desk-scale runs
- Per-group VAE + latent predictor training (SL, DE, hybrid, global)
- Leave-one-out LSD evaluation with ANOVA summaries
- Gradient verification of the numpy networks
"""
import logging

import click

# Import commands
from app.commands import evaluate, gradcheck, groupmap, synth, train
from app.config import settings

logger = logging.getLogger(__name__)


@click.group()
@click.option("--log-level", type=click.Choice(["DEBUG", "INFO", "WARNING", "ERROR"], case_sensitive=False),
              default=None, help="Overrides HRTFGROUP_LOG_LEVEL")
@click.option("--quiet", is_flag=True, help="Disable progress bars")
def cli(log_level, quiet):
    """Spatially grouped HRTF prediction."""
    # Configure logging
    logging.basicConfig(
        level=getattr(logging, (log_level or settings.log_level).upper(), logging.INFO),
        format='%(asctime)s - %(name)s - %(levelname)s - %(message)s'
    )
    if quiet:
        settings.progress = False
    logger.info("=" * 50)
    logger.info("🎧 hrtfgroup starting...")
    logger.info(f"⚙️  Workers: {settings.workers}, default seed: {settings.default_seed}")
    logger.info("=" * 50)


# Include commands
cli.add_command(synth.command)
cli.add_command(train.command)
cli.add_command(evaluate.command)
cli.add_command(groupmap.command)
cli.add_command(gradcheck.command)


if __name__ == "__main__":
    cli()
