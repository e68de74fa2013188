"""
gradcheck: verify analytic gradients against central differences
"""
import logging

import click

from app.commands.common import handle_errors
from app.neuralnet.gradcheck import run_gradcheck_suite

logger = logging.getLogger(__name__)


@click.command("gradcheck")
@click.option("--seed", type=int, default=0, show_default=True)
@click.option("--samples", "n_samples", type=click.IntRange(min=1), default=500, show_default=True,
              help="Parameters checked per network")
@click.option("--tolerance", type=float, default=1e-4, show_default=True)
@click.option("--beta", type=float, default=1e-3, show_default=True, help="KL weight of the VAE loss")
@click.option("--lambda-lsd", type=float, default=0.01, show_default=True)
@handle_errors
def command(seed: int, n_samples: int, tolerance: float, beta: float, lambda_lsd: float):
    """Run the gradient verification suite and print the max relative error."""
    reports = run_gradcheck_suite(seed, n_samples, tolerance, beta, lambda_lsd)
    for report in reports:
        click.echo(str(report))
    worst = max(r.max_rel_error for r in reports)
    click.echo(f"max relative error: {worst:.3e}")
    if not all(r.passed for r in reports):
        raise click.ClickException("gradient check failed")
