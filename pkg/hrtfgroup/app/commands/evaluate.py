"""
evaluate: LSD of held-out subjects for a trained run
"""
import logging
from pathlib import Path
from typing import Optional

import click

from app.commands.common import existing_dir, handle_errors, output_dir, read_run_config, write_run_config
from app.config import settings
from app.services.dataset_service import load_dataset
from app.services.pipeline_service import evaluate_saved_folds
from app.services.report_service import report_service

logger = logging.getLogger(__name__)

RECORDS_NAME = "records.csv"
SUMMARY_NAME = "summary.json"


def _evaluate_run(models_dir: Path, dataset, workers: int):
    run = read_run_config(models_dir)
    experiment = run.experiment if run is not None else None
    grouping = experiment.grouping if experiment is not None else None
    records = evaluate_saved_folds(models_dir, dataset, workers, grouping)
    strategy = experiment.strategy.value if experiment is not None else None
    return report_service.records_frame(records), strategy


@click.command("evaluate")
@click.option("--models", "models_dir", type=existing_dir, required=True, help="Directory written by train")
@click.option("--data", "data_dir", type=existing_dir, required=True, help="Dataset the models were trained on")
@click.option("--out", "out_dir", type=output_dir, required=True, help="Results directory")
@click.option("--compare", "compare_dir", type=existing_dir, default=None,
              help="Second trained run to compare against (ANOVA)")
@click.option("--workers", type=click.IntRange(min=1), default=None)
@handle_errors
def command(models_dir: Path, data_dir: Path, out_dir: Path, compare_dir: Optional[Path], workers: Optional[int]):
    """Evaluate every trained fold and write records.csv and summary.json."""
    workers = workers or settings.workers
    if out_dir.resolve() == models_dir.resolve():
        raise click.BadParameter("results must not be written into the models directory", param_hint="--out")
    dataset = load_dataset(data_dir)

    frame, strategy = _evaluate_run(models_dir, dataset, workers)
    compare_frame, compare_name = None, None
    if compare_dir is not None:
        compare_frame, compare_strategy = _evaluate_run(compare_dir, dataset, workers)
        compare_name = compare_strategy or compare_dir.name

    run_name = strategy or models_dir.name
    summary = report_service.summarize(frame, run_name, strategy, compare_frame, compare_name)

    report_service.write_records(frame, out_dir / RECORDS_NAME)
    report_service.write_summary(summary, out_dir / SUMMARY_NAME)
    write_run_config(out_dir, "evaluate", arguments={
        "models": models_dir, "data": data_dir, "compare": compare_dir, "workers": workers,
    })
    click.echo(report_service.format_table(summary))
