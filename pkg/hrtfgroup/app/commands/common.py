"""
Shared plumbing for the subcommands: error reporting, experiment loading
and the run_config.json written beside every run's outputs
"""
import functools
import logging
import sys
from pathlib import Path
from typing import Any, Callable, Dict, Optional

import click

from app.config import ExperimentConfig, apply_overrides, load_experiment_config
from app.errors import ConfigurationError, HrtfGroupError
from app.models.schemas import RunFile

logger = logging.getLogger(__name__)

RUN_CONFIG_NAME = "run_config.json"


def handle_errors(func: Callable) -> Callable:
    """Turn domain and IO failures into a one-line message and exit code 1"""
    @functools.wraps(func)
    def wrapper(*args, **kwargs):
        try:
            return func(*args, **kwargs)
        except HrtfGroupError as e:
            logger.error(f"{type(e).__name__}: {e}")
            click.echo(f"Error: {e}", err=True)
            sys.exit(1)
        except OSError as e:
            location = f" ({e.filename})" if getattr(e, "filename", None) else ""
            logger.error(f"I/O failure{location}: {e}")
            click.echo(f"Error: {e.strerror or e}{location}", err=True)
            sys.exit(1)
    return wrapper


def resolve_experiment(config_path: Optional[Path], **overrides) -> ExperimentConfig:
    """experiment.json (or defaults) with CLI flags applied on top"""
    config = load_experiment_config(config_path)
    return apply_overrides(config, **overrides)


def write_run_config(out_dir: Path, command: str, experiment: Optional[ExperimentConfig] = None,
                     arguments: Optional[Dict[str, Any]] = None) -> Path:
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    run = RunFile(command=command, experiment=experiment,
                  arguments={k: str(v) if isinstance(v, Path) else v for k, v in (arguments or {}).items()})
    path = out_dir / RUN_CONFIG_NAME
    path.write_text(run.model_dump_json(indent=2) + "\n", encoding="utf-8")
    return path


def read_run_config(run_dir: Path) -> Optional[RunFile]:
    path = Path(run_dir) / RUN_CONFIG_NAME
    if not path.is_file():
        return None
    try:
        return RunFile.model_validate_json(path.read_text(encoding="utf-8"))
    except ValueError as e:
        raise ConfigurationError(f"Invalid {path}: {e}") from e


existing_dir = click.Path(exists=True, file_okay=False, path_type=Path)
output_dir = click.Path(file_okay=False, path_type=Path)
