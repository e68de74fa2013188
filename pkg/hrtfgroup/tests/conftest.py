"""
Shared fixtures: the measurement grid, a small synthetic dataset, its dB
table and fast training configurations
"""
import numpy as np
import pytest

from app.config import DnnTrainConfig, ExperimentConfig, Strategy, VaeTrainConfig, settings
from app.models.domain import build_cipic_grid
from app.services.dataset_service import generate_synthetic_dataset
from app.services.pipeline_service import make_split_plan, train_grouped
from app.services.preproc_service import compute_db_table

settings.progress = False


def fast_experiment(strategy: Strategy = Strategy.HYBRID, epochs: int = 2, **updates) -> ExperimentConfig:
    """Full architecture, tiny training budget"""
    return ExperimentConfig(
        strategy=strategy,
        seed=7,
        vae=VaeTrainConfig(learning_rate=1e-3, epochs=epochs, batch_size=64, log_every=1),
        dnn=DnnTrainConfig(learning_rate=1e-3, epochs=epochs, batch_size=64, patience=epochs, log_every=1),
        **updates,
    )


@pytest.fixture(scope="session")
def grid():
    return build_cipic_grid()


@pytest.fixture(scope="session")
def dataset():
    return generate_synthetic_dataset(3, seed=7)


@pytest.fixture(scope="session")
def db_table(dataset):
    return compute_db_table(dataset)


@pytest.fixture(scope="session")
def experiment_factory():
    return fast_experiment


@pytest.fixture(scope="session")
def fold_plan(dataset):
    return make_split_plan(dataset.grid, dataset.subject_ids, "S001", seed=7)


@pytest.fixture(scope="session")
def hybrid_models(dataset, db_table, fold_plan):
    return train_grouped(dataset, fast_experiment(Strategy.HYBRID), fold_plan, db_table)


@pytest.fixture(scope="session")
def sl_models(dataset, db_table, fold_plan):
    return train_grouped(dataset, fast_experiment(Strategy.SL), fold_plan, db_table)


@pytest.fixture
def rng():
    return np.random.default_rng(1234)
