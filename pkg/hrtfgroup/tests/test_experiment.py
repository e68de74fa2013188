"""
Leave-one-out comparison of grouping strategies on a synthetic cohort

Slow: trains every fold of two strategies. Run with ``pytest -m slow``.
"""
from pathlib import Path

import numpy as np
import pytest

from app.config import Strategy, load_experiment_config
from app.services.dataset_service import generate_synthetic_dataset
from app.services.pipeline_service import train_and_evaluate
from app.services.preproc_service import compute_db_table

DESK_CONFIG = Path(__file__).resolve().parent.parent / "configs" / "desk.json"

pytestmark = pytest.mark.slow


@pytest.fixture(scope="module")
def cohort():
    dataset = generate_synthetic_dataset(10, seed=11)
    return dataset, compute_db_table(dataset)


def mean_lsd(cohort, strategy: Strategy) -> float:
    dataset, table = cohort
    config = load_experiment_config(DESK_CONFIG).model_copy(update={"strategy": strategy})
    records = train_and_evaluate(dataset, config, workers=2, db_table=table)
    assert len(records) == 10 * 1250
    return float(np.mean([r.lsd_db for r in records]))


class TestStrategyComparison:

    def test_hybrid_not_worse_than_global(self, cohort):
        hybrid = mean_lsd(cohort, Strategy.HYBRID)
        single = mean_lsd(cohort, Strategy.GLOBAL)
        assert hybrid <= single

    def test_trained_models_beat_flat_guess(self, cohort):
        dataset, table = cohort
        flat = float(np.mean(np.sqrt(np.mean((table - table.mean(axis=2, keepdims=True)) ** 2, axis=2))))
        assert mean_lsd(cohort, Strategy.SL) < flat
