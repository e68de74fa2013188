"""
Trained model containers: one VAE + predictor pair per group, plus the
router and fold statistics needed to query them
"""
from dataclasses import dataclass, field
from typing import Dict, List, Optional

from app.config import GroupingConfig, Strategy
from app.errors import RoutingError
from app.models.domain import MeasurementGrid
from app.models.evaluation import SplitPlan
from app.models.grouping import GroupId, GroupLabel, Router
from app.models.preproc import AnthroStats, PreprocManifest
from app.models.schemas import GroupProvenanceFile
from app.neuralnet.networks import PredictorDnn, VaeModel


@dataclass
class GroupModel:
    """Frozen VAE and trained predictor of one group with their manifest"""
    group_id: GroupId
    manifest: PreprocManifest
    manifest_hash: str
    vae: VaeModel
    predictor: PredictorDnn
    provenance: Optional[GroupProvenanceFile] = None

    @property
    def label(self) -> GroupLabel:
        return self.group_id.label


@dataclass
class GroupedModelSet:
    """Router plus one GroupModel per group for a single fold"""
    router: Router
    models: Dict[GroupLabel, GroupModel]
    anthro_stats: AnthroStats
    grid: MeasurementGrid
    grouping: GroupingConfig = field(default_factory=GroupingConfig)
    plan: Optional[SplitPlan] = None

    @property
    def strategy(self) -> Strategy:
        return self.router.strategy

    def __len__(self) -> int:
        return len(self.models)

    def model_for(self, direction_index: int) -> GroupModel:
        group_id = self.router.route(direction_index)
        try:
            return self.models[group_id.label]
        except KeyError:
            raise RoutingError(f"No trained model for group {group_id}") from None

    def labels(self) -> List[GroupLabel]:
        return list(self.models)


@dataclass(frozen=True)
class RoutingTrace:
    """One routing decision recorded by predict_hrtf"""
    direction_index: int
    group: str
    model_key: int  # id() of the predictor that served the query

    @staticmethod
    def of(direction_index: int, model: GroupModel) -> "RoutingTrace":
        return RoutingTrace(direction_index, model.label.value, id(model.predictor))

