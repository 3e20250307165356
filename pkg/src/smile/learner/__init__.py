"""Two-stage few-shot representation learner on synthetic data."""

from .data import ConfigError, FewShotTask, SyntheticTaskSpec, class_centers, generate_task
from .head import ProjectionHead, Prototypes, classify, prototype_cross_entropy
from .train import (
    TrainConfig,
    TrainingDiverged,
    TrainLog,
    base_train,
    few_shot_adapt,
    stratified_batch,
    support_set,
)

__all__ = [
    "ConfigError", "FewShotTask", "SyntheticTaskSpec", "class_centers", "generate_task",
    "ProjectionHead", "Prototypes", "classify", "prototype_cross_entropy",
    "TrainConfig", "TrainingDiverged", "TrainLog", "base_train", "few_shot_adapt",
    "stratified_batch", "support_set",
]
