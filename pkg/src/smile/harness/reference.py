"""The reference experiment: 5 base / 3 novel classes, 16-d inputs, 5 shots, seed 42."""

from __future__ import annotations

from ..learner import SyntheticTaskSpec, TrainConfig
from ..loss import LossConfig
from .experiment import Arm, ExperimentConfig

REFERENCE_SEED = 42

REFERENCE_TASK = SyntheticTaskSpec(
    num_base=5, num_novel=3, input_dim=16, embed_dim=128, samples_per_base=100,
    k_shot=5, intra_spread=0.2, inter_overlap=0.5, test_per_class=200, seed=REFERENCE_SEED,
)

REFERENCE_BASE = TrainConfig(stage="base", learning_rate=0.5, iterations=300, batch_size=64,
                             eval_every=50, seed=REFERENCE_SEED)

# comb_weight 0.1 balances the summed class/pair terms against a per-row mean
# cross-entropy; abundant_base feeds fresh base rows into every batch.
REFERENCE_ADAPT = TrainConfig(stage="adapt", learning_rate=0.02, iterations=300, batch_size=40,
                              eval_every=10, seed=REFERENCE_SEED, comb_weight=0.1,
                              abundant_base=True)

REFERENCE_ARMS = [
    Arm("ce_only", "ce_only"),
    Arm("supcon", "supcon"),
    Arm("intra", LossConfig("flmi", eta=0.0)),
    Arm("inter", LossConfig("flmi", eta=1.0)),
    Arm("both", LossConfig("flmi", eta=0.5)),
    Arm("gcmi", LossConfig("gcmi", eta=0.5)),
]


def reference_config(output_dir: str = "runs/reference") -> ExperimentConfig:
    return ExperimentConfig(REFERENCE_TASK, REFERENCE_BASE, REFERENCE_ADAPT, list(REFERENCE_ARMS),
                            output_dir, head_seed=REFERENCE_SEED)
