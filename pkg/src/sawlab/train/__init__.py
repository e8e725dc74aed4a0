"""PPO with a mirror loss for the recurrent standing/walking controller."""

from sawlab.train.loop import METRIC_COLUMNS, TrainResult, evaluate, replay_error, train_loop
from sawlab.train.ppo import (
    Adam,
    PpoConfig,
    SequenceBatch,
    clip_grad_norm,
    compute_gae,
    flat_grads,
    flat_params,
    mirror_loss,
    normalize_advantages,
    ppo_loss,
)
from sawlab.train.rollout import Collector, EnvFactory, ParallelCollector, build_batch

__all__ = [
    "Adam", "Collector", "EnvFactory", "METRIC_COLUMNS", "ParallelCollector", "PpoConfig",
    "SequenceBatch", "TrainResult", "build_batch", "clip_grad_norm", "compute_gae", "evaluate",
    "flat_grads", "flat_params", "mirror_loss", "normalize_advantages", "ppo_loss",
    "replay_error", "train_loop",
]
