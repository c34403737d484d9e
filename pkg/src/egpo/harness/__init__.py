from .config import ABLATIONS, METHODS, RunConfig, load_config, resolve_method, save_config
from .evaluate import CheckpointMismatchError, evaluate, evaluate_expert, load_policy
from .metrics import EpisodeStats, MetricsRecord, MetricsWriter, read_metrics
from .offline import DemoDataset, collect_dataset, run_bc, run_offline
from .train import SceneBank, Trainer, evaluate_policy, train

__all__ = [
    "ABLATIONS",
    "CheckpointMismatchError",
    "DemoDataset",
    "EpisodeStats",
    "METHODS",
    "MetricsRecord",
    "MetricsWriter",
    "RunConfig",
    "SceneBank",
    "Trainer",
    "collect_dataset",
    "evaluate",
    "evaluate_expert",
    "evaluate_policy",
    "load_config",
    "load_policy",
    "read_metrics",
    "resolve_method",
    "run_bc",
    "run_offline",
    "save_config",
    "train",
]
