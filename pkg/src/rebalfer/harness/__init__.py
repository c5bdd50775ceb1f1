from .ablation import AblationGrid, desk_config, run_ablation, run_sweep, run_transform_variants, synthetic_source
from .config import ConfigError, TrainConfig, load_config
from .metrics import MetricsReport, confusion_matrix
from .train import NumericalDivergence, TrainedModel, TrainResult, evaluate, train
from .transforms import apply_transform

__all__ = [
    "AblationGrid", "ConfigError", "MetricsReport", "NumericalDivergence", "TrainConfig", "TrainResult",
    "TrainedModel", "apply_transform", "confusion_matrix", "desk_config", "evaluate", "load_config",
    "run_ablation", "run_sweep", "run_transform_variants", "synthetic_source", "train",
]
