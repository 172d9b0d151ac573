from .checkpoint import CheckpointFormatError, CheckpointRecord, load_checkpoint, save_checkpoint
from .config import MODES, ModeLambdas, TrainingConfig, resolve_mode
from .sweep import AXES, rows_to_csv, sweep
from .train import LOG_COLUMNS, MetricsLog, NumericalAbort, Trainer, evaluate, train

__all__ = [
    "CheckpointFormatError", "CheckpointRecord", "load_checkpoint", "save_checkpoint",
    "MODES", "ModeLambdas", "TrainingConfig", "resolve_mode",
    "AXES", "rows_to_csv", "sweep",
    "LOG_COLUMNS", "MetricsLog", "NumericalAbort", "Trainer", "evaluate", "train",
]
