from .config import PRESETS, VARIANTS, RunConfig, preset
from .evaluation import evaluate, validate_report
from .metrics import Metrics, compute_metrics, rank_of_true
from .model import ReCDAP
from .training import Adam, build_run, load_model, save_checkpoint, train, train_step

__all__ = [
    "PRESETS",
    "VARIANTS",
    "Adam",
    "Metrics",
    "ReCDAP",
    "RunConfig",
    "build_run",
    "compute_metrics",
    "evaluate",
    "load_model",
    "preset",
    "rank_of_true",
    "save_checkpoint",
    "train",
    "train_step",
    "validate_report",
]
