"""Dataset synthesis and inverse force models."""
from .dataset import Dataset, Effects, ExternalSchedule, LoadProfile, read_dataset_csv, synthesize_dataset, write_dataset_csv
from .evaluation import EvalMetrics, evaluate
from .grbf import GRBFModel, grbf_fit, grbf_predict
from .gru import GRUConfig, GRUModel, gru_forward, gru_train
from .hysteresis import HysteresisConfig, hysteresis_apply

__all__ = [
    "Dataset",
    "Effects",
    "EvalMetrics",
    "ExternalSchedule",
    "GRBFModel",
    "GRUConfig",
    "GRUModel",
    "HysteresisConfig",
    "LoadProfile",
    "evaluate",
    "grbf_fit",
    "grbf_predict",
    "gru_forward",
    "gru_train",
    "hysteresis_apply",
    "read_dataset_csv",
    "synthesize_dataset",
    "write_dataset_csv",
]
