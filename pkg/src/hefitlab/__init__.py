"""Head-first vs standard fine-tuning of a small transformer regressor, built on a numpy autodiff engine."""

from .data import LANGUAGES, Dataset, LabeledText, load_dataset, save_dataset
from .ensemble import ensemble_average
from .evaluation import PredictionSet, evaluate, pearson_r
from .model import ModelConfig, RegressionModel, init_model, predict
from .training import HYP_SET_1, HYP_SET_2, HeFiTConfig, HypSet, hefit, sfit

__version__ = "0.1.0"

__all__ = [
    "LANGUAGES",
    "Dataset",
    "LabeledText",
    "load_dataset",
    "save_dataset",
    "ensemble_average",
    "PredictionSet",
    "evaluate",
    "pearson_r",
    "ModelConfig",
    "RegressionModel",
    "init_model",
    "predict",
    "HYP_SET_1",
    "HYP_SET_2",
    "HeFiTConfig",
    "HypSet",
    "hefit",
    "sfit",
]
