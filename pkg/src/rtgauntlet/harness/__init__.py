"""Experiment orchestration: configs, datasets, evaluation, stages, reports."""

from .config import build_attack, build_defense, build_train, config_digest, load_config
from .data import load_image_folder, make_dataset, save_image_folder, synthetic_shapes
from .evaluation import EvalResult, at_least_once_eval, clean_accuracy, evaluate_with_ci
from .runner import Experiment, run_experiment

__all__ = [
    "EvalResult",
    "Experiment",
    "at_least_once_eval",
    "build_attack",
    "build_defense",
    "build_train",
    "clean_accuracy",
    "config_digest",
    "evaluate_with_ci",
    "load_config",
    "load_image_folder",
    "make_dataset",
    "run_experiment",
    "save_image_folder",
    "synthetic_shapes",
]
