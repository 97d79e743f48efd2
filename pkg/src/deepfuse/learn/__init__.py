"""Classifiers, splitting, metrics and model persistence."""
from .metrics import EvalReport, evaluate_predictions, report_from_counts
from .model import (KINDS, TrainedModel, evaluate, load_model, save_model, train,
                    train_extra_trees, train_gradient_boosting, train_random_forest, train_svc)
from .split import SplitSpec, split_indices, stratified_split

__all__ = [
    "EvalReport", "KINDS", "SplitSpec", "TrainedModel", "evaluate", "evaluate_predictions",
    "load_model", "report_from_counts", "save_model", "split_indices", "stratified_split",
    "train", "train_extra_trees", "train_gradient_boosting", "train_random_forest", "train_svc",
]
