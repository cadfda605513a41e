"""Reverse-mode autodiff engine and the fixed classifier suite."""

from .models import ARCHITECTURES, Classifier, ModelSpec, ShapeError, build
from .train import (Adam, TrainedModel, TrainingConfig, TrainingError, accuracy, auroc, binary_auroc,
                    gradient_check, train)

__all__ = ["ARCHITECTURES", "Adam", "Classifier", "ModelSpec", "ShapeError", "TrainedModel", "TrainingConfig",
           "TrainingError", "accuracy", "auroc", "binary_auroc", "build", "gradient_check", "train"]
