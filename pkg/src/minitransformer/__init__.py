"""Minimal attention-based autoregressive modeling for short multivariate
longitudinal sequences, with a permutation test for context effects."""

from .data import Observation, Sequence
from .model import HeadParams, ModelParams, predict
from .training import FitResult, TrainConfig, fit
from .estimators import (
    AveragePredictor,
    CarryForwardPredictor,
    InformedPredictor,
    MiniTransformer,
    RegressionPredictor,
)

__all__ = [
    "Observation",
    "Sequence",
    "HeadParams",
    "ModelParams",
    "predict",
    "FitResult",
    "TrainConfig",
    "fit",
    "MiniTransformer",
    "AveragePredictor",
    "RegressionPredictor",
    "InformedPredictor",
    "CarryForwardPredictor",
]

__version__ = "0.1.0"
