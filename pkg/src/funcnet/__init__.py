"""Functional neural networks for EEG-based gaze position estimation."""

import logging

from .basis import BasisSpec, evaluate_basis
from .exceptions import ConfigError, DataError, FuncNetError, MissingGradientError, NumericError, ShapeError
from .estimators import EEGFilter, FNNRegressor, SlidingWindows
from .layers import FuncConv1D, FuncConv1DSpec, FuncDense, FuncDenseSpec, parameter_count
from .metrics import MetricsReport, evaluate_recordings
from .models import (Model, build_control, build_func_body, build_fully_functional, build_min_functional,
                     build_model, build_spatial_filter_cnn, count_parameters, model_spec, shape_trace)
from .tensor import Tensor, no_grad
from .training import TrainConfig, evaluate, train

__version__ = "0.1.0"

logging.getLogger(__name__).addHandler(logging.NullHandler())

__all__ = [
    "BasisSpec", "ConfigError", "DataError", "EEGFilter", "FNNRegressor", "FuncConv1D", "FuncConv1DSpec",
    "FuncDense", "FuncDenseSpec", "FuncNetError", "MetricsReport", "MissingGradientError", "Model",
    "NumericError", "ShapeError", "SlidingWindows", "Tensor", "TrainConfig", "build_control",
    "build_func_body", "build_fully_functional", "build_min_functional", "build_model",
    "build_spatial_filter_cnn", "count_parameters", "evaluate", "evaluate_basis", "evaluate_recordings",
    "model_spec", "no_grad", "parameter_count", "shape_trace", "train",
]
