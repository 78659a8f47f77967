"""Perturbed Bayesian inference for online parameter estimation."""

from .config import AlgoConfig
from .data import ArrayStream, CSVStream, GeneratorStream, ObservationStream
from .diagnostics import read_trace, slope_diagnostic, trace_slope, write_trace
from .engine import PerturbedBayes, RunReport, TraceRow
from .errors import ConfigurationError, InvariantViolation, ModelEvaluationError
from .models import (GaussianLocation, MixtureDemo, MixtureLogistic, Model, Observations,
                     QuantileRegression)
from .presets import build as build_preset

__all__ = [
    "AlgoConfig",
    "ArrayStream",
    "CSVStream",
    "ConfigurationError",
    "GaussianLocation",
    "GeneratorStream",
    "InvariantViolation",
    "MixtureDemo",
    "MixtureLogistic",
    "Model",
    "ModelEvaluationError",
    "ObservationStream",
    "Observations",
    "PerturbedBayes",
    "QuantileRegression",
    "RunReport",
    "TraceRow",
    "build_preset",
    "read_trace",
    "slope_diagnostic",
    "trace_slope",
    "write_trace",
]
