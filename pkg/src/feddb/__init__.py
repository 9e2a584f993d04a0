"""Desk-scale simulator of class-imbalanced federated semi-supervised learning.

Implements debiased pseudo-labeling (posterior correction by the average
prediction probability on unlabeled data) and debiased model aggregation
(simplex-constrained weight optimization), alongside FixMatch-over-FedAvg and
labeled-only FedAvg baselines, with full metric instrumentation.
"""

from .config import ExperimentConfig, load_config
from .errors import (
    ConfigError,
    EstimatorError,
    FedDBError,
    MetricError,
    NumericalError,
    PartitionError,
    ProtocolError,
)
from .federation import METHODS, run_experiment

__version__ = "0.1.0"

__all__ = [
    "ExperimentConfig",
    "load_config",
    "run_experiment",
    "METHODS",
    "FedDBError",
    "ConfigError",
    "NumericalError",
    "PartitionError",
    "EstimatorError",
    "ProtocolError",
    "MetricError",
    "__version__",
]
