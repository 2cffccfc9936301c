"""Benchmark toolkit for wearable-sensor human activity recognition.

Temporal windowing (full / semi overlap, leave-one-trial-out), handcrafted
window features, z-score + PCA preprocessing and a small fully connected
network trained with Adam, evaluated under k-fold, leave-one-subject-out
and hold-out protocols.
"""

from harbench.dataset import (
    DatasetManifest,
    Trial,
    TrialSet,
    ValidationReport,
    load_manifest,
    load_trials,
    validate_trialset,
)
from harbench.errors import ConfigError, DataError, HarbenchError, TrainingError
from harbench.evaluation import EvalReport, ExperimentConfig, run_experiment

__all__ = [
    "ConfigError",
    "DataError",
    "DatasetManifest",
    "EvalReport",
    "ExperimentConfig",
    "HarbenchError",
    "TrainingError",
    "Trial",
    "TrialSet",
    "ValidationReport",
    "load_manifest",
    "load_trials",
    "run_experiment",
    "validate_trialset",
]

__version__ = "0.1.0"
