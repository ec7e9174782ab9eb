"""Stand-in classifier, regression and the experiment harness."""
from nfskit.analysis.classifier import CentroidClassifier, fit_centroids, predict
from nfskit.analysis.config import (
    ExperimentConfig,
    ModelConfig,
    bundled_config_path,
    config_from_dict,
    load_config,
    parse_augmentation,
)
from nfskit.analysis.experiment import (
    ExperimentError,
    ExperimentResult,
    ExperimentRow,
    run_experiment,
    write_outputs,
)
from nfskit.analysis.regression import FULL_SCALE_REFERENCE, LinearFit, linear_fit

__all__ = [
    "CentroidClassifier",
    "ExperimentConfig",
    "ExperimentError",
    "ExperimentResult",
    "ExperimentRow",
    "FULL_SCALE_REFERENCE",
    "LinearFit",
    "ModelConfig",
    "bundled_config_path",
    "config_from_dict",
    "fit_centroids",
    "linear_fit",
    "load_config",
    "parse_augmentation",
    "predict",
    "run_experiment",
    "write_outputs",
]
