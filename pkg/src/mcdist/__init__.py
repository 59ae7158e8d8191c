"""Distance estimation for macro-scale molecular communication links.

Channel simulation, feature extraction from sensor traces, least-squares
and Levenberg-Marquardt fitting, five distance estimators and a
Monte-Carlo evaluation harness.
"""

from .channel import ChannelParams, SampledSignal, SensorConfig, simulate_received_signal
from .dataset import Dataset, DesignSpec, generate_design, load_dataset, save_dataset
from .errors import MCDistError
from .estimators import CurveEstimatorParams, mlr_predict, mlr_train, nnr_predict, nnr_train
from .evaluation import evaluate_data_analysis, monte_carlo_evaluate, rmse, velocity_profile
from .features import ExtractionConfig, FeatureRecord, FeatureVector, extract_features
from .lsq import LMOptions, fit_exponential, lm_fit

__version__ = "0.1.0"

__all__ = [
    "ChannelParams",
    "SampledSignal",
    "SensorConfig",
    "simulate_received_signal",
    "Dataset",
    "DesignSpec",
    "generate_design",
    "load_dataset",
    "save_dataset",
    "MCDistError",
    "CurveEstimatorParams",
    "mlr_train",
    "mlr_predict",
    "nnr_train",
    "nnr_predict",
    "monte_carlo_evaluate",
    "evaluate_data_analysis",
    "rmse",
    "velocity_profile",
    "ExtractionConfig",
    "FeatureRecord",
    "FeatureVector",
    "extract_features",
    "LMOptions",
    "fit_exponential",
    "lm_fit",
]
