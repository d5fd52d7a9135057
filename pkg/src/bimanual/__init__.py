"""Bimanual gesture modelling and recognition from dual-wrist accelerometers.

Gestures are modelled as time-conditioned Gaussian mixtures (GMM + GMR) over
gravity and body acceleration features, compared against sliding windows of a
continuous recording by Mahalanobis distance or mean log-density.
"""
from .comparison import DISTANCE, PROBABILITY, score_features
from .evaluation import ConfusionMatrix, compute_metrics, kfold_evaluate, score_timeline
from .features import EXPLICIT, IMPLICIT, trial_features
from .mixture import GmmModel, em_fit, select_num_components
from .preprocess import FilterSpec, design_cheby1_lowpass, median_filter, separate_gravity_body
from .recognizer import (
    NA, ModelBundle, RecognizerConfig, calibrate_thresholds, classify_recording, load_models, recognize_stream,
    save_models, train_bundle,
)
from .regression import GestureModel, build_gesture_model, gmr
from .signals import SampleStream, TrainingSet, Trial, load_dataset, load_recording, normalize_lengths
from .synthgen import builtin_templates, generate_dataset, generate_scenario

__version__ = "0.1.0"

__all__ = [
    "DISTANCE", "PROBABILITY", "EXPLICIT", "IMPLICIT", "NA",
    "ConfusionMatrix", "FilterSpec", "GestureModel", "GmmModel", "ModelBundle", "RecognizerConfig",
    "SampleStream", "TrainingSet", "Trial",
    "build_gesture_model", "builtin_templates", "calibrate_thresholds", "classify_recording", "compute_metrics",
    "design_cheby1_lowpass", "em_fit", "generate_dataset", "generate_scenario", "gmr", "kfold_evaluate",
    "load_dataset", "load_models", "load_recording", "median_filter", "normalize_lengths", "recognize_stream",
    "save_models", "score_features", "score_timeline", "select_num_components", "separate_gravity_body",
    "train_bundle", "trial_features",
]
