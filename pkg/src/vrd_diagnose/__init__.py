"""Error diagnosis for video relation detection."""
from __future__ import annotations

__version__ = "0.1.0"

from .data_model import BoundingBox, Finding, Prediction, RelationInstance, Trajectory, Triplet, VideoAnnotation, validate
from .ingestion import Dataset, PredictionSet, load_ground_truth, load_predictions, load_taxonomy
from .overlap import overlap_matrix, pair_overlap, viou
from .evaluation import MatchConfig, evaluate, match_video, mean_ap
from .diagnosis import DiagnosisConfig, ErrorType, error_breakdown
from .cures import apply_cure, sensitivity_report
from .characteristics import map_gain_by_characteristic
from .bias_stats import bias_accuracy, cooccurrence, fit_bias_model

__all__ = [
    "BoundingBox", "Finding", "Prediction", "RelationInstance", "Trajectory", "Triplet", "VideoAnnotation",
    "validate", "Dataset", "PredictionSet", "load_ground_truth", "load_predictions", "load_taxonomy",
    "overlap_matrix", "pair_overlap", "viou", "MatchConfig", "evaluate", "match_video", "mean_ap",
    "DiagnosisConfig", "ErrorType", "error_breakdown", "apply_cure", "sensitivity_report",
    "map_gain_by_characteristic", "bias_accuracy", "cooccurrence", "fit_bias_model",
]
