"""The ten algorithm families behind one fit / predict contract."""

from riskpipe.learners.base import (
    FittedModel,
    ModelSpec,
    feature_weights,
    fit,
    predict,
    predict_proba,
    decision_output,
)
from riskpipe.learners.registry import FAMILIES, SUPPORT

__all__ = [
    "FAMILIES",
    "SUPPORT",
    "FittedModel",
    "ModelSpec",
    "decision_output",
    "feature_weights",
    "fit",
    "predict",
    "predict_proba",
]
