"""Tier 3 learning core: a small backpropagation network that flags anomalies."""

from mhealth.engine.features import LabeledSet, ParseError, normalize, normalize_raw
from mhealth.engine.mlp import (
    DimensionMismatch,
    MlpModel,
    backprop_step,
    classify,
    forward,
    forward_batch,
    gradients,
    init_model,
    load_model,
    save_model,
)
from mhealth.engine.study import StudyReport, input_study, synthesize_dataset
from mhealth.engine.training import Evaluation, Hyperparams, TrainResult, evaluate, train

__all__ = [
    "LabeledSet", "ParseError", "normalize", "normalize_raw", "DimensionMismatch", "MlpModel",
    "backprop_step", "classify", "forward", "forward_batch", "gradients", "init_model",
    "load_model", "save_model", "StudyReport", "input_study", "synthesize_dataset", "Evaluation",
    "Hyperparams", "TrainResult", "evaluate", "train",
]
