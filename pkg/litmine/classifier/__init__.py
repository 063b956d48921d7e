"""
Maximum-entropy text classifier.

Provides:
- train / predict: multinomial logistic regression over hashed features
- save_model / load_model: versioned binary model files in ml_models
- select_model: keep the better model and move the "current" pointer
- training data helpers (JSON lines)
"""

from .maxent import (
    EVAL_FRACTION,
    LabeledExample,
    ModelArtifact,
    Prediction,
    TrainConfig,
    design_matrix,
    evaluate,
    objective_and_gradient,
    predict,
    predict_text,
    predict_vector,
    split_examples,
    train,
    training_set_sha,
)
from .model_io import MODEL_MAGIC, MODEL_VERSION, deserialize_model, load_model, model_key, save_model, serialize_model
from .selection import CURRENT_POINTER, current_model_ref, load_current_model, select_model
from .training_data import encode_training_data, load_training_data, parse_training_data, resolve_training_data, upload_training_data

__all__ = [
    "CURRENT_POINTER",
    "EVAL_FRACTION",
    "LabeledExample",
    "MODEL_MAGIC",
    "MODEL_VERSION",
    "ModelArtifact",
    "Prediction",
    "TrainConfig",
    "current_model_ref",
    "deserialize_model",
    "design_matrix",
    "encode_training_data",
    "evaluate",
    "load_current_model",
    "load_model",
    "load_training_data",
    "model_key",
    "objective_and_gradient",
    "parse_training_data",
    "predict",
    "predict_text",
    "predict_vector",
    "resolve_training_data",
    "save_model",
    "select_model",
    "serialize_model",
    "split_examples",
    "train",
    "training_set_sha",
    "upload_training_data",
]
