"""Python access to the kvqa pipeline core."""

from ._kvqa import (
    BackendError,
    ConfigError,
    DemoBank,
    DomainError,
    Error,
    EvaluationError,
    FormatError,
    IngestionError,
    Perceiver,
    RetrievalError,
    Run,
    TrainingError,
    cosine_similarity,
    feature_names,
    fit_gbdt,
    gbdt_predict_proba,
    generate_world,
    normalize_answer,
    soft_accuracy,
)

__all__ = [
    "BackendError",
    "ConfigError",
    "DemoBank",
    "DomainError",
    "Error",
    "EvaluationError",
    "FormatError",
    "IngestionError",
    "Perceiver",
    "RetrievalError",
    "Run",
    "TrainingError",
    "cosine_similarity",
    "feature_names",
    "fit_gbdt",
    "gbdt_predict_proba",
    "generate_world",
    "normalize_answer",
    "soft_accuracy",
]
