from .backbones import (
    BACKBONE_NAMES,
    Backbone,
    ModelConfig,
    ModelError,
    build_backbone,
    feature_info,
)
from .heads import (
    AttentionHead,
    AttentionPool,
    HistologyClassifier,
    PyramidHead,
    build_model,
    describe_model,
    parameter_count,
)

__all__ = [
    "BACKBONE_NAMES",
    "Backbone",
    "ModelConfig",
    "ModelError",
    "build_backbone",
    "feature_info",
    "AttentionHead",
    "AttentionPool",
    "HistologyClassifier",
    "PyramidHead",
    "build_model",
    "describe_model",
    "parameter_count",
]
