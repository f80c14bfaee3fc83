"""Label-set loss functions for partially supervised segmentation."""
from .labelspace import (
    LabelSet,
    LabelSetMap,
    LabelSpace,
    ProbMap,
    singleton_map,
    validate_probmap,
)
from .losses import (
    LossKind,
    LossResult,
    LossSpec,
    compute_loss,
    convert_fully_supervised,
    converted_dice,
    cross_entropy,
    leaf_dice,
    marginal_cross_entropy,
    mean_class_dice,
    soft_target_dice,
)
from .marginalize import EquivalenceSample, phi, psi0, sample_equivalent

__version__ = "0.1.0"


def __getattr__(name):
    # scikit-learn is only imported when the estimator is asked for
    if name == "LabelSetSegmenter":
        from .estimator import LabelSetSegmenter
        return LabelSetSegmenter
    raise AttributeError(f"module {__name__!r} has no attribute {name!r}")

__all__ = [
    "EquivalenceSample",
    "LabelSet",
    "LabelSetMap",
    "LabelSetSegmenter",
    "LabelSpace",
    "LossKind",
    "LossResult",
    "LossSpec",
    "ProbMap",
    "compute_loss",
    "convert_fully_supervised",
    "converted_dice",
    "cross_entropy",
    "leaf_dice",
    "marginal_cross_entropy",
    "mean_class_dice",
    "phi",
    "psi0",
    "sample_equivalent",
    "singleton_map",
    "soft_target_dice",
    "validate_probmap",
]
