"""Shapley attributions for arbitrary scalar functions of a model's output over a sample."""

from .core import (
    Coalition,
    ComputeError,
    ConfigurationError,
    DataError,
    Explanation,
    FeatureMatrix,
    GShapError,
    coalition_weight,
    hybrid_compose,
)
from .engine import EngineConfig, comparison_report, evaluate_coalition, exact_gshap, explain, normalize, sampled_gshap
from .genfns import (
    ClassificationG,
    ClassPartition,
    GroupAssignment,
    IntergroupG,
    LabelSet,
    LossG,
    OutputG,
    classification_g,
    intergroup_g,
    loss_g,
    output_g,
)

__version__ = "0.1.0"
