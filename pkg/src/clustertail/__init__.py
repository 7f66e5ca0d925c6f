"""Cluster-size tail analysis for sub-critical multi-type branching processes
with regularly varying offspring: exact simulation, pruned-tree decomposition,
cone geometry, limiting-measure Monte Carlo, and a verification harness."""

__version__ = "0.1.0"

from .backend import BACKEND
from .model import (
    ModelConfig,
    OffspringLaw,
    alpha_of,
    config_from_dict,
    config_from_json,
    counterexample_model,
    expected_cluster,
    law_mean,
    law_survival,
    rate_lambda,
    reference_r2,
    validate,
)
from .rng import StreamKey

__all__ = [
    "BACKEND",
    "ModelConfig",
    "OffspringLaw",
    "StreamKey",
    "alpha_of",
    "config_from_dict",
    "config_from_json",
    "counterexample_model",
    "expected_cluster",
    "law_mean",
    "law_survival",
    "rate_lambda",
    "reference_r2",
    "validate",
]
