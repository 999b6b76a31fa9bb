"""gpfuse: multi-objective GP engine for per-residue feature fusion."""

from .datamodel import (
    ALL_FEATURE_IDS,
    Dataset,
    FeatureId,
    FeatureMatrix,
    ProteinRecord,
    SynthConfig,
    generate_synthetic,
    load_feature_bank,
    save_feature_bank,
)
from .fitness import FitnessPair, evaluate_program, stack_dataset
from .program import Program, eval_tree, from_text, to_text

__all__ = [
    "ALL_FEATURE_IDS",
    "Dataset",
    "FeatureId",
    "FeatureMatrix",
    "FitnessPair",
    "ProteinRecord",
    "Program",
    "SynthConfig",
    "evaluate_program",
    "eval_tree",
    "from_text",
    "generate_synthetic",
    "load_feature_bank",
    "save_feature_bank",
    "stack_dataset",
    "to_text",
]

__version__ = "0.1.0"
