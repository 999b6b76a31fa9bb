"""Toy-scale per-residue feature extractors exporting MMFB banks."""

from .bank import ProteinFeatures, export_bank
from .encoding import EXTRACTOR_KINDS, ONE_HOT_DIM, VIEWS, one_hot
from .extractors import OUTPUT_DIM, ExtractorSpec, build_network, extract

__version__ = "0.1.0"

__all__ = [
    "EXTRACTOR_KINDS",
    "ExtractorSpec",
    "ONE_HOT_DIM",
    "OUTPUT_DIM",
    "ProteinFeatures",
    "VIEWS",
    "build_network",
    "export_bank",
    "extract",
    "one_hot",
]
