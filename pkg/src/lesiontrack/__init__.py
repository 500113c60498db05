"""Longitudinal RECIST lesion extraction, linkage and evaluation."""

from .model import (
    Lesion,
    LesionCategory,
    PairExtraction,
    RadiologyReport,
    ReportExtraction,
    ReportPair,
    SeIma,
    Violation,
    make_label,
    parse_se_ima,
    validate_extraction,
)

__version__ = "0.1.0"

__all__ = [
    "Lesion",
    "LesionCategory",
    "PairExtraction",
    "RadiologyReport",
    "ReportExtraction",
    "ReportPair",
    "SeIma",
    "Violation",
    "make_label",
    "parse_se_ima",
    "validate_extraction",
    "__version__",
]
