"""Domain types for lesions, reports, pairs and extraction outputs.

This module is the single home of the output structure: the nested
lesion / report / pair models, the SE-IMA identifier format, label
construction and semantic validation.  Structural parsing of raw model
output lives in :mod:`lesiontrack.gate`; this module validates values
that are already typed.
"""

from __future__ import annotations

import json
import re
from dataclasses import dataclass
from datetime import date
from enum import Enum
from typing import Any, Optional

from pydantic import BaseModel, ConfigDict, Field

SE_IMA_RE = re.compile(r"^\d{1,3}-\d{1,4}$")

MAX_SIZE_MM = 10000  # sanity bound; keeps stray header numbers out of sizes


class SeIma(BaseModel):
    """Series-image locator of a lesion within a DICOM study."""

    model_config = ConfigDict(frozen=True)

    series: int = Field(..., ge=0, le=999, description="Series number, 1-3 digits")
    image: int = Field(..., ge=0, le=9999, description="Image number, 1-4 digits")

    def render(self) -> str:
        """Canonical text form, no zero padding."""
        return f"{self.series}-{self.image}"


def parse_se_ima(token: str) -> Optional[SeIma]:
    """Parse a series-image token, or return None if it does not match.

    Only fully anchored ``d{1,3}-d{1,4}`` tokens qualify; anything else
    (extra digits, missing hyphen, embedded text) yields None.  Total
    function: never raises.
    """
    if not SE_IMA_RE.match(token):
        return None
    series_text, image_text = token.split("-")
    return SeIma(series=int(series_text), image=int(image_text))


class LesionCategory(str, Enum):
    TARGET = "TL"
    NON_TARGET = "NTL"
    NEW = "NL"

    @property
    def label_prefix(self) -> str:
        return self.value + "_"

    @classmethod
    def from_label(cls, label: str) -> Optional["LesionCategory"]:
        """Category implied by a label's prefix, longest prefix first."""
        for cat in (cls.NON_TARGET, cls.NEW, cls.TARGET):
            if label.startswith(cat.label_prefix):
                return cat
        return None


def make_label(category: LesionCategory, ordinal: int, slug: str) -> str:
    """Build a stable lesion label like ``TL_1_lever_segment_4a``.

    An empty slug omits the trailing underscore (``NTL_1``).  Ordinals
    start at 1 so two same-anatomy lesions stay distinguishable.
    """
    if ordinal < 1:
        raise ValueError(f"label ordinal must be >= 1, got {ordinal}")
    base = f"{category.label_prefix}{ordinal}"
    return f"{base}_{slug}" if slug else base


class Lesion(BaseModel):
    """One finding at one timepoint.

    All fields are individually optional; semantic constraints (prefix,
    size range, locator format) are enforced by :func:`validate_extraction`
    so that violating values stay representable for diagnostics.
    """

    model_config = ConfigDict(extra="forbid")

    label: Optional[str] = Field(None, description="Stable category-prefixed label")
    description: Optional[str] = Field(None, description="Anatomical description as written")
    current_size_mm: Optional[int] = Field(None, description="Current measurement in whole millimetres")
    se_ima: Optional[str] = Field(None, description="Series-image locator, e.g. '3-112'")
    note: Optional[str] = Field(None, description="Qualifiers: resolved, not_measurable, footnotes")


class ReportExtraction(BaseModel):
    """Lesions of one report grouped by category under its study identifier."""

    model_config = ConfigDict(extra="forbid")

    study_uid: str
    target_lesions: list[Lesion] = Field(default_factory=list)
    non_target_lesions: list[Lesion] = Field(default_factory=list)
    new_lesions: list[Lesion] = Field(default_factory=list)

    def lesions_of(self, category: LesionCategory) -> list[Lesion]:
        return {
            LesionCategory.TARGET: self.target_lesions,
            LesionCategory.NON_TARGET: self.non_target_lesions,
            LesionCategory.NEW: self.new_lesions,
        }[category]


class PairExtraction(BaseModel):
    """Two per-report lesion groupings in temporal order, baseline first."""

    model_config = ConfigDict(extra="forbid")

    reports: list[ReportExtraction]


class RadiologyReport(BaseModel):
    """One raw narrative report, tabular sections included verbatim."""

    model_config = ConfigDict(extra="forbid")

    patient_id: str
    study_uid: str
    study_date: date
    body: str


class ReportPair(BaseModel):
    """Two reports of one patient, baseline strictly before follow-up."""

    model_config = ConfigDict(extra="forbid")

    patient_id: str
    baseline: RadiologyReport
    followup: RadiologyReport

    @property
    def pair_id(self) -> str:
        return f"{self.patient_id}/{self.baseline.study_uid}/{self.followup.study_uid}"


@dataclass(frozen=True)
class Violation:
    """One breach of a structural or semantic constraint."""

    code: str
    path: str
    message: str

    def as_dict(self) -> dict[str, str]:
        return {"code": self.code, "path": self.path, "message": self.message}


_CATEGORY_FIELDS = (
    (LesionCategory.TARGET, "target_lesions"),
    (LesionCategory.NON_TARGET, "non_target_lesions"),
    (LesionCategory.NEW, "new_lesions"),
)


def _validate_lesion(lesion: Lesion, category: LesionCategory, path: str) -> list[Violation]:
    found = []
    if lesion.label is not None:
        label_cat = LesionCategory.from_label(lesion.label)
        if label_cat is None:
            found.append(Violation("prefix_mismatch", f"{path}.label",
                                   f"label {lesion.label!r} lacks a TL_/NTL_/NL_ prefix"))
        elif label_cat is not category:
            found.append(Violation("prefix_mismatch", f"{path}.label",
                                   f"label {lesion.label!r} does not belong in the "
                                   f"{category.value} list"))
    if lesion.current_size_mm is not None and not (0 <= lesion.current_size_mm <= MAX_SIZE_MM):
        found.append(Violation("size_range", f"{path}.current_size_mm",
                               f"size {lesion.current_size_mm} outside [0, {MAX_SIZE_MM}]"))
    if lesion.se_ima is not None and parse_se_ima(lesion.se_ima) is None:
        found.append(Violation("se_ima_pattern", f"{path}.se_ima",
                               f"{lesion.se_ima!r} does not match the series-image pattern"))
    return found


def validate_extraction(extraction: PairExtraction) -> list[Violation]:
    """Return every invariant breach in a structurally parsed extraction.

    Checks report count, study_uid distinctness, label prefixes against
    their containing list, label uniqueness within a report, size range
    and locator format.  Empty list iff the extraction is valid.
    """
    violations: list[Violation] = []
    if len(extraction.reports) != 2:
        violations.append(Violation("report_count", "reports",
                                    f"expected exactly 2 reports, got {len(extraction.reports)}"))
    uids = [r.study_uid for r in extraction.reports]
    if len(set(uids)) != len(uids):
        violations.append(Violation("duplicate_study_uid", "reports",
                                    f"study_uid values not distinct: {uids}"))
    for i, report in enumerate(extraction.reports):
        seen_labels: dict[str, str] = {}
        for category, field in _CATEGORY_FIELDS:
            for j, lesion in enumerate(report.lesions_of(category)):
                path = f"reports[{i}].{field}[{j}]"
                violations.extend(_validate_lesion(lesion, category, path))
                if lesion.label is not None:
                    if lesion.label in seen_labels:
                        violations.append(Violation(
                            "duplicate_label", f"{path}.label",
                            f"label {lesion.label!r} already used at {seen_labels[lesion.label]}"))
                    else:
                        seen_labels[lesion.label] = path
    return violations


def canonical_dict(extraction: PairExtraction) -> dict[str, Any]:
    """Plain-dict form with absent optionals as null and lists never null."""
    return extraction.model_dump(mode="json")


def canonical_dumps(value: Any) -> str:
    """The one canonical JSON serialization: sorted keys, compact, UTF-8."""
    return json.dumps(value, ensure_ascii=False, sort_keys=True, separators=(",", ":"))


def extraction_to_json(extraction: PairExtraction) -> str:
    return canonical_dumps(canonical_dict(extraction))


def extraction_from_dict(data: dict[str, Any]) -> PairExtraction:
    return PairExtraction.model_validate(data)
