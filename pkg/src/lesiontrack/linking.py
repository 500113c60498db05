"""Anatomical slugs and cross-timepoint lesion linkage.

Lesions are matched across the two reports of a pair by an exact slug
derived from their description.  No fuzzy matching: wording variability
("multiple lymph nodes" vs. individual nodes) surfaces as unmatched
lesions instead of being silently reconciled.
"""

from __future__ import annotations

import re
import unicodedata
from dataclasses import dataclass
from typing import Optional

from .model import (
    Lesion,
    LesionCategory,
    PairExtraction,
    ReportExtraction,
    SE_IMA_RE,
    Violation,
)

# Unit words that ride along with measurements in prose descriptions.
_MEASUREMENT_UNITS = {"mm", "cm"}

_BARE_INT_RE = re.compile(r"^\d+$")
_NON_WORD_RE = re.compile(r"[^\w]+", re.UNICODE)

PERSISTED = "persisted"
RESOLVED = "resolved"
NEW_IN_FOLLOWUP = "new_in_followup"
BASELINE_ONLY = "baseline_only"

RESOLVED_NOTE = "resolved"


def normalize_description(description: str) -> str:
    """Reduce an anatomical description to a stable lowercase slug.

    Diacritics are folded, punctuation becomes a separator, and tokens
    that are bare integers, series-image locators or unit words are
    dropped.  Mixed alphanumeric tokens ("4a") survive.  Idempotent.
    """
    folded = unicodedata.normalize("NFKD", description)
    folded = "".join(c for c in folded if not unicodedata.combining(c))
    folded = folded.lower()
    parts = []
    for raw in folded.split():
        if SE_IMA_RE.match(raw):
            continue
        for token in _NON_WORD_RE.split(raw):
            if not token or token == "_":
                continue
            token = token.strip("_")
            if not token:
                continue
            if _BARE_INT_RE.match(token) or token in _MEASUREMENT_UNITS:
                continue
            parts.append(token)
    return "_".join(parts)


def lesion_slug(lesion: Lesion) -> str:
    """Slug of a lesion: from its description, else from its label tail."""
    if lesion.description:
        return normalize_description(lesion.description)
    if lesion.label:
        # Strip "<PREFIX><ordinal>_" so the label's anatomy part remains.
        match = re.match(r"^(?:TL|NTL|NL)_\d+_?(.*)$", lesion.label)
        if match:
            return normalize_description(match.group(1).replace("_", " "))
    return ""


@dataclass
class LinkedLesion:
    """One anatomical lesion viewed across both timepoints."""

    label: Optional[str]
    category: LesionCategory
    baseline: Optional[Lesion]
    followup: Optional[Lesion]
    status: str

    @property
    def slug(self) -> str:
        side = self.baseline if self.baseline is not None else self.followup
        assert side is not None
        return lesion_slug(side)


def _is_resolved(lesion: Lesion) -> bool:
    return (
        lesion.current_size_mm is None
        and lesion.note is not None
        and RESOLVED_NOTE in lesion.note
    )


def link_pair(baseline: ReportExtraction, followup: ReportExtraction) -> list[LinkedLesion]:
    """Match lesions across the two reports within each category.

    Equal slugs match; repeated slugs pair up in list order.  Matched
    lesions share the baseline's label; follow-up lesions without a
    baseline counterpart are new, baseline lesions without a follow-up
    counterpart are baseline-only.  Every input lesion appears in
    exactly one linked lesion.
    """
    linked: list[LinkedLesion] = []
    for category in LesionCategory:
        base_lesions = baseline.lesions_of(category)
        follow_lesions = followup.lesions_of(category)
        follow_by_slug: dict[str, list[int]] = {}
        for idx, lesion in enumerate(follow_lesions):
            follow_by_slug.setdefault(lesion_slug(lesion), []).append(idx)
        matched_follow: set[int] = set()
        for lesion in base_lesions:
            slug = lesion_slug(lesion)
            candidates = [i for i in follow_by_slug.get(slug, []) if i not in matched_follow]
            if candidates:
                idx = candidates[0]
                matched_follow.add(idx)
                partner = follow_lesions[idx]
                status = RESOLVED if _is_resolved(partner) else PERSISTED
                linked.append(LinkedLesion(
                    label=lesion.label if lesion.label is not None else partner.label,
                    category=category, baseline=lesion, followup=partner, status=status))
            else:
                linked.append(LinkedLesion(
                    label=lesion.label, category=category,
                    baseline=lesion, followup=None, status=BASELINE_ONLY))
        for idx, lesion in enumerate(follow_lesions):
            if idx not in matched_follow:
                linked.append(LinkedLesion(
                    label=lesion.label, category=category,
                    baseline=None, followup=lesion, status=NEW_IN_FOLLOWUP))
    return linked


def label_consistency(extraction: PairExtraction) -> list[Violation]:
    """Flag cross-timepoint naming breaches: slug-equal lesions whose
    labels drift, one label spanning different anatomies (the collective
    "multiple lymph nodes" trap), and labels reused across categories."""
    violations: list[Violation] = []
    if len(extraction.reports) != 2:
        return violations
    baseline, followup = extraction.reports
    for linked in link_pair(baseline, followup):
        if linked.baseline is None or linked.followup is None:
            continue
        b_label, f_label = linked.baseline.label, linked.followup.label
        if b_label != f_label:
            violations.append(Violation(
                "label_drift", f"category[{linked.category.value}]",
                f"slug {linked.slug!r} labeled {b_label!r} at baseline "
                f"but {f_label!r} at follow-up"))
    for category in LesionCategory:
        base_by_label = {l.label: lesion_slug(l)
                         for l in baseline.lesions_of(category) if l.label}
        for lesion in followup.lesions_of(category):
            if not lesion.label or lesion.label not in base_by_label:
                continue
            if lesion_slug(lesion) != base_by_label[lesion.label]:
                violations.append(Violation(
                    "label_slug_mismatch", f"category[{category.value}]",
                    f"label {lesion.label!r} names {base_by_label[lesion.label]!r} "
                    f"at baseline but {lesion_slug(lesion)!r} at follow-up"))
    for i, report in enumerate(extraction.reports):
        seen: dict[str, LesionCategory] = {}
        for category in LesionCategory:
            for lesion in report.lesions_of(category):
                if lesion.label is None:
                    continue
                if lesion.label in seen and seen[lesion.label] is not category:
                    violations.append(Violation(
                        "cross_category_label", f"reports[{i}]",
                        f"label {lesion.label!r} appears in both "
                        f"{seen[lesion.label].value} and {category.value} lists"))
                seen.setdefault(lesion.label, category)
    return violations
