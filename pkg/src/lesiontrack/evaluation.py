"""Scoring of predicted extractions at attribute, lesion and document level.

Three attributes per lesion per report (label, size, se_ima) give six
judgments per lesion pair.  Pooling concatenates readers' judgment sets,
so two readers double every denominator.  Rates carry 95% Wilson score
intervals; the Wilson interval reproduces the published all-attribute
bounds exactly, which is why it is the interval of record here.

Reference-anchored scoring: a reference lesion the prediction misses
scores all of its attributes incorrect, while a predicted lesion absent
from the reference is recorded as spurious and only breaks document-
level cleanliness.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from math import sqrt
from pathlib import Path
from statistics import NormalDist
from typing import Iterable, Optional

from .linking import lesion_slug
from .model import (
    canonical_dumps,
    Lesion,
    LesionCategory,
    PairExtraction,
)

ATTRIBUTES = ("label", "size", "se_ima")
LEVELS = ("attribute", "lesion", "document")

CORRECT = "correct"
INCORRECT = "incorrect"
CLEAN = "clean"
HAS_ERRORS = "has_errors"

AUTO_READER = "auto"


class EvaluationError(Exception):
    pass


class EmptyInput(EvaluationError):
    pass


@dataclass(frozen=True)
class AttributeJudgment:
    pair_id: str
    reader_id: str
    lesion_label: str
    category: LesionCategory
    report_index: int  # 0 = baseline, 1 = follow-up
    attribute: str  # "label" | "size" | "se_ima"
    verdict: str  # "correct" | "incorrect"

    def key(self) -> tuple:
        return (self.reader_id, self.pair_id, self.lesion_label,
                self.report_index, self.attribute)


@dataclass(frozen=True)
class ReportLevelJudgment:
    pair_id: str
    reader_id: str
    category: LesionCategory
    report_index: int
    verdict: str  # "clean" | "has_errors"

    def key(self) -> tuple:
        return (self.reader_id, self.pair_id, self.category.value,
                self.report_index)


@dataclass(frozen=True)
class SpuriousLesion:
    pair_id: str
    reader_id: str
    category: LesionCategory
    report_index: int
    lesion_label: Optional[str]


@dataclass(frozen=True)
class Cell:
    k: int
    n: int
    accuracy: float
    ci_low: float
    ci_high: float

    def as_dict(self) -> dict:
        return {"k": self.k, "n": self.n, "accuracy": self.accuracy,
                "ci_low": self.ci_low, "ci_high": self.ci_high}


@dataclass
class EvalSummary:
    cells: dict[tuple[str, str], Cell]  # (category code, level) -> cell
    all_attribute_pairs: Cell
    agreement_rate: Optional[float] = None

    def as_dict(self) -> dict:
        nested: dict[str, dict[str, dict]] = {}
        for (category, level), cell in self.cells.items():
            nested.setdefault(category, {})[level] = cell.as_dict()
        return {
            "cells": nested,
            "all_attribute_pairs": self.all_attribute_pairs.as_dict(),
            "agreement_rate": self.agreement_rate,
        }

    def to_json(self) -> str:
        return canonical_dumps(self.as_dict())


def wilson_ci(k: int, n: int, confidence: float = 0.95) -> tuple[float, float]:
    """Wilson score interval for a binomial proportion.

    Exact boundary behavior: k == 0 pins the lower bound to 0 and
    k == n pins the upper bound to 1.
    """
    if n < 1:
        raise EmptyInput("wilson_ci requires n >= 1")
    if not 0 <= k <= n:
        raise ValueError(f"k must be in [0, n], got k={k}, n={n}")
    if not 0 < confidence < 1:
        raise ValueError("confidence must be in (0, 1)")
    z = NormalDist().inv_cdf((1 + confidence) / 2)
    p = k / n
    denom = 1 + z * z / n
    center = (p + z * z / (2 * n)) / denom
    margin = (z / denom) * sqrt(p * (1 - p) / n + z * z / (4 * n * n))
    low = 0.0 if k == 0 else max(0.0, center - margin)
    high = 1.0 if k == n else min(1.0, center + margin)
    return low, high


def two_proportion_z(k1: int, n1: int, k2: int, n2: int) -> tuple[float, float]:
    """Pooled-variance two-proportion z statistic with two-sided p-value."""
    if n1 < 1 or n2 < 1:
        raise EmptyInput("two_proportion_z requires n1, n2 >= 1")
    p1, p2 = k1 / n1, k2 / n2
    pooled = (k1 + k2) / (n1 + n2)
    if pooled in (0.0, 1.0):
        # Pooled proportion degenerate implies equal rates.
        return 0.0, 1.0
    se = sqrt(pooled * (1 - pooled) * (1 / n1 + 1 / n2))
    z = (p1 - p2) / se
    p_value = 2 * (1 - NormalDist().cdf(abs(z)))
    return z, p_value


@dataclass
class AutoJudgeResult:
    judgments: list[AttributeJudgment]
    spurious: list[SpuriousLesion]


def _entity_rows(extraction: PairExtraction) -> dict[LesionCategory, list[tuple[str, Optional[Lesion], Optional[Lesion]]]]:
    """Group one extraction's lesions into per-category entities keyed by
    slug, pairing report-0 and report-1 occurrences in list order."""
    out: dict[LesionCategory, list[tuple[str, Optional[Lesion], Optional[Lesion]]]] = {}
    baseline, followup = extraction.reports[0], extraction.reports[1]
    for category in LesionCategory:
        rows: list[tuple[str, Optional[Lesion], Optional[Lesion]]] = []
        follow_pool = list(followup.lesions_of(category))
        used: set[int] = set()
        for lesion in baseline.lesions_of(category):
            slug = lesion_slug(lesion)
            partner = None
            for idx, candidate in enumerate(follow_pool):
                if idx not in used and lesion_slug(candidate) == slug:
                    used.add(idx)
                    partner = candidate
                    break
            rows.append((slug, lesion, partner))
        for idx, candidate in enumerate(follow_pool):
            if idx not in used:
                rows.append((lesion_slug(candidate), None, candidate))
        out[category] = rows
    return out


def auto_judge(predicted: PairExtraction, reference: PairExtraction,
               pair_id: str, reader_id: str = AUTO_READER) -> AutoJudgeResult:
    """Score a prediction against a reference annotation.

    Reference entities match predicted entities by slug within category
    (repeats pair up in list order).  Per matched side: label correct iff
    present, category-prefixed and stable across timepoints; size correct
    iff integer-equal or both null; se_ima correct iff string-equal or
    both null.  Unmatched reference sides score all attributes incorrect;
    unmatched predicted sides are returned as spurious.
    """
    judgments: list[AttributeJudgment] = []
    spurious: list[SpuriousLesion] = []
    ref_entities = _entity_rows(reference)
    pred_entities = _entity_rows(predicted)

    for category in LesionCategory:
        pred_pool = list(pred_entities[category])
        matched: set[int] = set()
        for slug, ref_base, ref_follow in ref_entities[category]:
            pred_base = pred_follow = None
            for idx, (pred_slug, p_base, p_follow) in enumerate(pred_pool):
                if idx not in matched and pred_slug == slug:
                    matched.add(idx)
                    pred_base, pred_follow = p_base, p_follow
                    break
            label = _reference_label(ref_base, ref_follow, category, slug)
            stable = _labels_stable(pred_base, pred_follow)
            for report_index, ref_side, pred_side in (
                    (0, ref_base, pred_base), (1, ref_follow, pred_follow)):
                if ref_side is None:
                    continue
                judgments.extend(_judge_side(
                    pair_id, reader_id, label, category, report_index,
                    ref_side, pred_side, stable))
        for idx, (slug, p_base, p_follow) in enumerate(pred_pool):
            if idx in matched:
                continue
            for report_index, side in ((0, p_base), (1, p_follow)):
                if side is not None:
                    spurious.append(SpuriousLesion(
                        pair_id=pair_id, reader_id=reader_id, category=category,
                        report_index=report_index, lesion_label=side.label))
    return AutoJudgeResult(judgments=judgments, spurious=spurious)


def _reference_label(base: Optional[Lesion], follow: Optional[Lesion],
                     category: LesionCategory, slug: str) -> str:
    for side in (base, follow):
        if side is not None and side.label:
            return side.label
    return f"{category.label_prefix}?_{slug}"


def _labels_stable(pred_base: Optional[Lesion], pred_follow: Optional[Lesion]) -> bool:
    if pred_base is None or pred_follow is None:
        return True
    return pred_base.label == pred_follow.label


def _judge_side(pair_id: str, reader_id: str, label: str,
                category: LesionCategory, report_index: int,
                ref: Lesion, pred: Optional[Lesion],
                labels_stable: bool) -> list[AttributeJudgment]:
    def judgment(attribute: str, correct: bool) -> AttributeJudgment:
        return AttributeJudgment(
            pair_id=pair_id, reader_id=reader_id, lesion_label=label,
            category=category, report_index=report_index,
            attribute=attribute, verdict=CORRECT if correct else INCORRECT)

    if pred is None:
        return [judgment(attr, False) for attr in ATTRIBUTES]
    label_ok = (
        pred.label is not None
        and LesionCategory.from_label(pred.label) is category
        and labels_stable
    )
    return [
        judgment("label", label_ok),
        judgment("size", pred.current_size_mm == ref.current_size_mm),
        judgment("se_ima", pred.se_ima == ref.se_ima),
    ]


def _latest_wins(judgments: Iterable[AttributeJudgment]) -> list[AttributeJudgment]:
    latest: dict[tuple, AttributeJudgment] = {}
    for judgment in judgments:
        latest[judgment.key()] = judgment
    return [latest[key] for key in sorted(latest)]


def _latest_wins_reports(judgments: Iterable[ReportLevelJudgment]) -> list[ReportLevelJudgment]:
    latest: dict[tuple, ReportLevelJudgment] = {}
    for judgment in judgments:
        latest[judgment.key()] = judgment
    return [latest[key] for key in sorted(latest)]


def _cell(k: int, n: int) -> Cell:
    low, high = wilson_ci(k, n)
    return Cell(k=k, n=n, accuracy=k / n, ci_low=low, ci_high=high)


def accuracy_levels(judgments: list[AttributeJudgment],
                    report_judgments: Optional[list[ReportLevelJudgment]] = None,
                    spurious: Optional[list[SpuriousLesion]] = None,
                    dedupe: bool = False) -> EvalSummary:
    """Aggregate judgments into the category x level accuracy grid.

    Attribute level counts judgments; lesion level counts (reader, pair,
    label) units, correct iff every attribute judgment is correct;
    document level counts (reader, pair, report) units per category,
    clean iff the report has no incorrect judgment and no spurious
    lesion of that category (report-level judgments fold in directly).
    The all-attribute rate counts (reader, pair) units with zero
    incorrect judgments.  Deterministic regardless of input order.

    With ``dedupe`` enabled only the latest entry per judgment key
    counts (the review service's re-submission semantics); by default
    pooling concatenates everything it is given.
    """
    report_judgments = report_judgments or []
    spurious = spurious or []
    if not judgments and not report_judgments:
        raise EmptyInput("no judgments to aggregate")
    if dedupe:
        judgments = _latest_wins(judgments)
        report_judgments = _latest_wins_reports(report_judgments)
    else:
        judgments = sorted(judgments, key=lambda j: j.key())
        report_judgments = sorted(report_judgments, key=lambda j: j.key())

    attr_counts: dict[str, list[int]] = {}
    lesion_units: dict[tuple, bool] = {}
    doc_errors: dict[tuple, bool] = {}
    pair_units: dict[tuple, bool] = {}
    report_universe: set[tuple] = set()

    for judgment in judgments:
        code = judgment.category.value
        correct = judgment.verdict == CORRECT
        counts = attr_counts.setdefault(code, [0, 0])
        counts[1] += 1
        counts[0] += int(correct)
        lesion_key = (judgment.reader_id, judgment.pair_id, code, judgment.lesion_label)
        lesion_units[lesion_key] = lesion_units.get(lesion_key, True) and correct
        doc_key = (judgment.reader_id, judgment.pair_id, judgment.report_index, code)
        doc_errors[doc_key] = doc_errors.get(doc_key, False) or not correct
        pair_key = (judgment.reader_id, judgment.pair_id)
        pair_units[pair_key] = pair_units.get(pair_key, True) and correct
        report_universe.add((judgment.reader_id, judgment.pair_id, judgment.report_index))

    for item in spurious:
        doc_key = (item.reader_id, item.pair_id, item.report_index, item.category.value)
        doc_errors[doc_key] = True
        report_universe.add((item.reader_id, item.pair_id, item.report_index))

    for judgment in report_judgments:
        doc_key = (judgment.reader_id, judgment.pair_id, judgment.report_index,
                   judgment.category.value)
        dirty = judgment.verdict == HAS_ERRORS
        doc_errors[doc_key] = doc_errors.get(doc_key, False) or dirty
        pair_key = (judgment.reader_id, judgment.pair_id)
        pair_units[pair_key] = pair_units.get(pair_key, True) and not dirty
        report_universe.add((judgment.reader_id, judgment.pair_id, judgment.report_index))

    categories = sorted(attr_counts.keys()
                        | {key[3] for key in doc_errors}
                        | {j.category.value for j in report_judgments})

    cells: dict[tuple[str, str], Cell] = {}
    for code in categories:
        if code in attr_counts:
            k, n = attr_counts[code][0], attr_counts[code][1]
            cells[(code, "attribute")] = _cell(k, n)
        category_lesions = [ok for (_, _, c, _), ok in lesion_units.items() if c == code]
        if category_lesions:
            cells[(code, "lesion")] = _cell(sum(category_lesions), len(category_lesions))
        doc_n = 0
        doc_k = 0
        # A report with no judgments of this category is trivially clean
        # for it, so the denominator is the whole report universe.
        for reader_id, pair_id, report_index in sorted(report_universe):
            doc_key = (reader_id, pair_id, report_index, code)
            doc_n += 1
            doc_k += int(not doc_errors.get(doc_key, False))
        if doc_n:
            cells[(code, "document")] = _cell(doc_k, doc_n)

    all_pairs = _cell(sum(pair_units.values()), len(pair_units))
    return EvalSummary(cells=cells, all_attribute_pairs=all_pairs)


def lesion_verdicts(judgments: list[AttributeJudgment]) -> dict[tuple, bool]:
    """Lesion-level verdict per (reader, pair, category, label)."""
    verdicts: dict[tuple, bool] = {}
    for judgment in judgments:
        key = (judgment.reader_id, judgment.pair_id, judgment.category.value,
               judgment.lesion_label)
        verdicts[key] = verdicts.get(key, True) and judgment.verdict == CORRECT
    return verdicts


def inter_reader_agreement(a: list[AttributeJudgment],
                           b: list[AttributeJudgment]) -> float:
    """Raw lesion-level agreement over the union of identifications.

    A lesion agrees iff both readers identified it and assigned the same
    lesion-level verdict; lesions only one reader identified disagree.
    """
    pairs_a = {j.pair_id for j in a}
    pairs_b = {j.pair_id for j in b}
    if pairs_a != pairs_b:
        raise EvaluationError("readers cover different pair sets")
    verdicts_a = {key[1:]: ok for key, ok in lesion_verdicts(a).items()}
    verdicts_b = {key[1:]: ok for key, ok in lesion_verdicts(b).items()}
    union = set(verdicts_a) | set(verdicts_b)
    if not union:
        raise EmptyInput("no lesion identifications to compare")
    agreeing = sum(
        1 for key in union
        if key in verdicts_a and key in verdicts_b
        and verdicts_a[key] == verdicts_b[key])
    return agreeing / len(union)


# --- JSON-lines judgment file format -------------------------------------

def judgment_to_record(judgment: AttributeJudgment | ReportLevelJudgment | SpuriousLesion) -> dict:
    if isinstance(judgment, AttributeJudgment):
        return {"kind": "attribute", "pair_id": judgment.pair_id,
                "reader_id": judgment.reader_id, "lesion_label": judgment.lesion_label,
                "category": judgment.category.value,
                "report_index": judgment.report_index,
                "attribute": judgment.attribute, "verdict": judgment.verdict}
    if isinstance(judgment, ReportLevelJudgment):
        return {"kind": "report", "pair_id": judgment.pair_id,
                "reader_id": judgment.reader_id, "category": judgment.category.value,
                "report_index": judgment.report_index, "verdict": judgment.verdict}
    return {"kind": "spurious", "pair_id": judgment.pair_id,
            "reader_id": judgment.reader_id, "category": judgment.category.value,
            "report_index": judgment.report_index,
            "lesion_label": judgment.lesion_label}


def record_to_judgment(record: dict) -> AttributeJudgment | ReportLevelJudgment | SpuriousLesion:
    kind = record.get("kind")
    category = LesionCategory(record["category"])
    if kind == "attribute":
        return AttributeJudgment(
            pair_id=record["pair_id"], reader_id=record["reader_id"],
            lesion_label=record["lesion_label"], category=category,
            report_index=int(record["report_index"]),
            attribute=record["attribute"], verdict=record["verdict"])
    if kind == "report":
        return ReportLevelJudgment(
            pair_id=record["pair_id"], reader_id=record["reader_id"],
            category=category, report_index=int(record["report_index"]),
            verdict=record["verdict"])
    if kind == "spurious":
        return SpuriousLesion(
            pair_id=record["pair_id"], reader_id=record["reader_id"],
            category=category, report_index=int(record["report_index"]),
            lesion_label=record.get("lesion_label"))
    raise ValueError(f"unknown judgment kind {kind!r}")


def write_judgments(path: str | Path, *groups: Iterable) -> None:
    with open(path, "w", encoding="utf-8") as handle:
        for group in groups:
            for judgment in group:
                handle.write(canonical_dumps(judgment_to_record(judgment)) + "\n")


def read_judgments(path: str | Path) -> tuple[list[AttributeJudgment],
                                              list[ReportLevelJudgment],
                                              list[SpuriousLesion]]:
    attributes: list[AttributeJudgment] = []
    reports: list[ReportLevelJudgment] = []
    spurious: list[SpuriousLesion] = []
    with open(path, encoding="utf-8") as handle:
        for line in handle:
            if not line.strip():
                continue
            item = record_to_judgment(json.loads(line))
            if isinstance(item, AttributeJudgment):
                attributes.append(item)
            elif isinstance(item, ReportLevelJudgment):
                reports.append(item)
            else:
                spurious.append(item)
    return attributes, reports, spurious


def summarize_judgments(attributes: list[AttributeJudgment],
                        reports: Optional[list[ReportLevelJudgment]] = None,
                        spurious: Optional[list[SpuriousLesion]] = None) -> EvalSummary:
    """The one summary entry point shared by the offline evaluator and the
    review service, so both emit byte-identical canonical JSON.

    Inter-reader agreement is attached iff exactly two readers appear.
    """
    reports = reports or []
    spurious = spurious or []
    summary = accuracy_levels(attributes, reports, spurious)
    reader_ids = sorted({j.reader_id for j in attributes}
                        | {j.reader_id for j in reports})
    if len(reader_ids) == 2:
        split = {rid: [j for j in attributes if j.reader_id == rid]
                 for rid in reader_ids}
        try:
            summary.agreement_rate = inter_reader_agreement(
                split[reader_ids[0]], split[reader_ids[1]])
        except (EvaluationError, EmptyInput):
            summary.agreement_rate = None
    return summary


def summary_table(summary: EvalSummary) -> str:
    """Aligned plain-text category x level grid."""
    lines = [f"{'category':<10}{'level':<12}{'k':>6}{'n':>6}{'accuracy':>10}"
             f"{'ci_low':>9}{'ci_high':>9}"]
    for (category, level) in sorted(summary.cells):
        cell = summary.cells[(category, level)]
        lines.append(f"{category:<10}{level:<12}{cell.k:>6}{cell.n:>6}"
                     f"{cell.accuracy:>10.3f}{cell.ci_low:>9.3f}{cell.ci_high:>9.3f}")
    cell = summary.all_attribute_pairs
    lines.append(f"{'ALL':<10}{'pair':<12}{cell.k:>6}{cell.n:>6}"
                 f"{cell.accuracy:>10.3f}{cell.ci_low:>9.3f}{cell.ci_high:>9.3f}")
    if summary.agreement_rate is not None:
        lines.append(f"inter-reader lesion agreement: {summary.agreement_rate:.3f}")
    return "\n".join(lines)
