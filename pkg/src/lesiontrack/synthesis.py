"""Synthetic Dutch report-pair corpus with embedded ground truth.

Every generated pair satisfies the generator's defining contract: the
rule-based extractor recovers the embedded truth exactly.  Rendering
choices are therefore constrained to forms the extractor's rules cover:
anatomies never end in a bare integer, prose-only findings only close a
section, and wrap points never fall after a row terminator.
"""

from __future__ import annotations

import json
import math
import random
from dataclasses import dataclass, field
from datetime import date, timedelta
from pathlib import Path
from typing import Optional

from .corpus import Corpus
from .model import (
    Lesion,
    LesionCategory,
    PairExtraction,
    RadiologyReport,
    ReportExtraction,
    ReportPair,
    canonical_dict,
    make_label,
)
from .linking import normalize_description
from .oracle import NOT_MEASURABLE_NOTE, OTHER_FINDINGS_NOTE, RESOLVED_NOTE

ANATOMY_POOL = (
    "Lever segment 4a",
    "Lever segment 4b",
    "Leverlaesie rechterkwab",
    "Leverlaesie linkerkwab",
    "Longnodule rechter onderkwab",
    "Longnodule linker onderkwab",
    "Longnodule rechter bovenkwab",
    "Longnodule linker bovenkwab",
    "Lymfeklier mediastinaal",
    "Lymfeklier hilair rechts",
    "Lymfeklier hilair links",
    "Lymfeklier retroperitoneaal",
    "Lymfeklier para-aortaal",
    "Lymfeklier iliacaal rechts",
    "Bijnier links",
    "Bijnier rechts",
    "Miltlaesie",
    "Nierlaesie links",
    "Nierlaesie rechts",
    "Pancreaslaesie corpus",
    "Pancreaslaesie staart",
    "Botlaesie wervel l3",
    "Botlaesie os ilium links",
    "Peritoneale nodus",
    "Subcutane nodus buikwand",
    "Pleurale verdikking rechts",
    "Pleurale verdikking links",
    "Ovariaallaesie links",
    "Weke delen massa bekken",
    "Mesenteriaal klierpakket",
)

FOOTNOTE_TEXTS = ("moeilijk meetbaar", "deels necrotisch", "confluerende massa")

OTHER_FINDINGS_TEXTS = (
    "Status na cholecystectomie.",
    "Degeneratieve veranderingen van de wervelkolom.",
    "Geringe pleuravocht beiderzijds.",
    "Status na hemicolectomie rechts.",
)

HEADERS = {
    "TL": "Target laesies:",
    "NTL": "Non-target laesies:",
    "NL": "Nieuwe laesies:",
    "OTHER": "Overige bevindingen:",
}

MAX_COUNTS = {"TL": 8, "NTL": 12, "NL": 5}

_TERMINATORS = {"-", "--"}


@dataclass(frozen=True)
class CompositionProfile:
    """Mean lesion counts and edge-case rates driving generation."""

    mean_target: float = 2.6
    mean_non_target: float = 5.0
    mean_new: float = 0.91
    wrapped_row_rate: float = 0.1
    not_measurable_rate: float = 0.08
    resolved_rate: float = 0.08
    footnote_rate: float = 0.15
    prose_finding_rate: float = 0.15
    other_findings_rate: float = 0.3

    @classmethod
    def from_dict(cls, data: dict) -> "CompositionProfile":
        known = set(cls.__dataclass_fields__)
        unknown = set(data) - known
        if unknown:
            raise ValueError(f"unknown profile keys: {sorted(unknown)}")
        return cls(**data)


@dataclass
class SyntheticPair:
    pair: ReportPair
    truth: PairExtraction


@dataclass
class _PlannedLesion:
    """Generator-internal plan for one lesion across both timepoints."""

    anatomy: str
    category: LesionCategory
    label: str = ""
    base_size: Optional[int] = None
    base_history: list[int] = field(default_factory=list)
    followup_size: Optional[int] = None
    followup_flag: Optional[str] = None  # "nm" | "dash" | None
    base_se_ima: Optional[str] = None
    followup_se_ima: Optional[str] = None
    prose_text: Optional[str] = None  # renders as prose instead of a table row


def _poisson(rng: random.Random, mean: float, cap: int) -> int:
    # Knuth's method; means here are small so this stays cheap.
    threshold = math.exp(-mean)
    k, product = 0, 1.0
    while True:
        product *= rng.random()
        if product <= threshold:
            return min(k, cap)
        k += 1


def _se_ima(rng: random.Random) -> str:
    return f"{rng.randint(1, 12)}-{rng.randint(1, 1500)}"


def _wrap_row(rng: random.Random, text: str, rate: float) -> list[str]:
    """Maybe split a row across two physical lines at a safe point: the
    first segment must not end in a row terminator or the reassembly
    rule would close the row early."""
    tokens = text.split()
    if len(tokens) < 2 or rng.random() >= rate:
        return [text]
    valid = [
        i for i in range(1, len(tokens))
        if tokens[i - 1] not in _TERMINATORS
        and tokens[i - 1].lower() != "nm"
        and "-" not in tokens[i - 1]
    ]
    if not valid:
        return [text]
    split_at = rng.choice(valid)
    return [" ".join(tokens[:split_at]), " ".join(tokens[split_at:])]


def _render_size_row(anatomy: str, history: list[int], size: Optional[int],
                     flag: Optional[str], se_ima: Optional[str],
                     footnote_marker: bool) -> str:
    parts = [anatomy + "*" if footnote_marker else anatomy]
    parts.extend(str(v) for v in history)
    if flag == "nm":
        parts.append("nm")
    elif flag == "dash":
        parts.append("--")
    elif size is not None:
        parts.append(str(size))
    if se_ima is not None:
        parts.append(se_ima)
    return " ".join(parts)


class SyntheticCorpusGenerator:
    def __init__(self, seed: int, profile: Optional[CompositionProfile] = None):
        self.rng = random.Random(seed)
        self.profile = profile or CompositionProfile()

    def generate(self, n_pairs: int) -> list[SyntheticPair]:
        if n_pairs < 1:
            raise ValueError("n_pairs must be >= 1")
        return [self._generate_pair(i) for i in range(n_pairs)]

    def _generate_pair(self, index: int) -> SyntheticPair:
        rng, profile = self.rng, self.profile
        patient_id = f"P{index:04d}"
        base_uid = f"1.2.840.99999.{index:04d}.{rng.randint(10 ** 8, 10 ** 9 - 1)}.1"
        follow_uid = f"1.2.840.99999.{index:04d}.{rng.randint(10 ** 8, 10 ** 9 - 1)}.2"
        base_date = date(2021, 3, 1) + timedelta(days=rng.randint(0, 1100))
        follow_date = base_date + timedelta(days=rng.randint(42, 120))

        n_tl = _poisson(rng, profile.mean_target, MAX_COUNTS["TL"])
        n_ntl = _poisson(rng, profile.mean_non_target, MAX_COUNTS["NTL"])
        n_nl = _poisson(rng, profile.mean_new, MAX_COUNTS["NL"])
        anatomies = rng.sample(ANATOMY_POOL, n_tl + n_ntl + n_nl)

        tracked: list[_PlannedLesion] = []
        pos = 0
        for category, count in ((LesionCategory.TARGET, n_tl),
                                (LesionCategory.NON_TARGET, n_ntl)):
            ordinal = 0
            for _ in range(count):
                lesion = self._plan_tracked(rng, anatomies[pos], category)
                pos += 1
                ordinal += 1
                lesion.label = make_label(category, ordinal,
                                          normalize_description(lesion.anatomy))
                tracked.append(lesion)
        new_lesions: list[_PlannedLesion] = []
        for ordinal in range(1, n_nl + 1):
            lesion = self._plan_new(rng, anatomies[pos])
            pos += 1
            new_lesions.append(lesion)

        # The last non-target lesion may render as a prose-only finding;
        # its slug, and therefore its label, follows the full prose text.
        ntl_lesions = [l for l in tracked if l.category is LesionCategory.NON_TARGET]
        if ntl_lesions and rng.random() < profile.prose_finding_rate:
            prose = ntl_lesions[-1]
            self._make_prose_ntl(prose)
            prose.label = make_label(LesionCategory.NON_TARGET, len(ntl_lesions),
                                     normalize_description(prose.prose_text or ""))
        if new_lesions and rng.random() < profile.prose_finding_rate:
            self._make_prose_nl(new_lesions[-1])
        # Labels for new lesions, after prose texts are fixed.
        for ordinal, lesion in enumerate(new_lesions, start=1):
            text = lesion.prose_text or lesion.anatomy
            lesion.label = make_label(LesionCategory.NEW, ordinal,
                                      normalize_description(text))

        other_text: Optional[str] = None
        if rng.random() < profile.other_findings_rate:
            other_text = rng.choice(OTHER_FINDINGS_TEXTS)

        base_body, base_truth = self._render_report(
            rng, base_uid, base_date, None, tracked, [], other_text, is_baseline=True)
        follow_body, follow_truth = self._render_report(
            rng, follow_uid, follow_date, base_date, tracked, new_lesions,
            other_text, is_baseline=False)

        pair = ReportPair(
            patient_id=patient_id,
            baseline=RadiologyReport(patient_id=patient_id, study_uid=base_uid,
                                     study_date=base_date, body=base_body),
            followup=RadiologyReport(patient_id=patient_id, study_uid=follow_uid,
                                     study_date=follow_date, body=follow_body),
        )
        return SyntheticPair(pair=pair,
                             truth=PairExtraction(reports=[base_truth, follow_truth]))

    def _plan_tracked(self, rng: random.Random, anatomy: str,
                      category: LesionCategory) -> _PlannedLesion:
        profile = self.profile
        base_size = rng.randint(6, 60)
        history = sorted((rng.randint(6, 70) for _ in range(rng.randint(0, 2))),
                         reverse=True)
        roll = rng.random()
        if roll < profile.not_measurable_rate:
            flag, follow_size, follow_se = "nm", None, _se_ima(rng)
        elif roll < profile.not_measurable_rate + profile.resolved_rate:
            flag, follow_size, follow_se = "dash", None, None
        else:
            flag = None
            follow_size = max(4, base_size + rng.randint(-8, 8))
            follow_se = _se_ima(rng)
        return _PlannedLesion(
            anatomy=anatomy, category=category,
            base_size=base_size, base_history=history,
            followup_size=follow_size, followup_flag=flag,
            base_se_ima=_se_ima(rng), followup_se_ima=follow_se,
        )

    def _plan_new(self, rng: random.Random, anatomy: str) -> _PlannedLesion:
        return _PlannedLesion(
            anatomy=anatomy, category=LesionCategory.NEW,
            followup_size=rng.randint(5, 35), followup_se_ima=_se_ima(rng),
        )

    @staticmethod
    def _make_prose_ntl(lesion: _PlannedLesion) -> None:
        lesion.prose_text = f"{lesion.anatomy}, niet goed afgrensbaar"
        lesion.base_size = None
        lesion.base_history = []
        lesion.base_se_ima = None
        lesion.followup_size = None
        lesion.followup_flag = None
        lesion.followup_se_ima = None

    @staticmethod
    def _make_prose_nl(lesion: _PlannedLesion) -> None:
        lesion.prose_text = f"Nieuwe laesie {lesion.anatomy.lower()}, niet goed meetbaar"
        lesion.followup_size = None
        lesion.followup_se_ima = None

    def _render_report(self, rng: random.Random, study_uid: str, study_date: date,
                       prev_date: Optional[date], tracked: list[_PlannedLesion],
                       new_lesions: list[_PlannedLesion], other_text: Optional[str],
                       is_baseline: bool) -> tuple[str, ReportExtraction]:
        profile = self.profile
        truth = ReportExtraction(study_uid=study_uid)
        compare = (f"Vergelijk: onderzoek d.d. {prev_date.isoformat()}."
                   if prev_date else "Vergelijk: geen eerder onderzoek beschikbaar.")
        lines = [
            f"CT thorax/abdomen d.d. {study_date.isoformat()}.",
            "Klinische gegevens: oncologische follow-up, responsevaluatie.",
            compare,
            "",
        ]

        footnote_text: Optional[str] = None
        footnoted_id: Optional[int] = None
        if rng.random() < profile.footnote_rate:
            eligible = [
                l for l in tracked
                if l.prose_text is None
                and (l.base_size if is_baseline else l.followup_size) is not None
            ]
            if eligible:
                chosen = rng.choice(eligible)
                footnoted_id = id(chosen)
                footnote_text = rng.choice(FOOTNOTE_TEXTS)

        for category in (LesionCategory.TARGET, LesionCategory.NON_TARGET):
            lines.append(HEADERS[category.value])
            rows_emitted = 0
            for lesion in tracked:
                if lesion.category is not category:
                    continue
                row, truth_lesion = self._render_tracked(
                    lesion, is_baseline, footnoted_id, footnote_text)
                lines.extend(_wrap_row(rng, row, profile.wrapped_row_rate))
                truth.lesions_of(category).append(truth_lesion)
                rows_emitted += 1
            if rows_emitted == 0:
                lines.append("geen")
            if footnote_text is not None and any(
                    l.category is category and id(l) == footnoted_id for l in tracked):
                lines.append(f"* {footnote_text}")
            lines.append("")

        lines.append(HEADERS["NL"])
        if is_baseline or not new_lesions:
            lines.append("geen")
        else:
            for lesion in new_lesions:
                if lesion.prose_text is not None:
                    row = lesion.prose_text
                    truth_lesion = Lesion(label=lesion.label, description=row,
                                          current_size_mm=None, se_ima=None, note=None)
                else:
                    row = _render_size_row(lesion.anatomy, [], lesion.followup_size,
                                           None, lesion.followup_se_ima, False)
                    truth_lesion = Lesion(label=lesion.label, description=lesion.anatomy,
                                          current_size_mm=lesion.followup_size,
                                          se_ima=lesion.followup_se_ima, note=None)
                lines.extend(_wrap_row(rng, row, profile.wrapped_row_rate))
                truth.new_lesions.append(truth_lesion)
        lines.append("")

        if other_text is not None:
            lines.append(HEADERS["OTHER"])
            lines.extend(_wrap_row(rng, other_text, profile.wrapped_row_rate))
            lines.append("")
            ordinal = len(truth.non_target_lesions) + 1
            truth.non_target_lesions.append(Lesion(
                label=make_label(LesionCategory.NON_TARGET, ordinal,
                                 normalize_description(other_text)),
                description=other_text, current_size_mm=None, se_ima=None,
                note=OTHER_FINDINGS_NOTE))

        lines.append("Conclusie:")
        lines.append("Bevindingen zoals boven beschreven.")
        return "\n".join(lines) + "\n", truth

    def _render_tracked(self, lesion: _PlannedLesion, is_baseline: bool,
                        footnoted_id: Optional[int],
                        footnote_text: Optional[str]) -> tuple[str, Lesion]:
        footnoted = footnoted_id == id(lesion)
        if lesion.prose_text is not None:
            return lesion.prose_text, Lesion(
                label=lesion.label, description=lesion.prose_text,
                current_size_mm=None, se_ima=None, note=None)
        if is_baseline:
            row = _render_size_row(lesion.anatomy, lesion.base_history,
                                   lesion.base_size, None, lesion.base_se_ima,
                                   footnoted)
            return row, Lesion(
                label=lesion.label, description=lesion.anatomy,
                current_size_mm=lesion.base_size, se_ima=lesion.base_se_ima,
                note=footnote_text if footnoted else None)
        history = lesion.base_history + ([lesion.base_size] if lesion.base_size else [])
        row = _render_size_row(lesion.anatomy, history, lesion.followup_size,
                               lesion.followup_flag, lesion.followup_se_ima,
                               footnoted)
        note_parts = []
        if lesion.followup_flag == "dash":
            note_parts.append(RESOLVED_NOTE)
        elif lesion.followup_flag == "nm":
            note_parts.append(NOT_MEASURABLE_NOTE)
        if footnoted and footnote_text:
            note_parts.append(footnote_text)
        return row, Lesion(
            label=lesion.label, description=lesion.anatomy,
            current_size_mm=lesion.followup_size,
            se_ima=lesion.followup_se_ima,
            note="; ".join(note_parts) if note_parts else None)


def generate_synthetic(n_pairs: int, seed: int,
                       profile: Optional[CompositionProfile] = None) -> list[SyntheticPair]:
    """Generate a seeded synthetic corpus; byte-identical for equal inputs."""
    return SyntheticCorpusGenerator(seed, profile).generate(n_pairs)


def synthetic_corpus(pairs: list[SyntheticPair]) -> Corpus:
    reports = []
    for item in pairs:
        reports.append(item.pair.baseline)
        reports.append(item.pair.followup)
    return Corpus(reports=reports)


def write_synthetic(pairs: list[SyntheticPair], reports_path: str | Path,
                    truth_path: str | Path) -> None:
    """Emit the two corpus files: reports JSON-lines and the truth file
    keyed by pair id."""
    with open(reports_path, "w", encoding="utf-8") as handle:
        for item in pairs:
            for report in (item.pair.baseline, item.pair.followup):
                handle.write(json.dumps({
                    "patient_id": report.patient_id,
                    "study_uid": report.study_uid,
                    "study_date": report.study_date.isoformat(),
                    "body": report.body,
                }, ensure_ascii=False, sort_keys=True) + "\n")
    with open(truth_path, "w", encoding="utf-8") as handle:
        for item in pairs:
            handle.write(json.dumps({
                "pair_id": item.pair.pair_id,
                "truth": canonical_dict(item.truth),
            }, ensure_ascii=False, sort_keys=True) + "\n")


def load_truth(path: str | Path) -> dict[str, PairExtraction]:
    truths: dict[str, PairExtraction] = {}
    with open(path, encoding="utf-8") as handle:
        for line in handle:
            if not line.strip():
                continue
            record = json.loads(line)
            truths[record["pair_id"]] = PairExtraction.model_validate(record["truth"])
    return truths
