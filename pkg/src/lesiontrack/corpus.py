"""Corpus ingestion, cohort selection, pair formation and splitting.

The corpus file format is JSON-lines, UTF-8, one report per line with
keys ``patient_id``, ``study_uid``, ``study_date`` (ISO-8601), ``body``.
"""

from __future__ import annotations

import json
import random
from dataclasses import dataclass, field
from datetime import date
from pathlib import Path

from .model import RadiologyReport, ReportPair

REQUIRED_KEYS = ("patient_id", "study_uid", "study_date", "body")

DEFAULT_KEYWORD = "target"
DEFAULT_MIN_HITS = 2


class CorpusError(Exception):
    pass


class MalformedLine(CorpusError):
    def __init__(self, line_no: int, reason: str):
        super().__init__(f"line {line_no}: {reason}")
        self.line_no = line_no


class DuplicateStudyUid(CorpusError):
    def __init__(self, study_uid: str, line_no: int):
        super().__init__(f"line {line_no}: duplicate study_uid {study_uid!r}")
        self.study_uid = study_uid


class UnparseableDate(CorpusError):
    def __init__(self, line_no: int, value: str):
        super().__init__(f"line {line_no}: unparseable study_date {value!r}")
        self.line_no = line_no


@dataclass
class Corpus:
    reports: list[RadiologyReport] = field(default_factory=list)

    @property
    def index(self) -> dict[str, list[RadiologyReport]]:
        """patient_id -> reports sorted ascending by study date."""
        by_patient: dict[str, list[RadiologyReport]] = {}
        for report in self.reports:
            by_patient.setdefault(report.patient_id, []).append(report)
        for reports in by_patient.values():
            reports.sort(key=lambda r: (r.study_date, r.study_uid))
        return by_patient


def load_corpus(path: str | Path) -> Corpus:
    """Load a JSON-lines corpus file.

    Every non-empty line must be a complete report object; blank lines
    are tolerated and skipped.
    """
    reports: list[RadiologyReport] = []
    seen_uids: set[str] = set()
    with open(path, encoding="utf-8") as handle:
        for line_no, line in enumerate(handle, start=1):
            if not line.strip():
                continue
            try:
                record = json.loads(line)
            except json.JSONDecodeError as exc:
                raise MalformedLine(line_no, f"invalid JSON ({exc.msg})") from exc
            if not isinstance(record, dict):
                raise MalformedLine(line_no, "expected a JSON object")
            missing = [k for k in REQUIRED_KEYS if k not in record]
            if missing:
                raise MalformedLine(line_no, f"missing keys: {', '.join(missing)}")
            if not isinstance(record["body"], str) or not record["body"]:
                raise MalformedLine(line_no, "body must be a non-empty string")
            try:
                study_date = date.fromisoformat(str(record["study_date"]))
            except ValueError as exc:
                raise UnparseableDate(line_no, str(record["study_date"])) from exc
            study_uid = str(record["study_uid"])
            if study_uid in seen_uids:
                raise DuplicateStudyUid(study_uid, line_no)
            seen_uids.add(study_uid)
            reports.append(RadiologyReport(
                patient_id=str(record["patient_id"]),
                study_uid=study_uid,
                study_date=study_date,
                body=record["body"],
            ))
    return Corpus(reports=reports)


def dump_corpus(corpus: Corpus, path: str | Path) -> None:
    with open(path, "w", encoding="utf-8") as handle:
        for report in corpus.reports:
            handle.write(json.dumps({
                "patient_id": report.patient_id,
                "study_uid": report.study_uid,
                "study_date": report.study_date.isoformat(),
                "body": report.body,
            }, ensure_ascii=False, sort_keys=True) + "\n")


def select_cohort(corpus: Corpus, keyword: str = DEFAULT_KEYWORD,
                  min_hits: int = DEFAULT_MIN_HITS) -> list[str]:
    """Patients with more than one report and the keyword occurring in at
    least ``min_hits`` distinct reports (case-insensitive substring)."""
    if min_hits < 1:
        raise ValueError("min_hits must be >= 1")
    needle = keyword.lower()
    selected = []
    for patient_id, reports in sorted(corpus.index.items()):
        if len(reports) < 2:
            continue
        hits = sum(1 for r in reports if needle in r.body.lower())
        if hits >= min_hits:
            selected.append(patient_id)
    return selected


def form_pairs(corpus: Corpus, patients: list[str],
               keyword: str = DEFAULT_KEYWORD) -> list[ReportPair]:
    """Consecutive-timepoint pairs per patient where both reports contain
    the cohort keyword, ordered by (patient_id, baseline date)."""
    index = corpus.index
    needle = keyword.lower()
    pairs: list[ReportPair] = []
    for patient_id in sorted(set(patients)):
        reports = index.get(patient_id, [])
        for earlier, later in zip(reports, reports[1:]):
            if needle in earlier.body.lower() and needle in later.body.lower():
                pairs.append(ReportPair(
                    patient_id=patient_id, baseline=earlier, followup=later))
    pairs.sort(key=lambda p: (p.patient_id, p.baseline.study_date, p.baseline.study_uid))
    return pairs


def split_debug_test(pairs: list[ReportPair], n_debug: int,
                     seed: int) -> tuple[list[ReportPair], list[ReportPair]]:
    """Deterministic seeded shuffle; first ``n_debug`` go to the debug set,
    the rest to the test set.  Disjoint and jointly exhaustive."""
    if n_debug < 0 or n_debug > len(pairs):
        raise ValueError(f"n_debug must be in [0, {len(pairs)}], got {n_debug}")
    shuffled = list(pairs)
    random.Random(seed).shuffle(shuffled)
    return shuffled[:n_debug], shuffled[n_debug:]


def pairs_to_jsonl(pairs: list[ReportPair], path: str | Path) -> None:
    with open(path, "w", encoding="utf-8") as handle:
        for pair in pairs:
            handle.write(json.dumps(pair_record(pair), ensure_ascii=False, sort_keys=True) + "\n")


def pair_record(pair: ReportPair) -> dict:
    def report_record(report: RadiologyReport) -> dict:
        return {
            "patient_id": report.patient_id,
            "study_uid": report.study_uid,
            "study_date": report.study_date.isoformat(),
            "body": report.body,
        }
    return {
        "pair_id": pair.pair_id,
        "patient_id": pair.patient_id,
        "baseline": report_record(pair.baseline),
        "followup": report_record(pair.followup),
    }


def pairs_from_jsonl(path: str | Path) -> list[ReportPair]:
    pairs = []
    with open(path, encoding="utf-8") as handle:
        for line in handle:
            if not line.strip():
                continue
            record = json.loads(line)
            pairs.append(ReportPair(
                patient_id=record["patient_id"],
                baseline=RadiologyReport(**record["baseline"]),
                followup=RadiologyReport(**record["followup"]),
            ))
    return pairs
