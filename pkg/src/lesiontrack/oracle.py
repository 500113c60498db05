"""Deterministic rule-based extractor for plain-text RECIST tables.

Implements the extraction conventions the pipeline's prompt states in
natural language, as executable rules:

  1. in a table row, the rightmost bare integer immediately before the
     last valid series-image token is the current measurement; earlier
     trailing integers are historical sizes;
  2. series-image tokens are never interpreted as sizes;
  3. prose-only findings become lesions with null sizes;
  4. every lesion gets a stable category-prefixed label derived from
     its anatomical description;
  5. sizes are integer millimetres.

The oracle doubles as the ground-truth generator's contract and as a
non-model extraction backend, so everything here must be byte-stable:
identical input text yields identical canonical output.
"""

from __future__ import annotations

import re
from dataclasses import dataclass, field
from typing import Optional

from .linking import link_pair, normalize_description
from .model import (
    Lesion,
    LesionCategory,
    PairExtraction,
    ReportExtraction,
    ReportPair,
    SeIma,
    make_label,
    parse_se_ima,
)

OTHER_FINDINGS = "OTHER"

NOT_MEASURABLE_NOTE = "not_measurable"
RESOLVED_NOTE = "resolved"
OTHER_FINDINGS_NOTE = "other_findings"

_BARE_INT_RE = re.compile(r"^\d+$")
_DASH_TOKENS = {"-", "--"}
_NM_TOKEN = "nm"
_FOOTNOTE_LINE_RE = re.compile(r"^(\*+)\s+(.*\S)\s*$")
_FOOTNOTE_MARK_RE = re.compile(r"^(.*?)(\*+)$")

DEFAULT_HEADERS: dict[str, tuple[str, ...]] = {
    "TL": ("target laesies", "target lesies", "targetlaesies", "doellaesies"),
    "NTL": (
        "non-target laesies",
        "non target laesies",
        "non-target lesies",
        "nontarget laesies",
    ),
    "NL": ("nieuwe laesies", "nieuwe lesies"),
    OTHER_FINDINGS: ("overige bevindingen", "other findings"),
}

DEFAULT_NONE_MARKERS: tuple[str, ...] = (
    "geen",
    "geen nieuwe laesies",
    "geen afwijkingen",
)

POLICY_NON_TARGET = "non_target"
POLICY_IGNORE = "ignore"


@dataclass(frozen=True)
class OracleConfig:
    """Header lexicon and other-findings policy; deployment configuration,
    not code, because section headers vary by reporting system."""

    headers: dict[str, tuple[str, ...]] = field(
        default_factory=lambda: dict(DEFAULT_HEADERS))
    none_markers: tuple[str, ...] = DEFAULT_NONE_MARKERS
    other_findings_policy: str = POLICY_NON_TARGET

    def header_category(self, line: str) -> Optional[str]:
        cleaned = line.strip().rstrip(":").strip().lower()
        for category, phrases in self.headers.items():
            if cleaned in phrases:
                return category
        return None

    def is_none_marker(self, text: str) -> bool:
        return text.strip().rstrip(".").strip().lower() in self.none_markers


DEFAULT_CONFIG = OracleConfig()


@dataclass
class RawRow:
    """One logical table row after wrapped-line reassembly."""

    text: str
    source_lines: list[int]


@dataclass
class TableSection:
    category: str  # "TL" | "NTL" | "NL" | OTHER_FINDINGS
    header_line: int
    rows: list[RawRow]


@dataclass
class RowParse:
    description: str
    historical_sizes_mm: list[int]
    current_size_mm: Optional[int]
    se_ima: Optional[SeIma]
    flags: set[str]
    footnote: Optional[str] = None


FLAG_NOT_MEASURABLE = "not_measurable"
FLAG_RESOLVED = "resolved"
FLAG_FOOTNOTED = "footnoted"


def _is_terminated(line: str) -> bool:
    """A physical line is a complete row iff it ends in a series-image
    token, a dash marker or an ``nm`` marker."""
    tokens = line.split()
    if not tokens:
        return False
    last = tokens[-1]
    return (
        parse_se_ima(last) is not None
        or last in _DASH_TOKENS
        or last.lower() == _NM_TOKEN
    )


def extract_footnotes(lines: list[str]) -> tuple[list[tuple[int, str]], dict[str, str]]:
    """Split out footnote lines (``* some text``) from body lines.

    Returns the remaining (line_no, text) pairs plus a marker->text map.
    Footnote lines must be removed before row reassembly or they would
    be glued onto unterminated rows.
    """
    kept: list[tuple[int, str]] = []
    footnotes: dict[str, str] = {}
    for no, line in enumerate(lines):
        match = _FOOTNOTE_LINE_RE.match(line.strip())
        if match:
            footnotes.setdefault(match.group(1), match.group(2))
        else:
            kept.append((no, line))
    return kept, footnotes


def detect_sections(body: str, config: OracleConfig = DEFAULT_CONFIG) -> list[TableSection]:
    """Locate table sections by header lexicon.

    A section owns the non-blank lines that follow its header until the
    next header or a blank line.  Text before the first header is
    narrative preamble and is ignored.
    """
    lines = body.splitlines()
    kept, _ = extract_footnotes(lines)
    sections: list[TableSection] = []
    current: Optional[TableSection] = None
    pending: list[tuple[int, str]] = []

    def flush() -> None:
        nonlocal current, pending
        if current is not None:
            current.rows = reassemble_rows(pending)
            sections.append(current)
        current = None
        pending = []

    for no, line in kept:
        if not line.strip():
            flush()
            continue
        category = config.header_category(line)
        if category is not None:
            flush()
            current = TableSection(category=category, header_line=no, rows=[])
            continue
        if current is not None:
            pending.append((no, line))
    flush()
    return sections


def reassemble_rows(numbered_lines: list[tuple[int, str]]) -> list[RawRow]:
    """Re-join physically wrapped rows.

    A line that does not end in a row terminator continues onto the
    following lines until a terminator or the section ends; the parser
    must never stop at the first segment of a split row.
    """
    rows: list[RawRow] = []
    buffer: list[str] = []
    buffer_lines: list[int] = []
    for no, line in numbered_lines:
        buffer.append(line.strip())
        buffer_lines.append(no)
        if _is_terminated(line):
            rows.append(RawRow(text=" ".join(buffer), source_lines=buffer_lines))
            buffer = []
            buffer_lines = []
    if buffer:
        rows.append(RawRow(text=" ".join(buffer), source_lines=buffer_lines))
    return rows


def _strip_footnote_marker(tokens: list[str]) -> tuple[list[str], Optional[str]]:
    """Remove a trailing ``*``/``**`` marker from any token; return the
    cleaned tokens and the marker if one was present."""
    marker: Optional[str] = None
    cleaned: list[str] = []
    for token in tokens:
        if token in _DASH_TOKENS:
            cleaned.append(token)
            continue
        match = _FOOTNOTE_MARK_RE.match(token)
        if match:
            marker = match.group(2)
            if match.group(1):
                cleaned.append(match.group(1))
        else:
            cleaned.append(token)
    return cleaned, marker


def _is_measurement_token(token: str) -> bool:
    return bool(_BARE_INT_RE.match(token)) or token in _DASH_TOKENS or token.lower() == _NM_TOKEN


def parse_row(row: RawRow, footnotes: Optional[dict[str, str]] = None) -> RowParse:
    """Parse one reassembled row into description, sizes and locator.

    Tokenize on whitespace; the last series-image token anchors the
    measurement block, which is the contiguous run of bare integers and
    markers immediately before it.  Mixed alphanumeric tokens ("4a")
    never parse as sizes and stay in the description.  Rows without a
    series-image token fall back to the rightmost bare integer.
    """
    footnotes = footnotes or {}
    tokens, marker = _strip_footnote_marker(row.text.split())
    flags: set[str] = set()
    footnote_text: Optional[str] = None
    if marker is not None:
        flags.add(FLAG_FOOTNOTED)
        footnote_text = footnotes.get(marker)

    se_ima: Optional[SeIma] = None
    se_ima_index: Optional[int] = None
    for idx in range(len(tokens) - 1, -1, -1):
        parsed = parse_se_ima(tokens[idx])
        if parsed is not None:
            se_ima = parsed
            se_ima_index = idx
            break

    meas_end = se_ima_index if se_ima_index is not None else len(tokens)
    block_start = meas_end
    while block_start - 1 >= 0 and _is_measurement_token(tokens[block_start - 1]):
        block_start -= 1
    block = tokens[block_start:meas_end]

    description_tokens = tokens[:block_start]
    trailing = tokens[meas_end + 1:] if se_ima_index is not None else []

    if se_ima is None and not block:
        # Prose fallback: take the rightmost bare integer anywhere.
        for idx in range(len(tokens) - 1, -1, -1):
            if _BARE_INT_RE.match(tokens[idx]):
                block_start = idx
                while block_start - 1 >= 0 and _BARE_INT_RE.match(tokens[block_start - 1]):
                    block_start -= 1
                block = tokens[block_start:idx + 1]
                description_tokens = tokens[:block_start] + tokens[idx + 1:]
                break

    integers = [int(t) for t in block if _BARE_INT_RE.match(t)]
    if any(t.lower() == _NM_TOKEN for t in block):
        flags.add(FLAG_NOT_MEASURABLE)
    if any(t in _DASH_TOKENS for t in block):
        flags.add(FLAG_RESOLVED)

    if FLAG_NOT_MEASURABLE in flags or FLAG_RESOLVED in flags:
        current = None
        historical = integers
    elif integers:
        current = integers[-1]
        historical = integers[:-1]
    else:
        current = None
        historical = []

    description = " ".join(description_tokens)
    if trailing:
        # Anything after the last locator is stray text; keep it out of
        # the measurements but do not lose it.
        description = f"{description} {' '.join(trailing)}".strip()

    return RowParse(
        description=description,
        historical_sizes_mm=historical,
        current_size_mm=current,
        se_ima=se_ima,
        flags=flags,
        footnote=footnote_text,
    )


def _note_for(parse: RowParse, other_findings: bool) -> Optional[str]:
    parts: list[str] = []
    if FLAG_RESOLVED in parse.flags:
        parts.append(RESOLVED_NOTE)
    if FLAG_NOT_MEASURABLE in parse.flags:
        parts.append(NOT_MEASURABLE_NOTE)
    if parse.footnote:
        parts.append(parse.footnote)
    if other_findings:
        parts.append(OTHER_FINDINGS_NOTE)
    return "; ".join(parts) if parts else None


def extract_report(body: str, study_uid: str,
                   config: OracleConfig = DEFAULT_CONFIG) -> ReportExtraction:
    """Extract all lesions of one report body.

    Section rows become lesions labeled per category in row order;
    other-findings rows are folded in per the configured policy.
    """
    lines = body.splitlines()
    _, footnotes = extract_footnotes(lines)
    extraction = ReportExtraction(study_uid=study_uid)
    counters = {cat: 0 for cat in LesionCategory}
    for section in detect_sections(body, config):
        if section.category == OTHER_FINDINGS:
            if config.other_findings_policy == POLICY_IGNORE:
                continue
            category = LesionCategory.NON_TARGET
            other = True
        else:
            category = LesionCategory(section.category)
            other = False
        target_list = extraction.lesions_of(category)
        for row in section.rows:
            if config.is_none_marker(row.text):
                continue
            parse = parse_row(row, footnotes)
            counters[category] += 1
            slug = normalize_description(parse.description)
            target_list.append(Lesion(
                label=make_label(category, counters[category], slug),
                description=parse.description or None,
                current_size_mm=parse.current_size_mm,
                se_ima=parse.se_ima.render() if parse.se_ima else None,
                note=_note_for(parse, other),
            ))
    return extraction


def _relabel_followup(baseline: ReportExtraction, followup: ReportExtraction) -> None:
    """Give matched follow-up lesions their baseline labels, then assign
    fresh non-colliding labels to the remaining follow-up lesions."""
    linked = link_pair(baseline, followup)
    matched_labels: dict[int, str] = {}
    for item in linked:
        if item.baseline is not None and item.followup is not None and item.baseline.label:
            matched_labels[id(item.followup)] = item.baseline.label
    for category in LesionCategory:
        lesions = followup.lesions_of(category)
        used = {matched_labels[id(l)] for l in lesions if id(l) in matched_labels}
        next_ordinal = 1
        for lesion in lesions:
            if id(lesion) in matched_labels:
                lesion.label = matched_labels[id(lesion)]
                continue
            slug = normalize_description(lesion.description or "")
            while True:
                candidate = make_label(category, next_ordinal, slug)
                next_ordinal += 1
                if candidate not in used:
                    break
            used.add(candidate)
            lesion.label = candidate


def extract_pair(pair: ReportPair, config: OracleConfig = DEFAULT_CONFIG) -> PairExtraction:
    """Extract both reports and align labels across timepoints so the
    same anatomical lesion carries the same label in both outputs."""
    baseline = extract_report(pair.baseline.body, pair.baseline.study_uid, config)
    followup = extract_report(pair.followup.body, pair.followup.study_uid, config)
    _relabel_followup(baseline, followup)
    return PairExtraction(reports=[baseline, followup])
