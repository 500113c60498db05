"""Strict schema gate between raw backend text and typed extractions.

The gate parses JSON, applies a small whitelist of logged coercions
(digit-string sizes, missing lesion lists) and rejects everything else:
unknown fields, fractional sizes, malformed locators, wrong report
counts.  Nothing is ever dropped silently; every deviation from the
canonical form shows up either in ``coercions_applied`` or as a
violation.  There is deliberately no fuzzy JSON repair: malformed JSON
goes back to the model through the retry loop.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from typing import Any, Optional

from .model import (
    Lesion,
    PairExtraction,
    ReportExtraction,
    SE_IMA_RE,
    Violation,
    validate_extraction,
)

_LESION_LIST_KEYS = ("target_lesions", "non_target_lesions", "new_lesions")
_LESION_TEXT_KEYS = ("label", "description", "se_ima", "note")


@dataclass
class GateResult:
    extraction: Optional[PairExtraction]
    violations: list[Violation] = field(default_factory=list)
    coercions_applied: list[str] = field(default_factory=list)

    @property
    def ok(self) -> bool:
        return self.extraction is not None


def strip_noise(raw: str) -> str:
    """Return the text span of the outermost JSON value.

    Leading/trailing prose and markdown code fences fall away because
    they sit outside the first balanced ``{...}`` or ``[...]`` span.
    If no balanced JSON value is found the input is returned unchanged.
    """
    for start, char in enumerate(raw):
        if char not in "{[":
            continue
        end = _match_bracket(raw, start)
        if end is None:
            continue
        candidate = raw[start:end + 1]
        try:
            json.loads(candidate)
        except json.JSONDecodeError:
            continue
        return candidate
    return raw


def _match_bracket(text: str, start: int) -> Optional[int]:
    pairs = {"{": "}", "[": "]"}
    closers = {"}", "]"}
    stack = [pairs[text[start]]]
    in_string = False
    escaped = False
    for idx in range(start + 1, len(text)):
        char = text[idx]
        if in_string:
            if escaped:
                escaped = False
            elif char == "\\":
                escaped = True
            elif char == '"':
                in_string = False
            continue
        if char == '"':
            in_string = True
        elif char in pairs:
            stack.append(pairs[char])
        elif char in closers:
            if char != stack.pop():
                return None
            if not stack:
                return idx
    return None


def parse_and_coerce(raw: str) -> GateResult:
    """Parse raw backend text into a validated pair extraction.

    Success guarantees the result passes full semantic validation; any
    failure returns the complete violation list for the repair prompt.
    """
    violations: list[Violation] = []
    coercions: list[str] = []
    try:
        data = json.loads(strip_noise(raw))
    except json.JSONDecodeError as exc:
        return GateResult(None, [Violation("malformed_json", "$", exc.msg)])

    if not isinstance(data, dict):
        return GateResult(None, [Violation(
            "schema", "$", f"expected a JSON object, got {type(data).__name__}")])
    for key in data:
        if key != "reports":
            violations.append(Violation("unknown_field", key, f"unknown field {key!r}"))
    reports_raw = data.get("reports")
    if reports_raw is None:
        violations.append(Violation("schema", "reports", "missing required key 'reports'"))
        return GateResult(None, violations)
    if not isinstance(reports_raw, list):
        violations.append(Violation("schema", "reports", "'reports' must be an array"))
        return GateResult(None, violations)
    if len(reports_raw) != 2:
        violations.append(Violation(
            "schema", "reports",
            f"this pipeline processes report pairs: expected 2 reports, got {len(reports_raw)}"))

    reports: list[ReportExtraction] = []
    for i, report_raw in enumerate(reports_raw):
        report = _gate_report(report_raw, f"reports[{i}]", violations, coercions)
        if report is not None:
            reports.append(report)

    if violations:
        return GateResult(None, violations, coercions)
    extraction = PairExtraction(reports=reports)
    semantic = validate_extraction(extraction)
    if semantic:
        return GateResult(None, semantic, coercions)
    return GateResult(extraction, [], coercions)


def _gate_report(raw: Any, path: str, violations: list[Violation],
                 coercions: list[str]) -> Optional[ReportExtraction]:
    if not isinstance(raw, dict):
        violations.append(Violation("schema", path, "report must be a JSON object"))
        return None
    known = {"study_uid", *_LESION_LIST_KEYS}
    for key in raw:
        if key not in known:
            violations.append(Violation("unknown_field", f"{path}.{key}",
                                        f"unknown field {key!r}"))
    study_uid = raw.get("study_uid")
    if not isinstance(study_uid, str) or not study_uid:
        violations.append(Violation("schema", f"{path}.study_uid",
                                    "study_uid must be a non-empty string"))
        study_uid = ""
    lists: dict[str, list[Lesion]] = {}
    for key in _LESION_LIST_KEYS:
        list_path = f"{path}.{key}"
        value = raw.get(key)
        if value is None:
            if key not in raw:
                coercions.append(f"{list_path}: missing list -> []")
            else:
                coercions.append(f"{list_path}: null -> []")
            lists[key] = []
            continue
        if not isinstance(value, list):
            violations.append(Violation("schema", list_path, "must be an array"))
            lists[key] = []
            continue
        lesions = []
        for j, lesion_raw in enumerate(value):
            lesion = _gate_lesion(lesion_raw, f"{list_path}[{j}]", violations, coercions)
            if lesion is not None:
                lesions.append(lesion)
        lists[key] = lesions
    if violations:
        return None
    return ReportExtraction(study_uid=study_uid, **lists)


def _gate_lesion(raw: Any, path: str, violations: list[Violation],
                 coercions: list[str]) -> Optional[Lesion]:
    if not isinstance(raw, dict):
        violations.append(Violation("schema", path, "lesion must be a JSON object"))
        return None
    known = {"current_size_mm", *_LESION_TEXT_KEYS}
    for key in raw:
        if key not in known:
            violations.append(Violation("unknown_field", f"{path}.{key}",
                                        f"unknown field {key!r}"))
    fields: dict[str, Any] = {}
    for key in _LESION_TEXT_KEYS:
        value = raw.get(key)
        if value is not None and not isinstance(value, str):
            violations.append(Violation("schema", f"{path}.{key}",
                                        f"{key} must be a string or null"))
            value = None
        fields[key] = value
    se_ima = fields.get("se_ima")
    if se_ima is not None and not SE_IMA_RE.match(se_ima):
        violations.append(Violation(
            "pattern", f"{path}.se_ima",
            f"{se_ima!r} does not match the required series-image pattern"))
    size = raw.get("current_size_mm")
    size_path = f"{path}.current_size_mm"
    if size is None:
        fields["current_size_mm"] = None
    elif isinstance(size, bool):
        violations.append(Violation("schema", size_path, "size must be an integer"))
        fields["current_size_mm"] = None
    elif isinstance(size, int):
        fields["current_size_mm"] = size
    elif isinstance(size, float):
        violations.append(Violation(
            "non_integer_size", size_path,
            f"sizes must be integer millimetres, got {size!r}"))
        fields["current_size_mm"] = None
    elif isinstance(size, str) and size.isdigit():
        fields["current_size_mm"] = int(size)
        coercions.append(f"{size_path}: {size!r} -> {int(size)}")
    else:
        violations.append(Violation(
            "non_integer_size", size_path,
            f"sizes must be integer millimetres, got {size!r}"))
        fields["current_size_mm"] = None
    if violations:
        return None
    return Lesion(**fields)


def violations_to_json(violations: list[Violation]) -> str:
    """Serializable violation list for repair prompts and run manifests."""
    return json.dumps([v.as_dict() for v in violations], ensure_ascii=False,
                      sort_keys=True)
