"""Prompt assembly, pluggable extraction backends and the repair loop.

A backend turns a message list into assistant text: ``live`` posts to a
chat-completion HTTP endpoint, ``oracle`` answers with the rule-based
extractor's canonical JSON, ``replay`` returns recorded responses keyed
by pair id and attempt.  The repair loop re-asks with the gate's
violation list until the output validates or retries run out; every
attempt is recorded.
"""

from __future__ import annotations

import json
import os
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional, Protocol

import httpx

from . import oracle as recist_oracle
from .gate import GateResult, parse_and_coerce, violations_to_json
from .model import (
    PairExtraction,
    ReportPair,
    Violation,
    canonical_dumps,
    extraction_to_json,
)
from .taskconfig import BackendConfig, TaskConfig

API_KEY_ENV = "LESIONTRACK_API_KEY"

BASELINE_DELIMITER = "=== BASELINE REPORT (study_uid: {uid}) ==="
FOLLOWUP_DELIMITER = "=== FOLLOW-UP REPORT (study_uid: {uid}) ==="
END_DELIMITER = "=== END OF REPORTS ==="

_ESCAPE_CHAR = "\\"
_DELIMITER_MARK = "==="


class BackendError(Exception):
    pass


class EndpointUnreachable(BackendError):
    pass


class Timeout(BackendError):
    pass


class NonSuccessStatus(BackendError):
    def __init__(self, code: int, detail: str = ""):
        super().__init__(f"endpoint returned status {code}" + (f": {detail}" if detail else ""))
        self.code = code


class ReplayMiss(BackendError):
    def __init__(self, pair_id: str, attempt: int):
        super().__init__(f"no recorded response for pair {pair_id!r} attempt {attempt}")
        self.pair_id = pair_id


@dataclass(frozen=True)
class PromptBundle:
    system_text: str
    user_text: str

    def messages(self) -> list[dict[str, str]]:
        return [
            {"role": "system", "content": self.system_text},
            {"role": "user", "content": self.user_text},
        ]


@dataclass
class Attempt:
    raw_response: str
    gate: GateResult


@dataclass
class ExtractionRecord:
    pair_id: str
    attempts: list[Attempt] = field(default_factory=list)
    final: Optional[PairExtraction] = None
    backend: dict = field(default_factory=dict)
    wall_time: float = 0.0


def escape_delimiters(text: str) -> str:
    """Escape delimiter marks inside report bodies, reversibly."""
    return text.replace(_ESCAPE_CHAR, _ESCAPE_CHAR * 2).replace(
        _DELIMITER_MARK, _ESCAPE_CHAR + _DELIMITER_MARK)


def unescape_delimiters(text: str) -> str:
    out: list[str] = []
    idx = 0
    while idx < len(text):
        char = text[idx]
        if char == _ESCAPE_CHAR:
            if text.startswith(_ESCAPE_CHAR, idx + 1):
                out.append(_ESCAPE_CHAR)
                idx += 2
                continue
            if text.startswith(_DELIMITER_MARK, idx + 1):
                out.append(_DELIMITER_MARK)
                idx += 1 + len(_DELIMITER_MARK)
                continue
        out.append(char)
        idx += 1
    return "".join(out)


def schema_instructions() -> str:
    """Render the canonical output structure for the system prompt."""
    schema = PairExtraction.model_json_schema()
    return json.dumps(schema, indent=2, sort_keys=True)


def build_prompt(pair: ReportPair, task: TaskConfig) -> PromptBundle:
    """Assemble the deterministic prompt for one report pair."""
    template = Path(task.prompt_template).read_text(encoding="utf-8")
    example = Path(task.example).read_text(encoding="utf-8")
    system_text = template.replace("{schema}", schema_instructions())
    user_text = "\n".join([
        example.rstrip(),
        "",
        "Reports to process:",
        "",
        BASELINE_DELIMITER.format(uid=pair.baseline.study_uid),
        escape_delimiters(pair.baseline.body).rstrip("\n"),
        FOLLOWUP_DELIMITER.format(uid=pair.followup.study_uid),
        escape_delimiters(pair.followup.body).rstrip("\n"),
        END_DELIMITER,
    ])
    return PromptBundle(system_text=system_text, user_text=user_text)


class Backend(Protocol):
    def complete(self, messages: list[dict[str, str]], pair: ReportPair,
                 pair_id: str, attempt: int) -> str: ...


class OracleBackend:
    """Deterministic stand-in: answers with the rule-based extraction."""

    def __init__(self, config: recist_oracle.OracleConfig = recist_oracle.DEFAULT_CONFIG):
        self.config = config

    def complete(self, messages, pair, pair_id, attempt):
        return extraction_to_json(recist_oracle.extract_pair(pair, self.config))


def replay_filename(pair_id: str, attempt: int) -> str:
    # pair ids embed "/" separators, which cannot appear in filenames.
    return f"{pair_id.replace('/', '__')}.{attempt}.txt"


class ReplayBackend:
    """Returns recorded responses; optional jitter exercises ordering."""

    def __init__(self, fixture_dir: str | Path, jitter_seconds: float = 0.0,
                 jitter_seed: int = 0):
        self.fixture_dir = Path(fixture_dir)
        self.jitter_seconds = jitter_seconds
        self._jitter_state = jitter_seed

    def complete(self, messages, pair, pair_id, attempt):
        if self.jitter_seconds > 0:
            # Cheap deterministic hash so delays differ per pair.
            self._jitter_state = (self._jitter_state * 1103515245 + 12345) % (2 ** 31)
            time.sleep(self.jitter_seconds * (self._jitter_state % 100) / 100.0)
        path = self.fixture_dir / replay_filename(pair_id, attempt)
        if not path.is_file():
            raise ReplayMiss(pair_id, attempt)
        return path.read_text(encoding="utf-8")


class LiveBackend:
    """Chat-completion HTTP backend (request: model/messages/temperature)."""

    def __init__(self, cfg: BackendConfig):
        if not cfg.endpoint_url:
            raise ValueError("live backend requires an endpoint URL")
        self.cfg = cfg
        headers = {"Content-Type": "application/json"}
        api_key = os.environ.get(API_KEY_ENV)
        if api_key:
            headers["Authorization"] = f"Bearer {api_key}"
        self._client = httpx.Client(timeout=cfg.request_timeout, headers=headers)

    def complete(self, messages, pair, pair_id, attempt):
        payload = {
            "model": self.cfg.model_name,
            "messages": messages,
            "temperature": self.cfg.temperature,
        }
        try:
            response = self._client.post(self.cfg.endpoint_url, json=payload)
        except httpx.TimeoutException as exc:
            raise Timeout(str(exc)) from exc
        except httpx.TransportError as exc:
            raise EndpointUnreachable(str(exc)) from exc
        if response.status_code != 200:
            raise NonSuccessStatus(response.status_code, response.text[:200])
        try:
            body = response.json()
            return body["choices"][0]["message"]["content"]
        except (KeyError, IndexError, TypeError, ValueError) as exc:
            raise BackendError(f"malformed endpoint response: {exc}") from exc


def make_backend(cfg: BackendConfig, task: TaskConfig) -> Backend:
    if cfg.kind == "oracle":
        return OracleBackend(task.oracle_config())
    if cfg.kind == "replay":
        if not cfg.replay_dir:
            raise ValueError("replay backend requires replay_dir")
        return ReplayBackend(cfg.replay_dir)
    if cfg.kind == "live":
        return LiveBackend(cfg)
    raise ValueError(f"unknown backend kind {cfg.kind!r}")


def run_backend(bundle: PromptBundle, cfg: BackendConfig, pair: ReportPair,
                task: Optional[TaskConfig] = None, attempt: int = 0) -> str:
    """One backend call for one prompt; convenience over make_backend."""
    backend = make_backend(cfg, task or TaskConfig())
    return backend.complete(bundle.messages(), pair, pair.pair_id, attempt)


def repair_message(gate: GateResult) -> str:
    return (
        "The previous output did not validate against the required schema. "
        "Violations:\n"
        f"{violations_to_json(gate.violations)}\n"
        "Return the corrected JSON object only, with no surrounding text."
    )


def extract_with_repair(pair: ReportPair, task: TaskConfig, cfg: BackendConfig,
                        backend: Optional[Backend] = None) -> ExtractionRecord:
    """Run the validate-repair loop for one pair.

    Never raises: backend errors count as failed attempts and a fully
    failed pair is encoded as a record with ``final`` unset.
    """
    backend = backend if backend is not None else make_backend(cfg, task)
    bundle = build_prompt(pair, task)
    messages = bundle.messages()
    record = ExtractionRecord(pair_id=pair.pair_id, backend=cfg.snapshot())
    started = time.monotonic()
    for attempt in range(cfg.max_retries + 1):
        try:
            raw = backend.complete(messages, pair, pair.pair_id, attempt)
        except BackendError as exc:
            gate = GateResult(None, violations=[_backend_violation(exc)])
            record.attempts.append(Attempt(raw_response="", gate=gate))
            continue
        gate = parse_and_coerce(raw)
        record.attempts.append(Attempt(raw_response=raw, gate=gate))
        if gate.ok:
            record.final = gate.extraction
            break
        messages = messages + [
            {"role": "assistant", "content": raw},
            {"role": "user", "content": repair_message(gate)},
        ]
    record.wall_time = time.monotonic() - started
    return record


def _backend_violation(exc: BackendError) -> Violation:
    return Violation("backend_error", "$", str(exc))


def run_batch(pairs: list[ReportPair], task: TaskConfig, cfg: BackendConfig,
              backend: Optional[Backend] = None) -> list[ExtractionRecord]:
    """Process pairs with bounded concurrency; output order is input order
    and one pair's failure never aborts the batch."""
    if not pairs:
        return []
    backend = backend if backend is not None else make_backend(cfg, task)
    with ThreadPoolExecutor(max_workers=cfg.max_inflight) as pool:
        return list(pool.map(
            lambda pair: extract_with_repair(pair, task, cfg, backend=backend), pairs))


def write_run(records: list[ExtractionRecord], pairs: list[ReportPair],
              run_dir: str | Path, task: TaskConfig, cfg: BackendConfig,
              run_id: Optional[str] = None) -> Path:
    """Persist a run: manifest, source pair texts and one canonical
    extraction file per successful pair."""
    run_path = Path(run_dir)
    run_path.mkdir(parents=True, exist_ok=True)
    extractions = run_path / "extractions"
    extractions.mkdir(exist_ok=True)
    from .corpus import pairs_to_jsonl
    pairs_to_jsonl(pairs, run_path / "pairs.jsonl")
    manifest = {
        "run_id": run_id or run_path.name,
        "task": task.task_name,
        "backend": cfg.snapshot(),
        "pairs": [],
    }
    for record in records:
        status = "ok" if record.final is not None else "failed"
        entry = {
            "pair_id": record.pair_id,
            "status": status,
            "attempts": len(record.attempts),
            "wall_time": round(record.wall_time, 6),
        }
        if record.final is None and record.attempts:
            entry["violations"] = [v.as_dict()
                                   for v in record.attempts[-1].gate.violations]
        manifest["pairs"].append(entry)
        if record.final is not None:
            out = extractions / f"{record.pair_id.replace('/', '__')}.json"
            out.write_text(extraction_to_json(record.final), encoding="utf-8")
    (run_path / "manifest.json").write_text(
        canonical_dumps(manifest), encoding="utf-8")
    return run_path
