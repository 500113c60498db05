"""Local HTTP service for human reader review of extraction runs.

Serves one run directory (manifest, source pair texts, extractions) and
persists reader judgments to an append-only JSON-lines log.  The latest
entry per (reader, pair, lesion, report, attribute) wins at read time,
so a reader can revise a verdict without losing the audit trail.
Readers are isolated: a reader's requests never reveal another reader's
verdicts beyond the aggregate summary endpoint.
"""

from __future__ import annotations

import json
import os
import threading
from pathlib import Path
from typing import Optional

from fastapi import FastAPI, Query, Request
from fastapi.responses import JSONResponse, PlainTextResponse, Response
from fastapi.staticfiles import StaticFiles

from .corpus import pairs_from_jsonl
from .evaluation import (
    AttributeJudgment,
    ReportLevelJudgment,
    SpuriousLesion,
    judgment_to_record,
    record_to_judgment,
    summarize_judgments,
)
from .model import LesionCategory, PairExtraction, canonical_dumps

JUDGMENT_LOG = "judgments.log.jsonl"

VALID_ATTRIBUTES = {"label", "size", "se_ima"}
VALID_VERDICTS = {"correct", "incorrect"}
VALID_REPORT_VERDICTS = {"clean", "has_errors"}


class RunStore:
    """In-memory view of one run directory plus its judgment log."""

    def __init__(self, run_dir: str | Path):
        self.run_dir = Path(run_dir)
        manifest_path = self.run_dir / "manifest.json"
        if not manifest_path.is_file():
            raise FileNotFoundError(f"run manifest not found: {manifest_path}")
        self.manifest = json.loads(manifest_path.read_text(encoding="utf-8"))
        self.run_id = self.manifest.get("run_id", self.run_dir.name)
        self.pairs = {p.pair_id: p for p in pairs_from_jsonl(self.run_dir / "pairs.jsonl")}
        self.extractions: dict[str, PairExtraction] = {}
        extraction_dir = self.run_dir / "extractions"
        if extraction_dir.is_dir():
            for path in sorted(extraction_dir.glob("*.json")):
                extraction = PairExtraction.model_validate(
                    json.loads(path.read_text(encoding="utf-8")))
                pair_id = path.stem.replace("__", "/")
                self.extractions[pair_id] = extraction
        self._log_path = self.run_dir / JUDGMENT_LOG
        self._write_lock = threading.Lock()
        self._entries: list[dict] = []
        if self._log_path.is_file():
            with open(self._log_path, encoding="utf-8") as handle:
                for line in handle:
                    if line.strip():
                        self._entries.append(json.loads(line))

    def known_labels(self, pair_id: str) -> set[str]:
        extraction = self.extractions.get(pair_id)
        if extraction is None:
            return set()
        labels = set()
        for report in extraction.reports:
            for category in LesionCategory:
                for lesion in report.lesions_of(category):
                    if lesion.label:
                        labels.add(lesion.label)
        return labels

    def append(self, record: dict) -> None:
        """Durably append one judgment before acknowledging it."""
        line = canonical_dumps(record) + "\n"
        with self._write_lock:
            with open(self._log_path, "a", encoding="utf-8") as handle:
                handle.write(line)
                handle.flush()
                os.fsync(handle.fileno())
            self._entries.append(record)

    def entries(self, readers: Optional[set[str]] = None) -> list[dict]:
        with self._write_lock:
            snapshot = list(self._entries)
        if readers is not None:
            snapshot = [e for e in snapshot if e.get("reader_id") in readers]
        return snapshot

    def latest_wins(self, readers: Optional[set[str]] = None) -> list[dict]:
        """Collapse the log to the newest entry per judgment identity."""
        latest: dict[tuple, dict] = {}
        for entry in self.entries(readers):
            if entry.get("kind") == "attribute":
                key = ("attribute", entry["reader_id"], entry["pair_id"],
                       entry["lesion_label"], entry["report_index"], entry["attribute"])
            elif entry.get("kind") == "report":
                key = ("report", entry["reader_id"], entry["pair_id"],
                       entry["category"], entry["report_index"])
            else:
                key = ("spurious", entry["reader_id"], entry["pair_id"],
                       entry["category"], entry["report_index"],
                       entry.get("lesion_label"))
            latest[key] = entry
        return [latest[key] for key in sorted(latest, key=repr)]


def _error(status: int, code: str, detail: str) -> JSONResponse:
    return JSONResponse(status_code=status, content={"error": code, "detail": detail})


def _canonical_response(payload) -> Response:
    return Response(content=canonical_dumps(payload), media_type="application/json")


def create_app(run_dir: str | Path, ui_dir: Optional[str | Path] = None) -> FastAPI:
    store = RunStore(run_dir)
    app = FastAPI(title="lesiontrack review service")
    app.state.store = store

    @app.get("/health")
    def health():
        return {"status": "ok", "run_id": store.run_id}

    def check_run(run: str) -> Optional[JSONResponse]:
        if run != store.run_id:
            return _error(404, "unknown_run", f"this service hosts run {store.run_id!r}")
        return None

    @app.get("/runs/{run}/pairs")
    def list_pairs(run: str):
        if (err := check_run(run)) is not None:
            return err
        items = []
        for entry in store.manifest.get("pairs", []):
            items.append({
                "pair_id": entry["pair_id"],
                "status": entry["status"],
                "has_extraction": entry["pair_id"] in store.extractions,
            })
        return _canonical_response({"run_id": store.run_id, "pairs": items})

    @app.get("/runs/{run}/pairs/{pair_id:path}")
    def get_pair(run: str, pair_id: str, reader: str = Query(default="")):
        if (err := check_run(run)) is not None:
            return err
        pair = store.pairs.get(pair_id)
        if pair is None:
            return _error(404, "unknown_pair", f"no pair {pair_id!r} in this run")
        extraction = store.extractions.get(pair_id)
        own = []
        if reader:
            own = [e for e in store.latest_wins({reader})
                   if e["pair_id"] == pair_id]
        payload = {
            "pair_id": pair_id,
            "baseline": {"study_uid": pair.baseline.study_uid,
                         "study_date": pair.baseline.study_date.isoformat(),
                         "body": pair.baseline.body},
            "followup": {"study_uid": pair.followup.study_uid,
                         "study_date": pair.followup.study_date.isoformat(),
                         "body": pair.followup.body},
            "extraction": extraction.model_dump(mode="json") if extraction else None,
            "judgments": own,
        }
        return _canonical_response(payload)

    @app.post("/runs/{run}/judgments")
    async def post_judgment(run: str, request: Request):
        if (err := check_run(run)) is not None:
            return err
        try:
            record = await request.json()
        except json.JSONDecodeError:
            return _error(400, "malformed_json", "body must be a JSON object")
        if not isinstance(record, dict):
            return _error(400, "malformed_json", "body must be a JSON object")
        try:
            judgment = record_to_judgment(record)
        except (KeyError, ValueError) as exc:
            return _error(422, "invalid_judgment", str(exc))
        if isinstance(judgment, SpuriousLesion):
            return _error(422, "invalid_judgment",
                          "spurious records are evaluator output, not reader input")
        if not judgment.reader_id:
            return _error(422, "invalid_judgment", "reader_id must be non-empty")
        if judgment.pair_id not in store.pairs:
            return _error(404, "unknown_pair", f"no pair {judgment.pair_id!r} in this run")
        if judgment.report_index not in (0, 1):
            return _error(422, "invalid_judgment", "report_index must be 0 or 1")
        if isinstance(judgment, AttributeJudgment):
            if judgment.attribute not in VALID_ATTRIBUTES:
                return _error(422, "invalid_attribute",
                              f"attribute must be one of {sorted(VALID_ATTRIBUTES)}")
            if judgment.verdict not in VALID_VERDICTS:
                return _error(422, "invalid_judgment",
                              f"verdict must be one of {sorted(VALID_VERDICTS)}")
            if judgment.lesion_label not in store.known_labels(judgment.pair_id):
                return _error(422, "unknown_lesion",
                              f"no lesion {judgment.lesion_label!r} in pair "
                              f"{judgment.pair_id!r}")
        else:
            if judgment.verdict not in VALID_REPORT_VERDICTS:
                return _error(422, "invalid_judgment",
                              f"verdict must be one of {sorted(VALID_REPORT_VERDICTS)}")
        store.append(judgment_to_record(judgment))
        return {"status": "recorded"}

    @app.get("/runs/{run}/summary")
    def summary(run: str, readers: str = Query(default="")):
        if (err := check_run(run)) is not None:
            return err
        reader_set = {r for r in readers.split(",") if r} or None
        entries = store.latest_wins(reader_set)
        attributes = []
        reports = []
        for entry in entries:
            judgment = record_to_judgment(entry)
            if isinstance(judgment, AttributeJudgment):
                attributes.append(judgment)
            elif isinstance(judgment, ReportLevelJudgment):
                reports.append(judgment)
        if not attributes and not reports:
            return _error(409, "no_judgments", "no judgments recorded yet")
        summary = summarize_judgments(attributes, reports)
        return _canonical_response(summary.as_dict())

    @app.get("/runs/{run}/export")
    def export(run: str, readers: str = Query(default="")):
        if (err := check_run(run)) is not None:
            return err
        reader_set = {r for r in readers.split(",") if r} or None
        lines = [canonical_dumps(entry) for entry in store.latest_wins(reader_set)]
        body = "\n".join(lines) + ("\n" if lines else "")
        return PlainTextResponse(content=body, media_type="application/jsonl")

    if ui_dir is not None and Path(ui_dir).is_dir():
        app.mount("/ui", StaticFiles(directory=str(ui_dir), html=True), name="ui")

    return app


def serve(run_dir: str | Path, port: int, host: str = "127.0.0.1",
          ui_dir: Optional[str | Path] = None) -> None:
    """Run the review service until interrupted."""
    import uvicorn

    app = create_app(run_dir, ui_dir=ui_dir)
    uvicorn.run(app, host=host, port=port, log_level="warning")
