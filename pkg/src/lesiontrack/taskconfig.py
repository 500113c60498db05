"""Task configuration: prompt template, example, lexicon and backend.

Extraction tasks are defined through JSON configuration files.  Unknown
keys are rejected outright so a typo never silently falls back to a
default, and referenced files must exist at load time.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field, fields as dataclass_fields
from importlib import resources
from pathlib import Path
from typing import Optional

from .oracle import (
    DEFAULT_HEADERS,
    DEFAULT_NONE_MARKERS,
    OracleConfig,
    POLICY_IGNORE,
    POLICY_NON_TARGET,
)

BACKEND_KINDS = ("live", "oracle", "replay")


class TaskConfigError(Exception):
    pass


def _template_path(name: str) -> Path:
    return Path(str(resources.files("lesiontrack").joinpath("templates", name)))


@dataclass
class BackendConfig:
    kind: str = "oracle"
    endpoint_url: Optional[str] = None
    model_name: str = "qwen2.5:72b-instruct-q4_K_M"
    temperature: float = 0.0
    max_retries: int = 3
    request_timeout: float = 120.0
    max_inflight: int = 4
    replay_dir: Optional[str] = None

    def validate(self) -> None:
        if self.kind not in BACKEND_KINDS:
            raise TaskConfigError(
                f"backend kind must be one of {BACKEND_KINDS}, got {self.kind!r}")
        if self.kind == "live" and not self.endpoint_url:
            raise TaskConfigError("live backend requires endpoint_url")
        if self.kind == "replay" and not self.replay_dir:
            raise TaskConfigError("replay backend requires replay_dir")
        if self.max_retries < 0 or self.max_inflight < 1:
            raise TaskConfigError("max_retries must be >= 0 and max_inflight >= 1")

    def snapshot(self) -> dict:
        return {
            "kind": self.kind,
            "endpoint_url": self.endpoint_url,
            "model_name": self.model_name,
            "temperature": self.temperature,
            "max_retries": self.max_retries,
            "request_timeout": self.request_timeout,
            "max_inflight": self.max_inflight,
            "replay_dir": self.replay_dir,
        }


@dataclass
class TaskConfig:
    task_name: str = "recist_pair_extraction"
    prompt_template: Path = field(default_factory=lambda: _template_path("default_prompt.md"))
    example: Path = field(default_factory=lambda: _template_path("default_example.md"))
    header_lexicon: dict[str, tuple[str, ...]] = field(
        default_factory=lambda: dict(DEFAULT_HEADERS))
    none_markers: tuple[str, ...] = DEFAULT_NONE_MARKERS
    other_findings_policy: str = POLICY_NON_TARGET
    backend: BackendConfig = field(default_factory=BackendConfig)
    output_dir: Optional[Path] = None

    def oracle_config(self) -> OracleConfig:
        return OracleConfig(
            headers=self.header_lexicon,
            none_markers=self.none_markers,
            other_findings_policy=self.other_findings_policy,
        )

    def validate(self) -> None:
        for path, what in ((self.prompt_template, "prompt_template"),
                           (self.example, "example")):
            if not Path(path).is_file():
                raise TaskConfigError(f"{what} file does not exist: {path}")
        if self.other_findings_policy not in (POLICY_NON_TARGET, POLICY_IGNORE):
            raise TaskConfigError(
                f"other_findings_policy must be {POLICY_NON_TARGET!r} or "
                f"{POLICY_IGNORE!r}, got {self.other_findings_policy!r}")
        self.backend.validate()


_TASK_KEYS = {
    "task_name", "prompt_template", "example", "header_lexicon",
    "none_markers", "other_findings_policy", "backend", "output_dir",
}
_BACKEND_KEYS = {f.name for f in dataclass_fields(BackendConfig)}


def load_task(path: str | Path) -> TaskConfig:
    """Load and validate a task configuration file, filling defaults."""
    base = Path(path).parent
    try:
        data = json.loads(Path(path).read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise TaskConfigError(f"invalid JSON in {path}: {exc.msg}") from exc
    if not isinstance(data, dict):
        raise TaskConfigError("task configuration must be a JSON object")
    unknown = set(data) - _TASK_KEYS
    if unknown:
        raise TaskConfigError(f"unknown configuration keys: {sorted(unknown)}")

    task = TaskConfig()
    if "task_name" in data:
        task.task_name = str(data["task_name"])
    for key in ("prompt_template", "example"):
        if key in data:
            candidate = Path(data[key])
            if not candidate.is_absolute():
                candidate = base / candidate
            setattr(task, key, candidate)
    if "header_lexicon" in data:
        lexicon = data["header_lexicon"]
        if not isinstance(lexicon, dict):
            raise TaskConfigError("header_lexicon must be an object")
        task.header_lexicon = {
            str(code): tuple(str(p).lower() for p in phrases)
            for code, phrases in lexicon.items()
        }
    if "none_markers" in data:
        task.none_markers = tuple(str(m).lower() for m in data["none_markers"])
    if "other_findings_policy" in data:
        task.other_findings_policy = str(data["other_findings_policy"])
    if "output_dir" in data:
        task.output_dir = Path(data["output_dir"])
    if "backend" in data:
        backend_raw = data["backend"]
        if not isinstance(backend_raw, dict):
            raise TaskConfigError("backend must be an object")
        unknown = set(backend_raw) - _BACKEND_KEYS
        if unknown:
            raise TaskConfigError(f"unknown backend keys: {sorted(unknown)}")
        task.backend = BackendConfig(**backend_raw)
    task.validate()
    return task


def default_task() -> TaskConfig:
    task = TaskConfig()
    task.validate()
    return task
