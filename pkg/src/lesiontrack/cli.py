"""Command-line entry point wiring all pipeline stages.

Stages communicate through files so each one is independently testable:

    synth -> reports.jsonl + truth.jsonl
    ingest/cohort/pair/split -> corpus and pair files
    extract -> run directory (manifest, pairs, extractions)
    judge -> judgments.jsonl
    evaluate -> summary.json (+ aligned text table)
    serve -> review HTTP service over a run directory

Exit codes: 0 success, 1 operational error, 2 usage error.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

from . import corpus as corpus_mod
from . import engine
from .evaluation import (
    EmptyInput,
    EvaluationError,
    read_judgments,
    summarize_judgments,
    summary_table,
    write_judgments,
    auto_judge,
)
from .model import PairExtraction
from .synthesis import (
    CompositionProfile,
    generate_synthetic,
    load_truth,
    write_synthetic,
)
from .taskconfig import BackendConfig, TaskConfig, TaskConfigError, default_task, load_task


class OperationalError(Exception):
    pass


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="lesiontrack",
        description="Longitudinal lesion extraction and evaluation pipeline")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("ingest", help="validate and normalize a corpus file")
    p.add_argument("--corpus", required=True)
    p.add_argument("--out", required=True)

    p = sub.add_parser("cohort", help="select patients with longitudinal keyword hits")
    p.add_argument("--corpus", required=True)
    p.add_argument("--keyword", default=corpus_mod.DEFAULT_KEYWORD)
    p.add_argument("--min-hits", type=int, default=corpus_mod.DEFAULT_MIN_HITS)
    p.add_argument("--out", required=True)

    p = sub.add_parser("pair", help="form consecutive report pairs for a cohort")
    p.add_argument("--corpus", required=True)
    p.add_argument("--patients", required=True)
    p.add_argument("--keyword", default=corpus_mod.DEFAULT_KEYWORD)
    p.add_argument("--out", required=True)

    p = sub.add_parser("split", help="seeded debug/test split of a pair file")
    p.add_argument("--pairs", required=True)
    p.add_argument("--debug", type=int, default=10)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out-debug", required=True)
    p.add_argument("--out-test", required=True)

    p = sub.add_parser("synth", help="generate a synthetic ground-truthed corpus")
    p.add_argument("--pairs", type=int, required=True)
    p.add_argument("--seed", type=int, required=True)
    p.add_argument("--profile", help="JSON file overriding composition profile fields")
    p.add_argument("--out-dir", required=True)

    p = sub.add_parser("extract", help="run the extraction engine over pairs")
    p.add_argument("--task", help="task configuration JSON file")
    p.add_argument("--backend", choices=["live", "oracle", "replay"])
    p.add_argument("--corpus", help="reports JSON-lines; consecutive pairs are formed")
    p.add_argument("--pairs", help="explicit pair JSON-lines file")
    p.add_argument("--endpoint")
    p.add_argument("--model")
    p.add_argument("--temperature", type=float)
    p.add_argument("--max-inflight", type=int)
    p.add_argument("--max-retries", type=int)
    p.add_argument("--replay-dir")
    p.add_argument("--out-dir", required=True)

    p = sub.add_parser("judge", help="auto-judge run extractions against reference truth")
    p.add_argument("--predicted", required=True, help="run directory from extract")
    p.add_argument("--reference", required=True, help="truth JSON-lines file")
    p.add_argument("--out", required=True)

    p = sub.add_parser("evaluate", help="aggregate judgment files into a summary")
    p.add_argument("--judgments", nargs="+", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--text", action="store_true", help="also print the aligned table")

    p = sub.add_parser("serve", help="serve a run for human review")
    p.add_argument("--run", required=True)
    p.add_argument("--port", type=int, default=8080)
    p.add_argument("--host", default="127.0.0.1")
    p.add_argument("--ui", help="static directory to mount at /ui")
    return parser


def _cmd_ingest(args) -> int:
    corpus = corpus_mod.load_corpus(args.corpus)
    corpus_mod.dump_corpus(corpus, args.out)
    print(f"ingested {len(corpus.reports)} reports "
          f"({len(corpus.index)} patients) -> {args.out}")
    return 0


def _cmd_cohort(args) -> int:
    if args.min_hits < 1:
        raise OperationalError("--min-hits must be >= 1")
    corpus = corpus_mod.load_corpus(args.corpus)
    patients = corpus_mod.select_cohort(corpus, args.keyword, args.min_hits)
    Path(args.out).write_text(json.dumps(patients, indent=2) + "\n", encoding="utf-8")
    print(f"selected {len(patients)} patients -> {args.out}")
    return 0


def _cmd_pair(args) -> int:
    corpus = corpus_mod.load_corpus(args.corpus)
    patients = json.loads(Path(args.patients).read_text(encoding="utf-8"))
    pairs = corpus_mod.form_pairs(corpus, patients, args.keyword)
    corpus_mod.pairs_to_jsonl(pairs, args.out)
    print(f"formed {len(pairs)} pairs -> {args.out}")
    return 0


def _cmd_split(args) -> int:
    pairs = corpus_mod.pairs_from_jsonl(args.pairs)
    try:
        debug, test = corpus_mod.split_debug_test(pairs, args.debug, args.seed)
    except ValueError as exc:
        raise OperationalError(str(exc)) from exc
    corpus_mod.pairs_to_jsonl(debug, args.out_debug)
    corpus_mod.pairs_to_jsonl(test, args.out_test)
    print(f"split {len(pairs)} pairs -> {len(debug)} debug / {len(test)} test")
    return 0


def _cmd_synth(args) -> int:
    profile = CompositionProfile()
    if args.profile:
        profile = CompositionProfile.from_dict(
            json.loads(Path(args.profile).read_text(encoding="utf-8")))
    synthetic = generate_synthetic(args.pairs, args.seed, profile)
    out_dir = Path(args.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    write_synthetic(synthetic, out_dir / "reports.jsonl", out_dir / "truth.jsonl")
    print(f"generated {len(synthetic)} pairs -> {out_dir}/reports.jsonl, "
          f"{out_dir}/truth.jsonl")
    return 0


def _load_extract_inputs(args, parser: argparse.ArgumentParser):
    if bool(args.corpus) == bool(args.pairs):
        parser.error("extract requires exactly one of --corpus or --pairs")
    if args.pairs:
        return corpus_mod.pairs_from_jsonl(args.pairs)
    corpus = corpus_mod.load_corpus(args.corpus)
    patients = sorted(corpus.index)
    return corpus_mod.form_pairs(corpus, patients)


def _cmd_extract(args, parser: argparse.ArgumentParser) -> int:
    task = load_task(args.task) if args.task else default_task()
    cfg: BackendConfig = task.backend
    if args.backend:
        cfg.kind = args.backend
    if args.endpoint:
        cfg.endpoint_url = args.endpoint
    if args.model:
        cfg.model_name = args.model
    if args.temperature is not None:
        cfg.temperature = args.temperature
    if args.max_inflight is not None:
        cfg.max_inflight = args.max_inflight
    if args.max_retries is not None:
        cfg.max_retries = args.max_retries
    if args.replay_dir:
        cfg.replay_dir = args.replay_dir
    if cfg.kind == "live" and not cfg.endpoint_url:
        parser.error("--backend live requires --endpoint")
    if cfg.kind == "replay" and not cfg.replay_dir:
        parser.error("--backend replay requires --replay-dir")
    try:
        cfg.validate()
    except TaskConfigError as exc:
        raise OperationalError(str(exc)) from exc
    pairs = _load_extract_inputs(args, parser)
    records = engine.run_batch(pairs, task, cfg)
    engine.write_run(records, pairs, args.out_dir, task, cfg)
    succeeded = sum(1 for r in records if r.final is not None)
    print(f"extracted {succeeded}/{len(records)} pairs -> {args.out_dir}")
    if succeeded < len(records):
        failed = [r.pair_id for r in records if r.final is None]
        print(f"failed pairs: {', '.join(failed)}", file=sys.stderr)
    return 0


def _cmd_judge(args) -> int:
    run_dir = Path(args.predicted)
    extraction_dir = run_dir / "extractions"
    if not extraction_dir.is_dir():
        raise OperationalError(f"no extractions directory under {run_dir}")
    truths = load_truth(args.reference)
    judgments = []
    spurious = []
    judged = 0
    for path in sorted(extraction_dir.glob("*.json")):
        pair_id = path.stem.replace("__", "/")
        if pair_id not in truths:
            raise OperationalError(f"no reference truth for pair {pair_id!r}")
        predicted = PairExtraction.model_validate(
            json.loads(path.read_text(encoding="utf-8")))
        result = auto_judge(predicted, truths[pair_id], pair_id)
        judgments.extend(result.judgments)
        spurious.extend(result.spurious)
        judged += 1
    if judged == 0:
        raise OperationalError("no extraction files to judge")
    write_judgments(args.out, judgments, spurious)
    print(f"judged {judged} pairs: {len(judgments)} judgments, "
          f"{len(spurious)} spurious -> {args.out}")
    return 0


def _cmd_evaluate(args) -> int:
    attributes = []
    reports = []
    spurious = []
    for path in args.judgments:
        if not Path(path).is_file():
            raise OperationalError(f"judgment file not found: {path}")
        a, r, s = read_judgments(path)
        attributes.extend(a)
        reports.extend(r)
        spurious.extend(s)
    try:
        summary = summarize_judgments(attributes, reports, spurious)
    except (EmptyInput, EvaluationError) as exc:
        raise OperationalError(f"EmptyInput: {exc}") from exc
    Path(args.out).write_text(summary.to_json(), encoding="utf-8")
    if args.text:
        print(summary_table(summary))
    print(f"summary -> {args.out}")
    return 0


def _cmd_serve(args) -> int:
    from .review import serve

    try:
        serve(args.run, args.port, host=args.host, ui_dir=args.ui)
    except FileNotFoundError as exc:
        raise OperationalError(str(exc)) from exc
    return 0


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        if args.command == "ingest":
            return _cmd_ingest(args)
        if args.command == "cohort":
            return _cmd_cohort(args)
        if args.command == "pair":
            return _cmd_pair(args)
        if args.command == "split":
            return _cmd_split(args)
        if args.command == "synth":
            return _cmd_synth(args)
        if args.command == "extract":
            return _cmd_extract(args, parser)
        if args.command == "judge":
            return _cmd_judge(args)
        if args.command == "evaluate":
            return _cmd_evaluate(args)
        if args.command == "serve":
            return _cmd_serve(args)
        parser.error(f"unknown command {args.command!r}")
    except OperationalError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except (corpus_mod.CorpusError, TaskConfigError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
