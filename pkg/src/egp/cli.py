"""Command line: ``egp build-index | ask | eval | stats``."""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

from egp.config import Config, ConfigError
from egp.engine import RunError
from egp.estimator import ExemplarGuidedQA
from egp.exemplars.index import load_index
from egp.exemplars.records import RecordParseError, TopicEntity, TrainingQuestion, read_records
from egp.harness import HarnessError, build_index_file, format_stats, load_report, merge_reports
from egp.kg import KGError
from egp.planner.providers import MockProvider

log = logging.getLogger("egp")


class UsageError(Exception):
    pass


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="egp", description="Exemplar-guided knowledge-graph question answering.")
    parser.add_argument("--config", help="JSON config file")
    parser.add_argument("--kg", help="triple TSV file or SPARQL endpoint URL (overrides config)")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("build-index", help="embed training questions into an exemplar index")
    p.add_argument("--train", required=True)
    p.add_argument("--out", required=True)

    p = sub.add_parser("ask", help="answer one question")
    p.add_argument("--question", required=True)
    p.add_argument("--topics", required=True, help="comma-separated entity ids, each optionally ID@category")
    p.add_argument("--no-exemplars", action="store_true")
    p.add_argument("--mock", help="mock script JSONL")
    p.add_argument("--transcript", help="write the provider transcript here")
    p.add_argument("--json", action="store_true", help="print the run result as JSON")

    p = sub.add_parser("eval", help="evaluate a test set")
    p.add_argument("--test", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--parallel", type=int)
    p.add_argument("--mock-dir", help="directory of <question id>.jsonl mock scripts")
    p.add_argument("--no-exemplars", action="store_true")
    p.add_argument("--transcripts", help="directory for per-question transcripts")

    p = sub.add_parser("stats", help="merge evaluation reports")
    p.add_argument("reports", nargs="+")
    p.add_argument("--out", help="write merged stats JSON here")
    return parser


def _config(args) -> Config:
    return Config.load(args.config) if args.config else Config()


def _parse_topics(raw: str, kg) -> tuple[TopicEntity, ...]:
    topics = []
    for item in filter(None, (s.strip() for s in raw.split(","))):
        ident, _, category = item.partition("@")
        topics.append(TopicEntity(ident, kg.label(ident), category or None))
    if not topics:
        raise UsageError("--topics needs at least one entity id")
    return tuple(topics)


def _estimator(cfg: Config, args, no_exemplars: bool, llm) -> ExemplarGuidedQA:
    kg = cfg.open_kg(args.kg)
    e, r = cfg.engine, cfg.retrieval
    est = ExemplarGuidedQA(
        kg=kg, llm=llm, embedder=cfg.embedding(), k=r.k, tau=r.tau, overfetch=r.overfetch,
        d_max=e.d_max, width=e.width, lookahead=e.lookahead, lookahead_path_cap=e.lookahead_path_cap,
        lookahead_verdict_cap=e.lookahead_verdict_cap, lookahead_match=e.lookahead_match,
        guide_decomposition=e.guide_decomposition, guide_exploration=e.guide_exploration,
        relation_blocklist=e.relation_blocklist, use_exemplars=not no_exemplars,
        parallel=getattr(args, "parallel", None) or cfg.harness.parallel,
    )
    if no_exemplars:
        return est.fit(None)
    index_path, train_path = cfg.resolve(r.index), cfg.resolve(r.train)
    if index_path is None or train_path is None:
        raise UsageError("exemplar retrieval needs [retrieval].index and [retrieval].train (or --no-exemplars)")
    return est.fit_from_index(load_index(index_path), read_records(train_path, require_gold=True))


def cmd_build_index(args) -> int:
    cfg = _config(args)
    manifest = build_index_file(args.train, args.out, cfg.embedding())
    print(f"indexed {manifest['count']} questions (dimension {manifest['dimension']}, provider {manifest['provider']})")
    return 0


def cmd_ask(args) -> int:
    cfg = _config(args)
    llm = MockProvider.from_jsonl(args.mock) if args.mock else cfg.llm()
    if llm is None:
        raise UsageError("no LLM provider: pass --mock or configure [llm_provider]")
    est = _estimator(cfg, args, args.no_exemplars, llm)
    record = TrainingQuestion("ask", args.question, _parse_topics(args.topics, est.kg))
    result = est.run_one(record)
    if args.transcript:
        result.transcript.write(args.transcript)
    if args.json:
        print(json.dumps(result.to_json(est.kg.label), indent=2))
        return 0
    print(f"Answer: {', '.join(result.answers) if result.answers else '(none)'}")
    for path in result.supporting_paths:
        print(f"Path: {path.render(est.kg.label)}")
    c = result.counters
    print(
        f"Counters: iterations_used={c.iterations_used} lookahead_triggered={str(c.lookahead_triggered).lower()} "
        f"lookahead_answered={str(c.lookahead_answered).lower()} llm_calls={c.llm_calls} "
        f"relation_counts={c.relation_counts} forced_answer={str(c.forced_answer).lower()}"
    )
    return 0


def cmd_eval(args) -> int:
    cfg = _config(args)
    records = read_records(args.test)
    if not records:
        raise HarnessError(f"{args.test}: no records")
    if args.mock_dir:
        mock_dir = Path(args.mock_dir)
        llm = lambda rec: MockProvider.from_jsonl(mock_dir / f"{rec.id}.jsonl")  # noqa: E731
    else:
        llm = cfg.llm()
        if llm is None:
            raise UsageError("no LLM provider: pass --mock-dir or configure [llm_provider]")
    est = _estimator(cfg, args, args.no_exemplars, llm)
    report = est.evaluate(records)
    report.write(args.out)
    if args.transcripts:
        tdir = Path(args.transcripts)
        tdir.mkdir(parents=True, exist_ok=True)
        for qid, result in report.results.items():
            result.transcript.write(tdir / f"{qid}.jsonl")
    la = report.lookahead
    print(f"questions: {len(report.per_question)}  hits@1: {report.hits_at_1:.4f}  mode: {report.mode}")
    print(f"lookahead triggered: {la['triggered']} ({la['triggered_pct']:.1f}%)  "
          f"early correct: {la['early_correct']} ({la['early_correct_pct']:.1f}% of triggered)")
    for q in report.per_question:
        if q.error:
            print(f"  {q.id}: error: {q.error}")
    return 0


def cmd_stats(args) -> int:
    stats = merge_reports([load_report(p) for p in args.reports])
    if args.out:
        Path(args.out).write_text(json.dumps(stats, indent=2) + "\n", encoding="utf-8")
    print(format_stats(stats))
    return 0


COMMANDS = {"build-index": cmd_build_index, "ask": cmd_ask, "eval": cmd_eval, "stats": cmd_stats}


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(name)s: %(message)s")
    try:
        return COMMANDS[args.command](args)
    except (UsageError, ConfigError) as exc:
        parser.print_usage(sys.stderr)
        print(f"egp: error: {exc}", file=sys.stderr)
        return 2
    except (RecordParseError, HarnessError, KGError, RunError, OSError, ValueError) as exc:
        print(f"egp: error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
