"""Batch evaluation: Hits@1 scoring, instrumentation reports and report merging."""

from __future__ import annotations

import hashlib
import json
import logging
from collections import Counter
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Iterable, Sequence

from egp.engine import RunError, RunResult
from egp.exemplars.embedding import EmbeddingProvider
from egp.exemplars.index import build_index, dump_index
from egp.exemplars.records import TrainingQuestion, read_records
from egp.exemplars.templating import TEMPLATING_VERSION
from egp.text import normalize_answer

logger = logging.getLogger(__name__)

REPORT_SCHEMA = "egp.eval-report"
REPORT_VERSION = 1
MODES = ("guided", "unguided")


class HarnessError(Exception):
    pass


def is_correct(predicted: Iterable[str], gold: Iterable[str]) -> bool:
    """True when any normalised prediction equals any normalised gold alias."""
    gold_set = {normalize_answer(g) for g in gold}
    gold_set.discard("")
    return any(normalize_answer(p) in gold_set for p in predicted)


def build_index_file(train_path, out_path, provider: EmbeddingProvider, **kwargs) -> dict:
    """Index a training JSONL file; writes the index and ``<out>.manifest.json``."""
    records = read_records(train_path, require_gold=True)
    if not records:
        raise HarnessError(f"{train_path}: no records")
    index = build_index(records, provider, **kwargs)
    data = dump_index(index)
    Path(out_path).write_bytes(data)
    manifest = {
        "count": len(index),
        "dimension": index.dimension,
        "provider": provider.name,
        "templating_version": TEMPLATING_VERSION,
        "train_file": Path(train_path).name,
        "train_sha256": hashlib.sha256(Path(train_path).read_bytes()).hexdigest(),
        "index_sha256": hashlib.sha256(data).hexdigest(),
    }
    manifest_path(out_path).write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n", encoding="utf-8")
    return manifest


def manifest_path(index_path) -> Path:
    p = Path(index_path)
    return p.with_name(p.name + ".manifest.json")


@dataclass
class QuestionOutcome:
    id: str
    predicted: list[str]
    gold: list[str]
    correct: bool
    counters: dict
    error: str | None = None

    def to_json(self) -> dict:
        return {
            "id": self.id,
            "predicted": self.predicted,
            "gold": self.gold,
            "correct": self.correct,
            "counters": self.counters,
            "error": self.error,
        }


def _histogram(counts: Iterable[int]) -> dict[str, int]:
    tally = Counter(counts)
    return {str(k): tally[k] for k in sorted(tally)}


def lookahead_summary(total: int, triggered: int, early_correct: int) -> dict:
    return {
        "questions": total,
        "triggered": triggered,
        "triggered_pct": 100.0 * triggered / total if total else 0.0,
        "early_correct": early_correct,
        # relative to triggered instances, not to the whole test set
        "early_correct_pct": 100.0 * early_correct / triggered if triggered else 0.0,
    }


@dataclass
class EvalReport:
    mode: str
    per_question: list[QuestionOutcome]
    results: dict[str, RunResult] = field(default_factory=dict, repr=False)

    @property
    def hits_at_1(self) -> float:
        if not self.per_question:
            return 0.0
        return sum(q.correct for q in self.per_question) / len(self.per_question)

    @property
    def relation_histogram(self) -> dict[str, dict[str, int]]:
        counts = [c for q in self.per_question for c in q.counters.get("relation_counts", [])]
        hist = {m: {} for m in MODES}
        hist[self.mode] = _histogram(counts)
        return hist

    @property
    def lookahead(self) -> dict:
        triggered = sum(bool(q.counters.get("lookahead_triggered")) for q in self.per_question)
        early = sum(
            bool(q.counters.get("lookahead_answered")) and q.correct for q in self.per_question
        )
        return lookahead_summary(len(self.per_question), triggered, early)

    def to_json(self) -> dict:
        return {
            "schema": REPORT_SCHEMA,
            "version": REPORT_VERSION,
            "mode": self.mode,
            "num_questions": len(self.per_question),
            "hits_at_1": self.hits_at_1,
            "lookahead": self.lookahead,
            "relation_histogram": self.relation_histogram,
            "per_question": [q.to_json() for q in self.per_question],
        }

    def dumps(self) -> str:
        return json.dumps(self.to_json(), indent=2) + "\n"

    def write(self, path) -> None:
        Path(path).write_text(self.dumps(), encoding="utf-8")


def evaluate(
    records: Sequence[TrainingQuestion],
    run_one: Callable[[TrainingQuestion], RunResult],
    mode: str = "guided",
    parallel: int = 1,
) -> EvalReport:
    """Run every record; failures count as incorrect and are noted on the outcome."""
    if not records:
        raise HarnessError("no records")
    if mode not in MODES:
        raise ValueError(f"mode must be one of {MODES}")

    def one(record: TrainingQuestion) -> tuple[QuestionOutcome, RunResult | None]:
        try:
            result = run_one(record)
        except RunError as exc:
            logger.warning("run %s failed: %s", record.id, exc)
            return QuestionOutcome(record.id, [], list(record.answers), False, exc.counters.to_json(), str(exc)), None
        except Exception as exc:  # harness keeps going on any per-question failure
            logger.exception("run %s crashed", record.id)
            return QuestionOutcome(record.id, [], list(record.answers), False, {}, f"{type(exc).__name__}: {exc}"), None
        correct = is_correct(result.answers, record.answers)
        return QuestionOutcome(record.id, list(result.answers), list(record.answers), correct,
                               result.counters.to_json()), result

    if parallel > 1:
        with ThreadPoolExecutor(max_workers=parallel) as pool:
            pairs = list(pool.map(one, records))
    else:
        pairs = [one(r) for r in records]
    pairs.sort(key=lambda pr: pr[0].id)
    results = {o.id: r for o, r in pairs if r is not None}
    return EvalReport(mode, [o for o, _ in pairs], results)


# --- stats over saved reports ----------------------------------------------

def load_report(path) -> dict:
    try:
        data = json.loads(Path(path).read_text(encoding="utf-8"))
    except (OSError, ValueError) as exc:
        raise HarnessError(f"{path}: unreadable report: {exc}") from exc
    if not isinstance(data, dict) or data.get("schema") != REPORT_SCHEMA or data.get("version") != REPORT_VERSION:
        raise HarnessError(f"{path}: not a version {REPORT_VERSION} {REPORT_SCHEMA} document")
    for key in ("mode", "relation_histogram", "lookahead", "per_question"):
        if key not in data:
            raise HarnessError(f"{path}: report missing {key!r}")
    return data


def merge_reports(reports: Sequence[dict]) -> dict:
    """Element-wise histogram sums and pooled lookahead counts."""
    if not reports:
        raise HarnessError("need at least one report")
    hist: dict[str, Counter] = {m: Counter() for m in MODES}
    total = triggered = early = 0
    for rep in reports:
        for mode in MODES:
            for k, v in rep["relation_histogram"].get(mode, {}).items():
                hist[mode][int(k)] += int(v)
        la = rep["lookahead"]
        total += int(la["questions"])
        triggered += int(la["triggered"])
        early += int(la["early_correct"])
    return {
        "relation_histogram": {m: {str(k): hist[m][k] for k in sorted(hist[m])} for m in MODES},
        "lookahead": lookahead_summary(total, triggered, early),
        "reports": len(reports),
    }


def format_stats(stats: dict) -> str:
    hist = stats["relation_histogram"]
    keys = sorted({int(k) for m in MODES for k in hist[m]})
    rows = [("relations", "guided", "unguided")]
    rows += [(str(k), str(hist["guided"].get(str(k), 0)), str(hist["unguided"].get(str(k), 0))) for k in keys]
    widths = [max(len(r[i]) for r in rows) for i in range(3)]
    lines = ["  ".join(cell.rjust(w) for cell, w in zip(r, widths)) for r in rows]
    la = stats["lookahead"]
    lines += [
        "",
        f"{'questions':<16}{la['questions']:>8}",
        f"{'triggered':<16}{la['triggered']:>8}  {la['triggered_pct']:6.1f}%",
        f"{'early correct':<16}{la['early_correct']:>8}  {la['early_correct_pct']:6.1f}% of triggered",
    ]
    return "\n".join(lines)
