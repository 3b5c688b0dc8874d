"""Question records and their JSONL serialisation."""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable

from egp.kg import Direction, ReasoningPath


class RecordParseError(ValueError):
    def __init__(self, line_no: int, message: str, source: str = "<records>"):
        super().__init__(f"{source}: line {line_no}: {message}")
        self.line_no = line_no
        self.source = source


@dataclass(frozen=True)
class TopicEntity:
    """A topic entity annotation: KG id, its surface mention, optional category."""

    entity: str
    mention: str
    category: str | None = None

    def __post_init__(self):
        if not self.entity:
            raise ValueError("topic entity id must be non-empty")
        if not self.mention:
            raise ValueError("topic entity mention must be non-empty")


@dataclass(frozen=True)
class TrainingQuestion:
    """A question with answers and, for training records, gold reasoning paths.

    Test-split records use the same type with ``gold_paths`` empty.
    """

    id: str
    text: str
    topic_entities: tuple[TopicEntity, ...] = ()
    answers: tuple[str, ...] = ()
    gold_paths: tuple[ReasoningPath, ...] = field(default=(), compare=True)

    @property
    def path_signatures(self) -> frozenset:
        return frozenset(p.signature for p in self.gold_paths if p.length)

    def to_json(self) -> dict:
        return {
            "id": self.id,
            "question": self.text,
            "topic_entities": [
                {"id": t.entity, "mention": t.mention, **({"category": t.category} if t.category else {})}
                for t in self.topic_entities
            ],
            "answers": list(self.answers),
            "gold_paths": [_path_to_steps(p) for p in self.gold_paths],
        }


def _path_to_steps(path: ReasoningPath) -> list[dict]:
    steps = []
    for triple, d in zip(path.triples(), path.directions):
        steps.append({"head": triple.head, "relation": triple.relation, "tail": triple.tail, "direction": d.value})
    return steps


def path_from_steps(steps: list[dict]) -> ReasoningPath:
    """Build a path from step records.

    ``head``/``tail`` are the triple as stored in the KG; ``direction`` says how
    the path traverses it (outgoing: head to tail, incoming: tail to head).
    """
    if not steps:
        raise ValueError("gold path must have at least one step")
    path = None
    for i, step in enumerate(steps):
        d = Direction.parse(step.get("direction", "outgoing"))
        head, rel, tail = step["head"], step["relation"], step["tail"]
        src, dst = (head, tail) if d is Direction.OUTGOING else (tail, head)
        if path is None:
            path = ReasoningPath.seed(src)
        elif path.tail != src:
            raise ValueError(f"step {i} starts at {src!r} but previous step ends at {path.tail!r}")
        path = path.extend(rel, d, dst)
    return path


def record_from_json(obj: dict, require_gold: bool = False) -> TrainingQuestion:
    for key in ("id", "question"):
        if not isinstance(obj.get(key), str) or not obj[key]:
            raise ValueError(f"missing or empty field {key!r}")
    topics = tuple(
        TopicEntity(t["id"], t["mention"], t.get("category")) for t in obj.get("topic_entities", [])
    )
    answers = tuple(str(a) for a in obj.get("answers", []))
    gold = tuple(path_from_steps(p) for p in obj.get("gold_paths") or [])
    if require_gold and not gold:
        raise ValueError("training record needs at least one gold path")
    return TrainingQuestion(obj["id"], obj["question"], topics, answers, gold)


def read_records(path, require_gold: bool = False) -> list[TrainingQuestion]:
    """Parse a JSONL record file; errors name the offending line."""
    src = str(path)
    records = []
    with open(path, "r", encoding="utf-8") as fh:
        for line_no, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            try:
                obj = json.loads(line)
                if not isinstance(obj, dict):
                    raise ValueError("record must be a JSON object")
                records.append(record_from_json(obj, require_gold=require_gold))
            except (ValueError, KeyError, TypeError) as exc:
                raise RecordParseError(line_no, str(exc), src) from exc
    return records


def write_records(path, records: Iterable[TrainingQuestion]) -> None:
    Path(path).write_text(
        "".join(json.dumps(r.to_json(), sort_keys=True) + "\n" for r in records), encoding="utf-8"
    )
