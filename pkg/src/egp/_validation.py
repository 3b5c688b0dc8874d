"""Input coercion for the estimator API."""

from __future__ import annotations

from typing import Any, Iterable

from egp.exemplars.records import TopicEntity, TrainingQuestion, record_from_json


def check_records(X: Iterable[Any], require_gold: bool = False) -> list[TrainingQuestion]:
    """Accept TrainingQuestion objects or their JSON dicts; reject anything else."""
    if X is None:
        raise ValueError("expected a sequence of records, got None")
    if isinstance(X, (str, bytes, dict)):
        raise TypeError("expected a sequence of records, not a single value")
    out = []
    for i, item in enumerate(X):
        if isinstance(item, TrainingQuestion):
            rec = item
            if require_gold and not rec.gold_paths:
                raise ValueError(f"record {i} ({rec.id}) has no gold paths")
        elif isinstance(item, dict):
            try:
                rec = record_from_json(item, require_gold=require_gold)
            except (KeyError, ValueError) as exc:
                raise ValueError(f"record {i}: {exc}") from exc
        else:
            raise TypeError(f"record {i}: unsupported type {type(item).__name__}")
        out.append(rec)
    if not out:
        raise ValueError("expected at least one record")
    return out


def check_question(item: Any, index: int = 0) -> TrainingQuestion:
    """A record, a record dict, or a ``(question, topics)`` pair."""
    if isinstance(item, tuple) and len(item) == 2:
        text, topics = item
        anns = tuple(t if isinstance(t, TopicEntity) else TopicEntity(str(t), str(t)) for t in topics)
        if not anns:
            raise ValueError(f"question {index}: no topic entities")
        return TrainingQuestion(f"q{index}", str(text), anns)
    rec = check_records([item])[0]
    if not rec.topic_entities:
        raise ValueError(f"question {index} ({rec.id}): no topic entities")
    return rec


def check_positive_int(name: str, value: Any) -> int:
    if isinstance(value, bool) or not isinstance(value, int) or value < 1:
        raise ValueError(f"{name} must be a positive integer, got {value!r}")
    return value
