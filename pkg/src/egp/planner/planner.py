"""LLM decision points with validated parsing and one-reprompt fallbacks."""

from __future__ import annotations

import json
import logging
import re
import time
from dataclasses import dataclass, field
from typing import Any, Callable, Sequence

from egp.kg import Direction, ReasoningPath, Triple
from egp.planner import prompts
from egp.planner.providers import Decoding, LlmError, LlmProvider, Transcript
from egp.text import normalize_answer

logger = logging.getLogger(__name__)

DEFAULT_MAX_TOKENS = {
    prompts.DECOMPOSE: 256,
    prompts.PRUNE_RELATIONS: 256,
    prompts.SELECT_PATHS: 64,
    prompts.EVALUATE_SUFFICIENCY: 256,
    prompts.FORCED_ANSWER: 256,
    prompts.REFLECT: 256,
    prompts.LOOKAHEAD_VERDICT: 256,
    prompts.UPDATE_STATUSES: 256,
}

UNKNOWN = "unknown"


class PlannerError(Exception):
    pass


@dataclass(frozen=True)
class SubObjectiveList:
    items: tuple[str, ...]
    statuses: tuple[str, ...]

    def __post_init__(self):
        if not self.items:
            raise ValueError("need at least one sub-objective")
        if len(self.items) != len(self.statuses):
            raise ValueError("items and statuses must have equal length")
        if not all(isinstance(i, str) and i.strip() for i in self.items):
            raise ValueError("sub-objectives must be non-empty strings")

    @classmethod
    def fresh(cls, items: Sequence[str]) -> "SubObjectiveList":
        return cls(tuple(items), tuple(UNKNOWN for _ in items))


@dataclass(frozen=True)
class RelationSelection:
    selected: frozenset
    raw_response: str
    dropped: tuple[str, ...] = ()


@dataclass(frozen=True)
class SufficiencyVerdict:
    sufficient: bool
    answer: tuple[str, ...] = ()
    rationale: str = ""

    def __post_init__(self):
        if self.sufficient and not self.answer:
            raise ValueError("a sufficient verdict needs a non-empty answer")


INSUFFICIENT = SufficiencyVerdict(False)


@dataclass(frozen=True)
class ReflectionDecision:
    correct_course: bool
    backtrack_entities: tuple[str, ...] = ()
    reason: str = ""
    dropped: tuple[str, ...] = field(default=(), compare=False)


_DECODER = json.JSONDecoder()
_NUMBERED_RE = re.compile(r"^\s*(\d+)[.)]\s+(.+?)\s*$")


def extract_json(text: str, kind: type | None = None) -> Any:
    """First JSON value embedded in ``text`` (optionally of type ``kind``), else None."""
    for i, ch in enumerate(text):
        if ch not in "[{":
            continue
        try:
            value, _ = _DECODER.raw_decode(text, i)
        except ValueError:
            continue
        if kind is None or isinstance(value, kind):
            return value
    return None


def parse_objective_list(text: str) -> list[str] | None:
    value = extract_json(text, list)
    if value is not None:
        items = [str(v).strip() for v in value if isinstance(v, str) and v.strip()]
        return items or None
    items = [m.group(2) for m in map(_NUMBERED_RE.match, text.splitlines()) if m]
    return items or None


def parse_relation_names(text: str) -> list[str]:
    value = extract_json(text)
    if isinstance(value, dict):
        value = value.get("relations")
    if isinstance(value, list):
        return [str(v).strip() for v in value if isinstance(v, (str, int, float))]
    names = []
    for piece in re.split(r"[,\n;]", text):
        piece = piece.strip().lstrip("-*0123456789.) ").strip().strip("\"'`")
        if piece:
            names.append(piece)
    return names


def _as_answers(value) -> tuple[str, ...]:
    if value is None:
        return ()
    if isinstance(value, (str, int, float)):
        value = [value]
    if not isinstance(value, list):
        return ()
    return tuple(str(v).strip() for v in value if str(v).strip())


def _as_bool(value) -> bool | None:
    if isinstance(value, bool):
        return value
    if isinstance(value, str) and value.strip().lower() in ("true", "yes"):
        return True
    if isinstance(value, str) and value.strip().lower() in ("false", "no"):
        return False
    return None


class Planner:
    """Wraps an :class:`LlmProvider`; every call lands in ``transcript``.

    No operation issues more than two provider calls.
    """

    def __init__(
        self,
        provider: LlmProvider,
        transcript: Transcript | None = None,
        label: Callable[[str], str] | None = None,
        temperature: float = 0.0,
        max_tokens: dict[str, int] | None = None,
    ):
        self.provider = provider
        self.transcript = transcript if transcript is not None else Transcript()
        self.label = label or (lambda e: e)
        self.temperature = temperature
        self.max_tokens = {**DEFAULT_MAX_TOKENS, **(max_tokens or {})}
        self.calls = 0

    def _ask(self, task: str, prompt: str) -> str:
        decoding = Decoding(self.temperature, self.max_tokens.get(task, 256))
        start = time.perf_counter()
        try:
            completion = self.provider.complete(prompt, decoding)
        except LlmError as exc:
            raise PlannerError(f"{task}: provider call failed: {exc}") from exc
        self.calls += 1
        self.transcript.append(prompt, completion, time.perf_counter() - start)
        return completion.text

    def _ask_parsed(self, task: str, prompt: str, parse: Callable[[str], Any]) -> tuple[Any, str]:
        """Ask, parse; reprompt once if ``parse`` returns None."""
        text = self._ask(task, prompt)
        value = parse(text)
        if value is None:
            text = self._ask(task, prompt + prompts.REPROMPT_SUFFIX)
            value = parse(text)
        return value, text

    # -- decision points -----------------------------------------------------

    def decompose(self, question: str, topic_entities: Sequence[str], exemplars: Sequence = ()) -> SubObjectiveList:
        prompt = prompts.decompose_prompt(
            question, [self.label(t) for t in topic_entities], exemplars, self.label
        )
        items, text = self._ask_parsed(prompts.DECOMPOSE, prompt, parse_objective_list)
        if items is None:
            raise PlannerError(f"could not parse sub-objectives from completion: {text[:200]!r}")
        return SubObjectiveList.fresh(items)

    def prune_relations(
        self,
        question: str,
        objectives: SubObjectiveList,
        entity: str,
        candidates: Sequence[tuple[str, Direction]],
        exemplars: Sequence = (),
    ) -> RelationSelection:
        if not candidates:
            raise ValueError("prune_relations needs at least one candidate")
        offered = sorted(set(candidates))
        names = {r for r, _ in offered}
        prompt = prompts.prune_relations_prompt(question, objectives.items, entity, offered, exemplars, self.label)
        dropped: list[str] = []

        def parse(text: str):
            chosen = parse_relation_names(text)
            dropped.clear()
            dropped.extend(c for c in chosen if c not in names)
            picked = {c for c in chosen if c in names}
            return picked or None

        picked, text = self._ask_parsed(prompts.PRUNE_RELATIONS, prompt, parse)
        if dropped:
            logger.info("prune_relations dropped relations not offered: %s", dropped)
        selected = frozenset(c for c in offered if picked and c[0] in picked)
        return RelationSelection(selected, text, tuple(dropped))

    def select_paths(self, question: str, extended: Sequence[tuple[ReasoningPath, Triple]]) -> tuple[int, ...]:
        if not extended:
            raise ValueError("select_paths needs at least one path")
        prompt = prompts.select_paths_prompt(question, extended, self.label)

        def parse(text: str):
            value = extract_json(text, list)
            if value is None:
                nums = re.findall(r"-?\d+", text)
                value = [int(n) for n in nums] if nums else None
            if value is None:
                return None
            return [v for v in value if isinstance(v, int) and not isinstance(v, bool)]

        indices, _ = self._ask_parsed(prompts.SELECT_PATHS, prompt, parse)
        valid = sorted({i for i in indices or [] if 0 <= i < len(extended)})
        return tuple(valid) if valid else (0,)

    def _parse_verdict(self, text: str) -> SufficiencyVerdict | None:
        obj = extract_json(text, dict)
        if obj is None:
            return None
        sufficient = _as_bool(obj.get("sufficient"))
        if sufficient is None:
            return None
        answers = _as_answers(obj.get("answer", obj.get("answers")))
        reason = str(obj.get("reason", ""))
        if sufficient and not answers:
            logger.info("sufficient verdict without an answer treated as insufficient")
            return SufficiencyVerdict(False, (), reason)
        return SufficiencyVerdict(sufficient, answers if sufficient else (), reason)

    def evaluate_sufficiency(
        self,
        question: str,
        objectives: SubObjectiveList,
        paths: Sequence[ReasoningPath],
        forced: bool = False,
    ) -> SufficiencyVerdict:
        prompt = prompts.sufficiency_prompt(
            question, objectives.items, objectives.statuses, paths, self.label, forced=forced
        )
        task = prompts.FORCED_ANSWER if forced else prompts.EVALUATE_SUFFICIENCY
        if forced:
            # Best-effort mode keeps any answer the model gives, whatever it says about sufficiency.
            def parse(text):
                obj = extract_json(text, dict)
                if obj is None:
                    return None
                answers = _as_answers(obj.get("answer", obj.get("answers")))
                return SufficiencyVerdict(bool(answers), answers, str(obj.get("reason", "")))
        else:
            parse = self._parse_verdict
        verdict, _ = self._ask_parsed(task, prompt, parse)
        return verdict or INSUFFICIENT

    def lookahead_verdict(self, question: str, path: ReasoningPath) -> SufficiencyVerdict:
        prompt = prompts.lookahead_prompt(question, path, self.label)
        verdict, _ = self._ask_parsed(prompts.LOOKAHEAD_VERDICT, prompt, self._parse_verdict)
        if verdict is None or not verdict.sufficient:
            return verdict or INSUFFICIENT
        on_path = {}
        for e in path.entities:
            on_path.setdefault(normalize_answer(self.label(e)), self.label(e))
            on_path.setdefault(normalize_answer(e), self.label(e))
        kept = tuple(dict.fromkeys(on_path[normalize_answer(a)] for a in verdict.answer if normalize_answer(a) in on_path))
        if not kept:
            logger.info("lookahead answer %s not on candidate path; treated as insufficient", verdict.answer)
            return SufficiencyVerdict(False, (), verdict.rationale)
        return SufficiencyVerdict(True, kept, verdict.rationale)

    def reflect(
        self,
        question: str,
        objectives: SubObjectiveList,
        paths: Sequence[ReasoningPath],
        next_frontier: Sequence[str],
        historical: Sequence[str],
        dead_end: bool = False,
    ) -> ReflectionDecision:
        history = sorted(set(historical))
        prompt = prompts.reflect_prompt(
            question, objectives.items, objectives.statuses, paths, next_frontier, history, self.label, dead_end
        )

        def parse(text):
            obj = extract_json(text, dict)
            if obj is None:
                return None
            course = _as_bool(obj.get("correct_course"))
            raw = obj.get("backtrack", obj.get("backtrack_entities", []))
            if course is None or not isinstance(raw, list):
                return None
            return course, [str(e) for e in raw], str(obj.get("reason", ""))

        parsed, _ = self._ask_parsed(prompts.REFLECT, prompt, parse)
        if parsed is None:
            return ReflectionDecision(True, (), "unparseable reflection; continuing")
        course, raw, reason = parsed
        if course:
            return ReflectionDecision(True, (), reason)
        allowed = set(history)
        kept = tuple(dict.fromkeys(e for e in raw if e in allowed))
        dropped = tuple(e for e in raw if e not in allowed)
        if dropped:
            logger.info("reflection dropped non-historical entities: %s", dropped)
        return ReflectionDecision(False, kept, reason, dropped)

    def update_statuses(
        self,
        question: str,
        objectives: SubObjectiveList,
        memory_summary: str,
        latest_paths: Sequence[ReasoningPath],
    ) -> SubObjectiveList:
        prompt = prompts.update_statuses_prompt(
            question, objectives.items, objectives.statuses, memory_summary, latest_paths, self.label
        )
        value = extract_json(self._ask(prompts.UPDATE_STATUSES, prompt), list)
        if value is None:
            return objectives
        statuses = list(objectives.statuses)
        for i, s in enumerate(value[: len(statuses)]):
            if isinstance(s, str) and s.strip():
                statuses[i] = s.strip()
        return SubObjectiveList(objectives.items, tuple(statuses))
