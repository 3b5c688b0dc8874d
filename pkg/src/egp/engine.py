"""The exemplar-guided exploration loop.

A run decomposes the question, seeds one length-0 path per topic entity, tries
the one-shot lookahead over exemplar relation paths, then alternates relation
exploration, entity exploration, memory update, sufficiency check and
reflection until an answer is found or the depth budget runs out.
"""

from __future__ import annotations

import logging
from dataclasses import asdict, dataclass, field
from typing import Callable, Protocol, Sequence

from egp.exemplars.embedding import EmbeddingError, EmbeddingProvider, embed_batch
from egp.exemplars.records import TopicEntity
from egp.exemplars.retrieval import Exemplar, extract_guide_relations
from egp.kg import (
    Direction,
    KGError,
    KnowledgeGraph,
    ReasoningPath,
    RelationPath,
    Triple,
    instantiate_relation_path,
)
from egp.planner.planner import Planner, PlannerError, SubObjectiveList
from egp.planner.providers import Transcript
from egp.text import normalize_answer

logger = logging.getLogger(__name__)

Candidate = tuple[str, Direction]


class RunError(Exception):
    """A hard backend or provider failure; keeps what the run had recorded so far."""

    def __init__(self, message: str, transcript: Transcript, counters: "RunCounters"):
        super().__init__(message)
        self.transcript = transcript
        self.counters = counters


@dataclass(frozen=True)
class EngineConfig:
    d_max: int = 4
    width: int = 30
    lookahead: bool = True
    lookahead_path_cap: int = 8
    lookahead_verdict_cap: int = 5
    # "full": the whole oriented relation sequence must equal an exemplar path.
    # "suffix": any forward relation followed by an exemplar path minus its first hop.
    lookahead_match: str = "full"
    guide_decomposition: bool = True
    guide_exploration: bool = True
    relation_blocklist: tuple[str, ...] = ()

    def __post_init__(self):
        if self.d_max < 1:
            raise ValueError("d_max must be >= 1")
        if self.width < 1:
            raise ValueError("width must be >= 1")
        if self.lookahead_path_cap < 1 or self.lookahead_verdict_cap < 1:
            raise ValueError("lookahead caps must be >= 1")
        if self.lookahead_match not in ("full", "suffix"):
            raise ValueError("lookahead_match must be 'full' or 'suffix'")

    def blocked(self, relation: str) -> bool:
        return any(relation.startswith(prefix) for prefix in self.relation_blocklist)


@dataclass
class RunCounters:
    guided: bool = False
    lookahead_triggered: bool = False
    lookahead_answered: bool = False
    lookahead_verdicts: int = 0
    relation_counts: list[int] = field(default_factory=list)
    llm_calls: int = 0
    iterations_used: int = 0
    forced_answer: bool = False
    dead_ends: int = 0
    backtracked: int = 0

    def to_json(self) -> dict:
        return asdict(self)


@dataclass(frozen=True)
class PruningRecord:
    """One relation-exploration step at one frontier entity."""

    iteration: int
    entity: str
    candidates: tuple[Candidate, ...]
    selected: tuple[Candidate, ...]
    guide_relations: tuple[str, ...]
    final: tuple[Candidate, ...]

    def to_json(self) -> dict:
        pairs = lambda cs: [[r, d.value] for r, d in cs]  # noqa: E731
        return {
            "iteration": self.iteration,
            "entity": self.entity,
            "candidates": pairs(self.candidates),
            "selected": pairs(self.selected),
            "guide_relations": list(self.guide_relations),
            "final": pairs(self.final),
        }


@dataclass
class Memory:
    subgraph: set[Triple] = field(default_factory=set)
    paths: list[ReasoningPath] = field(default_factory=list)
    statuses: SubObjectiveList | None = None
    candidate_history: set[str] = field(default_factory=set)
    # first path that reached each candidate entity; used to resume on backtrack
    trails: dict[str, ReasoningPath] = field(default_factory=dict)

    def add_path(self, path: ReasoningPath) -> None:
        if path not in self.paths:
            self.paths.append(path)

    def summary(self) -> str:
        return (
            f"Explored triples: {len(self.subgraph)}\n"
            f"Candidate entities seen: {len(self.candidate_history)}\n"
            f"Stored reasoning paths: {len(self.paths)}"
        )


@dataclass
class AgentState:
    question: str
    topic_entities: list[str]
    exemplars: list[Exemplar]
    guide_relations: frozenset[str]
    frontier: list[ReasoningPath]
    memory: Memory
    counters: RunCounters = field(default_factory=RunCounters)
    iteration: int = 0
    pending: list[tuple[ReasoningPath, str, Direction]] = field(default_factory=list)
    pruning_log: list[PruningRecord] = field(default_factory=list)
    added_by_reflection: list[str] = field(default_factory=list)

    @property
    def frontier_entities(self) -> list[str]:
        return [p.tail for p in self.frontier]

    @property
    def objectives(self) -> SubObjectiveList:
        return self.memory.statuses


@dataclass
class RunResult:
    answers: list[str]
    supporting_paths: list[ReasoningPath]
    counters: RunCounters
    transcript: Transcript
    pruning_log: list[PruningRecord] = field(default_factory=list)
    memory: Memory | None = None
    added_by_reflection: list[str] = field(default_factory=list)

    def to_json(self, label: Callable[[str], str] | None = None) -> dict:
        return {
            "answers": list(self.answers),
            "supporting_paths": [
                {"rendered": p.render(label), **p.to_json()} for p in self.supporting_paths
            ],
            "counters": self.counters.to_json(),
            "pruning_log": [r.to_json() for r in self.pruning_log],
            "llm_calls": len(self.transcript),
        }


class RelevanceScorer(Protocol):
    def score(self, question: str, labels: Sequence[str]) -> list[float]:
        ...


class EmbeddingRelevanceScorer:
    """Cosine similarity of question and entity-label embeddings."""

    def __init__(self, provider: EmbeddingProvider):
        self.provider = provider

    def score(self, question: str, labels: Sequence[str]) -> list[float]:
        vecs = embed_batch(self.provider, [question, *labels])
        return (vecs[1:] @ vecs[0]).tolist()


@dataclass
class EngineDeps:
    kg: KnowledgeGraph
    planner: Planner
    retriever: Callable[[str, Sequence[TopicEntity]], list[Exemplar]] | None = None
    scorer: RelevanceScorer | None = None


def final_relation_set(
    selected: "set[Candidate] | frozenset[Candidate]",
    candidates: Sequence[Candidate],
    guide_relations: "set[str] | frozenset[str]",
) -> list[Candidate]:
    """Pruned relations plus every candidate whose name is a guide relation."""
    out = set(selected)
    out.update(c for c in candidates if c[0] in guide_relations)
    return sorted(out)


def init_state(
    question: str,
    topic_entities: Sequence[str],
    exemplars: Sequence[Exemplar],
    config: EngineConfig,
    objectives: SubObjectiveList | None = None,
) -> AgentState:
    if not topic_entities:
        raise ValueError("at least one topic entity is required")
    topics = list(dict.fromkeys(topic_entities))
    guide = frozenset(extract_guide_relations(exemplars)) if config.guide_exploration else frozenset()
    state = AgentState(
        question=question,
        topic_entities=topics,
        exemplars=list(exemplars),
        guide_relations=guide,
        frontier=[ReasoningPath.seed(e) for e in topics],
        memory=Memory(statuses=objectives),
    )
    state.counters.guided = bool(exemplars)
    return state


def _candidates(kg: KnowledgeGraph, entity: str, config: EngineConfig) -> list[Candidate]:
    return [c for c in kg.relations_of(entity) if not config.blocked(c[0])]


def _lookahead_relation_paths(
    path: ReasoningPath, forward: set[Candidate], mode: str
) -> list[RelationPath]:
    sig = path.signature
    if mode == "full":
        return [path.relation_path] if sig[0] in forward else []
    tail = sig[1:]
    return [RelationPath.of(first, *tail) for first in sorted(forward)]


def smart_lookahead(
    state: AgentState, kg: KnowledgeGraph, planner: Planner, config: EngineConfig
) -> RunResult | None:
    """Try exemplar relation paths from the topic entities before iteration 1."""
    if state.iteration != 0:
        raise ValueError("lookahead only runs before the first iteration")
    if not config.lookahead or not state.guide_relations:
        return None
    first_hop: set[Candidate] = set()
    for e in state.topic_entities:
        first_hop.update(_candidates(kg, e, config))
    forward = {c for c in first_hop if c[0] in state.guide_relations}
    if not forward:
        return None
    state.counters.lookahead_triggered = True

    tried: set[tuple[RelationPath, str]] = set()
    for ex in state.exemplars:
        for gold in ex.question.gold_paths:
            if not gold.length:
                continue
            for rel_path in _lookahead_relation_paths(gold, forward, config.lookahead_match):
                for topic in state.topic_entities:
                    if (rel_path, topic) in tried:
                        continue
                    tried.add((rel_path, topic))
                    for candidate in instantiate_relation_path(kg, topic, rel_path, config.lookahead_path_cap):
                        if state.counters.lookahead_verdicts >= config.lookahead_verdict_cap:
                            return None
                        state.counters.lookahead_verdicts += 1
                        state.memory.subgraph.update(candidate.triples())
                        verdict = planner.lookahead_verdict(state.question, candidate)
                        if verdict.sufficient:
                            state.counters.lookahead_answered = True
                            return RunResult(
                                list(verdict.answer), [candidate], state.counters, planner.transcript,
                                state.pruning_log, state.memory,
                            )
    return None


def relation_exploration(state: AgentState, kg: KnowledgeGraph, planner: Planner, config: EngineConfig) -> None:
    """Fill ``state.pending`` with (path, relation, direction) stubs for the frontier."""
    per_entity: dict[str, list[Candidate]] = {}
    state.pending = []
    exemplars = state.exemplars if config.guide_exploration else []
    for path in state.frontier:
        e = path.tail
        if e not in per_entity:
            cands = _candidates(kg, e, config)
            if not cands:
                per_entity[e] = []
                continue
            selection = planner.prune_relations(
                state.question, state.objectives, e, cands, exemplars
            )
            final = final_relation_set(selection.selected, cands, state.guide_relations)
            state.counters.relation_counts.append(len(final))
            state.pruning_log.append(PruningRecord(
                state.iteration, e, tuple(cands), tuple(sorted(selection.selected)),
                tuple(sorted(state.guide_relations)), tuple(final),
            ))
            per_entity[e] = final
        for rel, d in per_entity[e]:
            state.pending.append((path, rel, d))


def _cap_candidates(
    question: str, entities: list[str], width: int, kg: KnowledgeGraph, scorer: RelevanceScorer | None
) -> list[str]:
    if len(entities) <= width:
        return entities
    if scorer is None:
        return sorted(entities)[:width]
    scores = scorer.score(question, [kg.label(e) for e in entities])
    ranked = sorted(zip(entities, scores), key=lambda es: (-es[1], es[0]))
    return sorted(e for e, _ in ranked[:width])


def entity_exploration(
    state: AgentState,
    kg: KnowledgeGraph,
    planner: Planner,
    config: EngineConfig,
    scorer: RelevanceScorer | None = None,
) -> list[tuple[ReasoningPath, Triple]]:
    """Expand pending stubs, record them in memory, and let the planner pick survivors.

    Returns the offered extensions; ``state.frontier`` becomes the selected ones.
    An empty return means a dead end and leaves the frontier untouched.
    """
    extended: list[tuple[ReasoningPath, Triple]] = []
    for path, rel, d in state.pending:
        cands = [e for e in kg.expand(path.tail, rel, d) if e not in path.entities]
        for e in _cap_candidates(state.question, cands, config.width, kg, scorer):
            new_path = path.extend(rel, d, e)
            triple = new_path.triples()[-1]
            state.memory.subgraph.add(triple)
            state.memory.candidate_history.add(e)
            state.memory.trails.setdefault(e, new_path)
            extended.append((new_path, triple))
    state.pending = []
    if not extended:
        return []
    chosen = planner.select_paths(state.question, extended)
    state.frontier = [extended[i][0] for i in chosen]
    for p in state.frontier:
        state.memory.add_path(p)
    return extended


def _supporting_paths(state: AgentState, kg: KnowledgeGraph, answers: Sequence[str]) -> list[ReasoningPath]:
    wanted = {normalize_answer(a) for a in answers}
    hits = [
        p for p in state.memory.paths
        if normalize_answer(kg.label(p.tail)) in wanted or normalize_answer(p.tail) in wanted
    ]
    return hits or [p for p in state.frontier if p.length]


def apply_backtrack(state: AgentState, entities: Sequence[str]) -> list[str]:
    """Append resumable paths for historical entities not already on the frontier."""
    added = []
    current = set(state.frontier_entities)
    for e in entities:
        if e in state.memory.candidate_history and e not in current and e in state.memory.trails:
            state.frontier.append(state.memory.trails[e])
            current.add(e)
            added.append(e)
    state.added_by_reflection.extend(added)
    state.counters.backtracked += len(added)
    return added


def _reflect(state: AgentState, planner: Planner, dead_end: bool) -> None:
    frontier = set(state.frontier_entities)
    history = sorted(state.memory.candidate_history - frontier)
    decision = planner.reflect(
        state.question, state.objectives, state.memory.paths,
        [] if dead_end else state.frontier_entities, history, dead_end=dead_end,
    )
    if dead_end:
        state.frontier = []
    apply_backtrack(state, decision.backtrack_entities)


def evaluate_and_reflect(state: AgentState, kg: KnowledgeGraph, planner: Planner) -> RunResult | None:
    """Finish when the memory suffices; otherwise reflect and maybe backtrack."""
    verdict = planner.evaluate_sufficiency(state.question, state.objectives, state.memory.paths)
    if verdict.sufficient:
        return RunResult(
            list(verdict.answer), _supporting_paths(state, kg, verdict.answer), state.counters,
            planner.transcript, state.pruning_log, state.memory, state.added_by_reflection,
        )
    _reflect(state, planner, dead_end=False)
    return None


def _topic_ids(topic_entities: Sequence["TopicEntity | str"]) -> list[str]:
    return [t.entity if isinstance(t, TopicEntity) else t for t in topic_entities]


def _annotations(topic_entities: Sequence["TopicEntity | str"], kg: KnowledgeGraph) -> list[TopicEntity]:
    return [t if isinstance(t, TopicEntity) else TopicEntity(t, kg.label(t)) for t in topic_entities]


def run(
    question: str,
    topic_entities: Sequence["TopicEntity | str"],
    deps: EngineDeps,
    config: EngineConfig = EngineConfig(),
    exemplars: Sequence[Exemplar] | None = None,
) -> RunResult:
    """Answer ``question`` starting from ``topic_entities``.

    ``exemplars`` overrides retrieval; pass ``[]`` to run unguided.
    """
    kg, planner = deps.kg, deps.planner
    topics = _topic_ids(topic_entities)
    if not topics:
        raise ValueError("at least one topic entity is required")
    state: AgentState | None = None
    try:
        if exemplars is None:
            exemplars = deps.retriever(question, _annotations(topic_entities, kg)) if deps.retriever else []
        objectives = planner.decompose(
            question, topics, exemplars if config.guide_decomposition else []
        )
        state = init_state(question, topics, exemplars, config, objectives)

        early = smart_lookahead(state, kg, planner, config)
        if early is not None:
            return _finish(early, planner)

        for depth in range(1, config.d_max + 1):
            state.iteration = depth
            state.counters.iterations_used = depth
            relation_exploration(state, kg, planner, config)
            extended = entity_exploration(state, kg, planner, config, deps.scorer) if state.pending else []
            if not extended:
                state.counters.dead_ends += 1
                _reflect(state, planner, dead_end=True)
                if not state.frontier:
                    break
                continue
            state.memory.statuses = planner.update_statuses(
                question, state.objectives, state.memory.summary(), state.frontier
            )
            done = evaluate_and_reflect(state, kg, planner)
            if done is not None:
                return _finish(done, planner)

        verdict = planner.evaluate_sufficiency(question, state.objectives, state.memory.paths, forced=True)
        state.counters.forced_answer = True
        result = RunResult(
            list(verdict.answer), _supporting_paths(state, kg, verdict.answer), state.counters,
            planner.transcript, state.pruning_log, state.memory, state.added_by_reflection,
        )
        return _finish(result, planner)
    except (PlannerError, KGError, EmbeddingError) as exc:
        counters = state.counters if state is not None else RunCounters()
        counters.llm_calls = planner.calls
        raise RunError(str(exc), planner.transcript, counters) from exc


def _finish(result: RunResult, planner: Planner) -> RunResult:
    result.counters.llm_calls = planner.calls
    return result


def verify_memory(result: RunResult, kg: KnowledgeGraph) -> list[str]:
    """Step-by-step re-validation of every stored path; returns violation messages."""
    problems = []
    paths = list(result.supporting_paths)
    if result.memory is not None:
        paths += result.memory.paths + list(result.memory.trails.values())
        for t in result.memory.subgraph:
            if not kg.has_triple(t.head, t.relation, t.tail):
                problems.append(f"subgraph triple not in KG: {t}")
    for p in paths:
        for t in p.triples():
            if not kg.has_triple(t.head, t.relation, t.tail):
                problems.append(f"path {p.render()} uses missing triple {t}")
    return problems
