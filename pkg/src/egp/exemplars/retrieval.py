"""Threshold- and diversity-filtered exemplar retrieval."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Iterable, Mapping, Sequence

import numpy as np

from egp.exemplars.embedding import EmbeddingProvider, embed_batch
from egp.exemplars.index import ExemplarIndex
from egp.exemplars.records import TopicEntity, TrainingQuestion
from egp.exemplars.templating import template_question


@dataclass(frozen=True)
class RetrievalConfig:
    k: int = 3
    tau: float = 0.85
    overfetch: int = 20

    def __post_init__(self):
        if self.k < 1:
            raise ValueError("k must be >= 1")
        if self.overfetch < self.k:
            raise ValueError("overfetch must be >= k")
        if not -1.0 <= self.tau <= 1.0:
            raise ValueError("tau must lie in [-1, 1]")


@dataclass(frozen=True)
class Exemplar:
    question: TrainingQuestion
    templated_text: str
    similarity: float

    @property
    def id(self) -> str:
        return self.question.id


def retrieve(
    index: ExemplarIndex,
    store: Mapping[str, TrainingQuestion],
    query_vec: np.ndarray,
    cfg: RetrievalConfig = RetrievalConfig(),
    templated: Mapping[str, str] | None = None,
) -> list[Exemplar]:
    """Nearest training questions above ``cfg.tau`` with pairwise-distinct gold paths.

    Candidates are the top ``cfg.overfetch`` by inner product (ties by ascending
    id). A candidate is dropped when any of its gold relation-path signatures
    equals one held by an already kept exemplar.
    """
    kept: list[Exemplar] = []
    seen: set = set()
    for qid, score in index.ranked(query_vec, cfg.overfetch):
        if score < cfg.tau:
            continue
        record = store[qid]
        sigs = record.path_signatures
        if sigs & seen:
            continue
        seen |= sigs
        text = templated[qid] if templated else template_question(record.text, record.topic_entities).text
        kept.append(Exemplar(record, text, score))
        if len(kept) == cfg.k:
            break
    return kept


def extract_guide_relations(exemplars: Iterable[Exemplar]) -> list[str]:
    """Sorted union of relation names over every gold path of every exemplar."""
    names = {rel for ex in exemplars for path in ex.question.gold_paths for rel in path.relations}
    return sorted(names)


class ExemplarRetriever:
    """Binds an index to its records and provider; answers per-question lookups."""

    def __init__(
        self,
        index: ExemplarIndex,
        records: Sequence[TrainingQuestion],
        provider: EmbeddingProvider,
        cfg: RetrievalConfig = RetrievalConfig(),
        category_lookup: Callable[[str], str | None] | None = None,
    ):
        if index.dimension != provider.dimension:
            raise ValueError(
                f"index dimension {index.dimension} does not match provider dimension {provider.dimension}"
            )
        self.index = index
        self.store = {r.id: r for r in records}
        missing = [i for i in index.ids if i not in self.store]
        if missing:
            raise ValueError(f"index references unknown records: {', '.join(missing[:5])}")
        self.provider = provider
        self.cfg = cfg
        self.category_lookup = category_lookup
        self._templated = {
            r.id: template_question(r.text, r.topic_entities, category_lookup).text for r in records
        }

    def __call__(self, question: str, topic_entities: Sequence[TopicEntity]) -> list[Exemplar]:
        text = template_question(question, topic_entities, self.category_lookup).text
        vec = embed_batch(self.provider, [text])[0]
        return retrieve(self.index, self.store, vec, self.cfg, self._templated)
