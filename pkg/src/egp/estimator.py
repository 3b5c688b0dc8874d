"""scikit-learn style front end: ``fit`` indexes training questions, ``predict`` answers."""

from __future__ import annotations

from typing import Sequence

from sklearn.base import BaseEstimator
from sklearn.utils.validation import check_is_fitted

from egp._validation import check_positive_int, check_question, check_records
from egp.engine import EmbeddingRelevanceScorer, EngineConfig, EngineDeps, RunResult, run
from egp.exemplars.embedding import EmbeddingProvider, HashingEmbeddingProvider
from egp.exemplars.index import ExemplarIndex, build_index
from egp.exemplars.records import TrainingQuestion
from egp.exemplars.retrieval import ExemplarRetriever, RetrievalConfig
from egp.harness import EvalReport, evaluate, is_correct
from egp.kg import KnowledgeGraph
from egp.planner.planner import Planner
from egp.planner.providers import LlmProvider, Transcript


class ExemplarGuidedQA(BaseEstimator):
    """Exemplar-guided KGQA agent.

    Parameters
    ----------
    kg : KnowledgeGraph
        Graph the agent explores.
    llm : LlmProvider or callable
        Provider shared by all questions, or ``record -> provider`` for one
        provider per question (e.g. per-question mock scripts).
    embedder : EmbeddingProvider, optional
        Used for exemplar retrieval and, unless ``scorer`` is given, for
        capping large candidate-entity sets. Defaults to a hashing embedder.
    k, tau, overfetch : retrieval knobs; see :class:`RetrievalConfig`.
    d_max, width, lookahead_* , guide_*, relation_blocklist : see :class:`EngineConfig`.
    use_exemplars : bool
        False runs plain exploration with no retrieval; ``fit`` then accepts None.
    """

    def __init__(
        self,
        kg: KnowledgeGraph | None = None,
        llm=None,
        embedder: EmbeddingProvider | None = None,
        scorer=None,
        k: int = 3,
        tau: float = 0.85,
        overfetch: int = 20,
        d_max: int = 4,
        width: int = 30,
        lookahead: bool = True,
        lookahead_path_cap: int = 8,
        lookahead_verdict_cap: int = 5,
        lookahead_match: str = "full",
        guide_decomposition: bool = True,
        guide_exploration: bool = True,
        relation_blocklist: Sequence[str] = (),
        use_exemplars: bool = True,
        parallel: int = 1,
    ):
        self.kg = kg
        self.llm = llm
        self.embedder = embedder
        self.scorer = scorer
        self.k = k
        self.tau = tau
        self.overfetch = overfetch
        self.d_max = d_max
        self.width = width
        self.lookahead = lookahead
        self.lookahead_path_cap = lookahead_path_cap
        self.lookahead_verdict_cap = lookahead_verdict_cap
        self.lookahead_match = lookahead_match
        self.guide_decomposition = guide_decomposition
        self.guide_exploration = guide_exploration
        self.relation_blocklist = relation_blocklist
        self.use_exemplars = use_exemplars
        self.parallel = parallel

    # -- configuration ---------------------------------------------------------

    def _embedder(self) -> EmbeddingProvider:
        return self.embedder if self.embedder is not None else HashingEmbeddingProvider()

    def engine_config(self) -> EngineConfig:
        return EngineConfig(
            d_max=self.d_max,
            width=self.width,
            lookahead=self.lookahead,
            lookahead_path_cap=self.lookahead_path_cap,
            lookahead_verdict_cap=self.lookahead_verdict_cap,
            lookahead_match=self.lookahead_match,
            guide_decomposition=self.guide_decomposition,
            guide_exploration=self.guide_exploration,
            relation_blocklist=tuple(self.relation_blocklist),
        )

    def retrieval_config(self) -> RetrievalConfig:
        return RetrievalConfig(k=self.k, tau=self.tau, overfetch=self.overfetch)

    # -- fitting ---------------------------------------------------------------

    def fit(self, X=None, y=None):
        """Build the exemplar index from training records (ignored when unguided)."""
        if self.kg is None:
            raise ValueError("kg must be set before fit")
        check_positive_int("parallel", self.parallel)
        self.engine_config_ = self.engine_config()
        if not self.use_exemplars:
            self.records_ = []
            self.index_ = None
            self.retriever_ = None
            return self
        records = check_records(X, require_gold=True)
        index = build_index(records, self._embedder())
        return self._attach(index, records)

    def fit_from_index(self, index: ExemplarIndex, records: Sequence[TrainingQuestion]):
        """Use a prebuilt (e.g. loaded) index instead of embedding ``records`` again."""
        self.engine_config_ = self.engine_config()
        if not self.use_exemplars:
            return self.fit(None)
        return self._attach(index, check_records(records, require_gold=True))

    def _attach(self, index: ExemplarIndex, records: list[TrainingQuestion]):
        self.records_ = records
        self.index_ = index
        self.retriever_ = ExemplarRetriever(index, records, self._embedder(), self.retrieval_config())
        return self

    # -- inference -------------------------------------------------------------

    def _provider_for(self, record: TrainingQuestion, llm=None) -> LlmProvider:
        source = llm if llm is not None else self.llm
        if source is None:
            raise ValueError("no LLM provider configured")
        if isinstance(source, LlmProvider):
            return source
        return source(record)

    def run_one(self, record, llm=None) -> RunResult:
        """Full agent run for one question; returns the result with its transcript."""
        check_is_fitted(self, "engine_config_")
        record = check_question(record)
        planner = Planner(self._provider_for(record, llm), Transcript(), label=self.kg.label)
        scorer = self.scorer if self.scorer is not None else EmbeddingRelevanceScorer(self._embedder())
        deps = EngineDeps(self.kg, planner, self.retriever_, scorer)
        exemplars = None if self.use_exemplars else []
        return run(record.text, list(record.topic_entities), deps, self.engine_config_, exemplars=exemplars)

    def predict(self, X) -> list[list[str]]:
        return [list(self.run_one(x).answers) for x in X]

    def evaluate(self, X) -> EvalReport:
        records = [check_question(x, i) for i, x in enumerate(X)]
        mode = "guided" if self.use_exemplars else "unguided"
        return evaluate(records, self.run_one, mode=mode, parallel=self.parallel)

    def score(self, X, y=None) -> float:
        """Hits@1 over ``X``; gold answers come from ``y`` or from the records."""
        records = [check_question(x, i) for i, x in enumerate(X)]
        gold = y if y is not None else [r.answers for r in records]
        preds = self.predict(records)
        return sum(is_correct(p, g) for p, g in zip(preds, gold)) / len(records)
