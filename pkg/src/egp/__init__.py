"""Exemplar-guided planning for knowledge-graph question answering agents."""

from egp.engine import EngineConfig, EngineDeps, RunResult, run
from egp.estimator import ExemplarGuidedQA
from egp.kg import Direction, InMemoryGraph, ReasoningPath, RelationPath, SparqlGraph, Triple, load_triples

__version__ = "0.1.0"

__all__ = [
    "Direction",
    "EngineConfig",
    "EngineDeps",
    "ExemplarGuidedQA",
    "InMemoryGraph",
    "ReasoningPath",
    "RelationPath",
    "RunResult",
    "SparqlGraph",
    "Triple",
    "load_triples",
    "run",
]
