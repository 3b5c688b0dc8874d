"""Run configuration: a JSON document with kg, embedding_provider, llm_provider,
retrieval, engine and harness sections. Relative paths resolve against the
config file's directory."""

from __future__ import annotations

import json
from dataclasses import dataclass, field, fields
from pathlib import Path
from typing import Any

from egp.engine import EngineConfig
from egp.exemplars.embedding import EmbeddingProvider, HashingEmbeddingProvider, HttpEmbeddingProvider
from egp.exemplars.retrieval import RetrievalConfig
from egp.kg import FREEBASE_PREFIX, KnowledgeGraph, SparqlGraph, load_triples_file
from egp.planner.providers import ChatProvider, LlmProvider

SECTIONS = ("kg", "embedding_provider", "llm_provider", "retrieval", "engine", "harness")


class ConfigError(ValueError):
    pass


@dataclass
class KGSection:
    source: str | None = None
    timeout: float = 30.0
    retries: int = 2
    backoff: float = 0.5
    prefix: str = FREEBASE_PREFIX


@dataclass
class EmbeddingSection:
    type: str = "hashing"
    dimension: int = 256
    base_url: str | None = None
    model: str | None = None
    timeout: float = 30.0
    retries: int = 2


@dataclass
class LlmSection:
    type: str = "mock"
    base_url: str | None = None
    model: str | None = None
    timeout: float = 60.0
    retries: int = 2


@dataclass
class RetrievalSection:
    k: int = 3
    tau: float = 0.85
    overfetch: int = 20
    index: str | None = None
    train: str | None = None


@dataclass
class HarnessSection:
    parallel: int = 4


def _section(cls, data: dict | None, name: str):
    data = dict(data or {})
    known = {f.name for f in fields(cls)}
    unknown = sorted(set(data) - known)
    if unknown:
        raise ConfigError(f"unknown keys in [{name}]: {', '.join(unknown)}")
    return cls(**data)


@dataclass
class Config:
    kg: KGSection = field(default_factory=KGSection)
    embedding_provider: EmbeddingSection = field(default_factory=EmbeddingSection)
    llm_provider: LlmSection = field(default_factory=LlmSection)
    retrieval: RetrievalSection = field(default_factory=RetrievalSection)
    engine: EngineConfig = field(default_factory=EngineConfig)
    harness: HarnessSection = field(default_factory=HarnessSection)
    base_dir: Path = field(default_factory=Path.cwd)

    @classmethod
    def from_dict(cls, data: dict[str, Any], base_dir: Path | None = None) -> "Config":
        unknown = sorted(set(data) - set(SECTIONS))
        if unknown:
            raise ConfigError(f"unknown config sections: {', '.join(unknown)}")
        engine = dict(data.get("engine") or {})
        if "relation_blocklist" in engine:
            engine["relation_blocklist"] = tuple(engine["relation_blocklist"])
        try:
            return cls(
                kg=_section(KGSection, data.get("kg"), "kg"),
                embedding_provider=_section(EmbeddingSection, data.get("embedding_provider"), "embedding_provider"),
                llm_provider=_section(LlmSection, data.get("llm_provider"), "llm_provider"),
                retrieval=_section(RetrievalSection, data.get("retrieval"), "retrieval"),
                engine=_section(EngineConfig, engine, "engine"),
                harness=_section(HarnessSection, data.get("harness"), "harness"),
                base_dir=base_dir or Path.cwd(),
            )
        except (TypeError, ValueError) as exc:
            if isinstance(exc, ConfigError):
                raise
            raise ConfigError(str(exc)) from exc

    @classmethod
    def load(cls, path) -> "Config":
        path = Path(path)
        try:
            data = json.loads(path.read_text(encoding="utf-8"))
        except (OSError, ValueError) as exc:
            raise ConfigError(f"cannot read config {path}: {exc}") from exc
        return cls.from_dict(data, base_dir=path.parent)

    def resolve(self, value: str | None) -> Path | None:
        if value is None:
            return None
        p = Path(value)
        return p if p.is_absolute() else self.base_dir / p

    @property
    def retrieval_config(self) -> RetrievalConfig:
        r = self.retrieval
        return RetrievalConfig(k=r.k, tau=r.tau, overfetch=r.overfetch)

    def open_kg(self, source: str | None = None) -> KnowledgeGraph:
        src = source or self.kg.source
        if not src:
            raise ConfigError("no knowledge graph configured (use --kg or [kg].source)")
        if src.startswith(("http://", "https://")):
            k = self.kg
            return SparqlGraph(src, timeout=k.timeout, retries=k.retries, backoff=k.backoff, prefix=k.prefix)
        path = self.resolve(src) if source is None else Path(src)
        return load_triples_file(path)

    def embedding(self) -> EmbeddingProvider:
        e = self.embedding_provider
        if e.type == "hashing":
            return HashingEmbeddingProvider(e.dimension)
        if e.type == "http":
            if not (e.base_url and e.model):
                raise ConfigError("http embedding provider needs base_url and model")
            return HttpEmbeddingProvider(e.base_url, e.model, e.dimension, timeout=e.timeout, retries=e.retries)
        raise ConfigError(f"unknown embedding provider type {e.type!r}")

    def llm(self) -> LlmProvider | None:
        """Chat provider from config; None for ``type = "mock"`` (scripts come from the CLI)."""
        s = self.llm_provider
        if s.type == "mock":
            return None
        if s.type == "chat":
            if not (s.base_url and s.model):
                raise ConfigError("chat provider needs base_url and model")
            return ChatProvider(s.base_url, s.model, timeout=s.timeout, retries=s.retries)
        raise ConfigError(f"unknown llm provider type {s.type!r}")
