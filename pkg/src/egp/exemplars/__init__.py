"""Exemplar retrieval layer: templating, embedding, indexing and lookup."""

from egp.exemplars.embedding import (
    EmbeddingError,
    EmbeddingProtocolError,
    EmbeddingProvider,
    HashingEmbeddingProvider,
    HttpEmbeddingProvider,
    embed_batch,
)
from egp.exemplars.index import (
    ExemplarIndex,
    IndexBuildError,
    IndexCorruptionError,
    IndexFormatError,
    build_index,
    dump_index,
    load_index,
    parse_index,
    save_index,
)
from egp.exemplars.records import (
    RecordParseError,
    TopicEntity,
    TrainingQuestion,
    path_from_steps,
    read_records,
    record_from_json,
    write_records,
)
from egp.exemplars.retrieval import (
    Exemplar,
    ExemplarRetriever,
    RetrievalConfig,
    extract_guide_relations,
    retrieve,
)
from egp.exemplars.templating import TEMPLATING_VERSION, TemplatedQuestion, template_question

__all__ = [
    "EmbeddingError",
    "EmbeddingProtocolError",
    "EmbeddingProvider",
    "Exemplar",
    "ExemplarIndex",
    "ExemplarRetriever",
    "HashingEmbeddingProvider",
    "HttpEmbeddingProvider",
    "IndexBuildError",
    "IndexCorruptionError",
    "IndexFormatError",
    "RecordParseError",
    "RetrievalConfig",
    "TEMPLATING_VERSION",
    "TemplatedQuestion",
    "TopicEntity",
    "TrainingQuestion",
    "build_index",
    "dump_index",
    "embed_batch",
    "extract_guide_relations",
    "load_index",
    "parse_index",
    "path_from_steps",
    "read_records",
    "record_from_json",
    "retrieve",
    "save_index",
    "template_question",
    "write_records",
]
