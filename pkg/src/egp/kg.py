"""Knowledge-graph access: triples, neighbour queries and relation-path instantiation.

Two backends share the :class:`KnowledgeGraph` contract: :class:`InMemoryGraph`,
loaded from a three-column TSV file, and :class:`SparqlGraph`, which talks to a
SPARQL-protocol HTTP endpoint through three fixed query templates.
"""

from __future__ import annotations

import enum
import io
import logging
import time
from abc import ABC, abstractmethod
from collections import defaultdict
from dataclasses import dataclass, field
from typing import BinaryIO, Iterable, Iterator

import httpx

logger = logging.getLogger(__name__)

DEFAULT_INSTANTIATION_CAP = 16


class KGError(Exception):
    """Base class for knowledge-graph errors."""


class TripleParseError(KGError):
    def __init__(self, line_no: int, message: str):
        super().__init__(f"line {line_no}: {message}")
        self.line_no = line_no


class BackendError(KGError):
    """Transport failure talking to a remote graph; carries the failing query."""

    def __init__(self, message: str, query: str):
        super().__init__(message)
        self.query = query


class ProtocolError(KGError):
    """The remote endpoint answered with something that is not a SPARQL JSON result."""


class Direction(enum.Enum):
    OUTGOING = "outgoing"
    INCOMING = "incoming"

    @classmethod
    def parse(cls, value: "str | Direction") -> "Direction":
        if isinstance(value, Direction):
            return value
        key = str(value).strip().lower()
        if key in ("outgoing", "out", "forward", "->"):
            return cls.OUTGOING
        if key in ("incoming", "in", "backward", "<-"):
            return cls.INCOMING
        raise ValueError(f"unknown direction {value!r}")

    @property
    def arrow(self) -> str:
        return "->" if self is Direction.OUTGOING else "<-"

    def __lt__(self, other: "Direction") -> bool:
        # Outgoing sorts before Incoming.
        order = (Direction.OUTGOING, Direction.INCOMING)
        return order.index(self) < order.index(other)


@dataclass(frozen=True)
class Entity:
    """A graph node. Equality and hashing use ``id`` only."""

    id: str
    label: str | None = field(default=None, compare=False)

    def __post_init__(self):
        if not self.id:
            raise ValueError("entity id must be non-empty")

    @property
    def display(self) -> str:
        return self.label if self.label else self.id


@dataclass(frozen=True, order=True)
class Triple:
    head: str
    relation: str
    tail: str

    def __post_init__(self):
        if not (self.head and self.relation and self.tail):
            raise ValueError(f"triple fields must be non-empty: {self!r}")


@dataclass(frozen=True, order=True)
class RelationStep:
    """One oriented hop: a relation name plus the direction it is traversed in."""

    relation: str
    direction: Direction = Direction.OUTGOING

    def __post_init__(self):
        if not self.relation:
            raise ValueError("relation name must be non-empty")

    def __str__(self) -> str:
        return f"{self.relation}{self.direction.arrow}"


@dataclass(frozen=True)
class RelationPath:
    """An ordered, oriented relation sequence ``r_1 .. r_l`` with ``l >= 1``."""

    relations: tuple[str, ...]
    directions: tuple[Direction, ...]

    def __post_init__(self):
        if not self.relations:
            raise ValueError("relation path must contain at least one relation")
        if len(self.relations) != len(self.directions):
            raise ValueError("relations and directions must have equal length")
        if not all(self.relations):
            raise ValueError("relation names must be non-empty")

    @classmethod
    def of(cls, *steps: "RelationStep | tuple[str, Direction | str] | str") -> "RelationPath":
        """Build from steps; bare strings are outgoing relations."""
        rels, dirs = [], []
        for step in steps:
            if isinstance(step, RelationStep):
                rels.append(step.relation)
                dirs.append(step.direction)
            elif isinstance(step, str):
                rels.append(step)
                dirs.append(Direction.OUTGOING)
            else:
                rels.append(step[0])
                dirs.append(Direction.parse(step[1]))
        return cls(tuple(rels), tuple(dirs))

    @property
    def steps(self) -> tuple[RelationStep, ...]:
        return tuple(RelationStep(r, d) for r, d in zip(self.relations, self.directions))

    def __len__(self) -> int:
        return len(self.relations)

    def __str__(self) -> str:
        return " ".join(str(s) for s in self.steps)


@dataclass(frozen=True)
class ReasoningPath:
    """A concrete entity chain ``e_0 -r_1-> e_1 ... -r_l-> e_l``.

    Length-0 paths (a single seed entity) are allowed so exploration can start
    from topic entities. ``relation_path`` is only defined for ``l >= 1``.
    """

    entities: tuple[str, ...]
    relations: tuple[str, ...] = ()
    directions: tuple[Direction, ...] = ()

    def __post_init__(self):
        if not self.entities:
            raise ValueError("reasoning path needs at least one entity")
        if len(self.relations) != len(self.directions):
            raise ValueError("relations and directions must have equal length")
        if len(self.entities) != len(self.relations) + 1:
            raise ValueError("entity count must equal relation count + 1")

    @classmethod
    def seed(cls, entity: str) -> "ReasoningPath":
        return cls((entity,))

    @property
    def head(self) -> str:
        return self.entities[0]

    @property
    def tail(self) -> str:
        return self.entities[-1]

    @property
    def length(self) -> int:
        return len(self.relations)

    @property
    def relation_path(self) -> RelationPath:
        return RelationPath(self.relations, self.directions)

    @property
    def signature(self) -> tuple[tuple[str, Direction], ...]:
        return tuple(zip(self.relations, self.directions))

    def extend(self, relation: str, direction: Direction, entity: str) -> "ReasoningPath":
        return ReasoningPath(
            self.entities + (entity,),
            self.relations + (relation,),
            self.directions + (direction,),
        )

    def triples(self) -> list[Triple]:
        """The KG triples this path traverses, in stored orientation."""
        out = []
        for i, (rel, d) in enumerate(zip(self.relations, self.directions)):
            a, b = self.entities[i], self.entities[i + 1]
            out.append(Triple(a, rel, b) if d is Direction.OUTGOING else Triple(b, rel, a))
        return out

    def render(self, label=None) -> str:
        """Render as ``e0 --r1--> e1``; incoming hops render as ``e0 <--r1-- e1``."""
        name = label or (lambda e: e)
        parts = [name(self.entities[0])]
        for rel, d, ent in zip(self.relations, self.directions, self.entities[1:]):
            arrow = f"--{rel}-->" if d is Direction.OUTGOING else f"<--{rel}--"
            parts.append(f"{arrow} {name(ent)}")
        return " ".join(parts)

    def to_json(self) -> dict:
        return {
            "entities": list(self.entities),
            "relations": list(self.relations),
            "directions": [d.value for d in self.directions],
        }

    @classmethod
    def from_json(cls, obj: dict) -> "ReasoningPath":
        return cls(
            tuple(obj["entities"]),
            tuple(obj.get("relations", ())),
            tuple(Direction.parse(d) for d in obj.get("directions", ())),
        )


class KnowledgeGraph(ABC):
    """Read-only graph contract used by the exploration engine."""

    @abstractmethod
    def relations_of(self, entity: str) -> list[tuple[str, Direction]]:
        """All (relation, direction) pairs touching ``entity``, sorted."""

    @abstractmethod
    def expand(self, entity: str, relation: str, direction: Direction) -> list[str]:
        """Neighbours of ``entity`` over ``relation`` in ``direction``, sorted by id."""

    def label(self, entity: str) -> str:
        return entity

    def has_triple(self, head: str, relation: str, tail: str) -> bool:
        return tail in self.expand(head, relation, Direction.OUTGOING)

    def verify_path(self, path: ReasoningPath) -> bool:
        return all(self.has_triple(t.head, t.relation, t.tail) for t in path.triples())


class InMemoryGraph(KnowledgeGraph):
    """Immutable indexed triple set. Safe for concurrent readers."""

    def __init__(self, triples: Iterable[Triple] = (), labels: dict[str, str] | None = None):
        self._triples = frozenset(triples)
        out: dict[str, dict[str, set]] = defaultdict(lambda: defaultdict(set))
        inc: dict[str, dict[str, set]] = defaultdict(lambda: defaultdict(set))
        for t in self._triples:
            out[t.head][t.relation].add(t.tail)
            inc[t.tail][t.relation].add(t.head)
        self._index = {
            Direction.OUTGOING: {e: {r: tuple(sorted(v)) for r, v in rs.items()} for e, rs in out.items()},
            Direction.INCOMING: {e: {r: tuple(sorted(v)) for r, v in rs.items()} for e, rs in inc.items()},
        }
        self._labels = dict(labels or {})

    def __len__(self) -> int:
        return len(self._triples)

    def __contains__(self, triple: Triple) -> bool:
        return triple in self._triples

    @property
    def triples(self) -> list[Triple]:
        return sorted(self._triples)

    @property
    def entities(self) -> list[str]:
        return sorted(set(self._index[Direction.OUTGOING]) | set(self._index[Direction.INCOMING]))

    def relations_of(self, entity: str) -> list[tuple[str, Direction]]:
        pairs = [
            (r, d)
            for d in (Direction.OUTGOING, Direction.INCOMING)
            for r in self._index[d].get(entity, {})
        ]
        return sorted(pairs)

    def expand(self, entity: str, relation: str, direction: Direction) -> list[str]:
        return list(self._index[direction].get(entity, {}).get(relation, ()))

    def has_triple(self, head: str, relation: str, tail: str) -> bool:
        return Triple(head, relation, tail) in self._triples

    def label(self, entity: str) -> str:
        return self._labels.get(entity, entity)

    def dump_tsv(self) -> str:
        return "".join(f"{t.head}\t{t.relation}\t{t.tail}\n" for t in self.triples)


def _iter_lines(source: "BinaryIO | bytes | str") -> Iterator[str]:
    if isinstance(source, bytes):
        source = io.BytesIO(source)
    if isinstance(source, str):
        source = io.BytesIO(source.encode("utf-8"))
    for raw in source:
        yield raw.decode("utf-8") if isinstance(raw, bytes) else raw


def parse_triples(source: "BinaryIO | bytes | str") -> Iterator[Triple]:
    for line_no, line in enumerate(_iter_lines(source), start=1):
        line = line.rstrip("\r\n")
        if not line:
            continue
        fields = line.split("\t")
        if len(fields) != 3:
            raise TripleParseError(line_no, f"expected 3 tab-separated fields, got {len(fields)}")
        if not all(fields):
            raise TripleParseError(line_no, "empty field")
        yield Triple(*fields)


def load_triples(source: "BinaryIO | bytes | str", labels: dict[str, str] | None = None) -> InMemoryGraph:
    """Load a UTF-8 ``head\\trelation\\ttail`` stream; duplicate lines collapse."""
    graph = InMemoryGraph(parse_triples(source), labels=labels)
    logger.info("loaded %d distinct triples", len(graph))
    return graph


def load_triples_file(path, labels: dict[str, str] | None = None) -> InMemoryGraph:
    with open(path, "rb") as fh:
        return load_triples(fh, labels=labels)


def instantiate_relation_path(
    graph: KnowledgeGraph,
    start: str,
    path: RelationPath,
    cap: int = DEFAULT_INSTANTIATION_CAP,
) -> list[ReasoningPath]:
    """Depth-first enumeration of entity chains realising ``path`` from ``start``.

    Neighbours are visited in ascending id order, so the first ``cap`` results
    are the lexicographically smallest chains.
    """
    if cap < 1:
        raise ValueError("cap must be >= 1")
    found: list[ReasoningPath] = []

    def walk(current: ReasoningPath, depth: int) -> None:
        if len(found) >= cap:
            return
        if depth == len(path):
            found.append(current)
            return
        rel, d = path.relations[depth], path.directions[depth]
        for nxt in graph.expand(current.tail, rel, d):
            walk(current.extend(rel, d, nxt), depth + 1)
            if len(found) >= cap:
                return

    walk(ReasoningPath.seed(start), 0)
    return found


# --- SPARQL endpoint client -------------------------------------------------

FREEBASE_PREFIX = "http://rdf.freebase.com/ns/"

OUTGOING_RELATIONS_QUERY = "SELECT DISTINCT ?relation WHERE {{ {entity} ?relation ?x . }}"
INCOMING_RELATIONS_QUERY = "SELECT DISTINCT ?relation WHERE {{ ?x ?relation {entity} . }}"
NEIGHBOR_QUERY = "SELECT DISTINCT ?neighbor WHERE {{ {subject} {relation} {object} . }}"

# Characters not allowed raw inside an IRIREF; emitted as \uXXXX escapes.
_IRI_FORBIDDEN = set('<>"{}|^`\\ ') | {chr(c) for c in range(0x21)}


def escape_iri(value: str) -> str:
    return "".join(f"\\u{ord(ch):04X}" if ch in _IRI_FORBIDDEN else ch for ch in value)


class SparqlGraph(KnowledgeGraph):
    """Graph served by a SPARQL endpoint (POST ``query`` form field, JSON results).

    Identifiers are mapped to IRIs as ``<prefix + id>``; result IRIs sharing the
    prefix are mapped back to bare ids. Literal neighbours are returned verbatim.
    """

    def __init__(
        self,
        endpoint: str,
        timeout: float = 30.0,
        retries: int = 2,
        backoff: float = 0.5,
        prefix: str = FREEBASE_PREFIX,
        client: httpx.Client | None = None,
    ):
        self.endpoint = endpoint
        self.timeout = timeout
        self.retries = retries
        self.backoff = backoff
        self.prefix = prefix
        self._client = client or httpx.Client(timeout=timeout)

    def _iri(self, ident: str) -> str:
        return f"<{escape_iri(self.prefix + ident)}>"

    def _unwrap(self, term: dict) -> str:
        value = term.get("value")
        if not isinstance(value, str):
            raise ProtocolError(f"binding without string value: {term!r}")
        if term.get("type") == "uri" and value.startswith(self.prefix):
            return value[len(self.prefix):]
        return value

    def query(self, sparql: str) -> list[dict]:
        """POST ``sparql`` and return the result bindings."""
        last_exc: Exception | None = None
        for attempt in range(self.retries + 1):
            if attempt:
                time.sleep(self.backoff)
            try:
                resp = self._client.post(
                    self.endpoint,
                    data={"query": sparql},
                    headers={"Accept": "application/sparql-results+json"},
                    timeout=self.timeout,
                )
                resp.raise_for_status()
            except httpx.HTTPError as exc:
                last_exc = exc
                logger.warning("sparql attempt %d failed: %s", attempt + 1, exc)
                continue
            try:
                body = resp.json()
                return list(body["results"]["bindings"])
            except (ValueError, KeyError, TypeError) as exc:
                raise ProtocolError(f"malformed SPARQL JSON response: {exc}") from exc
        raise BackendError(f"SPARQL request failed after {self.retries + 1} attempts: {last_exc}", sparql)

    def _column(self, sparql: str, var: str) -> list[str]:
        values = set()
        for row in self.query(sparql):
            if var not in row:
                raise ProtocolError(f"binding missing ?{var}: {row!r}")
            values.add(self._unwrap(row[var]))
        return sorted(values)

    def relations_of(self, entity: str) -> list[tuple[str, Direction]]:
        iri = self._iri(entity)
        out = self._column(OUTGOING_RELATIONS_QUERY.format(entity=iri), "relation")
        inc = self._column(INCOMING_RELATIONS_QUERY.format(entity=iri), "relation")
        return sorted([(r, Direction.OUTGOING) for r in out] + [(r, Direction.INCOMING) for r in inc])

    def expand(self, entity: str, relation: str, direction: Direction) -> list[str]:
        iri, rel = self._iri(entity), self._iri(relation)
        if direction is Direction.OUTGOING:
            q = NEIGHBOR_QUERY.format(subject=iri, relation=rel, object="?neighbor")
        else:
            q = NEIGHBOR_QUERY.format(subject="?neighbor", relation=rel, object=iri)
        return self._column(q, "neighbor")

    def close(self) -> None:
        self._client.close()
