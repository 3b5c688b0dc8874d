import io
import urllib.parse

import httpx
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from conftest import FIXTURES
from egp.kg import (
    BackendError,
    Direction,
    InMemoryGraph,
    ProtocolError,
    ReasoningPath,
    RelationPath,
    SparqlGraph,
    Triple,
    TripleParseError,
    escape_iri,
    instantiate_relation_path,
    load_triples,
    load_triples_file,
)

OUT, IN = Direction.OUTGOING, Direction.INCOMING


# --- load_triples -------------------------------------------------------------

def test_empty_stream_gives_empty_graph():
    assert len(load_triples(io.BytesIO(b""))) == 0


def test_duplicate_lines_collapse():
    g = load_triples(b"A\tborn_in\tCityX\nA\tborn_in\tCityX")
    assert len(g) == 1


def test_five_line_fixture_membership():
    g = load_triples_file(FIXTURES / "small.tsv")
    lines = (FIXTURES / "small.tsv").read_text(encoding="utf-8").splitlines()
    assert len(g) == 5
    for line in lines:
        assert g.has_triple(*line.split("\t"))
    assert not g.has_triple("CountryY", "located_in", "CityX")


@pytest.mark.parametrize("data,line_no", [
    (b"A\tborn_in\tCityX\nA\tborn_in\n", 2),
    (b"A\tborn_in\tCityX\tx\n", 1),
    (b"A\t\tCityX\n", 1),
])
def test_malformed_lines_name_the_line(data, line_no):
    with pytest.raises(TripleParseError) as info:
        load_triples(data)
    assert info.value.line_no == line_no


def test_utf8_fields():
    g = load_triples("Zoë\tborn_in\tMünchen\n".encode("utf-8"))
    assert g.expand("Zoë", "born_in", OUT) == ["München"]


# --- queries --------------------------------------------------------------------

def test_relations_of_unknown_entity(three_kg):
    assert three_kg.relations_of("Nowhere") == []


def test_relations_of_single_triple():
    g = InMemoryGraph([Triple("A", "born_in", "CityX")])
    assert g.relations_of("A") == [("born_in", OUT)]


def test_relations_of_both_directions(three_kg):
    assert three_kg.relations_of("CityX") == [("born_in", IN), ("located_in", OUT)]


def test_expand(three_kg):
    assert three_kg.expand("A", "born_in", OUT) == ["CityX"]
    assert three_kg.expand("CityX", "born_in", IN) == ["A", "B"]
    assert three_kg.expand("A", "located_in", OUT) == []


def test_instantiate_two_hops(three_kg):
    paths = instantiate_relation_path(three_kg, "A", RelationPath.of("born_in", "located_in"))
    assert [p.entities for p in paths] == [("A", "CityX", "CountryY")]
    assert paths[0].render() == "A --born_in--> CityX --located_in--> CountryY"


def test_instantiate_unrealizable(three_kg):
    assert instantiate_relation_path(three_kg, "A", RelationPath.of("located_in")) == []


def test_instantiate_cap_keeps_smallest_targets():
    g = InMemoryGraph([Triple("A", "knows", x) for x in ("Zed", "Bea", "Max")])
    paths = instantiate_relation_path(g, "A", RelationPath.of("knows"), cap=2)
    assert [p.tail for p in paths] == ["Bea", "Max"]


def test_instantiate_rejects_bad_cap(three_kg):
    with pytest.raises(ValueError):
        instantiate_relation_path(three_kg, "A", RelationPath.of("born_in"), cap=0)


def test_incoming_render_and_triples():
    p = ReasoningPath.seed("CityX").extend("born_in", IN, "A")
    assert p.render() == "CityX <--born_in-- A"
    assert p.triples() == [Triple("A", "born_in", "CityX")]


def test_reasoning_path_invariants():
    with pytest.raises(ValueError):
        ReasoningPath(("A", "B"), (), ())
    with pytest.raises(ValueError):
        RelationPath((), ())
    assert ReasoningPath.from_json(ReasoningPath.seed("A").extend("r", IN, "B").to_json()).directions == (IN,)


def test_dump_round_trip_is_idempotent(small_kg):
    again = load_triples(small_kg.dump_tsv().encode("utf-8"))
    assert again.dump_tsv() == small_kg.dump_tsv()
    shuffled = "".join(reversed(small_kg.dump_tsv().splitlines(keepends=True))) * 2
    assert load_triples(shuffled).dump_tsv() == small_kg.dump_tsv()


# --- properties over random small graphs ------------------------------------------

ENTS = [f"e{i}" for i in range(8)]
RELS = ["p", "q", "r"]
triples_st = st.lists(
    st.builds(Triple, st.sampled_from(ENTS), st.sampled_from(RELS), st.sampled_from(ENTS)),
    max_size=100,
)
rel_path_st = st.lists(
    st.tuples(st.sampled_from(RELS), st.sampled_from([OUT, IN])), min_size=1, max_size=3
).map(lambda steps: RelationPath.of(*steps))


def brute_force_walks(triples, start, rel_path):
    """Every entity sequence realising rel_path, found by scanning the raw triple list."""
    triples = set(triples)
    walks = [(start,)]
    for rel, d in zip(rel_path.relations, rel_path.directions):
        nxt = []
        for walk in walks:
            for t in triples:
                if t.relation != rel:
                    continue
                if d is OUT and t.head == walk[-1]:
                    nxt.append(walk + (t.tail,))
                elif d is IN and t.tail == walk[-1]:
                    nxt.append(walk + (t.head,))
        walks = nxt
    return sorted(set(walks))


@settings(max_examples=200, deadline=None)
@given(triples_st, st.sampled_from(ENTS), rel_path_st)
def test_instantiation_matches_brute_force(triples, start, rel_path):
    g = InMemoryGraph(triples)
    expected = brute_force_walks(triples, start, rel_path)
    got = instantiate_relation_path(g, start, rel_path, cap=10_000)
    assert [p.entities for p in got] == expected
    for p in got:
        assert g.verify_path(p)


@settings(max_examples=100, deadline=None)
@given(triples_st)
def test_relations_of_iff_expand_nonempty(triples):
    g = InMemoryGraph(triples)
    for e in ENTS:
        rels = set(g.relations_of(e))
        for r in RELS:
            for d in (OUT, IN):
                assert ((r, d) in rels) == bool(g.expand(e, r, d))


@settings(max_examples=50, deadline=None)
@given(triples_st)
def test_queries_are_read_only(triples):
    g = InMemoryGraph(triples)
    before = [(g.relations_of(e), [g.expand(e, r, OUT) for r in RELS]) for e in ENTS]
    for e in reversed(ENTS):
        g.relations_of(e)
        for r in RELS:
            g.expand(e, r, IN)
    after = [(g.relations_of(e), [g.expand(e, r, OUT) for r in RELS]) for e in ENTS]
    assert before == after


# --- SPARQL backend -----------------------------------------------------------------

PREFIX = "http://rdf.freebase.com/ns/"


def bindings(var, values):
    return {"head": {"vars": [var]}, "results": {"bindings": [{var: {"type": "uri", "value": PREFIX + v}} for v in values]}}


class Recorder:
    def __init__(self, responder):
        self.requests = []
        self.responder = responder

    def __call__(self, request: httpx.Request) -> httpx.Response:
        form = urllib.parse.parse_qs(request.content.decode("utf-8"))
        self.requests.append((request, form["query"][0]))
        return self.responder(form["query"][0])


def sparql_graph(responder, **kwargs):
    rec = Recorder(responder)
    client = httpx.Client(transport=httpx.MockTransport(rec))
    return SparqlGraph("http://kg.test/sparql", client=client, backoff=0.0, **kwargs), rec


def test_remote_outgoing_relations():
    def respond(query):
        if query.startswith("SELECT DISTINCT ?relation WHERE { <"):
            return httpx.Response(200, json=bindings("relation", ["people.person.place_of_birth", "people.person.spouse_s"]))
        return httpx.Response(200, json=bindings("relation", []))

    g, rec = sparql_graph(respond)
    assert g.relations_of("m.0abc") == [
        ("people.person.place_of_birth", OUT), ("people.person.spouse_s", OUT),
    ]
    request = rec.requests[0][0]
    assert request.method == "POST"
    assert request.headers["accept"] == "application/sparql-results+json"


def test_remote_http_500_retries_then_fails():
    g, rec = sparql_graph(lambda q: httpx.Response(500), retries=2)
    with pytest.raises(BackendError) as info:
        g.expand("m.0abc", "people.person.place_of_birth", OUT)
    assert len(rec.requests) == 3
    assert "m.0abc" in info.value.query


def test_remote_malformed_response():
    g, _ = sparql_graph(lambda q: httpx.Response(200, content=b"<html>nope</html>"))
    with pytest.raises(ProtocolError):
        g.relations_of("m.0abc")


def test_remote_escapes_quotes_golden_request():
    g, rec = sparql_graph(lambda q: httpx.Response(200, json=bindings("neighbor", ["m.02"])))
    assert g.expand('m."bad"', "people.person.spouse_s", IN) == ["m.02"]
    golden = (
        "SELECT DISTINCT ?neighbor WHERE { ?neighbor <http://rdf.freebase.com/ns/people.person.spouse_s> "
        "<http://rdf.freebase.com/ns/m.\\u0022bad\\u0022> . }"
    )
    assert rec.requests[0][1] == golden
    assert escape_iri('a"b c') == "a\\u0022b\\u0020c"


def test_remote_literal_neighbours_and_has_triple():
    literal = {"results": {"bindings": [{"neighbor": {"type": "literal", "value": "1969"}}]}}
    g, _ = sparql_graph(lambda q: httpx.Response(200, json=literal))
    assert g.expand("m.01", "people.person.date_of_birth", OUT) == ["1969"]
    assert g.has_triple("m.01", "people.person.date_of_birth", "1969")


def test_remote_concurrent_requests_are_isolated():
    from concurrent.futures import ThreadPoolExecutor

    def respond(query):
        ent = query.split("ns/")[-1].split(">")[0]
        return httpx.Response(200, json=bindings("neighbor", [ent + "_n"]))

    g, _ = sparql_graph(respond)
    ids = [f"m.{i:03d}" for i in range(40)]
    with ThreadPoolExecutor(8) as pool:
        got = list(pool.map(lambda e: g.expand(e, "r", IN), ids))
    assert got == [[e + "_n"] for e in ids]
