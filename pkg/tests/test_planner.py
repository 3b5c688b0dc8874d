import json

import httpx
import pytest

from conftest import script, verdict
from egp.exemplars.retrieval import Exemplar
from egp.kg import Direction, ReasoningPath, Triple
from egp.planner import prompts
from egp.planner.planner import (
    Planner,
    PlannerError,
    SubObjectiveList,
    SufficiencyVerdict,
    parse_objective_list,
)
from egp.planner.providers import (
    ChatProvider,
    Decoding,
    LlmTransportError,
    MockEntry,
    MockProvider,
    MockScriptError,
    ReplayProvider,
    Transcript,
)
from stubs import make_record

OUT, IN = Direction.OUTGOING, Direction.INCOMING
Q = "what country was A born in"
OBJ = SubObjectiveList.fresh(["find birthplace", "find its country"])
PATH = ReasoningPath.seed("A").extend("born_in", OUT, "CityX").extend("located_in", OUT, "CountryY")


def planner(*entries):
    return Planner(script(*entries))


# --- decompose ---------------------------------------------------------------

def test_decompose_json_list():
    p = planner(("@decompose", ["find birthplace", "find its country"]))
    out = p.decompose(Q, ["A"])
    assert out.items == ("find birthplace", "find its country")
    assert out.statuses == ("unknown", "unknown")


def test_decompose_numbered_lines():
    p = planner(("@decompose", "1. x\n2. y"))
    assert p.decompose(Q, ["A"]).items == ("x", "y")


def test_decompose_prose_twice_fails_after_two_calls():
    p = planner(("@decompose", "I think you should look it up."), ("@decompose", "Still prose."))
    with pytest.raises(PlannerError):
        p.decompose(Q, ["A"])
    assert p.calls == 2
    assert p.transcript.records[1].prompt.endswith(prompts.REPROMPT_SUFFIX)


def test_decompose_prompt_orders_instructions_exemplars_question():
    ex = Exemplar(make_record(1, "where was A1 born", ("born_in", "located_in")), "", 0.95)
    p = planner(("@decompose", ["a"]))
    p.decompose(Q, ["A"], [ex])
    prompt = p.transcript.records[0].prompt
    i_instr = prompt.index("sub-objectives")
    i_ex = prompt.index("Reference 1: where was A1 born")
    i_path = prompt.index("A1 --born_in--> x1_0 --located_in--> x1_1")
    i_q = prompt.index(f"Question: {Q}")
    assert i_instr < i_ex < i_path < i_q
    assert "Example:" not in prompt


def test_decompose_without_exemplars_uses_one_shot():
    p = planner(("@decompose", ["a"]))
    p.decompose(Q, ["A"], [])
    assert "Example:" in p.transcript.records[0].prompt


# --- prune_relations -----------------------------------------------------------

CANDS = [("born_in", OUT), ("profession", OUT), ("spouse", IN)]


def test_prune_selects_offered():
    sel = planner(("@prune_relations", {"relations": ["born_in"]})).prune_relations(Q, OBJ, "A", CANDS)
    assert sel.selected == {("born_in", OUT)}


def test_prune_drops_unoffered():
    sel = planner(("@prune_relations", "born_in, capital_of")).prune_relations(Q, OBJ, "A", CANDS)
    assert sel.selected == {("born_in", OUT)}
    assert sel.dropped == ("capital_of",)


def test_prune_nothing_twice_is_empty():
    p = planner(("@prune_relations", {"relations": []}), ("@prune_relations", {"relations": ["nope"]}))
    sel = p.prune_relations(Q, OBJ, "A", CANDS)
    assert sel.selected == frozenset()
    assert p.calls == 2


def test_prune_name_covers_both_directions():
    cands = [("spouse", OUT), ("spouse", IN), ("born_in", OUT)]
    sel = planner(("@prune_relations", '["spouse"]')).prune_relations(Q, OBJ, "A", cands)
    assert sel.selected == {("spouse", OUT), ("spouse", IN)}


def test_prune_trims_names():
    sel = planner(("@prune_relations", '  "born_in" ,\n profession ')).prune_relations(Q, OBJ, "A", CANDS)
    assert sel.selected == {("born_in", OUT), ("profession", OUT)}


def test_prune_requires_candidates():
    with pytest.raises(ValueError):
        planner().prune_relations(Q, OBJ, "A", [])


# --- select_paths -----------------------------------------------------------------

def extended(n):
    base = ReasoningPath.seed("A")
    return [(base.extend("r", OUT, f"E{i}"), Triple("A", "r", f"E{i}")) for i in range(n)]


@pytest.mark.parametrize("reply,n,expect", [("[0,2]", 3, (0, 2)), ("[7]", 3, (0,)), ("[0]", 1, (0,)), ("2 and 1", 3, (1, 2))])
def test_select_paths(reply, n, expect):
    assert planner(("@select_paths", reply)).select_paths(Q, extended(n)) == expect


# --- sufficiency ------------------------------------------------------------------

def test_sufficiency_with_answer():
    v = planner(("@evaluate_sufficiency", verdict("CountryY"))).evaluate_sufficiency(Q, OBJ, [PATH])
    assert v.sufficient and v.answer == ("CountryY",)


def test_sufficiency_without_answer_is_insufficient():
    v = planner(("@evaluate_sufficiency", {"sufficient": True, "answer": []})).evaluate_sufficiency(Q, OBJ, [PATH])
    assert not v.sufficient


def test_sufficiency_false_passes_through():
    v = planner(("@evaluate_sufficiency", verdict())).evaluate_sufficiency(Q, OBJ, [PATH])
    assert v == SufficiencyVerdict(False, (), "test")


def test_sufficiency_unparseable_twice():
    p = planner(("@evaluate_sufficiency", "hmm"), ("@evaluate_sufficiency", "hmm"))
    assert not p.evaluate_sufficiency(Q, OBJ, [PATH]).sufficient
    assert p.calls == 2


def test_forced_answer_keeps_any_answer():
    p = planner(("@forced_answer", {"sufficient": False, "answer": ["CityX"]}))
    v = p.evaluate_sufficiency(Q, OBJ, [PATH], forced=True)
    assert v.sufficient and v.answer == ("CityX",)


def test_verdict_type_invariant():
    with pytest.raises(ValueError):
        SufficiencyVerdict(True, ())


# --- reflect ----------------------------------------------------------------------

def test_reflect_backtrack_historical():
    p = planner(("@reflect", {"correct_course": False, "backtrack": ["CityX"], "reason": "r"}))
    d = p.reflect(Q, OBJ, [PATH], ["CountryY"], ["CityX", "B"])
    assert d.backtrack_entities == ("CityX",) and not d.correct_course


def test_reflect_drops_unknown():
    p = planner(("@reflect", {"correct_course": False, "backtrack": ["Mars"]}))
    d = p.reflect(Q, OBJ, [PATH], ["CountryY"], ["CityX"])
    assert d.backtrack_entities == () and d.dropped == ("Mars",)


def test_reflect_correct_course():
    p = planner(("@reflect", {"correct_course": True, "backtrack": ["CityX"]}))
    assert p.reflect(Q, OBJ, [PATH], [], ["CityX"]).backtrack_entities == ()


def test_reflect_unparseable_twice_continues():
    p = planner(("@reflect", "?"), ("@reflect", "??"))
    d = p.reflect(Q, OBJ, [PATH], [], ["CityX"])
    assert d.correct_course and d.backtrack_entities == ()


def test_reflect_prompt_lists_history_with_ids():
    p = Planner(script(("@reflect", {"correct_course": True, "backtrack": []})), label={"m.1": "Lyon"}.get)
    p.reflect(Q, OBJ, [], [], ["m.1"])
    assert "- m.1 (Lyon)" in p.transcript.records[0].prompt


# --- lookahead verdict ---------------------------------------------------------------

def test_lookahead_on_path():
    v = planner(("@lookahead_verdict", verdict("countryy"))).lookahead_verdict(Q, PATH)
    assert v.sufficient and v.answer == ("CountryY",)


def test_lookahead_off_path():
    v = planner(("@lookahead_verdict", verdict("Atlantis"))).lookahead_verdict(Q, PATH)
    assert not v.sufficient


def test_lookahead_rejects():
    assert not planner(("@lookahead_verdict", verdict())).lookahead_verdict(Q, PATH).sufficient


# --- statuses -------------------------------------------------------------------

def test_statuses_updated():
    out = planner(("@update_statuses", ["resolved: CityX", "unknown"])).update_statuses(Q, OBJ, "", [PATH])
    assert out.statuses == ("resolved: CityX", "unknown")


def test_statuses_short_reply_keeps_rest():
    prev = SubObjectiveList(OBJ.items, ("resolved: CityX", "pending"))
    out = planner(("@update_statuses", ["resolved: CityX!"])).update_statuses(Q, prev, "", [PATH])
    assert out.statuses == ("resolved: CityX!", "pending")


def test_statuses_garbage_keeps_all():
    p = planner(("@update_statuses", "lol"))
    assert p.update_statuses(Q, OBJ, "", []) == OBJ
    assert p.calls == 1


# --- parsing helpers -------------------------------------------------------------------

def test_parse_objectives_embedded_json():
    assert parse_objective_list('Sure! ["a", "b"] hope that helps') == ["a", "b"]
    assert parse_objective_list("nothing here") is None


# --- mock / transcript / replay -----------------------------------------------------------

def test_mock_consumes_in_order_and_errors_when_unmatched():
    m = MockProvider.of(("@decompose", "one"), ("@reflect", "two"))
    assert m.send(prompts.header("decompose") + "\nx") == "one"
    with pytest.raises(MockScriptError, match="expects"):
        m.send(prompts.header("decompose"))
    assert m.send(prompts.header("reflect")) == "two"
    assert m.exhausted
    with pytest.raises(MockScriptError, match="exhausted"):
        m.send("anything")


def test_mock_substring_and_optional_entries():
    m = MockProvider([MockEntry("@lookahead_verdict", "skip", optional=True), MockEntry("Paris", "yes")])
    assert m.send("is Paris nice") == "yes"


def test_mock_from_jsonl(tmp_path):
    f = tmp_path / "s.jsonl"
    f.write_text(json.dumps({"match": "x", "response": "y"}) + "\n\n" + "not json\n")
    with pytest.raises(MockScriptError, match="line 3"):
        MockProvider.from_jsonl(f)


def test_mock_is_deterministic():
    def go():
        p = planner(("@decompose", ["a", "b"]), ("@prune_relations", "born_in"))
        return p.decompose(Q, ["A"]), p.prune_relations(Q, OBJ, "A", CANDS)
    assert go() == go()


def test_transcript_round_trip_and_replay(tmp_path):
    p = planner(("@decompose", "garbage"), ("@decompose", ["a"]), ("@select_paths", "[1]"))
    a = (p.decompose(Q, ["A"]), p.select_paths(Q, extended(2)))
    p.transcript.write(tmp_path / "t.jsonl")
    loaded = Transcript.read(tmp_path / "t.jsonl")
    assert [r.tag for r in loaded.records] == ["decompose", "decompose", "select_paths"]
    r = Planner(ReplayProvider(loaded))
    assert (r.decompose(Q, ["A"]), r.select_paths(Q, extended(2))) == a
    with pytest.raises(PlannerError, match="divergence"):
        Planner(ReplayProvider(loaded)).decompose("other question", ["A"])


# --- chat provider ----------------------------------------------------------------------

def test_chat_provider_payload(monkeypatch):
    monkeypatch.setenv("LLM_API_KEY", "k1")
    seen = []

    def handler(request):
        seen.append(request)
        return httpx.Response(200, json={"choices": [{"message": {"content": "hi"}}], "usage": {"prompt_tokens": 3, "completion_tokens": 1}})

    client = httpx.Client(transport=httpx.MockTransport(handler))
    c = ChatProvider("http://llm.test/v1", "gpt-x", client=client, backoff=0)
    out = c.complete("hello", Decoding(0.0, 64))
    assert (out.text, out.prompt_tokens, out.completion_tokens) == ("hi", 3, 1)
    body = json.loads(seen[0].content)
    assert body == {"model": "gpt-x", "messages": [{"role": "user", "content": "hello"}], "temperature": 0.0, "max_tokens": 64}
    assert str(seen[0].url) == "http://llm.test/v1/chat/completions"
    assert seen[0].headers["authorization"] == "Bearer k1"


def test_chat_provider_failure_becomes_planner_error():
    client = httpx.Client(transport=httpx.MockTransport(lambda r: httpx.Response(500)))
    c = ChatProvider("http://llm.test", "m", client=client, backoff=0, retries=1)
    with pytest.raises(LlmTransportError):
        c.send("x")
    with pytest.raises(PlannerError):
        Planner(c).decompose(Q, ["A"])
