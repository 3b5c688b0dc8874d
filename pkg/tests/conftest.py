import json
import shutil
from pathlib import Path

import pytest

from egp.kg import Triple, load_triples_file, InMemoryGraph
from egp.planner.providers import MockEntry, MockProvider

FIXTURES = Path(__file__).parent / "fixtures"
SUITE = FIXTURES / "suite"


def script(*entries):
    """Mock provider from (match, response) pairs; responses that aren't strings are JSON-encoded."""
    out = []
    for entry in entries:
        match, response, *rest = entry
        if not isinstance(response, str):
            response = json.dumps(response)
        out.append(MockEntry(match, response, bool(rest and rest[0])))
    return MockProvider(out)


def verdict(answer=None):
    return {"sufficient": bool(answer), "answer": [answer] if answer else [], "reason": "test"}


def country_of_a_script():
    """Full unguided run for 'what country was A born in' on the small fixture."""
    return script(
        ("@decompose", ["find where A was born", "find the country of that city"]),
        ("@prune_relations", {"relations": ["born_in"]}),
        ("@select_paths", [0]),
        ("@update_statuses", ["resolved: CityX", "unknown"]),
        ("@evaluate_sufficiency", verdict()),
        ("@reflect", {"correct_course": True, "backtrack": [], "reason": "ok"}),
        ("@prune_relations", {"relations": ["located_in"]}),
        ("@select_paths", [0]),
        ("@update_statuses", ["resolved: CityX", "resolved: CountryY"]),
        ("@evaluate_sufficiency", verdict("CountryY")),
    )


@pytest.fixture
def small_kg() -> InMemoryGraph:
    return load_triples_file(FIXTURES / "small.tsv")


@pytest.fixture
def three_kg() -> InMemoryGraph:
    return InMemoryGraph([
        Triple("A", "born_in", "CityX"),
        Triple("B", "born_in", "CityX"),
        Triple("CityX", "located_in", "CountryY"),
    ])


@pytest.fixture
def suite_dir(tmp_path) -> Path:
    dst = tmp_path / "suite"
    shutil.copytree(SUITE, dst)
    return dst


# acceptance criteria report: test_acceptance records (number, title, passed)
ACCEPTANCE_RESULTS: dict[int, tuple[str, bool]] = {}


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE_RESULTS:
        return
    terminalreporter.section("acceptance criteria")
    for num in sorted(ACCEPTANCE_RESULTS):
        title, ok = ACCEPTANCE_RESULTS[num]
        terminalreporter.write_line(f"{'PASS' if ok else 'FAIL'} criterion {num}: {title}")
