import json

import pytest

from conftest import FIXTURES, country_of_a_script
from egp.cli import main


def write_script(path, provider):
    path.write_text("".join(json.dumps({"match": e.match, "response": e.response}) + "\n" for e in provider.entries))
    return path


def train_lines(n):
    out = []
    for i in range(n):
        out.append(json.dumps({
            "id": f"r{i}", "question": f"where was P{i} born",
            "topic_entities": [{"id": f"P{i}", "mention": f"P{i}", "category": "person"}],
            "answers": ["CityX"],
            "gold_paths": [[{"head": f"P{i}", "relation": "born_in", "tail": "CityX", "direction": "outgoing"}]],
        }))
    return out


def test_build_index_manifest(tmp_path, capsys):
    train = tmp_path / "train.jsonl"
    train.write_text("\n".join(train_lines(3)) + "\n")
    assert main(["build-index", "--train", str(train), "--out", str(tmp_path / "t.idx")]) == 0
    manifest = json.loads((tmp_path / "t.idx.manifest.json").read_text())
    assert manifest["count"] == 3
    assert manifest["dimension"] == 256 and manifest["templating_version"] == "1"
    assert "indexed 3 questions" in capsys.readouterr().out


def test_build_index_malformed_line(tmp_path, capsys):
    train = tmp_path / "train.jsonl"
    lines = train_lines(3)
    lines[1] = lines[1][:-5]
    train.write_text("\n".join(lines) + "\n")
    assert main(["build-index", "--train", str(train), "--out", str(tmp_path / "t.idx")]) == 1
    assert "line 2" in capsys.readouterr().err


def test_build_index_is_byte_identical(tmp_path):
    train = tmp_path / "train.jsonl"
    train.write_text("\n".join(train_lines(5)) + "\n")
    main(["build-index", "--train", str(train), "--out", str(tmp_path / "a.idx")])
    main(["build-index", "--train", str(train), "--out", str(tmp_path / "b.idx")])
    assert (tmp_path / "a.idx").read_bytes() == (tmp_path / "b.idx").read_bytes()


def test_ask_prints_answer_and_path(tmp_path, capsys):
    mock = write_script(tmp_path / "m.jsonl", country_of_a_script())
    code = main([
        "--kg", str(FIXTURES / "small.tsv"), "ask", "--question", "what country was A born in",
        "--topics", "A@person", "--no-exemplars", "--mock", str(mock), "--transcript", str(tmp_path / "t.jsonl"),
    ])
    out = capsys.readouterr().out
    assert code == 0
    assert "Answer: CountryY" in out
    assert "Path: A --born_in--> CityX --located_in--> CountryY" in out
    assert "iterations_used=2" in out and "lookahead_triggered=false" in out
    assert len((tmp_path / "t.jsonl").read_text().splitlines()) == 10


def test_ask_json_output(tmp_path, capsys):
    mock = write_script(tmp_path / "m.jsonl", country_of_a_script())
    main(["--kg", str(FIXTURES / "small.tsv"), "ask", "--question", "what country was A born in",
          "--topics", "A", "--no-exemplars", "--mock", str(mock), "--json"])
    data = json.loads(capsys.readouterr().out)
    assert data["answers"] == ["CountryY"]
    assert all(rec["guide_relations"] == [] for rec in data["pruning_log"])


def test_ask_guided_with_suite(suite_dir, capsys):
    cfg = str(suite_dir / "config.json")
    assert main(["--config", cfg, "build-index", "--train", str(suite_dir / "train.jsonl"), "--out", str(suite_dir / "train.idx")]) == 0
    code = main(["--config", cfg, "ask", "--question", "what country was Dan born in", "--topics", "Dan@person",
                 "--mock", str(suite_dir / "mocks" / "te01.jsonl")])
    out = capsys.readouterr().out
    assert code == 0
    assert "Answer: Spain" in out and "lookahead_answered=true" in out and "iterations_used=0" in out


def test_guided_without_index_is_usage_error(tmp_path, capsys):
    mock = write_script(tmp_path / "m.jsonl", country_of_a_script())
    code = main(["--kg", str(FIXTURES / "small.tsv"), "ask", "--question", "q", "--topics", "A", "--mock", str(mock)])
    assert code == 2
    assert "usage:" in capsys.readouterr().err


def test_unknown_flag_exits_2(capsys):
    with pytest.raises(SystemExit) as info:
        main(["ask", "--bogus"])
    assert info.value.code == 2


def test_missing_config_is_usage_error(tmp_path, capsys):
    mock = write_script(tmp_path / "m.jsonl", country_of_a_script())
    code = main(["ask", "--question", "q", "--topics", "A", "--no-exemplars", "--mock", str(mock)])
    err = capsys.readouterr().err
    assert code == 2 and "no knowledge graph configured" in err


def test_config_file_not_found(tmp_path, capsys):
    code = main(["--config", str(tmp_path / "nope.json"), "build-index", "--train", "t", "--out", "o"])
    assert code == 2


def test_eval_empty_file(tmp_path, capsys):
    (tmp_path / "empty.jsonl").write_text("")
    code = main(["--kg", str(FIXTURES / "small.tsv"), "eval", "--test", str(tmp_path / "empty.jsonl"),
                 "--out", str(tmp_path / "r.json"), "--no-exemplars", "--mock-dir", str(tmp_path)])
    assert code == 1 and "no records" in capsys.readouterr().err


def test_eval_and_stats(suite_dir, tmp_path, capsys):
    cfg = str(suite_dir / "config.json")
    main(["--config", cfg, "build-index", "--train", str(suite_dir / "train.jsonl"), "--out", str(suite_dir / "train.idx")])
    rep = tmp_path / "g.json"
    assert main(["--config", cfg, "eval", "--test", str(suite_dir / "test.jsonl"), "--out", str(rep),
                 "--mock-dir", str(suite_dir / "mocks"), "--transcripts", str(tmp_path / "tr")]) == 0
    assert "hits@1: 1.0000" in capsys.readouterr().out
    assert len(list((tmp_path / "tr").glob("*.jsonl"))) == 12
    assert main(["stats", str(rep), "--out", str(tmp_path / "s.json")]) == 0
    assert "triggered" in capsys.readouterr().out
    assert json.loads((tmp_path / "s.json").read_text())["reports"] == 1


def test_stats_rejects_bad_report(tmp_path, capsys):
    (tmp_path / "r.json").write_text("{}")
    assert main(["stats", str(tmp_path / "r.json")]) == 1
    assert "r.json" in capsys.readouterr().err
