import json
import shutil

import pytest

from termweave.cli import (CORPUS_DIR, EXIT_ALARM, EXIT_INPUT, EXIT_OK, EXIT_UNKNOWN,
                           compare_modes, _Done, main)


def _run(capsys, *argv):
    code = main(list(argv))
    out = capsys.readouterr().out
    return code, out


def test_terminating_program_exits_zero(capsys):
    code, out = _run(capsys, "analyze", str(CORPUS_DIR / "countdown.tw"), "--no-timing")
    assert code == EXIT_OK
    doc = json.loads(out)
    assert doc["verdict"] == "Terminating" and "wall_ms" not in doc


def test_unknown_program_exits_ten(capsys):
    code, _ = _run(capsys, "analyze", str(CORPUS_DIR / "loopforever.tw"))
    assert code == EXIT_UNKNOWN


@pytest.mark.parametrize("argv", [
    ["analyze", "/no/such/file.tw"],
    ["analyze", "--mode", "bogus", "x.tw"],
    ["analyze", "--backend", "/no/such/solver", str(CORPUS_DIR / "countdown.tw")],
    ["analyze", "--box", "5", "1", str(CORPUS_DIR / "countdown.tw")],
    ["frobnicate"],
])
def test_usage_errors_exit_two(capsys, argv):
    assert main(argv) == EXIT_INPUT


def test_unparsable_single_file_exits_two(tmp_path, capsys):
    f = tmp_path / "bad.tw"
    f.write_text("proc main( {")
    code, out = _run(capsys, "analyze", str(f))
    assert code == EXIT_INPUT and "error" in json.loads(out)


def test_compare_whole_corpus(capsys):
    code, out = _run(capsys, "analyze", "--mode", "monolithic", "--mode", "procedural",
                     str(CORPUS_DIR), "--compare", "--no-timing")
    doc = json.loads(out)
    assert code == EXIT_OK
    assert len(doc["rows"]) == 24
    assert doc["soundness_alarms"] == []
    assert {"program": "direct_recursion.tw", "mode": "procedural"} in doc["precision_loss"]
    assert all(set(r) == {"program", "mode", "verdict", "groups", "cegis_iters"}
               for r in doc["rows"])


def test_compare_empty_dir(tmp_path, capsys):
    code, out = _run(capsys, "analyze", str(tmp_path), "--compare")
    assert code == EXIT_OK and json.loads(out)["rows"] == []


def test_compare_isolates_broken_files(tmp_path, capsys):
    shutil.copy(CORPUS_DIR / "countdown.tw", tmp_path)
    (tmp_path / "broken.tw").write_text("proc main( {")
    code, out = _run(capsys, "analyze", str(tmp_path), "--compare", "--no-timing")
    rows = {r["program"]: r for r in json.loads(out)["rows"]}
    assert code == EXIT_OK
    assert rows["broken.tw"]["verdict"] == "error"
    assert rows["countdown.tw"]["verdict"] == "Terminating"


def test_soundness_alarm_gives_nonzero_exit_code():
    results = [_Done("p.tw", "monolithic", {"verdict": "Unknown", "schedule": [],
                                            "cegis_iters": 0}),
               _Done("p.tw", "procedural", {"verdict": "Terminating", "schedule": [],
                                            "cegis_iters": 0})]
    table = compare_modes(results, ["monolithic", "procedural"], timing=False)
    assert table["soundness_alarms"] == [{"program": "p.tw", "mode": "procedural"}]
    # the driver maps any alarm to this exit code
    assert EXIT_ALARM != EXIT_OK


def test_precondition_in_report(capsys):
    code, out = _run(capsys, "analyze", str(CORPUS_DIR / "conditional_termination.tw"),
                     "--precond", "main", "--no-timing")
    doc = json.loads(out)
    assert code == EXIT_UNKNOWN
    assert doc["preconditions"]["main"]["status"] == "solved"
    assert "x.in" in doc["preconditions"]["main"]["definition"]


def test_unknown_precondition_target(capsys):
    assert main(["analyze", str(CORPUS_DIR / "countdown.tw"), "--precond", "nope"]) == EXIT_INPUT


def test_output_file_and_figures(tmp_path, capsys):
    out = tmp_path / "r.json"
    figs = tmp_path / "figs"
    code = main(["analyze", "--mode", "monolithic", "--mode", "procedural",
                 str(CORPUS_DIR / "countdown.tw"), str(CORPUS_DIR / "call_chain.tw"),
                 "--out", str(out), "--figures", str(figs)])
    assert code == EXIT_OK
    assert len(json.loads(out.read_text())["reports"]) == 4
    assert len(list(figs.glob("*.png"))) == 4


def test_jobs_do_not_change_the_report(tmp_path):
    a, b = tmp_path / "a.json", tmp_path / "b.json"
    args = ["analyze", str(CORPUS_DIR), "--no-timing", "--mode", "scc-min"]
    main(args + ["--out", str(a)])
    main(args + ["--out", str(b), "--jobs", "3"])
    assert a.read_bytes() == b.read_bytes()


def test_ranking_and_domain_flags(capsys):
    code, out = _run(capsys, "analyze", str(CORPUS_DIR / "nested_loops.tw"), "--ranking",
                     "lexicographic:2", "--domain", "template-polyhedra", "--no-timing")
    doc = json.loads(out)
    assert doc["config"]["ranking"] == 2 and doc["config"]["domain"] == "polyhedron"
    assert code == EXIT_OK and doc["verdict"] == "Terminating"


def test_corpus_command(capsys):
    code, out = _run(capsys, "corpus")
    assert code == EXIT_OK and out.strip() == str(CORPUS_DIR)
