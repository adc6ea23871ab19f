import json
import math
import subprocess
import sys

import numpy as np
import pytest

from relaxed_bvc.cli import EXIT_OK, EXIT_TIGHT, EXIT_USAGE, EXIT_VIOLATION, format_points, main, parse_points
from relaxed_bvc.errors import UsageError

TET = "dim=3\n1,0,0\n0,1,0\n0,0,1\n0,0,0\n"


@pytest.fixture
def tet_file(tmp_path):
    p = tmp_path / "tet.csv"
    p.write_text(TET)
    return str(p)


def _json(capsys):
    return json.loads(capsys.readouterr().out)


def test_delta_star_tetrahedron(tet_file, capsys):
    assert main(["delta-star", "--input", tet_file, "--f", "1"]) == EXIT_OK
    rep = _json(capsys)
    assert rep["delta_star"] == pytest.approx(1 / (3 + math.sqrt(3)))
    assert rep["method"] == "CLOSED_FORM"


def test_delta_star_with_faulty_reports_bounds(tet_file, capsys):
    assert main(["delta-star", "--input", tet_file, "--f", "1", "--faulty", "4"]) == EXIT_OK
    rep = _json(capsys)
    names = {b["name"] for b in rep["bounds"]}
    assert "theorem16" in names
    assert all(b["holds"] for b in rep["bounds"])


def test_too_many_faults_rejected(tet_file, capsys):
    assert main(["delta-star", "--input", tet_file, "--f", "2"]) == EXIT_USAGE
    assert "3f" in capsys.readouterr().err


def test_parse_error_has_line_number(tmp_path, capsys):
    p = tmp_path / "bad.csv"
    p.write_text("dim=2\n# comment\n1,2\n3,x\n")
    assert main(["delta-star", "--input", str(p), "--f", "0"]) == EXIT_USAGE
    assert "bad.csv:4" in capsys.readouterr().err


@pytest.mark.parametrize("text", ["1,2\n", "dim=2\n1,2,3\n", "dim=0\n", "dim=2\n1,nan\n", ""])
def test_parse_points_rejects(text):
    with pytest.raises(UsageError):
        parse_points(text)


def test_points_roundtrip():
    S = np.array([[0.1, -2.5], [1e-17, 3.0]])
    np.testing.assert_array_equal(parse_points(format_points(S)), S)


def test_unknown_option_is_usage_error():
    with pytest.raises(SystemExit) as e:
        main(["delta-star", "--bogus"])
    assert e.value.code == EXIT_USAGE


def test_generated_report_is_reproducible(tmp_path):
    outs = []
    for name in ("a", "b"):
        out = tmp_path / name
        assert main(["delta-star", "--generate", "uniform", "--n", "8", "--f", "2", "--d", "3", "--seed", "7",
                     "--out", str(out)]) == EXIT_OK
        outs.append((out / "delta_star.json").read_bytes())
    assert outs[0] == outs[1]


def test_simulate_algo(tmp_path, capsys):
    out = tmp_path / "run"
    code = main(["simulate", "--protocol", "algo", "--n", "4", "--f", "1", "--d", "3", "--seed", "7",
                 "--adversary", "equivocate", "--trials", "2", "--out", str(out)])
    assert code == EXIT_OK
    summary = _json(capsys)
    assert summary["ok"] == 2
    files = sorted(p.name for p in out.iterdir())
    assert files == ["outcomes.json", "summary.json", "transcript_0.jsonl", "transcript_1.jsonl", "trials.csv"]
    first = (out / "transcript_0.jsonl").read_text().splitlines()[0]
    assert json.loads(first)["kind"] == "SEND"


def test_simulate_reproducible(tmp_path):
    args = ["simulate", "--protocol", "async", "--n", "4", "--f", "1", "--d", "2", "--epsilon", "1e-2",
            "--seed", "3", "--adversary", "CRASH", "--crash-tick", "5"]
    main(args + ["--out", str(tmp_path / "a")])
    main(args + ["--out", str(tmp_path / "b")])
    for name in ("transcript_0.jsonl", "outcomes.json", "summary.json", "trials.csv"):
        assert (tmp_path / "a" / name).read_bytes() == (tmp_path / "b" / name).read_bytes()


def test_simulate_k_relaxed_tightness_exit(tmp_path, capsys):
    p = tmp_path / "ce.csv"
    p.write_text("dim=3\n1,1,1\n0,1,1\n0,0,1\n-1,-1,-1\n")
    code = main(["simulate", "--protocol", "k-relaxed", "--k", "2", "--input", str(p), "--n", "4", "--f", "1",
                 "--d", "3"])
    assert code == EXIT_TIGHT
    assert _json(capsys)["empty"] == 1


def test_simulate_fixed_delta_only_async(capsys):
    assert main(["simulate", "--protocol", "algo", "--n", "4", "--f", "1", "--d", "3",
                 "--delta-mode", "fixed:0.1"]) == EXIT_USAGE
    assert main(["simulate", "--protocol", "async", "--n", "4", "--f", "1", "--d", "3"]) == EXIT_USAGE


@pytest.mark.parametrize("name,extra", [("sync-k", []), ("sync-delta", ["--x", "7", "--delta", "1"]),
                                        ("async-k", ["--gamma", "1", "--epsilon", "0.2"]),
                                        ("async-delta", ["--delta", "0.5", "--epsilon", "0.1", "--x", "3.2"])])
def test_counterexamples(name, extra, capsys):
    assert main(["counterexample", name, "--d", "3"] + extra) == EXIT_OK
    rep = _json(capsys)
    assert rep["reproduced"]


def test_counterexample_bad_parameters(capsys):
    assert main(["counterexample", "sync-k", "--d", "3", "--gamma", "1", "--epsilon", "2"]) == EXIT_USAGE


def test_tverberg_exit_codes(tmp_path, capsys):
    assert main(["tverberg", "--d", "2", "--f", "1", "--n", "5"]) == EXIT_OK
    assert _json(capsys)["partition"] is not None
    p = tmp_path / "tri.csv"
    p.write_text("dim=2\n0,0\n1,0\n0,1\n")
    assert main(["tverberg", "--input", str(p), "--f", "1"]) == EXIT_TIGHT
    assert main(["tverberg", "--d", "2", "--f", "2", "--n", "13"]) == EXIT_USAGE


def test_check_bounds_single_fault_edge_bound(tmp_path, capsys):
    assert main(["check-bounds", "--theorem", "16", "--trials", "12", "--out", str(tmp_path)]) == EXIT_OK
    assert _json(capsys)["violations"] == 0
    assert (tmp_path / "theorem_16.csv").read_text().startswith("trial,")


def test_check_bounds_stress_mode(tmp_path, capsys):
    assert main(["check-bounds", "--conjecture", "2", "--trials", "3", "--out", str(tmp_path)]) == EXIT_OK
    assert _json(capsys)["violations"] == 0


def test_check_bounds_needs_one_target():
    assert main(["check-bounds", "--trials", "1"]) == EXIT_USAGE


def test_console_entry_point():
    r = subprocess.run([sys.executable, "-m", "relaxed_bvc.cli", "counterexample", "sync-k", "--d", "4"],
                       capture_output=True, text=True)
    assert r.returncode == 0
    assert json.loads(r.stdout)["verdict"] == "EMPTY"
