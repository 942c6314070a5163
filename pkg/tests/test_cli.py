import io
import json
import subprocess
import sys
from fractions import Fraction

import pytest

from mediankit.cli import main, parse_c_schedule, parse_report, UsageError
from mediankit.pocset import WeightedPocset


def run(*argv):
    out, err = io.StringIO(), io.StringIO()
    code = main(list(argv), out, err)
    return code, out.getvalue(), err.getvalue()


def test_build_emits_a_pocset_that_round_trips():
    code, out, _ = run("build", "--space", "line:n=3")
    assert code == 0
    data = parse_report(out)
    assert data["walls"] == 3
    assert WeightedPocset.from_json_dict(data).to_json_dict() == data


def test_build_csv_and_text():
    code, out, _ = run("build", "--space", "line:n=2,weight=1/2", "--format", "csv")
    assert code == 0 and out.splitlines() == ["wall,weight", "0,1/2", "1,1/2"]
    code, out, _ = run("build", "--space", "line:n=2", "--format", "text")
    assert code == 0 and "walls: 2" in out


@pytest.mark.parametrize("argv", [
    ("build", "--space", "grid:dims=2x2"),
    ("analyze", "--space", "tree:3:2"),
    ("ubs", "--space", "strip:n=8,w=2,m=2", "--xi", "diagonal"),
    ("ubs", "--space", "line:n=8", "--emit", "alpha-table"),
    ("ubs", "--space", "grid:dims=6x6", "--emit", "chains"),
    ("ubs", "--space", "line:n=8,m=2", "--emit", "xk", "--gens", "shift"),
    ("cocycle", "--space", "grid:dims=3x3,m=1"),
    ("bridge", "--space", "tree:3:2", "--seed", "4"),
    ("bridge", "--space", "grid:dims=2x2", "--sets", "0;8"),
    ("facing", "--space", "line:5"),
    ("skewer", "--space", "line:n=8,m=4", "--h", "15", "--k", "13", "--gens", "shift"),
    ("witness", "--space", "tree:3:3", "--gens", "rot0,swap0"),
])
def test_subcommands_are_deterministic_json(argv):
    a = run(*argv)
    b = run(*argv)
    assert a[0] == 0, a[2]
    assert a == b
    data = parse_report(a[1])
    assert json.dumps(data, sort_keys=True, indent=2) + "\n" == a[1]


def test_analyze_reports_rank_and_facing():
    _, out, _ = run("analyze", "--space", "tree:3:2")
    data = json.loads(out)
    assert data["rank"] == 1 and data["vertices"] == 10
    assert len(data["facing"]["3"]) == 3


def test_ubs_graph_matches_the_strip():
    _, out, _ = run("ubs", "--space", "strip:n=8,w=2,m=2", "--xi", "diagonal")
    data = json.loads(out)
    assert len(data["graph"]["vertices"]) == 1
    assert data["classes"][0]["strongly_reduced"] and len(data["classes"][0]["chains"]) == 2


def test_cocycle_norm_and_convergence_csv():
    _, out, _ = run("cocycle", "--space", "line:n=3,m=1", "--gens", "shift")
    data = json.loads(out)
    assert data["generators"][0]["norm_sq"] == "2"
    code, out, _ = run("cocycle", "--space", "strip:n=8,w=2,m=2", "--gens", "shift", "--xi", "diagonal",
                       "--c-schedule", "4,16", "--depth", "64", "--format", "csv")
    assert code == 0
    lines = out.splitlines()
    assert lines[0] == "gen,c,depth,residual_exact,residual_float"
    assert len(lines) == 3


def test_facing_and_skewer_values():
    _, out, _ = run("facing", "--space", "line:5")
    assert json.loads(out)["tuple"] == [0, 3]
    _, out, _ = run("skewer", "--space", "line:n=8,m=4", "--h", "15", "--k", "13", "--gens", "shift")
    assert json.loads(out)["word"] == ["shift", "shift"]


@pytest.mark.parametrize("argv,code", [
    (("frobnicate",), 1),
    (("build", "--space", "strip:n=8,q=2"), 1),
    (("build", "--space", "line:n=8", "--budget-vertices", "0"), 1),
    (("ubs", "--space", "line:n=4"), 1),
    (("build", "--space", "tree:3:12", "--budget-vertices", "1000"), 3),
    (("cocycle", "--space", "line:3", "--budget-words", "1"), 3),
    (("build", "--space", "line:n=4", "--c-schedule", "4^1..5^3"), 1),
    (("bridge", "--space", "line:3", "--sets", "0,x;1"), 1),
    (("skewer", "--space", "line:3", "--h", "99", "--k", "0"), 1),
    (("analyze", "--space", "line:n=70"), 1),
])
def test_exit_codes(argv, code):
    got, _, err = run(*argv)
    assert got == code
    assert err.startswith("mediankit:")


def test_analyze_rank_override():
    code, out, _ = run("analyze", "--space", "line:n=70", "--force-rank")
    assert code == 0 and json.loads(out)["rank"] == 1


def test_space_errors_report_the_column():
    _, _, err = run("build", "--space", "strip:n=8,q=2")
    assert "column 11" in err


def test_parse_c_schedule():
    assert parse_c_schedule("4^1..4^3") == [4, 16, 64]
    assert parse_c_schedule("1/2,3") == [Fraction(1, 2), 3]
    assert parse_c_schedule("") == []
    with pytest.raises(UsageError):
        parse_c_schedule("a,b")


def test_console_entry_point_runs():
    proc = subprocess.run([sys.executable, "-m", "mediankit", "build", "--space", "line:n=2"],
                          capture_output=True, text=True, check=False)
    assert proc.returncode == 0
    assert json.loads(proc.stdout)["walls"] == 2


def test_selftest_subcommand_passes():
    code, out, _ = run("selftest")
    assert code == 0
    assert out.splitlines()[-1].endswith("checks passed")
