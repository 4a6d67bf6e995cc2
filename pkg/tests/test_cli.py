import csv
import json
import subprocess
import sys

import numpy as np
import pytest

from rlimits import cli
from rlimits import graph_core as gc


def call(capsys, *argv):
    code = cli.run([str(a) for a in argv])
    out = capsys.readouterr().out
    return code, json.loads(out) if out.strip() else None


def strip_time(text):
    data = json.loads(text)
    data.pop("timestamp")
    return data


@pytest.fixture(scope="module")
def files(tmp_path_factory):
    d = tmp_path_factory.mktemp("cli")
    assert cli.run(["graph", "build", "--kind", "halfline", "--size", "40",
                    "--save", str(d / "g.json"), "--out", str(d / "r.json")]) == 0
    assert cli.run(["op", "adjacency", "--graph", str(d / "g.json"),
                    "--save", str(d / "op.json"), "--out", str(d / "r.json")]) == 0
    (d / "path.json").write_text(json.dumps(list(range(40))))
    (d / "per2.json").write_text(json.dumps({"a": [1.0, 1.0], "b": [0.0, 1.0], "period": 2}))
    return d


def test_graph_build_kinds(capsys, tmp_path):
    code, rep = call(capsys, "graph", "build", "--kind", "tree", "--degree", 3, "--depth", 3,
                     "--save", tmp_path / "t.json")
    assert code == 0 and rep["ok"] and rep["result"]["n"] == gc.tree_size(3, 3)
    g = gc.load_graph_json(tmp_path / "t.json")
    assert g.n == 22 and g.boundary == frozenset(range(10, 22))
    code, rep = call(capsys, "graph", "build", "--kind", "glued", "--degree", 3, "--depth", 2, "--tail", 5)
    assert code == 0 and rep["result"]["n"] == 15
    code, rep = call(capsys, "graph", "build", "--kind", "line", "--size", 7)
    assert rep["result"]["degree_histogram"] == {"1": 2, "2": 5}
    code, rep = call(capsys, "graph", "build", "--kind", "random-regular", "--degree", 3, "--size", 20,
                     "--girth", 4, "--seed", 5)
    assert code == 0 and rep["result"]["girth"] >= 4


def test_op_and_spectrum(capsys, files):
    code, rep = call(capsys, "spectrum", "--op", files / "op.json", "--centers", 20, "--radius", 5,
                     "--tol", 0.5, "--csv", files / "s.csv")
    assert code == 0
    rows = list(csv.DictReader(open(files / "s.csv")))
    assert len(rows) == 11
    lam = np.array([float(r["lambda"]) for r in rows])
    # oracle: eigenvalues of an 11-site path
    assert np.allclose(lam, 2 * np.cos(np.pi * np.arange(11, 0, -1) / 12))
    assert [int(r["accepted"]) for r in rows] == [int(x) for x in rep["result"]["accepted"]]


def test_op_spherical(capsys, tmp_path):
    code, rep = call(capsys, "op", "spherical", "--degree", 3, "--depth", 3, "--seed", 2,
                     "--save", tmp_path / "op.json")
    assert code == 0 and rep["result"]["n"] == 22


def test_rlimit_on_the_half_line(capsys, files):
    code, rep = call(capsys, "rlimit", "--op", files / "op.json", "--path", files / "path.json",
                     "--radius", 2, "--degree", 3)
    assert code == 0
    labels = [g["label"] for g in rep["result"]["germs"]]
    assert "line" in labels


def test_counterexample_example(capsys):
    code, rep = call(capsys, "counterexample", "--degree", 3, "--blocks", 4, "--radius", 2)
    assert code == 0 and rep["ok"]


def test_spherical_verify_example(capsys):
    code, rep = call(capsys, "spherical", "verify", "--degree", 3, "--depth", 6, "--seed", 7)
    assert code == 0 and rep["result"]["max_discrepancy"] <= 1e-8


def test_failing_check_exits_one(capsys):
    code, rep = call(capsys, "spherical", "verify", "--degree", 3, "--depth", 6, "--seed", 7,
                     "--tol", 1e-300)
    assert code == 1 and not rep["ok"]


def test_propa(capsys, files):
    code, rep = call(capsys, "propa", "--symbol", files / "per2.json")
    assert code == 0 and rep["ok"]


def test_mfunction_gap_csv(capsys, tmp_path):
    code, rep = call(capsys, "mfunction", "gap", "--degree", 6, "--csv", tmp_path / "gap.csv")
    assert code == 0 and rep["ok"]
    rows = list(csv.DictReader(open(tmp_path / "gap.csv")))
    im = [float(r["im_m"]) for r in rows]
    assert len(rows) == 6 and im[-1] < 1e-4 and all(np.diff(im) < 0)


def test_mfunction_eval(capsys):
    code, rep = call(capsys, "mfunction", "eval", "--degree", 6, "--z", 6)
    assert code == 0
    row = rep["result"]["values"][0]
    assert abs(row["m_tree"]["re"] + 5 / 24) <= 1e-12
    code, rep = call(capsys, "mfunction", "eval", "--degree", 3, "--z", 1.0)
    assert code == 2 and "band" in rep["error"]


def test_pou(capsys):
    code, rep = call(capsys, "pou", "--degree", 4, "--L", 2)
    assert code == 0 and rep["ok"]


@pytest.mark.parametrize("argv", [
    ["graph", "build", "--kind", "tree", "--depth", 3],
    ["op", "adjacency", "--graph", "{g}"],
    ["spectrum", "--op", "{op}", "--centers", 3, "--radius", 2, "--tol", 0.1],
    ["rlimit", "--op", "{op}", "--path", "{path}", "--radius", 2],
    ["counterexample"],
    ["spherical", "verify", "--degree", 3, "--depth", 2],
    ["propa", "--symbol", "{sym}"],
    ["mfunction", "gap", "--degree", 3],
    ["pou", "--degree", 3, "--L", 2],
])
def test_dry_run_every_subcommand(capsys, files, argv):
    sub = {"{g}": files / "g.json", "{op}": files / "op.json", "{path}": files / "path.json",
           "{sym}": files / "per2.json"}
    argv = [sub.get(a, a) if isinstance(a, str) else a for a in argv]
    code, rep = call(capsys, *argv, "--dry-run")
    assert code == 0 and rep["dry_run"] and "result" not in rep


@pytest.mark.parametrize("argv", [
    ["graph", "build", "--kind", "tree", "--degree", 2, "--depth", 3],
    ["spectrum", "--op", "missing.json", "--centers", 0, "--radius", 1, "--tol", 0.1],
    ["spherical", "verify", "--degree", 3, "--depth", -1],
    ["pou", "--degree", 3, "--L", 0],
    ["counterexample", "--threads", 0],
])
def test_config_errors_exit_two(capsys, argv):
    code, rep = call(capsys, *argv)
    assert code == 2 and rep["ok"] is False and rep["error"]


def test_argparse_errors_exit_two(capsys):
    assert cli.run(["nonsense"]) == 2
    assert cli.run(["pou", "--degree", "x", "--L", "2"]) == 2
    capsys.readouterr()


def test_replay_is_identical_apart_from_the_timestamp(tmp_path):
    argv = ["spherical", "verify", "--degree", 4, "--depth", 4, "--count", 3, "--seed", 9]
    out = []
    p = tmp_path / "r.json"
    for _ in range(2):
        assert cli.run([str(a) for a in argv] + ["--out", str(p)]) == 0
        out.append(p.read_text())
    assert strip_time(out[0]) == strip_time(out[1])
    a, b = (t.splitlines() for t in out)
    assert [x for x in a if "timestamp" not in x] == [x for x in b if "timestamp" not in x]


def test_threads_do_not_change_the_result(capsys, files):
    reps = [call(capsys, "spectrum", "--op", files / "op.json", "--centers", 10, 20, 30,
                 "--radius", 4, "--tol", 0.5, "--threads", t)[1] for t in (1, 3)]
    assert reps[0]["result"] == reps[1]["result"]


def test_module_entry_point(tmp_path):
    proc = subprocess.run([sys.executable, "-m", "rlimits", "pou", "--degree", "3", "--L", "1", "--dry-run"],
                          capture_output=True, text=True, cwd=tmp_path)
    assert proc.returncode == 0 and json.loads(proc.stdout)["dry_run"]
