import csv
import io
import json
import math
import os
from decimal import Decimal

import numpy as np
import pytest

from sturmsing.cli import main


def run(*argv):
    out, err = io.StringIO(), io.StringIO()
    code = main(list(argv), out, err)
    return code, out.getvalue(), err.getvalue()


def ok(*argv):
    code, out, err = run(*argv)
    assert code == 0, err
    return out


def test_solve_sine_table():
    doc = json.loads(ok("solve", "--p", "1", "--u0", "0", "--du0", "1", "--from", "0", "--to", "3.14"))
    rows = np.array(doc["table"]["rows"])
    assert doc["table"]["columns"] == ["x", "u", "du"]
    assert np.max(np.abs(rows[:, 1] - np.sin(rows[:, 0]))) <= 1e-8
    assert doc["config"]["tol"] == 1e-10


def test_solve_constant_and_corpus():
    rows = np.array(json.loads(ok("solve", "--p", "0", "--u0", "1", "--du0", "0"))["table"]["rows"])
    assert np.all(rows[:, 1] == 1.0)
    doc = json.loads(ok("solve", "--corpus", "lambda-family", "--param", "lam=0.25"))
    x, u = np.array(doc["table"]["rows"])[:, :2].T
    exact = (1 - x) ** 0.25 * (1 + x) ** 0.75
    assert np.max(np.abs(u / exact - 1)) <= 1e-6


def test_principality_commands():
    doc = json.loads(ok("principality", "--corpus", "lambda-family", "--param", "lam=0.5"))
    assert doc["result"]["principal"] is True
    doc = json.loads(ok("principality", "--corpus", "lambda-family", "--param", "lam=0.25"))
    assert doc["result"]["right"]["classification"] == "FINITE"
    assert doc["result"]["principal"] is False
    doc = json.loads(ok("principality", "--p", "0", "--u", "1"))
    assert {doc["result"]["left"]["classification"], doc["result"]["right"]["classification"]} == {"FINITE"}


def test_verify_commands():
    doc = json.loads(ok("verify", "comparison", "--p", "lambda-family:0.25", "--P", "lambda-family:0.4"))
    assert doc["result"]["verdict"] == "FAIL-WITNESS"
    doc = json.loads(ok("verify", "separation", "--corpus", "lambda-family", "--param", "lam=0.5"))
    assert doc["result"]["verdict"] == "PASS"
    code, _, err = run("verify", "comparison", "--p", "1", "--P", "1")
    assert code == 2
    assert json.loads(err)["error"] == "HypothesisError"


def test_construct_commands():
    doc = json.loads(ok("construct", "schwarzian", "--p", "0", "--u", "1", "--interval", "0,1"))
    P = np.array(doc["table"]["rows"])[:, 1]
    assert np.max(np.abs(P - math.pi ** 2)) <= 1e-9
    doc = json.loads(ok("construct", "chuaqui", "--p", "0", "--u", "1"))
    assert doc["result"]["parameters"]["k"] == pytest.approx(0.9 * math.pi)
    code, _, err = run("construct", "schwarzian", "--corpus", "lambda-family", "--param", "lam=0.5")
    assert code == 3
    assert "positive solution on the whole line" in json.loads(err)["message"]


def test_construct_steinmetz_and_separation():
    doc = json.loads(ok("construct", "steinmetz", "--corpus", "constant-minus-one",
                        "--solution", "exp", "--solution2", "exp-neg", "--alpha", "0.3"))
    x, P, v = np.array(doc["table"]["rows"]).T
    assert np.allclose(P, -1 + 4 * 0.3 * 0.7)
    assert np.allclose(v, np.exp(-0.4 * x), rtol=1e-12)
    doc = json.loads(ok("construct", "separation", "--corpus", "lambda-family"))
    assert doc["result"]["c2_over_c1"] < 0


def test_exit_codes():
    assert run("verify", "comparison", "--p", "2", "--P", "1", "--u", "sin(x)",
               "--interval", "0,3")[0] == 2
    assert run("construct", "chuaqui", "--corpus", "lambda-family", "--param", "lam=0.5")[0] == 3
    assert run("principality", "--p", "log(x", "--u", "1")[0] == 2
    assert run("solve", "--p", "log(x)", "--u0", "1", "--du0", "0", "--from", "-1", "--to", "1")[0] == 2
    with pytest.raises(SystemExit):
        run("frobnicate")


def test_corpus_list():
    doc = json.loads(ok("corpus", "list"))
    names = {e["name"] for e in doc["result"]["entries"]}
    assert "lambda-family" in names and "euler" in names


@pytest.mark.parametrize("argv", [
    ("principality", "--corpus", "lambda-family", "--param", "lam=0.25"),
    ("verify", "comparison", "--p", "lambda-family:0.25", "--P", "lambda-family:0.4"),
    ("construct", "schwarzian", "--corpus", "lambda-family", "--param", "lam=0.25"),
    ("solve", "--corpus", "euler", "--u0", "1", "--du0", "0.75"),
])
def test_determinism(argv):
    assert ok(*argv) == ok(*argv)


def _numbers(obj):
    if isinstance(obj, dict):
        for k in sorted(obj):
            yield from _numbers(obj[k])
    elif isinstance(obj, list):
        for v in obj:
            yield from _numbers(v)
    elif isinstance(obj, (int, float)) and not isinstance(obj, bool):
        yield float(obj)


def test_csv_json_tables_identical():
    argv = ("construct", "schwarzian", "--corpus", "lambda-family")
    doc = json.loads(ok(*argv))
    rows = list(csv.reader(io.StringIO(ok(*argv, "--format", "csv"))))
    assert rows[0] == doc["table"]["columns"]
    assert [[float(t) for t in r] for r in rows[1:]] == doc["table"]["rows"]
    assert all(len(Decimal(t).as_tuple().digits) <= 17 for t in rows[5])


def test_csv_json_flat_identical():
    argv = ("verify", "separation", "--corpus", "lambda-family", "--param", "lam=0.5")
    doc = json.loads(ok(*argv))
    rows = list(csv.reader(io.StringIO(ok(*argv, "--format", "csv"))))
    assert rows[0] == ["key", "value"]
    flat = []
    for _, v in rows[1:]:
        try:
            flat.append(float(v))
        except ValueError:
            pass
    expect = [v for v in _numbers(doc) if math.isfinite(v)]
    assert sorted(f for f in flat if math.isfinite(f)) == sorted(expect)


def test_out_directory(tmp_path):
    code, out, _ = run("principality", "--p", "0", "--u", "1", "--out", str(tmp_path))
    assert code == 0
    path = out.strip()
    assert os.path.dirname(path) == str(tmp_path)
    assert os.listdir(tmp_path) == ["principality.json"]
    assert json.load(open(path))["command"] == "principality"


def test_config_file_and_override(tmp_path):
    cfg = tmp_path / "run.cfg"
    cfg.write_text("# settings\ntol = 1e-9\neps = 1e-3\nformat = json\n")
    doc = json.loads(ok("principality", "--p", "0", "--u", "1", "--config", str(cfg)))
    assert doc["config"]["tol"] == 1e-9 and doc["config"]["eps"] == 1e-3
    doc = json.loads(ok("principality", "--p", "0", "--u", "1", "--config", str(cfg), "--tol", "1e-8"))
    assert doc["config"]["tol"] == 1e-8 and doc["config"]["eps"] == 1e-3
    bad = tmp_path / "bad.cfg"
    bad.write_text("speed = 3\n")
    assert run("principality", "--p", "0", "--u", "1", "--config", str(bad))[0] == 2
