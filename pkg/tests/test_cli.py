import csv
import json
import shutil
import subprocess
import sys

import pytest

from qmcert.cli import (EXIT_INPUT, EXIT_INVALID, EXIT_OK, EXIT_PIPELINE, InputError, main,
                        options_for, parse_problem_json, parse_problem_text)


def write(tmp_path, name, text):
    p = tmp_path / name
    p.write_text(text)
    return str(p)


SIMPLE = "vars: x\ngen: 1 - x^2\nf: x + 11/10\n"


def test_problem_text_parsing():
    p = parse_problem_text("# comment\nvars: x, y\ngen: 1 - x^2 - y^2\ngen: x\nf: 2 - x\n"
                           "opt rmax 4\n")
    assert p.variables == ["x", "y"] and len(p.generators) == 2
    assert options_for(p).r_max == 4


@pytest.mark.parametrize("text", ["gen: 1 - x^2\nf: x\n", "vars: x\nf: x\n", "vars: x\ngen: x\n",
                                  "vars: x\ngen: x\nf: x\nf: x\n", "vars: x\ngen: x\nf: x\nopt zz 1\n",
                                  "vars: x\ngen: x\nf: x\nhello\n"])
def test_problem_text_errors(text):
    with pytest.raises(InputError):
        parse_problem_text(text)


def test_problem_json_mirror():
    p = parse_problem_json(json.dumps({"variables": ["x"], "generators": ["1 - x^2"],
                                       "f": "x + 2", "options": {"tolerance": "1/100"}}))
    assert p.f == "x + 2"
    assert str(options_for(p).bound.tolerance) == "1/100"
    with pytest.raises(InputError):
        parse_problem_json("[1, 2]")


def test_bad_option_values():
    p = parse_problem_text("vars: x\ngen: 1 - x^2\nf: x + 2\nopt archimedean_n -3\n")
    with pytest.raises(InputError):
        options_for(p)


def test_certify_then_verify(tmp_path, capsys):
    prob = write(tmp_path, "p.txt", SIMPLE)
    out = str(tmp_path / "cert.json")
    assert main(["certify", prob, "--out", out]) == EXIT_OK
    text = capsys.readouterr().out
    assert "verified: True" in text
    doc = json.loads(open(out).read())
    assert doc["verified"] is True and doc["multipliers"][0]["role"] == "sos"
    assert main(["verify", out]) == EXIT_OK
    assert capsys.readouterr().out.strip() == "valid"


def test_certify_json_output(tmp_path, capsys):
    prob = write(tmp_path, "p.txt", SIMPLE)
    assert main(["certify", prob, "--json"]) == EXIT_OK
    doc = json.loads(capsys.readouterr().out)
    assert doc["f"] == "x + 11/10"


def test_parse_error_shows_caret(data_dir, capsys):
    assert main(["certify", str(data_dir / "bad_poly.txt")]) == EXIT_INPUT
    err = capsys.readouterr().err
    assert "position 6" in err and "^" in err


def test_pipeline_failure_exit_code(data_dir, tmp_path, capsys):
    state = str(tmp_path / "state.json")
    assert main(["certify", str(data_dir / "negative_target.txt"), "--state", state]) \
        == EXIT_PIPELINE
    err = capsys.readouterr().err
    assert "pipeline failure at stage" in err
    assert json.loads(open(state).read())["status"] == "partial"


def test_verify_exit_codes(data_dir, tmp_path, capsys):
    assert main(["verify", str(tmp_path / "missing.json")]) == EXIT_INPUT
    assert main(["verify", write(tmp_path, "empty.json", "  \n")]) == EXIT_INPUT
    assert main(["verify", write(tmp_path, "junk.json", "{not json")]) == EXIT_INPUT
    doc = json.loads((data_dir / "ball_certificate.json").read_text())
    doc["f"] = doc["f"] + " + 1"
    assert main(["verify", write(tmp_path, "tampered.json", json.dumps(doc))]) == EXIT_INVALID
    assert "invalid" in capsys.readouterr().out


def test_bench_writes_csv(tmp_path, capsys):
    out = str(tmp_path / "bench.csv")
    assert main(["bench", "univariate-degree", "--k", "3,5", "--out", out]) == EXIT_OK
    rows = list(csv.DictReader(open(out)))
    assert [r["k_or_d"] for r in rows] == ["3", "5"] * 2
    assert list(rows[0]) == ["problem_id", "k_or_d", "epsilon", "multiplier_degree", "r",
                             "wall_seconds", "verified"]
    assert all(r["verified"] == "True" for r in rows)
    assert all(int(r["multiplier_degree"]) <= 2 * int(r["k_or_d"]) + 4 for r in rows)


def test_bench_unknown_suite(tmp_path):
    assert main(["bench", "nope", "--out", str(tmp_path / "x.csv")]) == EXIT_INPUT


@pytest.mark.skipif(shutil.which("qmcert") is None, reason="console script not installed")
def test_console_script(data_dir):
    res = subprocess.run(["qmcert", "verify", str(data_dir / "ball_certificate.json")],
                         capture_output=True, text=True)
    assert res.returncode == 0 and res.stdout.strip() == "valid"


def test_module_entry_point(data_dir):
    res = subprocess.run([sys.executable, "-m", "qmcert.cli", "--version"], capture_output=True,
                         text=True)
    assert res.returncode == 0 and "qmcert" in res.stdout
