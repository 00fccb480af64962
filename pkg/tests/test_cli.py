import csv
import io
import json

from click.testing import CliRunner

from reinforced_loops.cli import main


def run(*args):
    return CliRunner().invoke(main, list(args), catch_exceptions=False)


def test_verify_exit_codes(tmp_path):
    out = tmp_path / "r.json"
    r = run("verify", "shift-lemma", "--seed", "1", "--out", str(out))
    assert r.exit_code == 0
    assert json.loads(out.read_text())["check_id"] == "shift-lemma"
    r = CliRunner().invoke(main, ["verify", "nope"])
    assert r.exit_code != 0


def test_verify_small_mc():
    r = run("verify", "thmA", "--replicas", "2000", "--seed", "4")
    assert r.exit_code in (0, 1)
    assert ("PASS" in r.output) != ("FAIL" in r.output)


def test_simulate_vrjp():
    r = run("simulate", "vrjp", "--graph", "2-path+root", "--start", "1", "--seed", "2")
    assert r.exit_code == 0
    lines = [json.loads(l) for l in r.output.strip().splitlines()]
    assert lines[-1]["end_reason"] == "killed_at_root"
    r = run("simulate", "vrjp", "--graph", "triangle", "--start", "1", "--stop", "threshold", "--vertex", "2",
            "--level", "3")
    assert json.loads(r.output.strip().splitlines()[-1])["L"]["2"] == 3.0


def test_simulate_jump():
    r = run("simulate", "jump", "--graph", "triangle", "--start", "1", "--u", "1=0.5", "--stop", "steps",
            "--steps", "7")
    assert r.exit_code == 0
    assert len(r.output.strip().splitlines()) == 8


def test_wilson_and_rewilson(tmp_path):
    r = run("wilson", "--graph", "K4+root", "--variant", "popping", "--seed", "3")
    assert r.exit_code == 0
    out = tmp_path / "rw.jsonl"
    r = run("rewilson", "--graph", "2-path+root", "--replicas", "3", "--dump-loops", "--out", str(out))
    rows = [json.loads(l) for l in out.read_text().splitlines()]
    assert [d["replica"] for d in rows] == [0, 1, 2]
    assert all("loops" in d for d in rows)


def test_soup():
    r = run("soup", "--graph", "2-path+root", "--alpha", "2.5", "--seed", "1")
    assert r.exit_code == 0
    r = CliRunner().invoke(main, ["soup", "--graph", "2-path+root", "--alpha", "-1"])
    assert r.exit_code != 0


def test_env_commands():
    r = run("env", "sample", "--graph", "2-path+root", "--n", "50", "--seed", "1")
    assert r.exit_code == 0
    rows = list(csv.reader(io.StringIO(r.stdout)))
    assert len(rows) == 51
    r = run("env", "density", "--graph", "single-vertex+root", "--u", "1=0.3")
    assert "log_density" in json.loads(r.output)
    r = run("env", "normalize", "--graph", "single-vertex+root")
    assert abs(json.loads(r.output)["mass"] - 1) < 1e-6
