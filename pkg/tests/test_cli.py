from __future__ import annotations

import json

import pytest

from dirbundle.cli import EXIT_FAIL, EXIT_OK, EXIT_PREDICATE, EXIT_USAGE, build_parser, main


def run(capsys, *argv):
    code = main(list(argv))
    out = capsys.readouterr()
    return code, out.out, out.err


def test_parser_has_all_subcommands():
    p = build_parser()
    for cmd in ("dirset", "gdb", "ssp", "dim", "aaderiv", "components", "reproduce", "pompeiu"):
        assert p.parse_args([cmd] if cmd != "reproduce" else [cmd, "umbrella-2-3"]).command == cmd


def test_usage_errors(capsys, tmp_path):
    assert run(capsys, "nope")[0] == EXIT_USAGE
    assert run(capsys, "dirset")[0] == EXIT_USAGE                 # --germ missing
    assert run(capsys, "dirset", "--germ", "bogus")[0] == EXIT_USAGE
    assert run(capsys, "reproduce", "nope")[0] == EXIT_USAGE
    assert run(capsys, "dirset", "--germ", "line", "--param", "oops")[0] == EXIT_USAGE
    assert run(capsys, "dirset", "--germ", "line", "--scales", "1,2")[0] == EXIT_USAGE
    assert run(capsys, "dirset", "--germ", "line", "--param", "colour=1")[0] == EXIT_USAGE
    assert run(capsys, "aaderiv")[0] == EXIT_USAGE
    cfg = tmp_path / "c.json"
    cfg.write_text(json.dumps({"germ": "line", "unknown": 1}))
    assert run(capsys, "dirset", "--config", str(cfg))[0] == EXIT_USAGE
    assert run(capsys, "dirset", "--config", str(tmp_path / "missing.json"))[0] == EXIT_USAGE


def test_computational_failure_exit_code(capsys):
    code, _, err = run(capsys, "aaderiv", "--map", "rotation(30)", "--scales", "0.5,0.5,3")
    assert code == EXIT_FAIL and "error" in err


def test_dirset_writes_outputs(capsys, tmp_path):
    code, out, _ = run(capsys, "dirset", "--germ", "line", "--scales", "0.5,0.5,4", "--out", str(tmp_path))
    assert code == EXIT_OK
    report = json.loads((tmp_path / "report.json").read_text())
    assert report == json.loads(out)
    assert report["metrics"]["members"] == 2
    assert report["seed"] == 42
    assert (tmp_path / "directions_dirset.csv").read_text().startswith("scale,x,y,z")


def test_flags_override_config(capsys, tmp_path):
    cfg = tmp_path / "c.json"
    cfg.write_text(json.dumps({"germ": "plane", "seed": 3, "scales": "0.5,0.5,4"}))
    code, out, _ = run(capsys, "dim", "--config", str(cfg), "--germ", "line", "--seed", "7")
    assert code == EXIT_OK
    report = json.loads(out)
    assert report["config"]["germ"] == "line" and report["seed"] == 7
    assert report["metrics"]["dimension"] == 1


def test_ssp_and_aaderiv(capsys):
    code, out, _ = run(capsys, "ssp", "--germ", "plane", "--scales", "0.5,0.5,6")
    assert code == EXIT_OK and json.loads(out)["metrics"]["verdict"] == "pass"
    code, out, _ = run(capsys, "aaderiv", "--map", "log-spiral(0.2)")
    assert code == EXIT_OK and json.loads(out)["metrics"]["converged"] is False


def test_reproduce_exit_codes(capsys, tmp_path):
    code, out, _ = run(capsys, "reproduce", "umbrella-2-3", "--out", str(tmp_path / "u"))
    assert code == EXIT_OK and json.loads(out)["pass"] is True
    assert (tmp_path / "u" / "report.json").exists()
    # probing node 10 at delta = 1e-5 exceeds the 0.05 quotient bound
    code, out, _ = run(capsys, "reproduce", "pompeiu-5-9")
    assert code == EXIT_PREDICATE and json.loads(out)["pass"] is False
    code, out, _ = run(capsys, "reproduce", "pompeiu-5-9", "--param", "probe_count=9")
    assert code == EXIT_OK


def test_pompeiu_command(capsys):
    code, out, _ = run(capsys, "pompeiu", "--n-terms", "9", "--probe-count", "3")
    assert code == EXIT_OK
    assert len(json.loads(out)["metrics"]["quotients"]) == 3
    assert run(capsys, "pompeiu", "--n-terms", "3")[0] == EXIT_USAGE


def test_components_command(capsys, tmp_path):
    code, out, _ = run(capsys, "components", "--germ", "plane", "--grid", "32", "--scales", "0.5,0.5,4",
                       "--q-count", "32", "--dir-count", "32", "--thickness", "8", "--out", str(tmp_path))
    assert code == EXIT_OK
    m = json.loads(out)["metrics"]
    assert m["sphere"]["component_count"] == 2 and m["sphere"]["stable"]
    assert (tmp_path / "occupancy_sphere.pgm").read_bytes().startswith(b"P5")


def test_version(capsys):
    assert main(["--version"]) == EXIT_OK
    assert "0.1.0" in capsys.readouterr().out
