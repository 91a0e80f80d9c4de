import json
import os

import pytest

from ppmdp.cli import main


def run_cli(*argv):
    return main(list(argv))


def test_figures_list(capsys):
    assert run_cli("figures", "--list") == 0
    out = capsys.readouterr().out
    assert "ladder_limsup" in out and "incomparable" in out


def test_figures_emit_and_solve(tmp_path, capsys):
    model = tmp_path / "ladder.json"
    assert run_cli("figures", "--family", "ladder_limsup", "--depth", "5",
                   "--out", str(model)) == 0
    assert run_cli("solve", "--model", str(model), "--objective", "limsup_geq0") == 0
    doc = json.loads(capsys.readouterr().out)
    assert doc["values"]["s0"] == "0"


def test_solve_generated_with_enumeration(capsys):
    assert run_cli("solve", "--model", "gen:incomparable", "--depth", "4",
                   "--method", "enumerate") == 0
    doc = json.loads(capsys.readouterr().out)
    assert doc["best"] == "1"


def test_eval_md_strategy(tmp_path, capsys):
    model = tmp_path / "m.json"
    run_cli("figures", "--family", "incomparable", "--depth", "4", "--out", str(model))
    strategy = tmp_path / "s.json"
    strategy.write_text(json.dumps(
        {"type": "md", "choices": {"(a,1)": "(b,1)", "(b,1)": "(b,1)"}}))
    assert run_cli("eval", "--model", str(model), "--strategy", str(strategy),
                   "--expected", "limsup") == 0
    doc = json.loads(capsys.readouterr().out)
    assert doc["(a,1)"] == "1/2"


def test_transform_step_encode_and_conditioned(tmp_path, capsys):
    out = tmp_path / "enc.json"
    assert run_cli("transform", "--model", "gen:ladder_limsup", "--kind", "step-encode",
                   "--depth", "4", "--out", str(out)) == 0
    doc = json.loads(out.read_text())
    assert any("(s0,0)" in st["id"] for st in doc["states"])

    base = tmp_path / "base.json"
    base.write_text(json.dumps({
        "states": [
            {"id": "s", "kind": "controlled",
             "trans": [{"to": "f", "reward": "0"}]},
            {"id": "f", "kind": "random",
             "trans": [{"to": "win", "prob": "1/2", "reward": "0"},
                       {"to": "lose", "prob": "1/2", "reward": "0"}]},
            {"id": "win", "kind": "controlled", "trans": [{"to": "win", "reward": "0"}]},
            {"id": "lose", "kind": "controlled", "trans": [{"to": "lose", "reward": "0"}]},
        ],
        "initial": "s"}))
    obj = tmp_path / "obj.json"
    obj.write_text(json.dumps({"kind": "reach", "targets": ["win"]}))
    cond = tmp_path / "cond.json"
    assert run_cli("transform", "--model", str(base), "--kind", "conditioned",
                   "--objective", str(obj), "--out", str(cond)) == 0
    doc = json.loads(cond.read_text())
    ids = [st["id"] for st in doc["states"]]
    assert "lose" not in ids


def test_synthesize_bubble(tmp_path, capsys):
    # the raw family has absorbing loops; the step-encoded version is
    # universally transient and synthesizable
    assert run_cli("synthesize", "--model", "gen:incomparable", "--step-encode",
                   "--depth", "10", "--method", "bubble", "--stages", "2") == 0
    doc = json.loads(capsys.readouterr().out)
    assert doc["plan"]["kind"] == "deterministic"
    assert len(doc["plan"]["stage_bounds"]) == 2


def test_simulate_builtin_and_table(tmp_path, capsys):
    assert run_cli("simulate", "--model", "gen:randf_ladder", "--strategy",
                   "builtin:randf-escalating:3", "--horizon", "500",
                   "--samples", "2000", "--delta", "0.05") == 0
    doc = json.loads(capsys.readouterr().out)
    assert 0 <= doc["lower"] <= doc["upper"] <= 1


def test_report_quick(tmp_path, capsys):
    out = tmp_path / "report.json"
    code = run_cli("report", "--quick", "--out", str(out))
    text = capsys.readouterr().out
    assert "all asserted cells pass" in text
    doc = json.loads(out.read_text())
    assert doc["cells"]
    assert all(c["claim_id"] for c in doc["cells"])
    assert code == 0, text
