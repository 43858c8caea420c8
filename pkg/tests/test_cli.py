import json
import subprocess
import sys

import pytest

from trafficq.cli import main

from conftest import DATA

TOY = str(DATA / "toy_scenario.json")


def run(args, capsys):
    code = main(args)
    out = capsys.readouterr()
    return code, out.out, out.err


def test_oracle_prints_sequence(capsys):
    code, out, _ = run(["oracle", "--scenario", TOY, "--mode", "action_sequence"], capsys)
    assert code == 0
    lines = out.splitlines()
    assert lines[0] == "step,action_J1"
    assert lines[1:4] == ["1,30", "2,60", "3,30"]
    assert "best_cost=0.780000" in lines[-1]


def test_oracle_budget_refusal(capsys):
    code, _, err = run(["oracle", "--mode", "action_sequence"], capsys)
    assert code == 2
    assert "budget" in err


def test_bad_config_names_field(tmp_path, capsys):
    doc = json.loads((DATA / "toy_scenario.json").read_text())
    doc["agent"]["alpha"] = 0.3
    path = tmp_path / "bad.json"
    path.write_text(json.dumps(doc))
    code, _, err = run(["simulate", "--scenario", str(path), "--out", str(tmp_path / "o")], capsys)
    assert code == 2
    assert "alpha" in err


def test_simulate_regular_writes_outputs(tmp_path, capsys):
    out = tmp_path / "sim"
    code, stdout, _ = run(["simulate", "--scenario", TOY, "--controller", "regular", "--seed", "1",
                           "--out", str(out)], capsys)
    assert code == 0
    assert {p.name for p in out.iterdir()} == {"trace.csv", "run_meta.json", "queues.png", "costs.png"}
    meta = json.loads((out / "run_meta.json").read_text())
    assert meta["seed"] == 1 and meta["controller"] == "regular"
    assert meta["config"]["n_values"] == 3
    assert stdout.splitlines()[0].startswith("step,cost,overflow")


def test_simulate_adaptive_writes_generations(tmp_path, capsys):
    out = tmp_path / "ada"
    code, _, _ = run(["simulate", "--scenario", TOY, "--controller", "adaptive", "--out", str(out)], capsys)
    assert code == 0
    assert (out / "generations.csv").exists() and (out / "generations.png").exists()


def test_simulate_fixed_needs_matching_greens(tmp_path, capsys):
    code, _, err = run(["simulate", "--scenario", TOY, "--controller", "fixed", "--greens", "40,50",
                        "--out", str(tmp_path)], capsys)
    assert code == 2 and "--greens" in err
    code, _, err = run(["simulate", "--scenario", TOY, "--controller", "fixed", "--greens", "95",
                        "--out", str(tmp_path), "--no-plots"], capsys)
    assert code == 2 and "bounds" in err


def test_sweep_writes_tables(tmp_path, capsys):
    out = tmp_path / "sw"
    code, stdout, _ = run(["sweep", "--scenario", TOY, "--controller", "regular", "--axis", "turning",
                           "--pcts", "5,15,30", "--seeds", "3", "--out", str(out)], capsys)
    assert code == 0
    assert stdout.splitlines()[0] == "pct,step1,step2,step3,overflow_frac"
    assert len(stdout.splitlines()) == 4
    assert (out / "sweep_single_seed.csv").exists() and (out / "sweep.png").exists()
    assert json.loads((out / "run_meta.json").read_text())["seeds"] == 3


def test_module_entry_point():
    res = subprocess.run([sys.executable, "-m", "trafficq", "oracle", "--scenario", TOY],
                         capture_output=True, text=True, check=True)
    assert "mode=fixed_action" in res.stdout


@pytest.mark.parametrize("argv", [["sweep", "--pcts", "a,b"], ["simulate", "--controller", "mpc"]])
def test_argument_errors_exit(argv):
    with pytest.raises(SystemExit):
        main(argv)
