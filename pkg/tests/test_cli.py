import json

import pytest

from compliant_catch.ballistics import flow
from compliant_catch.cli import main
from compliant_catch.plstm import dataset_hash, generate_demos

THROW = ["2.6008990281919027", "-0.06119693525677809", "1.6324931520904213",
         "-2.725748534714532", "0.06413453763375987", "1.2408636083683997"]


def run(tmp_path, *argv):
    return main([*argv, "--out-dir", str(tmp_path)])


def test_predict_writes_the_knots(tmp_path):
    track = tmp_path / "track.csv"
    rows = ["t,x,y,z"]
    for k in range(11):
        s = flow([2.5, 0, 1.5, -3, 0, 2], 0.01 * k)
        rows.append(f"{0.01 * k},{s[0]},{s[1]},{s[2]}")
    track.write_text("\n".join(rows) + "\n")
    assert run(tmp_path, "predict", str(track)) == 0
    lines = (tmp_path / "predict-seed7" / "prediction.csv").read_text().splitlines()
    assert lines[0] == "t,x,y,z,vx,vy,vz"
    assert len(lines) == 302
    assert (tmp_path / "predict-seed7" / "config.json").exists()
    assert (tmp_path / "predict-seed7" / "defaults.md").exists()


def test_malformed_track_is_a_usage_error(tmp_path, capsys):
    track = tmp_path / "bad.csv"
    track.write_text("0,0,0,1\n")
    assert run(tmp_path, "predict", str(track)) == 2
    assert "line 1" in capsys.readouterr().err


def test_plan_writes_plan_and_profile(tmp_path):
    assert run(tmp_path, "plan", "--state", *THROW) == 0
    plan = json.loads((tmp_path / "plan-seed7" / "plan.json").read_text())
    assert plan["caught"] is True
    assert len(plan["q_ca"]) == 9
    assert (tmp_path / "plan-seed7" / "prc.csv").exists()


def test_simulate_modes(tmp_path):
    assert run(tmp_path, "simulate", "--state", *THROW, "--untrained", "--mode", "no-z") == 0
    trial = json.loads((tmp_path / "simulate-seed7" / "trial.json").read_text())
    assert trial["outcome"] == "GroundCrash"
    assert run(tmp_path, "simulate", "--state", *THROW, "--untrained") == 0
    trial = json.loads((tmp_path / "simulate-seed7" / "trial.json").read_text())
    assert trial["outcome"] == "Success"


def test_simulate_needs_a_policy(tmp_path):
    assert run(tmp_path, "simulate", "--state", *THROW) == 2
    assert run(tmp_path, "simulate", "--params", str(tmp_path / "missing.bin")) == 2


def test_montecarlo_reports_are_byte_identical(tmp_path):
    a, b = tmp_path / "a", tmp_path / "b"
    assert main(["montecarlo", "--n", "3", "--untrained", "--trials", "--seed", "5", "--out-dir", str(a)]) == 0
    assert main(["montecarlo", "--n", "3", "--untrained", "--trials", "--seed", "5", "--out-dir", str(b)]) == 0
    for name in ("report.json", "trials.jsonl", "config.json"):
        assert (a / "montecarlo-seed5" / name).read_bytes() == (b / "montecarlo-seed5" / name).read_bytes()
    assert len((a / "montecarlo-seed5" / "trials.jsonl").read_text().splitlines()) == 3


def test_ablate_prints_one_line_per_mode(tmp_path, capsys):
    assert run(tmp_path, "ablate", "--n", "2", "--untrained") == 0
    out = capsys.readouterr().out
    for mode in ("full", "no-z", "no-xy", "rigid"):
        assert f"{mode}  Success=" in out
    report = json.loads((tmp_path / "ablate-seed7" / "report.json").read_text())
    assert set(report["modes"]) == {"full", "no-z", "no-xy", "rigid"}


def test_gen_demos_hash(tmp_path, capsys):
    assert run(tmp_path, "gen-demos", "--count", "20", "--seed", "7") == 0
    assert dataset_hash(generate_demos(20, 7)) in capsys.readouterr().out
    assert len((tmp_path / "gen-demos-seed7" / "demos.jsonl").read_text().splitlines()) == 20


def test_train_then_simulate(tmp_path, capsys):
    assert run(tmp_path, "gen-demos", "--count", "8") == 0
    demos = tmp_path / "gen-demos-seed7" / "demos.jsonl"
    assert run(tmp_path, "train", "--demos", str(demos), "--epochs", "2") == 0
    assert "warning" in capsys.readouterr().err
    params = tmp_path / "train-seed7" / "params.bin"
    curve = json.loads((tmp_path / "train-seed7" / "loss_curve.json").read_text())
    assert len(curve["loss"]) == 2
    assert run(tmp_path, "simulate", "--state", *THROW, "--params", str(params)) == 0


def test_paper_literal_sets_equal_weights(tmp_path):
    assert run(tmp_path, "gen-demos", "--count", "1", "--paper-literal") == 0
    cfg = json.loads((tmp_path / "gen-demos-seed7" / "config.json").read_text())
    assert cfg["poc"]["slack_weight"] == 1.0


@pytest.mark.parametrize(
    "argv",
    [["bogus"], ["montecarlo", "--n", "0", "--untrained"], ["train", "--epochs", "0"], ["plan", "--state", "1", "2"]],
)
def test_usage_errors_exit_two(tmp_path, argv):
    assert run(tmp_path, *argv) == 2


def test_config_errors_exit_two(tmp_path, capsys):
    cfg = tmp_path / "cfg.json"
    cfg.write_text('{"poc": {"bogus": 1}}')
    assert run(tmp_path, "gen-demos", "--config", str(cfg)) == 2
    assert "bogus" in capsys.readouterr().err
