import json

import pytest

from iotdos.cli import main

UNREACHABLE = """\
devices:
  - id: d
    battery_capacity: 4
  - id: e
    battery_capacity: 3
attacker:
  power_level: 1
  goal: device:e
  actions:
    - {label: hit, target: d, drain_target: 2, time_per_message: 5}
"""


def run(argv, capsys):
    code = main(argv)
    out, err = capsys.readouterr()
    return code, out, err


def test_validate_fixture(capsys):
    code, out, _ = run(["validate", "table1.cfg"], capsys)
    assert code == 0 and "0 violations" in out


def test_validate_bad_config(tmp_path, capsys):
    p = tmp_path / "bad.cfg"
    p.write_text("devices:\n  - id: a\n    battery_capacity: -1\n")
    code, out, _ = run(["validate", str(p)], capsys)
    assert code == 2 and "BAD_CAPACITY" in out


def test_solve_chain(capsys):
    code, out, _ = run(["solve", "chain.cfg"], capsys)
    assert code == 0 and "V(initial)=10" in out


def test_solve_unreachable(tmp_path, capsys):
    p = tmp_path / "u.cfg"
    p.write_text(UNREACHABLE)
    code, out, err = run(["solve", str(p)], capsys)
    assert code == 3 and "unreachable" in err


def test_usage_error():
    with pytest.raises(SystemExit) as exc:
        main(["gen-dataset", "table1_attack.cfg", "--size", "10", "--attack-fraction", "2"])
    assert exc.value.code == 1


def test_data_error(tmp_path, capsys):
    code, _, err = run(["eval", str(tmp_path / "none.json"), str(tmp_path / "none.csv")], capsys)
    assert code == 4 and err.startswith("error:")


def test_simulate_replays_with_seed(tmp_path, capsys):
    a, b = tmp_path / "a.jsonl", tmp_path / "b.jsonl"
    assert main(["simulate", "table1.cfg", "--seed", "7", "--out", str(a)]) == 0
    assert main(["simulate", "table1.cfg", "--seed", "7", "--out", str(b)]) == 0
    assert a.read_bytes() == b.read_bytes()
    header = json.loads(a.read_text().splitlines()[0])
    assert header["schema"] == "iotdos.trace/1"


def test_attack_stream(capsys):
    code, out, _ = run(["attack", "chain.cfg", "--mode", "optimal"], capsys)
    lines = [json.loads(x) for x in out.splitlines()]
    assert code == 0 and sum(1 for r in lines[1:] if r.get("src") == "ATTACKER") == 2


def test_calibrate(capsys):
    code, out, _ = run(["calibrate", "--baseline", "1", "--strain", "3",
                        "--msgs-per-second", "100", "--capacity", "3500"], capsys)
    assert code == 0 and "drain_per_message=0.02" in out
    code, _, _ = run(["calibrate", "--baseline", "1", "--strain", "3",
                      "--msgs-per-second", "0"], capsys)
    assert code == 4


def test_ingest_binarise(tmp_path, capsys):
    log = tmp_path / "access.log"
    log.write_text('127.0.0.1 - - [10/Oct/2000:13:55:36 -0700] "GET /s HTTP/1.0" 200 23\n'
                   '127.0.0.1 - - [10/Oct/2000:13:55:37 -0700] "POST /s HTTP/1.0" 200 5\n'
                   "junk\n")
    enc = tmp_path / "enc.json"
    code, out, err = run(["ingest", str(log), "--binarise", "method", "--encoding", str(enc)],
                         capsys)
    assert code == 0 and "1 rejected" in err
    assert out.splitlines()[0] == "delta,size,method=GET,method=POST,label"
    assert json.loads(enc.read_text())["columns"]["method"] == ["GET", "POST"]


def test_gen_train_eval(tmp_path, capsys):
    data = tmp_path / "d.csv"
    model = tmp_path / "m.json"
    assert main(["gen-dataset", "table1_attack.cfg", "--size", "500", "--attack-fraction", "0.2",
                 "--seed", "3", "--out", str(data)]) == 0
    assert main(["train", str(data), "--out", str(model)]) == 0
    capsys.readouterr()
    code, out, _ = run(["eval", str(model), str(data)], capsys)
    assert code == 0
    assert json.loads(out.splitlines()[-1])["accuracy"] == 1.0


def test_pipeline_small(tmp_path, capsys):
    out_dir = tmp_path / "run"
    code, out, _ = run(["pipeline", "--train-size", "400", "--test-size", "600",
                        "--classifiers", "tree,mlp", "--mlp-epochs", "2",
                        "--out", str(out_dir)], capsys)
    assert code == 0 and "tree: f1=" in out
    man = json.loads((out_dir / "manifest.json").read_text())
    assert man["train"]["size"] == 400 and man["train"]["attack"] == 40
    assert man["test"]["size"] == 600 and man["test"]["attack"] == 120
    assert not set(man["train"]["attack_actions"]) & set(man["test"]["attack_actions"])
    assert set(man["files"]) == {"train.csv", "test.csv", "model_tree.json", "model_mlp.json",
                                 "metrics.json"}
