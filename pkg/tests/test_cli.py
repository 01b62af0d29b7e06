import csv
import json
from pathlib import Path

import pytest

from classp.cli import main
from classp.config import config_hash, load_config, parse_value
from classp.errors import ConfigError

REPO = Path(__file__).resolve().parents[1]
CONFIGS = REPO / "configs"

BLOBS = """
name = "{name}"
seed = 0
repeats = {repeats}
model.layers = [2, 8, 4]
optimizer.kind = "{kind}"
optimizer.alpha = 0.1
dataset.blobs.kind = "blobs"
dataset.blobs.centers = [[0.0, 3.0], [3.0, 0.0], [0.0, -3.0], [-3.0, 0.0]]
dataset.blobs.per_class = 20
dataset.blobs.std = 0.6
phase.1.dataset = "blobs"
phase.1.classes = [0, 1]
phase.1.epochs = 2
phase.1.batch_size = 8
phase.2.dataset = "blobs"
phase.2.classes = [2, 3]
phase.2.epochs = 2
phase.2.batch_size = 8
"""


def blob_config(tmp_path, name="arm", kind="classp", repeats=2, extra=""):
    p = tmp_path / f"{name}.toml"
    p.write_text(BLOBS.format(name=name, kind=kind, repeats=repeats) + extra)
    return p


def read_csv(path):
    with open(path, newline="") as f:
        return list(csv.reader(f))


def test_run_writes_csv_and_json(tmp_path):
    cfg = blob_config(tmp_path)
    assert main(["run", str(cfg), "--out", str(tmp_path / "out")]) == 0
    rows = read_csv(tmp_path / "out" / "results.csv")
    assert rows[0] == ["run_id", "arm", "seed", "phase", "eval_set", "metric", "value"]
    doc = json.loads((tmp_path / "out" / "results.json").read_text())
    arm = doc["arms"][0]
    assert len(arm["records"]) == 2  # one record per repeat, plus the aggregate
    assert "aggregate" in arm and "wall_time_s" in doc["metadata"]
    assert config_hash(arm["config"]) == arm["config_hash"]


def test_run_accepts_config_flag(tmp_path):
    cfg = blob_config(tmp_path, repeats=1)
    assert main(["run", "--config", str(cfg), "--out", str(tmp_path / "o")]) == 0


def test_negative_alpha_exit_2(tmp_path, capsys):
    cfg = blob_config(tmp_path)
    assert main(["run", str(cfg), "--set", "optimizer.alpha=-0.1", "--out", str(tmp_path)]) == 2
    assert "optimizer.alpha" in capsys.readouterr().err


def test_unknown_key_rejected(tmp_path, capsys):
    cfg = blob_config(tmp_path, extra='optimizer.momentum = 0.9\n')
    assert main(["run", str(cfg)]) == 2
    assert "optimizer.momentum" in capsys.readouterr().err
    cfg = blob_config(tmp_path, extra='phase.1.colour = "red"\n')
    assert main(["run", str(cfg)]) == 2


def test_key_not_valid_for_optimizer(tmp_path):
    cfg = blob_config(tmp_path, kind="sgd", extra="optimizer.p = 2\n")
    assert main(["run", str(cfg)]) == 2


def test_missing_config_file_exit_2(tmp_path):
    assert main(["run", str(tmp_path / "nope.toml")]) == 2


def test_missing_idx_exit_3(tmp_path, monkeypatch, capsys):
    monkeypatch.setenv("CLASSP_DATA_DIR", str(tmp_path))
    assert main(["run", str(CONFIGS / "sgd.toml"), "--repeats", "1", "--out", str(tmp_path)]) == 3
    assert "CLASSP_DATA_DIR" in capsys.readouterr().err


@pytest.mark.filterwarnings("ignore::RuntimeWarning")
def test_numeric_failure_exit_4(tmp_path):
    cfg = blob_config(tmp_path, kind="sgd", repeats=1)
    assert main(["run", str(cfg), "--set", "optimizer.alpha=1e308", "--out", str(tmp_path)]) == 4


def test_overrides_and_shortcuts():
    flat = load_config(CONFIGS / "classp.toml", ["phase.1.threshold=0.3", "seed=5", "optimizer.apply_decay=true"])
    assert flat["phase.1.threshold"] == 0.3 and flat["seed"] == 5 and flat["optimizer.apply_decay"] is True
    assert parse_value("[1, 2]") == [1, 2] and parse_value("mnist") == "mnist"
    with pytest.raises(ConfigError):
        load_config(CONFIGS / "classp.toml", ["seed"])


def test_run_is_deterministic(tmp_path):
    cfg = blob_config(tmp_path)
    main(["run", str(cfg), "--out", str(tmp_path / "a")])
    main(["run", str(cfg), "--out", str(tmp_path / "b")])
    a = (tmp_path / "a" / "results.csv").read_bytes()
    assert a == (tmp_path / "b" / "results.csv").read_bytes()
    assert len(a) > 100


def test_compare_identical_arms_identical_rows(tmp_path, capsys):
    a = blob_config(tmp_path, name="same", repeats=3)
    assert main(["compare", str(a), str(a), "--out", str(tmp_path / "cmp")]) == 0
    doc = json.loads((tmp_path / "cmp" / "results.json").read_text())
    r1, r2 = doc["arms"]
    assert r1["records"][0]["phases"] == r2["records"][0]["phases"]
    assert r1["aggregate"] == r2["aggregate"]
    assert doc["comparison"]["retention_wins"][r1["arm"]][r2["arm"]] == 0
    lines = capsys.readouterr().out.splitlines()
    assert lines[2].split()[1:] == lines[3].split()[1:]


def test_compare_rejects_different_tasks(tmp_path, capsys):
    a = blob_config(tmp_path, name="a")
    b = blob_config(tmp_path, name="b", extra='phase.3.dataset = "blobs"\n')
    assert main(["compare", str(a), str(b), "--out", str(tmp_path)]) == 2
    assert "phase.3.dataset" in capsys.readouterr().err


def test_compare_allows_different_optimizer_overrides(tmp_path):
    a = blob_config(tmp_path, name="a", extra="phase.1.threshold = 0.5\n")
    b = blob_config(tmp_path, name="b", kind="sgd")
    assert main(["compare", str(a), str(b), "--out", str(tmp_path / "c")]) == 0


def test_ablation_ladder_has_three_rows(tmp_path, data_env, capsys):
    arms = [CONFIGS / f for f in ("classp.toml", "classp_no_threshold.toml", "classp_adagrad.toml")]
    code = main(["compare", *map(str, arms), "--repeats", "1", "--out", str(tmp_path)])
    assert code == 0
    out = capsys.readouterr().out.splitlines()
    rows = [ln.split()[0] for ln in out[2:5]]
    assert rows == ["classp", "classp-no-threshold", "classp-adagrad"]


def test_emit_plotdata_cardinality_and_roundtrip(tmp_path):
    a = blob_config(tmp_path, name="a", repeats=10)
    b = blob_config(tmp_path, name="b", kind="sgd", repeats=10)
    assert main(["compare", str(a), str(b), "--out", str(tmp_path / "c")]) == 0
    assert main(["emit-plotdata", str(tmp_path / "c" / "results.json")]) == 0
    rows = read_csv(tmp_path / "c" / "plotdata.csv")
    assert rows[0] == ["arm", "seed", "phase", "eval_set", "metric", "value"]
    assert len(rows) - 1 == 2 * 10 * 2 * 2 * 3

    doc = json.loads((tmp_path / "c" / "results.json").read_text())
    back = {(r[0], int(r[1]), int(r[2]), r[3], r[4]): float(r[5]) for r in rows[1:]}
    for arm in doc["arms"]:
        for rec in arm["records"]:
            for ph in rec["phases"]:
                for name, acc in ph["accuracy"].items():
                    key = (arm["arm"], rec["seed"], ph["phase"], name)
                    assert back[key + ("accuracy",)] == acc
                    assert back[key + ("updated_fraction",)] == ph["updated_fraction"]
                    assert back[key + ("aux_memory",)] == ph["aux_memory"]


def test_emit_plotdata_empty_and_malformed(tmp_path):
    empty = tmp_path / "empty.json"
    empty.write_text(json.dumps({"metadata": {}, "arms": []}))
    assert main(["emit-plotdata", str(empty), "--out", str(tmp_path / "p.csv")]) == 0
    assert read_csv(tmp_path / "p.csv") == [["arm", "seed", "phase", "eval_set", "metric", "value"]]
    bad = tmp_path / "bad.json"
    bad.write_text("{not json")
    assert main(["emit-plotdata", str(bad)]) == 2
    bad.write_text(json.dumps({"arms": [{"arm": "x"}]}))
    assert main(["emit-plotdata", str(bad)]) == 2


def test_heldout_eval_needs_test_files(tmp_path, data_env):
    code = main(["run", str(CONFIGS / "sgd.toml"), "--set", "heldout_eval=true", "--repeats", "1", "--out", str(tmp_path)])
    assert code == 2


def test_heldout_eval_on_blobs(tmp_path):
    cfg = blob_config(tmp_path, repeats=1, extra="heldout_eval = true\n")
    assert main(["run", str(cfg), "--out", str(tmp_path / "h")]) == 0


def test_explicit_eval_sets_and_permuted_tasks(tmp_path):
    extra = (
        'eval.first.dataset = "blobs"\neval.first.classes = [0, 1]\n'
        'eval.all.dataset = "blobs"\n'
        "phase.2.permute_seed = 4\n"
    )
    cfg = blob_config(tmp_path, repeats=1, extra=extra)
    assert main(["run", str(cfg), "--out", str(tmp_path / "e")]) == 0
    doc = json.loads((tmp_path / "e" / "results.json").read_text())
    assert list(doc["arms"][0]["records"][0]["phases"][0]["accuracy"]) == ["first", "all"]


def test_plotdata_cardinality(tmp_path, capsys):
    a = blob_config(tmp_path, name="a", repeats=10)
    b = blob_config(tmp_path, name="b", kind="sgd", repeats=10)
    assert main(["compare", str(a), str(b), "--out", str(tmp_path / "c")]) == 0
    assert main(["emit-plotdata", str(tmp_path / "c" / "results.json")]) == 0
    rows = read_csv(tmp_path / "c" / "plotdata.csv")
    assert len(rows) - 1 == 2 * 10 * 2 * 2 * 3
