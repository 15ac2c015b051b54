import json
import subprocess
import sys

import pytest

from lmfmult.cli import main
from lmfmult.diagnostics import tiny_config


def run(capsys, *argv):
    code = main(list(argv))
    out = capsys.readouterr()
    return code, out.out, out.err


def test_param_count(capsys, tmp_path):
    cfg = tmp_path / "default.json"
    cfg.write_text("{}")
    code, out, _ = run(capsys, "param-count", "--arch", "lmf-mult", "--config", str(cfg))
    doc = json.loads(out)
    assert code == 0 and isinstance(doc["param_count"], int) and doc["stacks"]["total"] == 4


def test_gradcheck_primitives(capsys):
    code, out, _ = run(capsys, "gradcheck", "--arch", "primitives", "--seed", "7")
    doc = json.loads(out)
    assert code == 0 and doc["pass"] and doc["tolerance"] == 1e-4


def test_gradcheck_model(capsys):
    code, out, _ = run(capsys, "gradcheck", "--arch", "fusion-cm-attn", "--seed", "7", "--max-entries", "6")
    doc = json.loads(out)
    assert code == 0 and doc["pass"] and doc["max_rel_err"] < 1e-4


def test_unknown_flag(capsys):
    code, _, err = run(capsys, "param-count", "--arch", "lmf-mult", "--bogus")
    assert code == 2 and "--bogus" in err


def test_missing_data_is_error(capsys, tmp_path):
    code, out, err = run(capsys, "eval", "--model", str(tmp_path / "nope.bin"), "--data", str(tmp_path))
    assert code == 1 and out == "" and "error" in err


def test_gen_train_eval(capsys, tmp_path):
    data, model, cfg = tmp_path / "data", tmp_path / "model.bin", tmp_path / "cfg.json"
    conf = tiny_config(0).to_dict()
    conf.pop("input_dims")
    cfg.write_text(json.dumps(conf))
    code, out, _ = run(capsys, "gen-data", "--splits", "12", "4", "4", "--dims", "3", "2", "2",
                       "--len-min", "2", "--len-max", "6", "--out", str(data))
    assert code == 0 and json.loads(out)["manifest"]["dims"] == [3, 2, 2]
    code, out, _ = run(capsys, "train", "--arch", "lmf-mult", "--data", str(data), "--config", str(cfg),
                       "--epochs", "2", "--batch-size", "4", "--out", str(model))
    doc = json.loads(out)
    assert code == 0 and len(doc["log"]) == 2 and model.exists()
    assert set(doc["test"]["sentiment"]) >= {"acc7", "acc2", "f1", "mae", "corr"}
    code, out, _ = run(capsys, "eval", "--model", str(model), "--data", str(data), "--split", "valid")
    assert code == 0 and json.loads(out)["split"] == "valid"


def test_bench_on_small_data(capsys, tmp_path):
    data, cfg = tmp_path / "data", tmp_path / "cfg.json"
    conf = tiny_config(0).to_dict()
    conf.pop("input_dims")
    cfg.write_text(json.dumps(conf))
    run(capsys, "gen-data", "--splits", "8", "2", "2", "--dims", "3", "2", "2", "--len-min", "2", "--len-max", "4",
        "--out", str(data))
    code, out, _ = run(capsys, "bench", "--archs", "lmf-mult", "mult-lite", "--data", str(data), "--config", str(cfg),
                       "--batch-size", "4")
    doc = json.loads(out)
    assert code == 0 and set(doc["results"]) == {"lmf-mult", "mult-lite"}


@pytest.mark.parametrize("argv", [["--version"], ["param-count", "--help"]])
def test_module_entry(argv):
    proc = subprocess.run([sys.executable, "-m", "lmfmult", *argv], capture_output=True, text=True)
    assert proc.returncode == 0 and proc.stdout
