import json
import subprocess
import sys

import pytest

from gnn_sngp.cli import main
from gnn_sngp.graphdata import load_dataset


@pytest.fixture(scope="module")
def workspace(tmp_path_factory):
    d = tmp_path_factory.mktemp("cli")
    assert main(["synth-gen", "--n", "60", "--shift", "iid", "--seed", "1", "--out", str(d / "train.jsonl")]) == 0
    assert main(["synth-gen", "--n", "20", "--shift", "ood", "--seed", "2", "--out", str(d / "ood.jsonl")]) == 0
    cfg = {
        "variant": "gnn_sngp",
        "model": {"hidden_dim": 8, "readout_dim": 8, "rff_features": 64},
        "optim": {"n_epochs": 2},
        "data": {"train": "train.jsonl", "tests": {"ood": "ood.jsonl"}},
        "seeds": [0, 1],
        "out_dir": "run",
    }
    (d / "cfg.json").write_text(json.dumps(cfg))
    assert main(["train", "--config", str(d / "cfg.json")]) == 0
    return d


def test_synth_gen_deterministic(workspace, tmp_path):
    main(["synth-gen", "--n", "60", "--shift", "iid", "--seed", "1", "--out", str(tmp_path / "again.jsonl")])
    assert (tmp_path / "again.jsonl").read_bytes() == (workspace / "train.jsonl").read_bytes()
    assert len(load_dataset(workspace / "train.jsonl")) == 60


def test_split_distance(workspace):
    out = workspace / "split.json"
    assert main(["split-distance", "--test", str(workspace / "ood.jsonl"), "--train", str(workspace / "train.jsonl"), "--out", str(out)]) == 0
    obj = json.loads(out.read_text())
    assert len(obj["close"]) + len(obj["far"]) == 20


def test_evaluate_and_ensemble(workspace, capsys):
    run = str(workspace / "run")
    assert main(["evaluate", "--run", run]) == 0
    assert main(["ensemble", "--run", run, "--k", "2"]) == 0
    printed = capsys.readouterr().out.split()
    assert printed[0].endswith("0001-gnn_sngp-ood.json")
    assert printed[1].endswith("0002-gnn_sngp_ensemble_k2-ood.json")
    assert json.loads(open(printed[1]).read())["seeds"] == [0, 1]


def test_ensemble_needs_two(workspace, capsys):
    assert main(["ensemble", "--run", str(workspace / "run"), "--k", "1"]) == 2
    assert "k >= 2" in capsys.readouterr().err


def test_exports_and_ablate(workspace):
    d = workspace
    data = [str(d / "train.jsonl"), str(d / "ood.jsonl")]
    assert main(["export-embeddings", "--run", str(d / "run"), "--seed", "0", "--data", *data, "--out", str(d / "emb.json")]) == 0
    assert main(["export-fingerprints", "--data", *data, "--out", str(d / "fp.json")]) == 0
    out = d / "ablation.json"
    rc = main(
        [
            "ablate", "--embeddings", str(d / "emb.json"), "--fp", str(d / "fp.json"), "--heads", "dense,gpc",
            "--train", str(d / "train.jsonl"), "--test", f"ood={d / 'ood.jsonl'}", "--seeds", "0", "--out", str(out),
        ]
    )
    assert rc == 0
    rows = json.loads(out.read_text())["rows"]
    assert {(r["features"], r["head"]) for r in rows} == {(f, h) for f in ("gnn_sngp", "fp") for h in ("dense", "gpc")}


def test_uir(workspace):
    ck = workspace / "run" / "seed-0000" / "checkpoint.ckpt"
    out = workspace / "uir.json"
    assert main(["uir", "--model", str(ck), "--baseline", str(ck), "--test", str(workspace / "ood.jsonl"), "--all-samples", "--out", str(out)]) == 0
    obj = json.loads(out.read_text())
    assert len(obj["ids"]) + len(obj["excluded"]) == 20
    assert all(r == 1.0 for r in obj["ratios"])


def test_missing_file_exit_code(tmp_path, capsys):
    assert main(["train", "--config", str(tmp_path / "nope.json")]) == 2
    assert "error" in capsys.readouterr().err


def test_module_entry_point():
    res = subprocess.run([sys.executable, "-m", "gnn_sngp.cli", "--help"], capture_output=True, text=True)
    assert res.returncode == 0
    assert "synth-gen" in res.stdout
