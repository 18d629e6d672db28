"""Run directories on disk.

Layout::

    <out_dir>/
      config.json
      manifest.json            index of everything below
      seed-0000/checkpoint.ckpt
      seed-0000/train_log.json
      reports/0001-gnn_sngp-test-ood1.json
      reports/0001-gnn_sngp-test-ood1.cdf.json

Report files are numbered and never overwritten; a rerun appends new files.
"""
from __future__ import annotations

import json
import logging
import os
import re
from pathlib import Path
from typing import Sequence

import numpy as np

from ..fingerprint import DistanceSplit, TrainIndex, split_by_distance
from ..graphdata import Dataset, load_dataset
from ..models import GnnModel, checkpoint_hash
from .ablation import EmbeddingMatrix
from .config import ExperimentConfig, dump_config, load_config
from .evaluation import evaluate, evaluate_ensemble, far_mask, ofn_cdf
from .training import train_model

log = logging.getLogger(__name__)

MANIFEST = "manifest.json"


class RunError(RuntimeError):
    pass


def _seed_dir(run_dir: Path, seed: int) -> Path:
    return run_dir / f"seed-{seed:04d}"


def _read_manifest(run_dir: Path) -> dict:
    with open(run_dir / MANIFEST, encoding="utf-8") as fh:
        return json.load(fh)


def _write_manifest(run_dir: Path, manifest: dict) -> None:
    tmp = run_dir / (MANIFEST + ".tmp")
    with open(tmp, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(json.dumps(manifest, sort_keys=True, indent=2) + "\n")
    os.replace(tmp, run_dir / MANIFEST)


def _write_new(path: Path, text: str) -> None:
    # "x" mode: refuse to clobber an existing file
    with open(path, "x", encoding="utf-8", newline="\n") as fh:
        fh.write(text)


def train_run(cfg: ExperimentConfig) -> Path:
    """Train one model per configured seed and persist checkpoints and logs."""
    cfg.check_files()
    run_dir = Path(cfg.out_dir)
    if (run_dir / MANIFEST).exists():
        raise RunError(f"{run_dir} already holds a run; choose a new out_dir")
    run_dir.mkdir(parents=True, exist_ok=True)
    train = load_dataset(cfg.data.train, "train")
    mcfg = cfg.build_model_config(train.d_node, train.d_edge)
    _write_new(run_dir / "config.json", dump_config(cfg) + "\n")
    manifest = {"config": "config.json", "variant": cfg.variant, "checkpoints": {}, "reports": []}
    for seed in cfg.seeds:
        log.info("training %s seed %d", cfg.variant, seed)
        model, tlog = train_model(mcfg, train.graphs, seed, cfg.build_optim_config())
        sd = _seed_dir(run_dir, seed)
        sd.mkdir(exist_ok=False)
        buf = model.to_checkpoint()
        with open(sd / "checkpoint.ckpt", "xb") as fh:
            fh.write(buf)
        _write_new(sd / "train_log.json", json.dumps(tlog.to_json(), sort_keys=True, indent=2) + "\n")
        manifest["checkpoints"][str(seed)] = {
            "path": str((sd / "checkpoint.ckpt").relative_to(run_dir)),
            "sha256": checkpoint_hash(buf),
        }
    _write_manifest(run_dir, manifest)
    return run_dir


def load_run(run_dir: str | os.PathLike) -> tuple[ExperimentConfig, list[GnnModel]]:
    run_dir = Path(run_dir)
    if not (run_dir / MANIFEST).exists():
        raise RunError(f"{run_dir} has no {MANIFEST}")
    manifest = _read_manifest(run_dir)
    cfg = load_config(run_dir / "config.json")
    models = []
    for seed in sorted(manifest["checkpoints"], key=int):
        with open(run_dir / manifest["checkpoints"][seed]["path"], "rb") as fh:
            models.append(GnnModel.from_checkpoint(fh.read()))
    return cfg, models


def _next_report_stem(run_dir: Path, model: str, testset: str) -> Path:
    rdir = run_dir / "reports"
    rdir.mkdir(exist_ok=True)
    nums = [int(m.group(1)) for p in rdir.iterdir() if (m := re.match(r"(\d{4})-", p.name))]
    safe = re.sub(r"[^A-Za-z0-9_.-]", "_", f"{model}-{testset}")
    return rdir / f"{(max(nums) + 1 if nums else 1):04d}-{safe}"


def _record(run_dir: Path, entry: dict) -> None:
    manifest = _read_manifest(run_dir)
    manifest["reports"].append(entry)
    _write_manifest(run_dir, manifest)


def resolve_split(
    cfg: ExperimentConfig, test: Dataset, split_path: str | os.PathLike | None, index: TrainIndex | None = None
) -> DistanceSplit:
    if split_path is not None:
        with open(split_path, encoding="utf-8") as fh:
            return DistanceSplit.from_json(json.load(fh), cfg.split.threshold, cfg.split.k)
    if index is None:
        index = TrainIndex(load_dataset(cfg.data.train, "train"), cfg.split.radius, cfg.split.width)
    return split_by_distance(test, index, cfg.split.threshold, cfg.split.k)


def _test_sets(cfg, test_path, testset) -> list[tuple[str, str]]:
    if test_path is not None:
        return [(testset or Path(test_path).stem, str(test_path))]
    if not cfg.data.tests:
        raise RunError("no test set given and none configured")
    return sorted(cfg.data.tests.items())


def evaluate_run(
    run_dir: str | os.PathLike,
    test_path: str | os.PathLike | None = None,
    split_path: str | os.PathLike | None = None,
    testset: str | None = None,
) -> list[Path]:
    """Evaluate every seed checkpoint; writes one report (+ OFN distance CDF) per test set."""
    run_dir = Path(run_dir)
    cfg, models = load_run(run_dir)
    written = []
    index = None
    for tag, path in _test_sets(cfg, test_path, testset):
        test = load_dataset(path)
        if split_path is None and index is None:
            index = TrainIndex(load_dataset(cfg.data.train, "train"), cfg.split.radius, cfg.split.width)
        split = resolve_split(cfg, test, split_path, index)
        far_mask(test, split)
        report = evaluate(models, test, split, testset=tag)
        stem = _next_report_stem(run_dir, report.model, tag)
        _write_new(stem.with_suffix(".json"), report.dumps() + "\n")
        cdf = {str(m.seed): ofn_cdf(m, test, split) for m in models}
        _write_new(stem.with_suffix(".cdf.json"), json.dumps({"model": report.model, "testset": tag, "ofn_distance_cdf": cdf}, sort_keys=True) + "\n")
        _record(run_dir, {"kind": "evaluate", "report": str(stem.with_suffix(".json").relative_to(run_dir)), "testset": tag, "test_path": str(path)})
        written.append(stem.with_suffix(".json"))
    return written


def ensemble_run(
    run_dir: str | os.PathLike,
    k: int | None = None,
    test_path: str | os.PathLike | None = None,
    split_path: str | os.PathLike | None = None,
    testset: str | None = None,
) -> list[Path]:
    run_dir = Path(run_dir)
    cfg, models = load_run(run_dir)
    k = k or cfg.ensemble_k
    if k < 2:
        raise RunError("an ensemble needs k >= 2 members")
    if len(models) < k:
        raise RunError(f"run has {len(models)} checkpoints, ensemble wants {k}")
    members = models[:k]
    written = []
    index = None
    for tag, path in _test_sets(cfg, test_path, testset):
        test = load_dataset(path)
        if split_path is None and index is None:
            index = TrainIndex(load_dataset(cfg.data.train, "train"), cfg.split.radius, cfg.split.width)
        split = resolve_split(cfg, test, split_path, index)
        report = evaluate_ensemble(members, test, split, testset=tag)
        stem = _next_report_stem(run_dir, report.model, tag)
        _write_new(stem.with_suffix(".json"), report.dumps() + "\n")
        _record(run_dir, {"kind": "ensemble", "k": k, "report": str(stem.with_suffix(".json").relative_to(run_dir)), "testset": tag})
        written.append(stem.with_suffix(".json"))
    return written


def export_embeddings(model: GnnModel, datasets: Sequence[Dataset], ckpt_hash: str | None = None) -> EmbeddingMatrix:
    """Frozen-forward readout vectors for every graph, keyed by id."""
    ids = [g.id for ds in datasets for g in ds]
    graphs = [g for ds in datasets for g in ds]
    vec = model.embed(graphs) if graphs else np.zeros((0, model.config.readout_dim))
    return EmbeddingMatrix(model.tag, ckpt_hash or checkpoint_hash(model.to_checkpoint()), ids, vec)


def export_run_embeddings(run_dir: str | os.PathLike, seed: int, data_paths: Sequence[str], out: str | os.PathLike) -> Path:
    run_dir = Path(run_dir)
    manifest = _read_manifest(run_dir)
    entry = manifest["checkpoints"].get(str(seed))
    if entry is None:
        raise RunError(f"no checkpoint for seed {seed}")
    with open(run_dir / entry["path"], "rb") as fh:
        buf = fh.read()
    model = GnnModel.from_checkpoint(buf)
    emb = export_embeddings(model, [load_dataset(p) for p in data_paths], checkpoint_hash(buf))
    emb.save(out)
    return Path(out)
