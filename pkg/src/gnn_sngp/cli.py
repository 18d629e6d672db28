"""Command-line entry point: ``gnn-sngp <command> ...``."""
from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

from .fingerprint import DEFAULT_K, DEFAULT_RADIUS, DEFAULT_THRESHOLD, DEFAULT_WIDTH, TrainIndex, split_by_distance
from .graphdata import SynthConfig, load_dataset, save_dataset, synth_generate

log = logging.getLogger("gnn_sngp")


def _write_json(obj, out: str | None) -> None:
    text = json.dumps(obj, sort_keys=True, indent=2) + "\n"
    if out is None or out == "-":
        sys.stdout.write(text)
    else:
        with open(out, "w", encoding="utf-8", newline="\n") as fh:
            fh.write(text)


def cmd_synth_gen(a) -> int:
    ds = synth_generate(SynthConfig(a.n, a.shift, a.seed, id_prefix=a.id_prefix))
    save_dataset(ds, a.out)
    log.info("wrote %d graphs (%.1f%% positive) to %s", len(ds), 100 * ds.labels.mean(), a.out)
    return 0


def cmd_split_distance(a) -> int:
    test = load_dataset(a.test)
    index = TrainIndex(load_dataset(a.train), a.radius, a.width)
    split = split_by_distance(test, index, a.threshold, a.k)
    _write_json(split.to_json(order=test.ids), a.out)
    log.info("%d close, %d far", len(split.close_ids), len(split.far_ids))
    return 0


def cmd_train(a) -> int:
    from .harness import load_config, train_run

    run_dir = train_run(load_config(a.config))
    print(run_dir)
    return 0


def cmd_evaluate(a) -> int:
    from .harness import evaluate_run

    for p in evaluate_run(a.run, a.test, a.split, a.testset):
        print(p)
    return 0


def cmd_ensemble(a) -> int:
    from .harness import ensemble_run

    for p in ensemble_run(a.run, a.k, a.test, a.split, a.testset):
        print(p)
    return 0


def cmd_export_embeddings(a) -> int:
    from .harness import export_run_embeddings

    print(export_run_embeddings(a.run, a.seed, a.data, a.out))
    return 0


def cmd_export_fingerprints(a) -> int:
    from .harness import fingerprint_embeddings

    fingerprint_embeddings([load_dataset(p) for p in a.data], a.radius, a.width).save(a.out)
    print(a.out)
    return 0


def _parse_tests(items: list[str]) -> list[tuple[str, str, str | None]]:
    """``tag=data.jsonl[:split.json]`` -> (tag, data path, split path)."""
    out = []
    for item in items:
        if "=" not in item:
            raise SystemExit(f"--test expects tag=path[:split], got {item!r}")
        tag, rest = item.split("=", 1)
        data, _, split = rest.partition(":")
        out.append((tag, data, split or None))
    return out


def cmd_ablate(a) -> int:
    from .fingerprint import DistanceSplit
    from .harness import EmbeddingMatrix, ablate, ablation_table

    sources = [EmbeddingMatrix.load(p) for p in a.embeddings]
    if a.fp:
        sources.append(EmbeddingMatrix.load(a.fp))
    train = load_dataset(a.train, "train")
    index = None
    tests = {}
    for tag, data, split_path in _parse_tests(a.test):
        ds = load_dataset(data)
        if split_path:
            with open(split_path, encoding="utf-8") as fh:
                split = DistanceSplit.from_json(json.load(fh))
        else:
            index = index or TrainIndex(train)
            split = split_by_distance(ds, index)
        tests[tag] = (ds, split)
    heads = [h.strip() for h in a.heads.split(",") if h.strip()]
    rows = ablate(sources, train, tests, heads, a.seeds)
    _write_json(ablation_table(rows), a.out)
    return 0


def cmd_uir(a) -> int:
    from .harness.evaluation import uncertainty_ratio
    from .models import GnnModel

    def load(p):
        with open(p, "rb") as fh:
            return GnnModel.from_checkpoint(fh.read())

    res = uncertainty_ratio(load(a.model), load(a.baseline), load_dataset(a.test), not a.all_samples)
    _write_json(
        {
            "ids": res.ids,
            "ratios": [float(r) for r in res.ratios],
            "excluded": res.excluded,
            "frac_improved": res.frac_improved,
        },
        a.out,
    )
    return 0


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="gnn-sngp", description="Distance-aware GNN classifiers and evaluation tools.")
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    s = sub.add_parser("synth-gen", help="generate a synthetic benchmark split (JSONL)")
    s.add_argument("--n", type=int, required=True)
    s.add_argument("--shift", choices=("iid", "ood"), required=True)
    s.add_argument("--seed", type=int, required=True)
    s.add_argument("--out", required=True)
    s.add_argument("--id-prefix", default=None)
    s.set_defaults(fn=cmd_synth_gen)

    s = sub.add_parser("split-distance", help="close/far split by fingerprint distance to train")
    s.add_argument("--test", required=True)
    s.add_argument("--train", required=True)
    s.add_argument("--threshold", type=float, default=DEFAULT_THRESHOLD)
    s.add_argument("--k", type=int, default=DEFAULT_K)
    s.add_argument("--radius", type=int, default=DEFAULT_RADIUS)
    s.add_argument("--width", type=int, default=DEFAULT_WIDTH)
    s.add_argument("--out", default="-")
    s.set_defaults(fn=cmd_split_distance)

    s = sub.add_parser("train", help="train one model per seed from a config file")
    s.add_argument("--config", required=True)
    s.set_defaults(fn=cmd_train)

    for name, fn in (("evaluate", cmd_evaluate), ("ensemble", cmd_ensemble)):
        s = sub.add_parser(name, help=f"{name} a trained run; reports are appended to <run>/reports")
        s.add_argument("--run", required=True)
        s.add_argument("--test", default=None, help="test JSONL; defaults to the config's test sets")
        s.add_argument("--split", default=None, help="split JSON; computed from the train set if omitted")
        s.add_argument("--testset", default=None, help="report tag (defaults to the test file stem)")
        if name == "ensemble":
            s.add_argument("--k", type=int, default=None)
        s.set_defaults(fn=fn)

    s = sub.add_parser("export-embeddings", help="readout vectors of one checkpoint")
    s.add_argument("--run", required=True)
    s.add_argument("--seed", type=int, required=True)
    s.add_argument("--data", nargs="+", required=True)
    s.add_argument("--out", required=True)
    s.set_defaults(fn=cmd_export_embeddings)

    s = sub.add_parser("export-fingerprints", help="fingerprint bits as an embedding file")
    s.add_argument("--data", nargs="+", required=True)
    s.add_argument("--radius", type=int, default=DEFAULT_RADIUS)
    s.add_argument("--width", type=int, default=DEFAULT_WIDTH)
    s.add_argument("--out", required=True)
    s.set_defaults(fn=cmd_export_fingerprints)

    s = sub.add_parser("ablate", help="frozen-feature heads over exported embeddings")
    s.add_argument("--embeddings", nargs="+", required=True)
    s.add_argument("--heads", default="dense,gp,gpc")
    s.add_argument("--fp", default=None, help="fingerprint embedding file from export-fingerprints")
    s.add_argument("--train", required=True)
    s.add_argument("--test", nargs="+", required=True, metavar="TAG=DATA[:SPLIT]")
    s.add_argument("--seeds", type=int, nargs="+", default=[0, 1, 2])
    s.add_argument("--out", default="-")
    s.set_defaults(fn=cmd_ablate)

    s = sub.add_parser("uir", help="per-sample uncertainty increase ratio of a model over a baseline")
    s.add_argument("--model", required=True, help="checkpoint file")
    s.add_argument("--baseline", required=True, help="checkpoint file")
    s.add_argument("--test", required=True)
    s.add_argument("--all-samples", action="store_true", help="do not restrict to the baseline's OFNs")
    s.add_argument("--out", default="-")
    s.set_defaults(fn=cmd_uir)
    return p


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    try:
        return args.fn(args)
    except (OSError, ValueError, KeyError, RuntimeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
