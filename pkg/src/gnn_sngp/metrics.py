"""Accuracy, calibration, overconfidence and distance-awareness metrics.

Probabilities are passed as ``probs`` arrays of shape [n, 2] (column 1 is the
positive/toxic class) with integer labels in {0, 1}.
"""
from __future__ import annotations

import json
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
from scipy.stats import rankdata

OFN_THRESHOLD = 0.1
OFP_THRESHOLD = 0.9
ECE_BINS = 15
NLL_CLAMP = 1e-12
UIR_EPS = 1e-12


def _probs(probs) -> np.ndarray:
    p = np.asarray(probs, dtype=np.float64)
    if p.ndim == 1:
        p = np.stack([1.0 - p, p], axis=1)
    return p


def auroc(scores, labels) -> float:
    """Mann-Whitney AUROC with midranks, so tied pairs earn half credit."""
    scores = np.asarray(scores, dtype=np.float64)
    labels = np.asarray(labels).astype(bool)
    n_pos = int(labels.sum())
    n_neg = labels.size - n_pos
    if n_pos == 0 or n_neg == 0:
        raise ValueError("AUROC needs both classes present")
    ranks = rankdata(scores)
    u = ranks[labels].sum() - n_pos * (n_pos + 1) / 2.0
    return float(u / (n_pos * n_neg))


def ece(probs, labels, n_bins: int = ECE_BINS) -> float:
    """Expected calibration error over equal-width confidence bins (lo, hi]."""
    if n_bins < 1:
        raise ValueError("n_bins must be >= 1")
    p = _probs(probs)
    labels = np.asarray(labels)
    conf = p.max(axis=1)
    correct = (p.argmax(axis=1) == labels).astype(np.float64)
    edges = np.linspace(0.0, 1.0, n_bins + 1)
    bins = np.searchsorted(edges[1:-1], conf, side="left")
    count = np.bincount(bins, minlength=n_bins).astype(np.float64)
    acc_sum = np.bincount(bins, weights=correct, minlength=n_bins)
    conf_sum = np.bincount(bins, weights=conf, minlength=n_bins)
    nz = count > 0
    gap = np.abs(acc_sum[nz] / count[nz] - conf_sum[nz] / count[nz])
    return float((count[nz] / conf.size * gap).sum())


def brier(probs, labels) -> float:
    p = _probs(probs)
    onehot = np.eye(p.shape[1])[np.asarray(labels)]
    return float(((p - onehot) ** 2).sum(axis=1).mean())


def nll(probs, labels) -> float:
    p = _probs(probs)
    labels = np.asarray(labels)
    picked = np.clip(p[np.arange(labels.size), labels], NLL_CLAMP, None)
    return float(-np.log(picked).mean())


def ofn_pct(y_hat, labels, threshold: float = OFN_THRESHOLD) -> float:
    """Share (in %) of confident negatives (ŷ < threshold) that are truly positive.

    Returns 0 when no prediction falls under the threshold; see ``ofn_empty``.
    """
    y_hat = np.asarray(y_hat, dtype=np.float64)
    mask = y_hat < threshold
    if not mask.any():
        return 0.0
    return float(100.0 * (np.asarray(labels)[mask] == 1).sum() / mask.sum())


def ofp_pct(y_hat, labels, threshold: float = OFP_THRESHOLD) -> float:
    y_hat = np.asarray(y_hat, dtype=np.float64)
    mask = y_hat > threshold
    if not mask.any():
        return 0.0
    return float(100.0 * (np.asarray(labels)[mask] == 0).sum() / mask.sum())


def ofn_empty(y_hat, threshold: float = OFN_THRESHOLD) -> bool:
    return not (np.asarray(y_hat) < threshold).any()


def ofp_empty(y_hat, threshold: float = OFP_THRESHOLD) -> bool:
    return not (np.asarray(y_hat) > threshold).any()


def uncertainty(probs) -> np.ndarray:
    return 1.0 - _probs(probs).max(axis=1)


def da_auc(probs, far) -> float:
    """AUROC of predictive uncertainty for telling far samples (1) from close ones (0)."""
    far = np.asarray(far).astype(bool)
    if far.all() or not far.any():
        raise ValueError("DA-AUC needs both close and far samples")
    return auroc(uncertainty(probs), far)


@dataclass
class UirResult:
    ids: list[str]
    ratios: np.ndarray
    excluded: list[str]

    @property
    def frac_improved(self) -> float:
        return float((self.ratios > 1.0).mean()) if self.ratios.size else 0.0


def uir(ids_model: Sequence[str], u_model, ids_baseline: Sequence[str], u_baseline) -> UirResult:
    """Per-sample ratio of model uncertainty to baseline uncertainty, keyed by id.

    Output follows ``ids_model`` order; baseline uncertainties at or below
    1e-12 are excluded and listed.
    """
    um = dict(zip(ids_model, np.asarray(u_model, dtype=np.float64)))
    ub = dict(zip(ids_baseline, np.asarray(u_baseline, dtype=np.float64)))
    if len(um) != len(ids_model) or set(um) != set(ub):
        raise ValueError("model and baseline ids do not match")
    keep, ratios, excluded = [], [], []
    for i in ids_model:
        if ub[i] <= UIR_EPS:
            excluded.append(i)
            continue
        keep.append(i)
        ratios.append(um[i] / ub[i])
    return UirResult(keep, np.array(ratios), excluded)


def ofn_distance_cdf(y_hat, labels, distances, threshold: float = OFN_THRESHOLD) -> list[tuple[float, float]]:
    """Empirical CDF of train distances over overconfident false negatives."""
    y_hat = np.asarray(y_hat, dtype=np.float64)
    labels = np.asarray(labels)
    d = np.sort(np.asarray(distances, dtype=np.float64)[(y_hat < threshold) & (labels == 1)])
    if not d.size:
        return []
    values, counts = np.unique(d, return_counts=True)
    cum = np.cumsum(counts) / d.size
    return [(float(v), float(c)) for v, c in zip(values, cum)]


METRIC_NAMES = ("auroc", "ece", "brier", "nll", "ofn_pct", "ofp_pct", "da_auc")


def compute_all(probs, labels, far=None, n_bins: int = ECE_BINS) -> tuple[dict[str, float], list[str]]:
    """Every metric for one prediction set; returns (values, flags)."""
    p = _probs(probs)
    labels = np.asarray(labels)
    y_hat = p[:, 1]
    out, flags = {}, []
    if 0 < labels.sum() < labels.size:
        out["auroc"] = auroc(y_hat, labels)
    else:
        flags.append("auroc_single_class")
    out["ece"] = ece(p, labels, n_bins)
    out["brier"] = brier(p, labels)
    out["nll"] = nll(p, labels)
    out["ofn_pct"] = ofn_pct(y_hat, labels)
    out["ofp_pct"] = ofp_pct(y_hat, labels)
    if ofn_empty(y_hat):
        flags.append("ofn_empty_denominator")
    if ofp_empty(y_hat):
        flags.append("ofp_empty_denominator")
    if far is not None:
        far = np.asarray(far, dtype=bool)
        if far.any() and not far.all():
            out["da_auc"] = da_auc(p, far)
        else:
            flags.append("da_auc_single_tag")
    return out, flags


@dataclass
class EvalReport:
    model: str
    testset: str
    seeds: list[int]
    per_seed: dict[str, list[float]]
    flags: list[str] = field(default_factory=list)

    def aggregate(self, name: str) -> tuple[float, float]:
        v = np.asarray(self.per_seed[name], dtype=np.float64)
        if (v == v[0]).all():
            # identical seeds: np.mean can round off v[0] and leave a ~1e-17 std
            return float(v[0]), 0.0
        return float(v.mean()), float(v.std())

    def mean(self, name: str) -> float:
        return self.aggregate(name)[0]

    def to_json(self) -> dict:
        metrics = {}
        for name, vals in self.per_seed.items():
            m, s = self.aggregate(name)
            metrics[name] = {"mean": m, "std": s, "per_seed": [float(x) for x in vals]}
        return {
            "model": self.model,
            "testset": self.testset,
            "seeds": list(self.seeds),
            "metrics": metrics,
            "flags": list(self.flags),
        }

    def dumps(self) -> str:
        return json.dumps(self.to_json(), sort_keys=True, indent=2)

    @classmethod
    def from_json(cls, obj: dict) -> "EvalReport":
        return cls(
            obj["model"],
            obj["testset"],
            list(obj["seeds"]),
            {k: list(v["per_seed"]) for k, v in obj["metrics"].items()},
            list(obj.get("flags", [])),
        )

    @classmethod
    def from_runs(cls, model: str, testset: str, seeds: Sequence[int], runs: Sequence[tuple[dict, list]]):
        """Build from one ``compute_all`` result per seed."""
        names = [n for n in METRIC_NAMES if all(n in r[0] for r in runs)]
        per_seed = {n: [r[0][n] for r in runs] for n in names}
        flags = []
        for seed, (_, fl) in zip(seeds, runs):
            flags.extend(f"{f}:seed={seed}" for f in fl)
        return cls(model, testset, list(seeds), per_seed, flags)


REPORT_SCHEMA = {
    "type": "object",
    "required": ["model", "testset", "seeds", "metrics", "flags"],
    "additionalProperties": False,
    "properties": {
        "model": {"type": "string"},
        "testset": {"type": "string"},
        "seeds": {"type": "array", "items": {"type": "integer"}, "minItems": 1},
        "metrics": {
            "type": "object",
            "additionalProperties": {
                "type": "object",
                "required": ["mean", "std", "per_seed"],
                "additionalProperties": False,
                "properties": {
                    "mean": {"type": "number"},
                    "std": {"type": "number", "minimum": 0},
                    "per_seed": {"type": "array", "items": {"type": "number"}},
                },
            },
        },
        "flags": {"type": "array", "items": {"type": "string"}},
    },
}
