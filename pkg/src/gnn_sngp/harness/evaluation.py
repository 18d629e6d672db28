from __future__ import annotations

from typing import Protocol, Sequence

import numpy as np

from .. import metrics
from ..fingerprint import DistanceSplit
from ..gp_head import PredictiveOutput
from ..graphdata import Dataset, LabeledGraph

RENORM_EPS = 1e-12


class Predictor(Protocol):
    tag: str
    seed: int

    def predict(self, graphs: Sequence[LabeledGraph]) -> PredictiveOutput: ...


def far_mask(ds: Dataset, split: DistanceSplit | None) -> np.ndarray | None:
    if split is None:
        return None
    missing = set(ds.ids) - set(split.distances)
    if missing:
        raise ValueError(f"{len(missing)} test ids missing from the distance split, e.g. {sorted(missing)[:3]}")
    return split.is_far(ds.ids)


def evaluate(
    models: Sequence[Predictor],
    test: Dataset,
    split: DistanceSplit | None = None,
    testset: str | None = None,
    model_tag: str | None = None,
) -> metrics.EvalReport:
    """Every metric per model (one model per seed), aggregated over seeds."""
    if not models:
        raise ValueError("no models to evaluate")
    far = far_mask(test, split)
    labels = test.labels
    runs = [metrics.compute_all(m.predict(test.graphs).probs, labels, far) for m in models]
    return metrics.EvalReport.from_runs(
        model_tag or models[0].tag, testset or test.split_tag, [m.seed for m in models], runs
    )


def ensemble_probs(models: Sequence[Predictor], graphs: Sequence[LabeledGraph]) -> np.ndarray:
    """Average member probabilities (after each member's own calibration)."""
    if not models:
        raise ValueError("empty ensemble")
    tags = {m.tag for m in models}
    if len(tags) > 1:
        raise ValueError(f"ensemble members must share one variant, got {sorted(tags)}")
    p = np.mean([m.predict(graphs).probs for m in models], axis=0)
    return p / np.maximum(p.sum(axis=1, keepdims=True), RENORM_EPS)


def evaluate_ensemble(
    models: Sequence[Predictor],
    test: Dataset,
    split: DistanceSplit | None = None,
    testset: str | None = None,
) -> metrics.EvalReport:
    """Metrics of the averaged predictor; ``seeds`` lists the members."""
    far = far_mask(test, split)
    run = metrics.compute_all(ensemble_probs(models, test.graphs), test.labels, far)
    rep = metrics.EvalReport.from_runs(
        f"{models[0].tag}_ensemble_k{len(models)}", testset or test.split_tag, [models[0].seed], [run]
    )
    rep.seeds = [m.seed for m in models]
    return rep


def ofn_cdf(model: Predictor, test: Dataset, split: DistanceSplit) -> list[tuple[float, float]]:
    y_hat = model.predict(test.graphs).positive_prob
    dist = np.array([split.distances[i] for i in test.ids])
    return metrics.ofn_distance_cdf(y_hat, test.labels, dist)


def uncertainty_ratio(model: Predictor, baseline: Predictor, test: Dataset, only_baseline_ofns: bool = True):
    """UIR of ``model`` over ``baseline``, by default restricted to the baseline's OFNs."""
    pm = model.predict(test.graphs)
    pb = baseline.predict(test.graphs)
    keep = np.ones(len(test), dtype=bool)
    if only_baseline_ofns:
        keep = (pb.positive_prob < metrics.OFN_THRESHOLD) & (test.labels == 1)
    ids = [i for i, k in zip(test.ids, keep) if k]
    return metrics.uir(ids, pm.uncertainty[keep], ids, pb.uncertainty[keep])
