"""Training, evaluation, ensembles, ablations and run-directory persistence."""
from .ablation import HEADS, AblationRow, EmbeddingMatrix, ablate, ablation_table, fingerprint_embeddings
from .config import ExperimentConfig, dump_config, load_config
from .evaluation import ensemble_probs, evaluate, evaluate_ensemble, far_mask, ofn_cdf, uncertainty_ratio
from .runs import RunError, ensemble_run, evaluate_run, export_embeddings, export_run_embeddings, load_run, train_run
from .training import OptimConfig, TrainingError, TrainLog, train_model

__all__ = [
    "HEADS",
    "AblationRow",
    "EmbeddingMatrix",
    "ExperimentConfig",
    "OptimConfig",
    "RunError",
    "TrainLog",
    "TrainingError",
    "ablate",
    "ablation_table",
    "dump_config",
    "ensemble_probs",
    "ensemble_run",
    "evaluate",
    "evaluate_ensemble",
    "evaluate_run",
    "export_embeddings",
    "export_run_embeddings",
    "far_mask",
    "fingerprint_embeddings",
    "load_config",
    "load_run",
    "ofn_cdf",
    "train_model",
    "train_run",
    "uncertainty_ratio",
]
