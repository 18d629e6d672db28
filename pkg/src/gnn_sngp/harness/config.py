"""Versioned experiment configuration (JSON); unknown keys are rejected."""
from __future__ import annotations

import json
import os
from pathlib import Path
from typing import Literal

from pydantic import BaseModel, ConfigDict, Field, field_validator

from ..models import ModelConfig
from .training import OptimConfig

SCHEMA_VERSION = 1


class _Strict(BaseModel):
    model_config = ConfigDict(extra="forbid", frozen=True, protected_namespaces=())


class ModelSection(_Strict):
    hidden_dim: int = Field(64, ge=1)
    n_steps: int = Field(3, ge=1)
    readout_dim: int = Field(64, ge=1)
    sn_bound: float = Field(1.0, gt=0)
    sn_power_iters: int = Field(1, ge=1)
    rff_features: int = Field(1024, ge=1)
    lengthscale: float = Field(2.0, gt=0)
    ridge: float = Field(1.0, gt=0)


class OptimSection(_Strict):
    lr: float = Field(1e-3, gt=0)
    beta1: float = Field(0.9, ge=0, lt=1)
    beta2: float = Field(0.999, ge=0, lt=1)
    eps: float = Field(1e-8, gt=0)
    n_epochs: int = Field(100, ge=1)
    batch_size: int = Field(32, ge=1)


class DataSection(_Strict):
    train: str
    tests: dict[str, str] = Field(default_factory=dict)


class SplitSection(_Strict):
    threshold: float = Field(0.7, ge=0, le=1)
    k: int = Field(8, ge=1)
    radius: int = Field(2, ge=0)
    width: int = 2048

    @field_validator("width")
    @classmethod
    def _pow2(cls, v):
        if v < 1 or v & (v - 1):
            raise ValueError("width must be a power of two")
        return v


class ExperimentConfig(_Strict):
    schema_version: Literal[1] = SCHEMA_VERSION
    variant: Literal["gnn_baseline", "gnn_gp", "gnn_sngp"]
    model: ModelSection = ModelSection()
    optim: OptimSection = OptimSection()
    data: DataSection
    split: SplitSection = SplitSection()
    seeds: list[int] = Field(default_factory=lambda: [0], min_length=1)
    dtype: Literal["float64", "float32"] = "float64"
    out_dir: str
    ensemble_k: int = Field(5, ge=1)

    @field_validator("seeds")
    @classmethod
    def _distinct(cls, v):
        if len(set(v)) != len(v) or any(s < 0 for s in v):
            raise ValueError("seeds must be distinct non-negative integers")
        return v

    def build_model_config(self, d_node: int, d_edge: int) -> ModelConfig:
        return ModelConfig(variant=self.variant, d_node=d_node, d_edge=d_edge, dtype=self.dtype, **self.model.model_dump())

    def build_optim_config(self) -> OptimConfig:
        return OptimConfig(**self.optim.model_dump())

    def resolved(self, base: str | os.PathLike) -> "ExperimentConfig":
        """Copy with data paths and out_dir made absolute relative to ``base``."""
        base = Path(base)
        fix = lambda p: str(p if Path(p).is_absolute() else (base / p).resolve())  # noqa: E731
        data = DataSection(train=fix(self.data.train), tests={k: fix(v) for k, v in self.data.tests.items()})
        return self.model_copy(update={"data": data, "out_dir": fix(self.out_dir)})

    def check_files(self) -> None:
        for p in [self.data.train, *self.data.tests.values()]:
            if not Path(p).is_file():
                raise FileNotFoundError(f"dataset not found: {p}")


def load_config(path: str | os.PathLike) -> ExperimentConfig:
    with open(path, encoding="utf-8") as fh:
        raw = json.load(fh)
    return ExperimentConfig.model_validate(raw).resolved(Path(path).parent)


def dump_config(cfg: ExperimentConfig) -> str:
    return json.dumps(cfg.model_dump(mode="json"), sort_keys=True, indent=2)
