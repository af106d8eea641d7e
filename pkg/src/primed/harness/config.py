"""Run configuration: every key documented here, unknown keys rejected.

The YAML layout mirrors the dataclasses below::

    dataset: path/to/data      # directory produced by `primed gen`
    seed: 0
    deterministic: true
    beta: 1.0                  # cached-memory strength
    soft_labels: null          # optional JSONL overriding template labels
    model:
      d: 64                    # shared latent width
      d0: 64                   # distilled token width
      num_tokens: 4            # distilled token count (2, 4, 8, ...)
      heads: 4
      num_sparse: 4            # sparse prompt tokens
      prompt_hw: 16            # dense prompt spatial size
      mpd_hidden: 128
      gs_at_inference: true    # keep orthogonalization on outside training
    loss:
      lambda_sasa: 5.0
      lambda_kl: 1.0
      lambda_orth: 1.0
      tau: 0.07                # contrastive temperature
      top_k: 10                # hard negatives per frame
      sasa_grid: 64            # alignment grid size
    optim:
      lr: 5.0e-5
      weight_decay: 0.01
      beta1: 0.9
      beta2: 0.999
      bias_lr_mult: 1.0           # lr multiplier for the prior-bias projections
      epochs: 5
      batch_size: 1
      warmup_frac: 0.05
      warmup_start_factor: 0.1
      grad_clip: 0.0           # 0 disables clipping
    ablation:
      use_prior: true
      use_distiller: true
      use_sparse: true
      use_dense: true
      use_sasa: true
      use_orth: true
      use_cached_memory: true
"""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass, field
from pathlib import Path

import yaml

from ..model import AblationToggles
from ..objectives import LossWeights


@dataclass
class ModelSection:
    d: int = 64
    d0: int = 64
    num_tokens: int = 4
    heads: int = 4
    num_sparse: int = 4
    prompt_hw: int = 16
    mpd_hidden: int = 128
    gs_at_inference: bool = True


@dataclass
class LossSection:
    lambda_sasa: float = 5.0
    lambda_kl: float = 1.0
    lambda_orth: float = 1.0
    tau: float = 0.07
    top_k: int = 10
    sasa_grid: int = 64

    def weights(self) -> LossWeights:
        return LossWeights(self.lambda_sasa, self.lambda_kl, self.lambda_orth)


@dataclass
class OptimSection:
    lr: float = 5.0e-5
    weight_decay: float = 0.01
    beta1: float = 0.9
    beta2: float = 0.999
    bias_lr_mult: float = 1.0
    epochs: int = 5
    batch_size: int = 1
    warmup_frac: float = 0.05
    warmup_start_factor: float = 0.1
    grad_clip: float = 0.0


@dataclass
class RunConfig:
    dataset: str = ""
    seed: int = 0
    deterministic: bool = True
    beta: float = 1.0
    soft_labels: str | None = None
    model: ModelSection = field(default_factory=ModelSection)
    loss: LossSection = field(default_factory=LossSection)
    optim: OptimSection = field(default_factory=OptimSection)
    ablation: AblationToggles = field(default_factory=AblationToggles)

    def validate(self) -> None:
        n = self.model.num_tokens
        if n < 2 or (n & (n - 1)) != 0:
            raise ValueError(f"num_tokens must be a power of two >= 2, got {n}")
        if self.optim.batch_size != 1:
            raise ValueError("only batch_size 1 is supported")
        if self.optim.epochs < 1:
            raise ValueError("epochs must be >= 1")
        self.loss.weights().validate()


def _from_mapping(cls, data: dict, path: str):
    fields = {f.name: f for f in dataclasses.fields(cls)}
    unknown = set(data) - set(fields)
    if unknown:
        raise ValueError(f"unknown config key(s) {sorted(unknown)} under {path!r}")
    kwargs = {}
    for name, value in data.items():
        ftype = fields[name].type
        if dataclasses.is_dataclass(_resolve(ftype)):
            if not isinstance(value, dict):
                raise ValueError(f"config key {path}.{name} must be a mapping")
            kwargs[name] = _from_mapping(_resolve(ftype), value, f"{path}.{name}")
        else:
            kwargs[name] = value
    return cls(**kwargs)


def _resolve(tp):
    if isinstance(tp, str):
        return {
            "ModelSection": ModelSection,
            "LossSection": LossSection,
            "OptimSection": OptimSection,
            "AblationToggles": AblationToggles,
        }.get(tp, tp)
    return tp


def config_from_dict(data: dict) -> RunConfig:
    cfg = _from_mapping(RunConfig, data or {}, "config")
    cfg.validate()
    return cfg


def load_config(path: str | Path) -> RunConfig:
    with open(path) as fh:
        data = yaml.safe_load(fh)
    if data is None:
        data = {}
    if not isinstance(data, dict):
        raise ValueError(f"config file {path} must hold a mapping")
    return config_from_dict(data)


def config_to_dict(cfg: RunConfig) -> dict:
    return dataclasses.asdict(cfg)


def apply_overrides(cfg: RunConfig, overrides: dict) -> RunConfig:
    """Apply dotted-key overrides (e.g. ``ablation.use_prior: false``)."""
    data = config_to_dict(cfg)
    for key, value in overrides.items():
        parts = key.split(".")
        node = data
        for part in parts[:-1]:
            if part not in node or not isinstance(node[part], dict):
                raise ValueError(f"unknown override path {key!r}")
            node = node[part]
        if parts[-1] not in node:
            raise ValueError(f"unknown override key {key!r}")
        node[parts[-1]] = value
    return config_from_dict(data)
