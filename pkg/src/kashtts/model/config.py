"""Hyperparameter records for the acoustic model and its optimizer."""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field, fields


@dataclass(frozen=True)
class LossWeights:
    lambda_dur: float = 0.1
    lambda_pitch: float = 0.1
    lambda_energy: float = 0.1

    def __post_init__(self):
        for f in fields(self):
            if getattr(self, f.name) < 0:
                raise ValueError(f"{f.name} must be >= 0")


@dataclass(frozen=True)
class ModelConfig:
    vocab_size: int = 272
    embed_dim: int = 128
    encoder_layers: int = 2
    encoder_hidden: int = 128
    attention_heads: int = 2
    predictor_hidden: int = 64
    decoder_hidden: int = 256
    decoder_layers: int = 6
    kernel_size: int = 5
    n_speakers: int = 4
    speaker_embed_dim: int = 32
    n_mels: int = 80
    studio_speaker: int = 0
    mel_mean: float = -5.603
    mel_std: float = 2.571
    sigma_min: float = 1e-4
    prior_weight: float = 1.0
    aux_l1_weight: float = 0.0
    flow_samples: int = 1
    loss_weights: LossWeights = field(default_factory=LossWeights)

    def __post_init__(self):
        if isinstance(self.loss_weights, dict):
            object.__setattr__(self, "loss_weights", LossWeights(**self.loss_weights))
        dims = ("vocab_size", "embed_dim", "encoder_layers", "encoder_hidden", "attention_heads",
                "predictor_hidden", "decoder_hidden", "decoder_layers", "kernel_size",
                "n_speakers", "speaker_embed_dim", "n_mels", "flow_samples")
        for name in dims:
            if getattr(self, name) <= 0:
                raise ValueError(f"{name} must be positive")
        if self.embed_dim % self.attention_heads:
            raise ValueError("embed_dim must be divisible by attention_heads")
        if not 0 <= self.studio_speaker < self.n_speakers:
            raise ValueError("studio_speaker out of range")
        if not 0 <= self.sigma_min < 1:
            raise ValueError("sigma_min must lie in [0, 1)")
        if self.prior_weight < 0 or self.aux_l1_weight < 0:
            raise ValueError("loss weights must be >= 0")

    def to_json(self) -> str:
        return json.dumps(asdict(self), sort_keys=True)

    @classmethod
    def from_json(cls, text: str) -> "ModelConfig":
        return cls(**json.loads(text))


@dataclass(frozen=True)
class TrainConfig:
    learning_rate: float = 1e-4
    weight_decay: float = 0.0
    grad_clip_norm: float = 5.0
    batch_size: int = 2
    accumulation_steps: int = 1
    seed: int = 0
    adam_betas: tuple[float, float] = (0.9, 0.999)
    adam_eps: float = 1e-8
    patience: int = 10

    def __post_init__(self):
        if not self.learning_rate > 0:
            raise ValueError("learning_rate must be positive")
        if not self.grad_clip_norm > 0:
            raise ValueError("grad_clip_norm must be positive")
        if self.batch_size < 1 or self.accumulation_steps < 1:
            raise ValueError("batch_size and accumulation_steps must be >= 1")
        if self.weight_decay < 0:
            raise ValueError("weight_decay must be >= 0")
