"""Text encoder, variance predictors, length regulator and velocity-field decoder.

All modules work on a single utterance laid out as ``(time, channels)``.
Batches are plain lists of utterances, which keeps every per-utterance
result independent of what else is in the batch.
"""

from __future__ import annotations

import math

import torch
from torch import nn
from torch.nn import functional as F

from .config import ModelConfig
from .prosody import DurationMismatch


class InvalidToken(ValueError):
    pass


class InvalidSpeaker(ValueError):
    pass


def sinusoidal(positions: torch.Tensor, dim: int, max_period: float = 10000.0) -> torch.Tensor:
    half = dim // 2
    freqs = torch.exp(-math.log(max_period) * torch.arange(half, dtype=positions.dtype) / max(half, 1))
    angles = positions[..., None] * freqs
    emb = torch.cat([torch.sin(angles), torch.cos(angles)], dim=-1)
    if dim % 2:
        emb = F.pad(emb, (0, 1))
    return emb


class ConvStack(nn.Module):
    """Two same-length 1-D convolutions with a GELU between them."""

    def __init__(self, dim: int, hidden: int, kernel: int, out_dim: int | None = None):
        super().__init__()
        self.conv1 = nn.Conv1d(dim, hidden, kernel, padding=kernel // 2)
        self.conv2 = nn.Conv1d(hidden, out_dim or dim, kernel, padding=kernel // 2)

    def forward(self, x):  # (T, C)
        y = self.conv2(F.gelu(self.conv1(x.T[None])))
        return y[0].T


class EncoderBlock(nn.Module):
    def __init__(self, dim: int, hidden: int, heads: int, kernel: int):
        super().__init__()
        self.conv = ConvStack(dim, hidden, kernel)
        self.norm1 = nn.LayerNorm(dim)
        self.attn = nn.MultiheadAttention(dim, heads, batch_first=True)
        self.norm2 = nn.LayerNorm(dim)

    def forward(self, x):
        x = self.norm1(x + self.conv(x))
        a, _ = self.attn(x[None], x[None], x[None], need_weights=False)
        return self.norm2(x + a[0])


class VariancePredictor(nn.Module):
    def __init__(self, dim: int, hidden: int):
        super().__init__()
        self.conv = ConvStack(dim, hidden, 3, out_dim=hidden)
        self.norm = nn.LayerNorm(hidden)
        self.out = nn.Linear(hidden, 1)

    def forward(self, states):
        return self.out(F.silu(self.norm(self.conv(states))))[:, 0]


class Decoder(nn.Module):
    """Residual conv stack with FiLM time conditioning; predicts a velocity per mel bin.

    The output is ``exp(g(t)) * head(h) + s(t) * x_t``. The two time gates
    come from a linear map of the time embedding, so the decoder can learn
    the growing pull of the state term towards ``t = 1`` without having to
    push that scale through the conv stack. ``head`` and the gates start at
    zero, hence the initial velocity is zero.
    """

    time_dim = 32

    def __init__(self, n_mels: int, cond_dim: int, hidden: int, layers: int, kernel: int):
        super().__init__()
        self.inp = nn.Conv1d(n_mels + cond_dim, hidden, 1)
        self.time_mlp = nn.Sequential(nn.Linear(self.time_dim, hidden), nn.SiLU())
        self.convs = nn.ModuleList(nn.Conv1d(hidden, hidden, kernel, padding=kernel // 2) for _ in range(layers))
        self.films = nn.ModuleList(nn.Linear(hidden, 2 * hidden) for _ in range(layers))
        self.out = nn.Conv1d(hidden, n_mels, 1)
        self.gates = nn.Linear(hidden, 2)
        for layer in (self.out, self.gates):
            nn.init.zeros_(layer.weight)
            nn.init.zeros_(layer.bias)

    def forward(self, x_t, t, cond):
        if x_t.ndim != 2 or cond.ndim != 2 or x_t.shape[0] != cond.shape[0]:
            from ..align import ShapeMismatch

            raise ShapeMismatch(f"x_t {tuple(x_t.shape)} vs cond {tuple(cond.shape)}")
        t = torch.as_tensor(t, dtype=x_t.dtype).reshape(())
        temb = self.time_mlp(sinusoidal(t * 50.0, self.time_dim, max_period=50.0))
        h = self.inp(torch.cat([x_t, cond], dim=-1).T[None])
        for conv, film in zip(self.convs, self.films):
            scale, shift = film(temb).chunk(2)
            y = conv(h) * (1 + scale[None, :, None]) + shift[None, :, None]
            h = h + F.silu(y)
        g, s = self.gates(temb)
        return torch.exp(g) * self.out(h)[0].T + s * x_t


class AcousticModel(nn.Module):
    def __init__(self, config: ModelConfig):
        super().__init__()
        c = config
        self.config = c
        self.embed = nn.Embedding(c.vocab_size, c.embed_dim)
        self.speaker = nn.Embedding(c.n_speakers, c.speaker_embed_dim)
        self.speaker_proj = nn.Linear(c.speaker_embed_dim, c.embed_dim)
        self.blocks = nn.ModuleList(
            EncoderBlock(c.embed_dim, c.encoder_hidden, c.attention_heads, c.kernel_size)
            for _ in range(c.encoder_layers)
        )
        self.mu_head = nn.Linear(c.embed_dim, c.n_mels)
        self.duration = VariancePredictor(c.embed_dim, c.predictor_hidden)
        self.pitch = VariancePredictor(c.embed_dim, c.predictor_hidden)
        self.energy = VariancePredictor(c.embed_dim, c.predictor_hidden)
        self.pitch_proj = nn.Linear(1, c.embed_dim)
        self.energy_proj = nn.Linear(1, c.embed_dim)
        self.decoder = Decoder(c.n_mels, c.n_mels + c.embed_dim, c.decoder_hidden, c.decoder_layers, c.kernel_size)
        # pitch mean/std (Hz, voiced only), energy mean/std
        self.register_buffer("prosody_stats", torch.tensor([0.0, 1.0, 0.0, 1.0]))

    @property
    def dtype(self) -> torch.dtype:
        return self.embed.weight.dtype

    def check_inputs(self, ids, speaker: int) -> None:
        if not 0 <= int(speaker) < self.config.n_speakers:
            raise InvalidSpeaker(f"speaker {speaker} outside 0..{self.config.n_speakers - 1}")
        ids = torch.as_tensor(ids)
        if ids.numel() == 0:
            raise InvalidToken("empty token sequence")
        if ids.min() < 0 or ids.max() >= self.config.vocab_size:
            raise InvalidToken(f"token id outside 0..{self.config.vocab_size - 1}")

    def encode(self, ids, speaker: int):
        """Contextual grapheme states and per-grapheme (normalized) mel means."""
        self.check_inputs(ids, speaker)
        ids = torch.as_tensor(ids, dtype=torch.long)
        pos = torch.arange(len(ids), dtype=self.dtype)
        spk = self.speaker_proj(self.speaker(torch.tensor(int(speaker))))
        x = self.embed(ids) + sinusoidal(pos, self.config.embed_dim) + spk
        for block in self.blocks:
            x = block(x)
        return x, self.mu_head(x)

    def normalize_pitch(self, hz):
        m, s = self.prosody_stats[0], self.prosody_stats[1]
        return torch.where(hz > 0, (hz - m) / s, torch.zeros_like(hz))

    def normalize_energy(self, e):
        return (e - self.prosody_stats[2]) / self.prosody_stats[3]

    def adapt(self, states, pitch_n, energy_n):
        return states + self.pitch_proj(pitch_n[:, None]) + self.energy_proj(energy_n[:, None])

    def vfield(self, x_t, t, cond):
        return self.decoder(x_t, t, cond)


def length_regulate(states: torch.Tensor, durations, n_frames: int | None = None) -> torch.Tensor:
    """Repeat row ``i`` of ``states`` ``durations[i]`` times."""
    d = torch.as_tensor(durations, dtype=torch.long)
    if d.ndim != 1 or len(d) != states.shape[0]:
        raise DurationMismatch(f"{len(d)} durations for {states.shape[0]} states")
    if torch.any(d < 0):
        raise DurationMismatch("negative duration")
    if n_frames is not None and int(d.sum()) != n_frames:
        raise DurationMismatch(f"durations sum to {int(d.sum())}, expected {n_frames} frames")
    return torch.repeat_interleave(states, d, dim=0)


def decoder_vfield(model: AcousticModel, x_t, t, frame_cond):
    return model.vfield(x_t, t, frame_cond)


def predict_durations(model: AcousticModel, states):
    return model.duration(states)


def predict_pitch(model: AcousticModel, states):
    return model.pitch(states)


def predict_energy(model: AcousticModel, states):
    return model.energy(states)


def frames_from_log_durations(log_d: torch.Tensor) -> torch.Tensor:
    return torch.clamp(torch.round(torch.exp(log_d)), min=1).long()
