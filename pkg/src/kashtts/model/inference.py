"""Text to mel synthesis with a trained acoustic model."""

from __future__ import annotations

import numpy as np
import torch

from ..features import MelSpectrogram, NormStats
from ..flow import SamplerConfig, euler_sample
from ..text import NormRules, Vocab, default_rules, default_vocab, text_to_ids
from .network import AcousticModel, frames_from_log_durations, length_regulate


class EmptyText(ValueError):
    pass


@torch.no_grad()
def synthesize_ids(model: AcousticModel, ids, speaker: int | None = None,
                   sampler: SamplerConfig = SamplerConfig(), seed: int = 0) -> tuple[MelSpectrogram, np.ndarray]:
    """Mel spectrogram (denormalized) and the frame count used for each grapheme."""
    cfg = model.config
    speaker = cfg.studio_speaker if speaker is None else speaker
    if len(ids) == 0:
        raise EmptyText("nothing to synthesize")
    states, mu = model.encode(ids, speaker)
    durations = frames_from_log_durations(model.duration(states))
    h = model.adapt(states, model.pitch(states), model.energy(states))
    cond = torch.cat([length_regulate(mu, durations), length_regulate(h, durations)], dim=-1)
    gen = torch.Generator().manual_seed(seed)
    x0 = torch.randn((cond.shape[0], cfg.n_mels), generator=gen, dtype=model.dtype)
    x1 = euler_sample(model.vfield, x0, cond, sampler)
    mel = MelSpectrogram(x1.double().numpy(), normalized=True)
    return mel.denormalize(NormStats(cfg.mel_mean, cfg.mel_std)), durations.numpy()


def synthesize(text: str, speaker: int | None, model: AcousticModel, sampler: SamplerConfig = SamplerConfig(),
               seed: int = 0, vocab: Vocab | None = None, rules: NormRules | None = None) -> MelSpectrogram:
    vocab = vocab or default_vocab()
    if len(vocab) != model.config.vocab_size:
        raise ValueError(f"vocabulary has {len(vocab)} symbols, model expects {model.config.vocab_size}")
    seq = text_to_ids(text, rules or default_rules(), vocab)
    if len(seq) == 0:
        raise EmptyText(f"{text!r} normalizes to nothing")
    mel, _ = synthesize_ids(model, list(seq.ids), speaker, sampler, seed)
    return mel
