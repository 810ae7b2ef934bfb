"""Finite-difference verification of the analytic gradients."""

from __future__ import annotations

import copy
from dataclasses import replace
from typing import Callable, Sequence

import numpy as np
import torch

from .config import ModelConfig
from .network import AcousticModel
from .training import Utterance, mas_durations, total_loss


def check_gradients(loss_fn: Callable[[], torch.Tensor], params: Sequence[torch.Tensor], epsilon: float = 1e-4,
                    n_samples: int = 64, seed: int = 0, floor: float = 1e-5) -> float:
    """Max of ``|a - n| / max(|a|, |n|, floor)`` over a random subset of scalar entries.

    ``a`` is the autograd derivative, ``n`` the central difference with step ``epsilon``.
    """
    for p in params:
        p.grad = None
    loss_fn().backward()
    analytic = [p.grad.detach().clone() for p in params]
    sizes = np.array([p.numel() for p in params])
    rng = np.random.default_rng(seed)
    picks = rng.choice(sizes.sum(), size=min(n_samples, sizes.sum()), replace=False)
    offsets = np.concatenate([[0], np.cumsum(sizes)])
    worst = 0.0
    with torch.no_grad():
        for flat in picks:
            k = int(np.searchsorted(offsets, flat, side="right") - 1)
            idx = int(flat - offsets[k])
            view = params[k].view(-1)
            orig = view[idx].item()
            view[idx] = orig + epsilon
            up = loss_fn().item()
            view[idx] = orig - epsilon
            down = loss_fn().item()
            view[idx] = orig
            num = (up - down) / (2 * epsilon)
            ana = analytic[k].view(-1)[idx].item()
            err = abs(ana - num) / max(abs(ana), abs(num), floor)
            worst = max(worst, err)
    return worst


def harness_config(**overrides) -> ModelConfig:
    """A model under 10k parameters for gradient checks."""
    base = ModelConfig(vocab_size=272, embed_dim=8, encoder_layers=1, encoder_hidden=8, attention_heads=2,
                       predictor_hidden=4, decoder_hidden=8, decoder_layers=1, kernel_size=3,
                       n_speakers=2, speaker_embed_dim=4)
    return replace(base, **overrides)


def grad_check(model: AcousticModel, batch: Sequence[Utterance], epsilon: float = 1e-4, n_samples: int = 64,
               seed: int = 0, floor: float = 1e-5) -> float:
    """Check ``total_loss`` gradients on a float64 copy of ``model``.

    The alignment, flow noise and flow time are frozen so the loss is a
    smooth function of the parameters. The zero-initialized output head and
    time gates are replaced with small random weights so every parameter receives signal.
    """
    model = copy.deepcopy(model).double()
    gen = torch.Generator().manual_seed(seed)
    with torch.no_grad():
        for layer in (model.decoder.out, model.decoder.gates):
            if not layer.weight.any():
                layer.weight.normal_(0.0, 0.1, generator=gen)
                layer.bias.normal_(0.0, 0.1, generator=gen)
    frozen = []
    noise, times = [], []
    for utt in batch:
        with torch.no_grad():
            _, mu = model.encode(utt.ids, utt.speaker)
        d = utt.durations if utt.durations is not None else mas_durations(mu, utt.mel)
        frozen.append(replace(utt, durations=np.asarray(d)))
        noise.append(torch.randn(utt.mel.shape, generator=gen, dtype=torch.float64))
        times.append(torch.rand((), generator=gen, dtype=torch.float64))
    params = [p for p in model.parameters() if p.requires_grad]
    return check_gradients(lambda: total_loss(frozen, model, noise=noise, t=times)[0], params,
                           epsilon, n_samples, seed, floor)
