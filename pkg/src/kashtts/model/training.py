"""Composite loss, optimizer step and the training loop."""

from __future__ import annotations

import copy
import json
import math
from dataclasses import asdict, dataclass, replace
from pathlib import Path
from typing import Callable, Sequence

import numpy as np
import torch
from torch.nn import functional as F

from ..align import log_likelihood_matrix, mas_search
from ..flow import cfm_loss, sample_flow_point
from .config import LossWeights, TrainConfig
from .network import AcousticModel, length_regulate
from .prosody import FrameProsody, ProsodyTargets, aggregate_prosody


class NonFiniteLoss(FloatingPointError):
    pass


@dataclass
class Utterance:
    """One training example: tokens, normalized mel and frame prosody.

    ``durations`` pins the alignment; when ``None`` it is searched afresh
    from the current grapheme means on every step.
    """

    uid: str
    ids: np.ndarray
    speaker: int
    mel: np.ndarray  # frames x n_mels, normalized
    prosody: FrameProsody
    durations: np.ndarray | None = None
    warm_durations: np.ndarray | None = None  # used while alignment warms up

    def pinned(self) -> "Utterance":
        if self.durations is None and self.warm_durations is not None:
            return replace(self, durations=self.warm_durations)
        return self

    @property
    def n_frames(self) -> int:
        return self.mel.shape[0]


@dataclass(frozen=True)
class LossBreakdown:
    l_mel: float
    l_dur: float
    l_pitch: float
    l_energy: float
    l_total: float

    @staticmethod
    def combine(l_mel, l_dur, l_pitch, l_energy, w: LossWeights):
        return l_mel + w.lambda_dur * l_dur + w.lambda_pitch * l_pitch + w.lambda_energy * l_energy

    def as_dict(self) -> dict:
        return asdict(self)


@dataclass(frozen=True)
class StepResult:
    losses: LossBreakdown
    grad_norm: float  # before clipping
    clipped_norm: float
    lr: float


def mas_durations(mu: torch.Tensor, mel) -> np.ndarray:
    """Frames per grapheme from the best monotonic alignment of ``mel`` to ``mu``."""
    L = log_likelihood_matrix(mu.detach().double().numpy(), np.asarray(mel, dtype=np.float64))
    path, _ = mas_search(L)
    return np.bincount(path, minlength=mu.shape[0])


def masked_mse(pred, target, mask=None):
    diff = (pred - target) ** 2
    if mask is None:
        return diff.mean()
    if not bool(mask.any()):
        return diff.sum() * 0.0
    return diff[mask].mean()


def prosody_inputs(model: AcousticModel, targets: ProsodyTargets, dtype):
    pitch = torch.as_tensor(targets.pitch, dtype=dtype)
    energy = torch.as_tensor(targets.energy, dtype=dtype)
    return model.normalize_pitch(pitch), model.normalize_energy(energy), pitch > 0


def utterance_losses(model: AcousticModel, utt: Utterance, generator: torch.Generator | None = None,
                     noise=None, t=None) -> tuple[dict, np.ndarray]:
    """Unweighted loss terms for one utterance (tensors) and the durations used."""
    cfg = model.config
    dtype = model.dtype
    states, mu = model.encode(utt.ids, utt.speaker)
    with torch.no_grad():
        durations = utt.durations if utt.durations is not None else mas_durations(mu, utt.mel)
    durations = np.asarray(durations, dtype=np.int64)
    targets = aggregate_prosody(utt.prosody, durations)
    pitch_n, energy_n, voiced = prosody_inputs(model, targets, dtype)

    log_d = model.duration(states)
    p_hat = model.pitch(states)
    e_hat = model.energy(states)
    l_dur = masked_mse(log_d, torch.log(torch.as_tensor(durations, dtype=dtype)))
    l_pitch = masked_mse(p_hat, pitch_n, voiced)
    l_energy = masked_mse(e_hat, energy_n)

    # unvoiced graphemes take the predictor's value, as they do at inference;
    # the mel loss is what shapes the predictor there
    pitch_in = torch.where(voiced, pitch_n, p_hat)
    h = model.adapt(states, pitch_in, energy_n)
    n_frames = utt.n_frames
    mu_f = length_regulate(mu, durations, n_frames)
    cond = torch.cat([mu_f, length_regulate(h, durations, n_frames)], dim=-1)

    x1 = torch.as_tensor(utt.mel, dtype=dtype)
    draws = max(1, cfg.flow_samples) if noise is None else 1
    l_mel = 0.0
    for _ in range(draws):
        x0 = noise if noise is not None else torch.randn(x1.shape, generator=generator, dtype=dtype)
        tk = torch.rand((), generator=generator, dtype=dtype) if t is None else torch.as_tensor(t, dtype=dtype)
        sample = sample_flow_point(x0, x1, tk, cfg.sigma_min)
        v = model.vfield(sample.x_t, tk, cond)
        l_mel = l_mel + cfm_loss(v, sample) / draws
        if cfg.aux_l1_weight:
            x1_hat = sample.x_t + (1 - tk) * v
            l_mel = l_mel + cfg.aux_l1_weight * (x1_hat - x1).abs().mean() / draws
    if cfg.prior_weight:
        l_mel = l_mel + cfg.prior_weight * (mu_f - x1).abs().mean()
    terms = {"l_mel": l_mel, "l_dur": l_dur, "l_pitch": l_pitch, "l_energy": l_energy}
    return terms, durations


def total_loss(batch: Sequence[Utterance], model: AcousticModel, weights: LossWeights | None = None,
               generator: torch.Generator | None = None, noise=None, t=None):
    """Weighted sum of the batch-averaged terms. Returns ``(loss_tensor, LossBreakdown)``.

    The terms are combined in float64 so that the scalar breakdown and the
    differentiated tensor agree exactly.
    """
    weights = weights or model.config.loss_weights
    if not batch:
        raise ValueError("empty batch")
    sums = {k: 0.0 for k in ("l_mel", "l_dur", "l_pitch", "l_energy")}
    for k, utt in enumerate(batch):
        terms, _ = utterance_losses(
            model, utt, generator,
            None if noise is None else noise[k],
            None if t is None else t[k],
        )
        for name, value in terms.items():
            sums[name] = sums[name] + value.double()
    parts = {k: v / len(batch) for k, v in sums.items()}
    loss = LossBreakdown.combine(parts["l_mel"], parts["l_dur"], parts["l_pitch"], parts["l_energy"], weights)
    floats = {k: v.item() for k, v in parts.items()}
    l_total = LossBreakdown.combine(floats["l_mel"], floats["l_dur"], floats["l_pitch"], floats["l_energy"], weights)
    return loss, LossBreakdown(l_total=l_total, **floats)


def make_optimizer(model: AcousticModel, cfg: TrainConfig) -> torch.optim.Adam:
    return torch.optim.Adam(model.parameters(), lr=cfg.learning_rate, betas=cfg.adam_betas,
                            eps=cfg.adam_eps, weight_decay=cfg.weight_decay)


def _grad_norm(params) -> float:
    grads = [p.grad.detach().double().norm() for p in params if p.grad is not None]
    return float(torch.stack(grads).norm()) if grads else 0.0


LossFn = Callable[[Sequence[Utterance]], tuple[torch.Tensor, LossBreakdown]]


def train_step(model: AcousticModel, optimizer: torch.optim.Optimizer, batch: Sequence[Utterance],
               cfg: TrainConfig, generator: torch.Generator | None = None,
               loss_fn: LossFn | None = None) -> StepResult:
    """Accumulate gradients over ``cfg.accumulation_steps`` micro-batches, clip, update.

    On a non-finite loss or gradient the parameters and optimizer state
    are left untouched and :class:`NonFiniteLoss` is raised.
    """
    if loss_fn is None:
        loss_fn = lambda b: total_loss(b, model, generator=generator)  # noqa: E731
    n_micro = min(cfg.accumulation_steps, len(batch))
    chunks = [list(c) for c in np.array_split(np.arange(len(batch)), n_micro)]
    params = [p for p in model.parameters() if p.requires_grad]
    optimizer.zero_grad(set_to_none=True)
    parts = []
    for chunk in chunks:
        micro = [batch[i] for i in chunk]
        loss, breakdown = loss_fn(micro)
        if not math.isfinite(breakdown.l_total):
            optimizer.zero_grad(set_to_none=True)
            raise NonFiniteLoss(f"loss is {breakdown.l_total}")
        (loss * (len(micro) / len(batch))).backward()
        parts.append((len(micro) / len(batch), breakdown))
    grad_norm = float(torch.nn.utils.clip_grad_norm_(params, cfg.grad_clip_norm))
    if not math.isfinite(grad_norm):
        optimizer.zero_grad(set_to_none=True)
        raise NonFiniteLoss(f"gradient norm is {grad_norm}")
    clipped = _grad_norm(params)
    optimizer.step()
    avg = {k: sum(w * getattr(b, k) for w, b in parts) for k in ("l_mel", "l_dur", "l_pitch", "l_energy")}
    weights = model.config.loss_weights
    losses = LossBreakdown(l_total=LossBreakdown.combine(avg["l_mel"], avg["l_dur"], avg["l_pitch"], avg["l_energy"], weights), **avg)
    lr = optimizer.param_groups[0]["lr"]
    return StepResult(losses, grad_norm, clipped, lr)


def fit_prosody_stats(model: AcousticModel, utterances: Sequence[Utterance]) -> None:
    """Store corpus pitch (voiced frames) and energy statistics in the model."""
    f0 = np.concatenate([u.prosody.f0 for u in utterances])
    energy = np.concatenate([u.prosody.energy for u in utterances])
    voiced = f0[f0 > 0]
    p_mean, p_std = (voiced.mean(), voiced.std()) if voiced.size else (0.0, 1.0)
    stats = [p_mean, max(p_std, 1.0), energy.mean(), max(energy.std(), 1e-6)]
    model.prosody_stats.copy_(torch.tensor(stats, dtype=model.prosody_stats.dtype))


def evaluation_loss(model: AcousticModel, utterances: Sequence[Utterance], seed: int = 0) -> LossBreakdown:
    """Loss with a fixed noise draw, comparable across training steps."""
    gen = torch.Generator().manual_seed(seed)
    with torch.no_grad():
        _, breakdown = total_loss(utterances, model, generator=gen)
    return breakdown


@dataclass
class TrainOutcome:
    step: int
    history: list
    best_step: int
    best_valid: float | None
    stopped_early: bool


def train(model: AcousticModel, optimizer: torch.optim.Optimizer, utterances: Sequence[Utterance],
          cfg: TrainConfig, steps: int, valid: Sequence[Utterance] = (), eval_every: int = 50,
          log_path: str | Path | None = None, start_step: int = 0, align_warmup: int = 0) -> TrainOutcome:
    """Seeded training loop with JSON-lines logging and validation-loss selection.

    When ``valid`` is non-empty the parameters with the lowest validation
    loss are restored at the end; training stops once ``cfg.patience``
    evaluations pass without improvement. For the first ``align_warmup``
    steps utterances with ``warm_durations`` are trained on that fixed
    alignment before the per-step search takes over.
    """
    rng = np.random.default_rng(cfg.seed)
    gen = torch.Generator().manual_seed(cfg.seed)
    order: list[int] = []
    history = []
    best = (math.inf, start_step, None)
    stale = 0
    stopped = False
    log = open(log_path, "a", encoding="utf-8") if log_path else None
    step = start_step
    try:
        for step in range(start_step + 1, start_step + steps + 1):
            batch = []
            while len(batch) < min(cfg.batch_size, len(utterances)):
                if not order:
                    order = list(rng.permutation(len(utterances)))
                utt = utterances[order.pop()]
                batch.append(utt.pinned() if step <= align_warmup else utt)
            result = train_step(model, optimizer, batch, cfg, gen)
            record = {"step": step, **result.losses.as_dict(), "grad_norm": result.grad_norm, "lr": result.lr}
            history.append(record)
            if log:
                log.write(json.dumps(record) + "\n")
            if valid and (step % eval_every == 0 or step == start_step + steps):
                v = evaluation_loss(model, valid, cfg.seed).l_total
                record["valid_l_total"] = v
                if v < best[0]:
                    best, stale = (v, step, copy.deepcopy(model.state_dict())), 0
                else:
                    stale += 1
                    if stale >= cfg.patience:
                        stopped = True
                        break
    finally:
        if log:
            log.close()
    if best[2] is not None:
        model.load_state_dict(best[2])
    return TrainOutcome(step, history, best[1], best[0] if best[2] is not None else None, stopped)
