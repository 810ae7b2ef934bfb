"""Optimal-transport conditional flow matching: paths, targets, loss, sampler.

Straight conditional paths from noise ``x0`` to data ``x1``::

    x_t = (1 - (1 - sigma_min) t) x0 + t x1
    u_t = x1 - (1 - sigma_min) x0

Functions accept numpy arrays or torch tensors alike.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Any, Callable

import numpy as np

SIGMA_MIN = 1e-4


class EmptyMask(ValueError):
    pass


class NonFiniteState(FloatingPointError):
    def __init__(self, step: int):
        super().__init__(f"sampler state became non-finite at step {step}")
        self.step = step


@dataclass(frozen=True)
class SamplerConfig:
    n_steps: int = 10
    sigma_min: float = SIGMA_MIN
    solver: str = "euler"

    def __post_init__(self):
        if self.n_steps < 1:
            raise ValueError("n_steps must be >= 1")
        if not 0 <= self.sigma_min < 1:
            raise ValueError("sigma_min must lie in [0, 1)")
        if self.solver != "euler":
            raise ValueError("only the fixed-step Euler solver is available")


@dataclass
class FlowSample:
    x0: Any
    x1: Any
    t: Any
    x_t: Any
    u_t: Any


def _shape(x):
    return tuple(x.shape)


def sample_flow_point(x0, x1, t, sigma_min: float = SIGMA_MIN) -> FlowSample:
    """Point on the conditional path at time ``t`` and its target velocity.

    ``t`` may be a scalar or broadcastable against ``x0`` (one time per batch item).
    """
    if _shape(x0) != _shape(x1):
        from .align import ShapeMismatch

        raise ShapeMismatch(f"x0 {_shape(x0)} vs x1 {_shape(x1)}")
    x_t = (1 - (1 - sigma_min) * t) * x0 + t * x1
    u_t = x1 - (1 - sigma_min) * x0
    return FlowSample(x0, x1, t, x_t, u_t)


def _full_mask(mask, like):
    if mask is None:
        return None
    if hasattr(like, "expand_as"):
        return mask.to(like.dtype).expand_as(like)
    return np.broadcast_to(np.asarray(mask, dtype=like.dtype), like.shape)


def cfm_loss(predicted_velocity, sample: FlowSample, mask=None):
    """Mean squared error to ``u_t`` over the entries selected by ``mask``."""
    diff = predicted_velocity - sample.u_t
    sq = diff * diff
    m = _full_mask(mask, sq)
    if m is None:
        if sq.size == 0 if isinstance(sq, np.ndarray) else sq.numel() == 0:
            raise EmptyMask("no entries to average")
        return sq.mean()
    count = m.sum()
    if float(count) == 0:
        raise EmptyMask("mask selects no entries")
    return (sq * m).sum() / count


def _finite(x) -> bool:
    if hasattr(x, "isfinite"):
        return bool(x.isfinite().all())
    return bool(np.all(np.isfinite(x)))


def euler_sample(
    vfield: Callable[[Any, float, Any], Any],
    x0,
    cond=None,
    config: SamplerConfig = SamplerConfig(),
):
    """Integrate ``dx/dt = vfield(x, t, cond)`` from ``t=0`` to ``1`` with fixed Euler steps."""
    x = x0
    dt = 1.0 / config.n_steps
    for k in range(config.n_steps):
        x = x + dt * vfield(x, k * dt, cond)
        if not _finite(x):
            raise NonFiniteState(k)
    return x
