"""Adam with decoupled weight decay, plus a linear-warmup cosine schedule.

Defaults follow the soft-prompt training recipe used throughout this
project: lr 1e-4, betas (0.9, 0.98), weight decay 0.01, 50 warmup steps.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .tensor import NumericsError


@dataclass
class AdamState:
    """Per-parameter moment buffers and hyperparameters."""

    step: int
    m: list[np.ndarray]
    v: list[np.ndarray]
    lr: float = 1e-4
    beta1: float = 0.9
    beta2: float = 0.98
    eps: float = 1e-8
    weight_decay: float = 0.01


def init_adam(
    params: Sequence[np.ndarray],
    lr: float = 1e-4,
    betas: tuple[float, float] = (0.9, 0.98),
    eps: float = 1e-8,
    weight_decay: float = 0.01,
) -> AdamState:
    return AdamState(
        step=0,
        m=[np.zeros_like(p) for p in params],
        v=[np.zeros_like(p) for p in params],
        lr=lr,
        beta1=betas[0],
        beta2=betas[1],
        eps=eps,
        weight_decay=weight_decay,
    )


def adam_step(
    params: Sequence[np.ndarray],
    grads: Sequence[np.ndarray],
    state: AdamState,
) -> list[np.ndarray]:
    """One bias-corrected Adam update; returns new parameter arrays.

    Weight decay is decoupled: each parameter is shrunk by lr*wd before the
    moment-based update, so the moments never see the decay term. A grad of
    None is treated as zero (the parameter still decays).
    """
    if len(params) != len(grads) or len(params) != len(state.m):
        raise NumericsError("adam_step: parameter/gradient/state length mismatch")
    if state.step < 0:
        raise NumericsError("adam_step: negative step count")

    t = state.step + 1
    bc1 = 1.0 - state.beta1**t
    bc2 = 1.0 - state.beta2**t
    out: list[np.ndarray] = []
    for i, (p, g) in enumerate(zip(params, grads)):
        if g is None:
            g = np.zeros_like(p)
        g = np.asarray(g)
        if g.shape != p.shape or state.m[i].shape != p.shape:
            raise NumericsError(f"adam_step: shape mismatch at parameter {i}")
        if not np.isfinite(g).all():
            raise NumericsError(f"adam_step: non-finite gradient at parameter {i}")
        p = p * (1.0 - state.lr * state.weight_decay)
        state.m[i] = state.beta1 * state.m[i] + (1.0 - state.beta1) * g
        state.v[i] = state.beta2 * state.v[i] + (1.0 - state.beta2) * (g * g)
        m_hat = state.m[i] / bc1
        v_hat = state.v[i] / bc2
        out.append(p - state.lr * m_hat / (np.sqrt(v_hat) + state.eps))
    state.step = t
    return out


@dataclass(frozen=True)
class LrSchedule:
    """Linear ramp from 0 to peak over warmup_steps, then cosine to min_lr."""

    peak_lr: float
    warmup_steps: int
    total_steps: int
    min_lr: float = 0.0

    def __post_init__(self):
        if not (0.0 <= self.min_lr <= self.peak_lr):
            raise NumericsError("LrSchedule requires 0 <= min_lr <= peak_lr")
        if not (0 <= self.warmup_steps < self.total_steps):
            raise NumericsError("LrSchedule requires warmup_steps < total_steps")


def lr_at(schedule: LrSchedule, step: int) -> float:
    if step < 0 or step > schedule.total_steps:
        raise NumericsError(f"step {step} outside [0, {schedule.total_steps}]")
    if step < schedule.warmup_steps:
        return schedule.peak_lr * step / schedule.warmup_steps
    span = schedule.total_steps - schedule.warmup_steps
    phase = (step - schedule.warmup_steps) / span
    return schedule.min_lr + 0.5 * (schedule.peak_lr - schedule.min_lr) * (1.0 + math.cos(math.pi * phase))
