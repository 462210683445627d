"""Adam optimizer and the polynomial learning-rate schedule."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .tensor import Tensor

__all__ = ["AdamState", "adam_step", "TrainSchedule", "poly_lr"]


@dataclass
class AdamState:
    """First/second moment buffers and step counter for a parameter list."""

    m: list = field(default_factory=list)
    v: list = field(default_factory=list)
    step: int = 0
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8

    @classmethod
    def for_params(cls, params: Sequence[Tensor], beta1: float = 0.9,
                   beta2: float = 0.999, eps: float = 1e-8) -> "AdamState":
        return cls(
            m=[np.zeros_like(p.data) for p in params],
            v=[np.zeros_like(p.data) for p in params],
            step=0,
            beta1=beta1,
            beta2=beta2,
            eps=eps,
        )


def adam_step(params: Sequence[Tensor], state: AdamState, lr_now: float) -> None:
    """One in-place Adam update with bias correction.

    Every parameter must carry a gradient; the step counter advances by one.
    """
    if lr_now <= 0:
        raise ValueError("adam_step: lr_now must be positive")
    if len(params) != len(state.m):
        raise ValueError("adam_step: state was built for a different parameter list")
    for i, p in enumerate(params):
        if p.grad is None:
            raise ValueError(f"adam_step: parameter {i} has no gradient")
        if p.grad.shape != state.m[i].shape:
            raise ValueError(f"adam_step: gradient shape mismatch on parameter {i}")
    state.step += 1
    bc1 = 1.0 - state.beta1 ** state.step
    bc2 = 1.0 - state.beta2 ** state.step
    for p, m, v in zip(params, state.m, state.v):
        g = p.grad
        m *= state.beta1
        m += (1.0 - state.beta1) * g
        v *= state.beta2
        v += (1.0 - state.beta2) * (g * g)
        p.data -= (lr_now * (m / bc1) / (np.sqrt(v / bc2) + state.eps)).astype(p.data.dtype)


@dataclass
class TrainSchedule:
    """Polynomial decay: lr * (1 - epoch/total)^power, evaluated per epoch."""

    lr: float
    epoch: int
    total: int
    power: float = 0.9


def poly_lr(sched: TrainSchedule) -> float:
    if sched.total == 0:
        raise ValueError("poly_lr: total epochs must be positive")
    if not (0 <= sched.epoch <= sched.total):
        raise ValueError("poly_lr: epoch out of range")
    if sched.lr <= 0 or sched.power <= 0:
        raise ValueError("poly_lr: lr and power must be positive")
    return sched.lr * (1.0 - sched.epoch / sched.total) ** sched.power
