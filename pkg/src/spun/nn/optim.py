"""Adam with decoupled weight decay and the warm-restart cosine schedule."""

import math
from dataclasses import dataclass, field

import numpy as np


@dataclass
class OptimizerState:
    lr: float = 2e-4
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    weight_decay: float = 0.0
    step: int = 0
    m: dict = field(default_factory=dict)
    v: dict = field(default_factory=dict)


def adam_step(store, state, lr=None):
    """One Adam update over all parameters; gradients are zeroed after.

    Weight decay is decoupled (applied to the values before the moment
    update); moments use the standard bias correction.  Parameters with no
    gradient this step only receive the decay.
    """
    if lr is None:
        lr = state.lr
    state.step += 1
    t = state.step
    c1 = 1.0 - state.beta1**t
    c2 = 1.0 - state.beta2**t
    for name, p in store.items():
        if state.weight_decay:
            p.values -= lr * state.weight_decay * p.values
        g = p.grad
        if g is None:
            g = np.zeros_like(p.values)
        m = state.m.get(name)
        if m is None:
            m = state.m[name] = np.zeros_like(p.values)
            state.v[name] = np.zeros_like(p.values)
        v = state.v[name]
        m *= state.beta1
        m += (1.0 - state.beta1) * g
        v *= state.beta2
        v += (1.0 - state.beta2) * g * g
        p.values -= lr * (m / c1) / (np.sqrt(v / c2) + state.eps)
        p.grad = None


@dataclass
class LrSchedule:
    """Cosine annealing with warm restarts; the period doubles each restart."""

    base_lr: float = 2e-4
    min_lr: float = 0.0
    t0: int = 10
    t_mult: int = 2

    def __post_init__(self):
        if self.t0 < 1 or self.t_mult < 1:
            raise ValueError("t0 and t_mult must be >= 1")


def lr_at(schedule, epoch):
    """Learning rate at an epoch index (restarts at 0, t0, t0·(1+m), ...)."""
    if epoch < 0:
        raise ValueError("epoch must be >= 0")
    t_i = schedule.t0
    start = 0
    while epoch >= start + t_i:
        start += t_i
        t_i *= schedule.t_mult
    t_cur = epoch - start
    return schedule.min_lr + 0.5 * (schedule.base_lr - schedule.min_lr) * (
        1.0 + math.cos(math.pi * t_cur / t_i)
    )
