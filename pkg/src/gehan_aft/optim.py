"""AdamW with cosine-annealed warm restarts (AdamWR).

Cycle ``k`` lasts ``initial_cycle_epochs * cycle_multiplier**k`` epochs. The
schedule multiplier ``eta`` runs from 1 at a cycle start toward 0 at its end
and scales both the Adam step and the decoupled weight decay:

    theta <- theta - eta * (lr * m_hat / (sqrt(v_hat) + eps) + weight_decay * theta)
"""

import math
from dataclasses import asdict, dataclass

import numpy as np


@dataclass(frozen=True)
class OptimConfig:
    base_learning_rate: float = 1e-3
    weight_decay: float = 0.0
    beta1: float = 0.9
    beta2: float = 0.999
    epsilon: float = 1e-8
    initial_cycle_epochs: int = 1
    cycle_multiplier: int = 2

    def __post_init__(self):
        if not self.base_learning_rate > 0:
            raise ValueError("base_learning_rate must be positive")
        if self.weight_decay < 0:
            raise ValueError("weight_decay must be non-negative")
        # Zero betas are accepted so that degenerate Adam can be checked by hand.
        if not (0 <= self.beta1 < 1 and 0 <= self.beta2 < 1):
            raise ValueError("betas must lie in [0, 1)")
        if self.initial_cycle_epochs < 1 or self.cycle_multiplier < 1:
            raise ValueError("cycle lengths must be at least 1")

    def to_dict(self):
        return asdict(self)

    @classmethod
    def from_dict(cls, d):
        return cls(**d)


def restart_epochs(initial=1, multiplier=2, count=4):
    """Epoch boundaries at which the first ``count`` cycles end."""
    out, total, length = [], 0, initial
    for _ in range(count):
        total += length
        out.append(total)
        length *= multiplier
    return out


def cycle_position(epoch, initial=1, multiplier=2):
    """Return ``(cycle_index, position_in_cycle, cycle_length)`` in epochs."""
    if epoch < 0:
        raise ValueError("epoch must be non-negative")
    start, length, k = 0.0, float(initial), 0
    while epoch >= start + length:
        start += length
        length *= multiplier
        k += 1
    return k, epoch - start, length


def cosine_factor(epoch, initial=1, multiplier=2):
    _, pos, length = cycle_position(epoch, initial, multiplier)
    return 0.5 * (1.0 + math.cos(math.pi * pos / length))


def default_no_decay(name):
    """Embedding tables and batch-norm affine parameters are not decayed."""
    return name.startswith("embed.") or name.startswith("bn.")


class AdamWR:
    """Stateful optimizer over a dict of named parameter arrays.

    ``steps_per_epoch`` converts the optimizer step count into a fractional
    epoch for the restart schedule.
    """

    def __init__(self, config, params, steps_per_epoch=1, no_decay=default_no_decay):
        if steps_per_epoch < 1:
            raise ValueError("steps_per_epoch must be at least 1")
        self.config = config
        self.steps_per_epoch = steps_per_epoch
        self.no_decay = no_decay
        self.m = {k: np.zeros_like(v) for k, v in params.items()}
        self.v = {k: np.zeros_like(v) for k, v in params.items()}
        self.t = 0

    def schedule_factor(self, step_index):
        cfg = self.config
        return cosine_factor(step_index / self.steps_per_epoch,
                             cfg.initial_cycle_epochs, cfg.cycle_multiplier)

    def learning_rate(self, step_index):
        return self.config.base_learning_rate * self.schedule_factor(step_index)

    def step(self, params, grads, step_index=None):
        """Update ``params`` in place; returns the learning rate applied.

        ``step_index`` (0-based) positions the schedule and defaults to the
        number of steps already taken. Raises ``FloatingPointError`` on a
        non-finite gradient, before touching any parameter.
        """
        for k, g in grads.items():
            if not np.all(np.isfinite(g)):
                raise FloatingPointError(f"non-finite gradient for parameter {k!r}")
        if step_index is None:
            step_index = self.t
        cfg = self.config
        eta = self.schedule_factor(step_index)
        self.t += 1
        bc1 = 1.0 - cfg.beta1 ** self.t
        bc2 = 1.0 - cfg.beta2 ** self.t
        for k, p in params.items():
            g = grads[k]
            m = self.m[k]
            v = self.v[k]
            m *= cfg.beta1
            m += (1.0 - cfg.beta1) * g
            v *= cfg.beta2
            v += (1.0 - cfg.beta2) * g * g
            update = cfg.base_learning_rate * (m / bc1) / (np.sqrt(v / bc2) + cfg.epsilon)
            if cfg.weight_decay and not self.no_decay(k):
                update = update + cfg.weight_decay * p
            p -= eta * update
        return cfg.base_learning_rate * eta
