"""Adam and SGD-with-momentum steps, plus the training hyperparameter bundle.

Weight decay is decoupled: theta <- theta - lr*wd*theta is applied before
the optimizer update, and never to head biases, so the optimizer sees the
pure loss gradient (which is what the gradient checker verifies).
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigError, NumericError, ShapeError

OPTIMIZERS = ("adam", "sgd")


@dataclass
class TrainConfig:
    learning_rate: float = 1e-3
    optimizer: str = "adam"
    adam_beta1: float = 0.9
    adam_beta2: float = 0.999
    adam_epsilon: float = 1e-8
    sgd_momentum: float = 0.8
    weight_decay: float = 5e-4
    batch_size: int = 64
    dropout: float = 0.5
    max_epochs: int = 50
    patience: int = 5
    seed: int = 0
    target: str = "valence"

    def validate(self) -> "TrainConfig":
        if self.learning_rate <= 0:
            raise ConfigError(f"learning_rate must be > 0, got {self.learning_rate}")
        if not (0.0 <= self.dropout < 1.0):
            raise ConfigError(f"dropout must be in [0, 1), got {self.dropout}")
        if self.batch_size < 1:
            raise ConfigError(f"batch_size must be >= 1, got {self.batch_size}")
        if self.patience < 1:
            raise ConfigError(f"patience must be >= 1, got {self.patience}")
        if self.max_epochs < 1:
            raise ConfigError(f"max_epochs must be >= 1, got {self.max_epochs}")
        if self.optimizer not in OPTIMIZERS:
            raise ConfigError(f"optimizer must be one of {OPTIMIZERS}, got {self.optimizer!r}")
        if self.target not in ("valence", "arousal"):
            raise ConfigError(f"target must be valence or arousal, got {self.target!r}")
        if self.weight_decay < 0:
            raise ConfigError(f"weight_decay must be >= 0, got {self.weight_decay}")
        return self


@dataclass
class OptState:
    """Per-parameter optimizer slots (m/v for Adam, velocity for SGD)."""

    step: int = 0
    m: dict = field(default_factory=dict)
    v: dict = field(default_factory=dict)


def init_state(params) -> OptState:
    zeros = {name: np.zeros_like(t) for name, t in params.tensors.items()}
    return OptState(step=0, m=zeros, v={name: z.copy() for name, z in zeros.items()})


def _decays(name: str) -> bool:
    return not name.startswith("head_b")


def _check_grads(params, grads):
    for name, tensor in params.tensors.items():
        g = grads.get(name)
        if g is None or g.shape != tensor.shape:
            raise ShapeError(
                f"optimizer: gradient for {name} has shape "
                f"{None if g is None else tuple(g.shape)}, expected {tuple(tensor.shape)}"
            )
        if not np.isfinite(g).all():
            raise NumericError(f"optimizer: non-finite gradient for {name}")


def adam_step(params, grads: dict, state: OptState, config: TrainConfig):
    """One bias-corrected Adam update; returns (new_params, new_state)."""
    _check_grads(params, grads)
    lr, b1, b2, eps = (config.learning_rate, config.adam_beta1,
                       config.adam_beta2, config.adam_epsilon)
    t = state.step + 1
    new_tensors, new_m, new_v = {}, {}, {}
    for name, theta in params.tensors.items():
        g = grads[name]
        if config.weight_decay > 0 and _decays(name):
            theta = theta - lr * config.weight_decay * theta
        m = b1 * state.m[name] + (1.0 - b1) * g
        v = b2 * state.v[name] + (1.0 - b2) * g * g
        m_hat = m / (1.0 - b1 ** t)
        v_hat = v / (1.0 - b2 ** t)
        new_tensors[name] = theta - lr * m_hat / (np.sqrt(v_hat) + eps)
        new_m[name], new_v[name] = m, v
    from .models import ModelParams  # deferred: optim stays model-agnostic otherwise

    return (ModelParams(params.kind, params.dims, params.head_hidden, new_tensors),
            OptState(step=t, m=new_m, v=new_v))


def sgd_step(params, grads: dict, state: OptState, config: TrainConfig):
    """Momentum SGD: vel <- mu*vel + g; theta <- theta - lr*vel."""
    _check_grads(params, grads)
    lr, mu = config.learning_rate, config.sgd_momentum
    new_tensors, new_vel = {}, {}
    for name, theta in params.tensors.items():
        g = grads[name]
        if config.weight_decay > 0 and _decays(name):
            theta = theta - lr * config.weight_decay * theta
        vel = mu * state.m[name] + g
        new_tensors[name] = theta - lr * vel
        new_vel[name] = vel
    from .models import ModelParams

    return (ModelParams(params.kind, params.dims, params.head_hidden, new_tensors),
            OptState(step=state.step + 1, m=new_vel, v=state.v))


def step(params, grads: dict, state: OptState, config: TrainConfig):
    if config.optimizer == "adam":
        return adam_step(params, grads, state, config)
    return sgd_step(params, grads, state, config)
