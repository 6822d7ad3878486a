"""Seeded training loop with per-epoch validation CCC and early stopping.

Each epoch shuffles the training sub-sequences, draws fresh dropout masks
per batch, computes the batch loss 1 - rho_c over all clips in the batch,
and applies one optimizer step per batch. Validation CCC uses clipped
predictions; the returned parameters are the best-validation snapshot.
Everything is driven by a single seed, so identical configs produce
bitwise-identical histories.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import DivergenceError, ShapeError
from .gradients import loss_and_grads
from .metrics import evaluate_split
from .models import JcaDims, ModelParams, xavier_init
from .optim import TrainConfig, init_state, step


@dataclass
class TrainHistory:
    train_loss: list[float] = field(default_factory=list)
    train_ccc: list[float] = field(default_factory=list)
    val_ccc: list[float] = field(default_factory=list)
    best_epoch: int = 0          # 1-based
    best_val_ccc: float = float("-inf")
    stopped_early: bool = False

    @property
    def epochs_run(self) -> int:
        return len(self.val_ccc)


def make_dropout_mask(rng, L: int, d: int, p: float) -> np.ndarray:
    """Inverted-dropout mask: entries 0 (dropped) or 1/(1-p) (kept)."""
    return (rng.random((L, d)) >= p) / (1.0 - p)


def infer_dims(subsequences, k: int | None = None) -> JcaDims:
    first = subsequences[0]
    L, d_a = first.audio.shape
    d_v = first.visual.shape[1]
    return JcaDims(L=L, d_a=d_a, d_v=d_v, k=k if k is not None else L)


def _validation_ccc(params: ModelParams, val_set, target: str) -> float:
    # module-level seam so tests can force a validation trajectory
    return evaluate_split(params, val_set, target).rho_c


def train(model_kind: str, train_set, val_set, config: TrainConfig,
          k: int | None = None, head_hidden: int = 0,
          on_epoch=None) -> tuple[ModelParams, TrainHistory]:
    """Train one model kind on one target; returns (best params, history)."""
    config.validate()
    if not train_set or not val_set:
        raise ShapeError("train: empty training or validation split")
    dims = infer_dims(train_set, k)
    for sub in list(train_set) + list(val_set):
        if sub.audio.shape != (dims.L, dims.d_a) or sub.visual.shape != (dims.L, dims.d_v):
            raise ShapeError(
                f"train: {sub.seq_id} has shapes {tuple(sub.audio.shape)}/"
                f"{tuple(sub.visual.shape)}, expected {(dims.L, dims.d_a)}/{(dims.L, dims.d_v)}"
            )

    init_seed, shuffle_seed = np.random.SeedSequence(config.seed).spawn(2)
    params = xavier_init(model_kind, dims, seed=init_seed, head_hidden=head_hidden)
    state = init_state(params)
    rng = np.random.default_rng(shuffle_seed)

    history = TrainHistory()
    best_params = params.copy()
    epochs_since_best = 0
    n = len(train_set)

    for epoch in range(1, config.max_epochs + 1):
        order = rng.permutation(n)
        batch_losses = []
        for start in range(0, n, config.batch_size):
            batch = [train_set[i] for i in order[start:start + config.batch_size]]
            masks = None
            if config.dropout > 0:
                masks = [make_dropout_mask(rng, dims.L, dims.d, config.dropout)
                         for _ in batch]
            result = loss_and_grads(params, batch, config.target, masks)
            if not np.isfinite(result.loss):
                raise DivergenceError(
                    f"non-finite loss at epoch {epoch}, batch starting {start}"
                )
            batch_losses.append(result.loss)
            params, state = step(params, result.grads, state, config)

        history.train_loss.append(float(np.mean(batch_losses)))
        history.train_ccc.append(evaluate_split(params, train_set, config.target).rho_c)
        val = _validation_ccc(params, val_set, config.target)
        history.val_ccc.append(val)

        if val > history.best_val_ccc:
            history.best_val_ccc = val
            history.best_epoch = epoch
            best_params = params.copy()
            epochs_since_best = 0
        else:
            epochs_since_best += 1

        if on_epoch is not None:
            on_epoch(epoch, history, params)

        if epochs_since_best >= config.patience:
            history.stopped_early = True
            break

    return best_params, history
