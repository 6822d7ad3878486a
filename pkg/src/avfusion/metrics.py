"""Concordance correlation coefficient (CCC), its loss, and split evaluation.

    rho_c = 2 cov(x, y) / (var(x) + var(y) + (mean(x) - mean(y))^2)

with population (1/n) statistics throughout. The training loss is 1 - rho_c.

There is exactly one implementation of the arithmetic: a small tape graph.
ccc() evaluates it on constants, the training path evaluates it on tracked
prediction nodes, so the reported loss and the differentiated loss are
bitwise identical by construction.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import autodiff as ad
from .errors import DegenerateCccError, ShapeError
from .models import ModelParams, predict

# Denominator below this is treated as degenerate (both signals constant).
DENOM_EPS = 1e-12


@dataclass
class CccStats:
    """Population concordance statistics for one (prediction, target) pair."""

    n: int
    mu_x: float
    mu_y: float
    var_x: float
    var_y: float
    cov_xy: float
    rho_c: float
    degenerate: bool = False


@dataclass
class CccReport:
    """Split-level CCC for one regression target."""

    target: str
    n: int
    rho_c: float
    degenerate: bool
    stats: CccStats


def _as_column(values, name: str) -> np.ndarray:
    arr = np.asarray(values, dtype=np.float64)
    if arr.ndim == 1:
        arr = arr[:, None]
    if arr.ndim != 2 or arr.shape[1] != 1:
        raise ShapeError(f"{name}: expected a 1-D sequence or n x 1 column")
    return arr


def ccc_graph(tape: ad.Tape, pred: ad.Node, target: np.ndarray):
    """Build the CCC statistics subgraph over an n x 1 prediction node.

    Returns (rho_node_or_None, CccStats). rho_node is None exactly when the
    denominator is degenerate, in which case CccStats carries the policy
    value (1 when both signals are the same constant, else 0).
    """
    n = pred.value.shape[0]
    if target.shape != pred.value.shape:
        raise ShapeError(
            f"ccc: length mismatch {pred.value.shape[0]} vs {target.shape[0]}"
        )
    if n < 2:
        raise ShapeError(f"ccc: need at least 2 samples, got {n}")
    inv_n = 1.0 / n
    y = ad.constant(target)

    mu_x = ad.smul(tape, ad.sum_all(tape, pred), inv_n)
    mu_y = ad.smul(tape, ad.sum_all(tape, y), inv_n)
    dx = ad.sub_scalar(tape, pred, mu_x)
    dy = ad.sub_scalar(tape, y, mu_y)
    var_x = ad.smul(tape, ad.sum_all(tape, ad.mul(tape, dx, dx)), inv_n)
    var_y = ad.smul(tape, ad.sum_all(tape, ad.mul(tape, dy, dy)), inv_n)
    cov = ad.smul(tape, ad.sum_all(tape, ad.mul(tape, dx, dy)), inv_n)
    dmu = ad.sub(tape, mu_x, mu_y)
    denom = ad.add(tape, ad.add(tape, var_x, var_y), ad.mul(tape, dmu, dmu))

    denom_val = float(denom.value[0, 0])
    stats = CccStats(
        n=n,
        mu_x=float(mu_x.value[0, 0]), mu_y=float(mu_y.value[0, 0]),
        var_x=float(var_x.value[0, 0]), var_y=float(var_y.value[0, 0]),
        cov_xy=float(cov.value[0, 0]), rho_c=0.0,
    )
    if denom_val < DENOM_EPS:
        stats.degenerate = True
        stats.rho_c = 1.0 if abs(stats.mu_x - stats.mu_y) < 1e-12 else 0.0
        return None, stats
    rho = ad.div(tape, ad.smul(tape, cov, 2.0), denom)
    stats.rho_c = float(rho.value[0, 0])
    return rho, stats


def ccc(x, y) -> CccStats:
    """Population CCC between two equal-length sequences (n >= 2)."""
    xcol = _as_column(x, "x")
    ycol = _as_column(y, "y")
    tape = ad.Tape()
    _, stats = ccc_graph(tape, ad.constant(xcol), ycol)
    return stats


def ccc_loss(predictions, targets) -> float:
    """Training loss 1 - rho_c, in [0, 2]."""
    return 1.0 - ccc(predictions, targets).rho_c


def loss_graph(tape: ad.Tape, pred: ad.Node, target) -> ad.Node:
    """Differentiable 1 - rho_c over a tracked prediction node.

    Raises DegenerateCccError instead of applying the constant-signal policy:
    a degenerate training batch is a data problem and must surface.
    """
    rho, stats = ccc_graph(tape, pred, _as_column(target, "target"))
    if rho is None:
        raise DegenerateCccError(
            "CCC denominator vanished on this batch "
            f"(var_x={stats.var_x:.3e}, var_y={stats.var_y:.3e}, "
            f"mean gap={stats.mu_x - stats.mu_y:.3e})"
        )
    return ad.sub(tape, ad.constant(np.ones((1, 1))), rho)


def evaluate_split(params: ModelParams, subsequences, target: str) -> CccReport:
    """CCC of clipped predictions concatenated across a whole split.

    Predictions are concatenated in dataset order (all clips of the first
    sub-sequence, then the second, ...), and a single CCC is computed against
    the equally concatenated targets.
    """
    if not subsequences:
        raise ShapeError("evaluate_split: empty dataset")
    preds = []
    targs = []
    for sub in subsequences:
        preds.append(predict(params, sub.audio, sub.visual))
        targs.append(sub.targets(target))
    stats = ccc(np.concatenate(preds), np.concatenate(targs))
    return CccReport(target=target, n=stats.n, rho_c=stats.rho_c,
                     degenerate=stats.degenerate, stats=stats)
