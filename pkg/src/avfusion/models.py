"""Audio-visual fusion models: joint cross-attention and its two baselines.

All three models share the same per-clip layout: audio features X_a (L x d_a)
and visual features X_v (L x d_v), one row per clip of a sub-sequence, one
scalar prediction per clip.

"jca" (joint cross-attention): correlates each modality with the joint
representation J = [X_a ; X_v] (column-wise, audio first),

    C_m   = tanh(X_m^T W_jm J / sqrt(d))          (d_m x d)
    H_m   = relu(W_m X_m + W_cm C_m^T)            (k x d_m)
    X_att,m = W_hm^T H_m + X_m                    (L x d_m, residual)

then concatenates the attended features visual-first, X_att = [X_att,v ;
X_att,a], and applies a per-clip linear head.

"vanilla-ca": identical pipeline except each modality correlates with the
*opposite* modality instead of J:

    C_a = tanh(X_a^T W_xa X_v / sqrt(d_v))        (d_a x d_v)
    C_v = tanh(X_v^T W_xv X_a / sqrt(d_a))        (d_v x d_a)

"concat": no attention, the head reads [X_a ; X_v] directly.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from . import autodiff as ad
from . import linalg
from .errors import ConfigError, NumericError, ShapeError
from .linalg import Matrix, as_matrix

MODEL_KINDS = ("jca", "concat", "vanilla-ca")


@dataclass(frozen=True)
class JcaDims:
    """Shared dimension bundle: L clips, per-modality widths, attention size k."""

    L: int
    d_a: int
    d_v: int
    k: int

    def __post_init__(self):
        for name in ("L", "d_a", "d_v", "k"):
            if int(getattr(self, name)) < 1:
                raise ConfigError(f"JcaDims.{name} must be >= 1, got {getattr(self, name)}")

    @property
    def d(self) -> int:
        return self.d_a + self.d_v


@dataclass
class ModelParams:
    """Trainable state for one model kind: named tensors in a fixed order."""

    kind: str
    dims: JcaDims
    head_hidden: int
    tensors: dict[str, Matrix] = field(repr=False)

    def copy(self) -> "ModelParams":
        return ModelParams(
            self.kind, self.dims, self.head_hidden,
            {k: v.copy() for k, v in self.tensors.items()},
        )

    @property
    def n_params(self) -> int:
        return sum(v.size for v in self.tensors.values())


def head_spec(dims: JcaDims, head_hidden: int) -> list[tuple[str, tuple[int, int]]]:
    d = dims.d
    if head_hidden == 0:
        return [("head_W0", (d, 1)), ("head_b0", (1, 1))]
    h = int(head_hidden)
    return [
        ("head_W0", (d, h)), ("head_b0", (1, h)),
        ("head_W1", (h, 1)), ("head_b1", (1, 1)),
    ]


def param_spec(kind: str, dims: JcaDims, head_hidden: int = 0) -> list[tuple[str, tuple[int, int]]]:
    """Ordered (name, shape) list; also the serialization and init order."""
    if kind not in MODEL_KINDS:
        raise ConfigError(f"unknown model kind {kind!r}, expected one of {MODEL_KINDS}")
    L, k, d = dims.L, dims.k, dims.d
    if kind == "concat":
        return head_spec(dims, head_hidden)
    if kind == "jca":
        attention = [
            ("W_ja", (L, L)), ("W_jv", (L, L)),
            ("W_a", (k, L)), ("W_v", (k, L)),
            ("W_ca", (k, d)), ("W_cv", (k, d)),
            ("W_ha", (k, L)), ("W_hv", (k, L)),
        ]
    else:  # vanilla-ca
        attention = [
            ("W_xa", (L, L)), ("W_xv", (L, L)),
            ("W_a", (k, L)), ("W_v", (k, L)),
            ("W_ca", (k, dims.d_v)), ("W_cv", (k, dims.d_a)),
            ("W_ha", (k, L)), ("W_hv", (k, L)),
        ]
    return attention + head_spec(dims, head_hidden)


def xavier_init(kind: str, dims: JcaDims, seed: int, head_hidden: int = 0) -> ModelParams:
    """Uniform Xavier init, each m x n weight in +-sqrt(6/(m+n)); biases zero.

    Draw order follows param_spec, so a seed fully determines every tensor.
    """
    rng = np.random.default_rng(seed)
    tensors: dict[str, Matrix] = {}
    for name, (rows, cols) in param_spec(kind, dims, head_hidden):
        if name.startswith("head_b"):
            tensors[name] = linalg._freeze(np.zeros((rows, cols)))
        else:
            bound = math.sqrt(6.0 / (rows + cols))
            tensors[name] = linalg._freeze(rng.uniform(-bound, bound, size=(rows, cols)))
    return ModelParams(kind, dims, head_hidden, tensors)


def parameter_count(kind: str, dims: JcaDims, head_hidden: int = 0) -> int:
    """Closed-form parameter count, kept independent of param_spec for checks."""
    L, k, d = dims.L, dims.k, dims.d
    head = (d * head_hidden + head_hidden + head_hidden + 1) if head_hidden else (d + 1)
    if kind == "concat":
        return head
    if kind == "jca":
        return 2 * L * L + 4 * k * L + 2 * k * d + head
    return 2 * L * L + 4 * k * L + k * dims.d_v + k * dims.d_a + head


# ---------------------------------------------------------------------------
# plain-matrix building blocks (the taped builders mirror these op for op)
# ---------------------------------------------------------------------------

def joint_representation(xa: Matrix, xv: Matrix) -> Matrix:
    """J = [X_a ; X_v], column-wise with audio first (L x d)."""
    xa = as_matrix(xa, "X_a")
    xv = as_matrix(xv, "X_v")
    if xa.shape[0] != xv.shape[0]:
        raise ShapeError(
            f"joint_representation: clip count mismatch {xa.shape[0]} vs {xv.shape[0]}"
        )
    return linalg.concat_cols(xa, xv)


def joint_correlation(xm: Matrix, J: Matrix, W_jm: Matrix, d: int) -> Matrix:
    """C_m = tanh(X_m^T W_jm J / sqrt(d)), shape d_m x d."""
    prod = linalg.matmul(linalg.matmul(linalg.transpose(xm), W_jm), J)
    return linalg.ew_tanh(linalg.scale(prod, 1.0 / math.sqrt(d)))


def attention_maps(xm: Matrix, C_m: Matrix, W_m: Matrix, W_cm: Matrix) -> Matrix:
    """H_m = relu(W_m X_m + W_cm C_m^T), shape k x d_m."""
    pre = linalg.add(linalg.matmul(W_m, xm), linalg.matmul(W_cm, linalg.transpose(C_m)))
    return linalg.ew_relu(pre)


def attended_features(xm: Matrix, H_m: Matrix, W_hm: Matrix) -> Matrix:
    """X_att,m = W_hm^T H_m + X_m, the residual-connected attended block."""
    return linalg.add(linalg.matmul(linalg.transpose(W_hm), H_m), xm)


# ---------------------------------------------------------------------------
# taped forward graphs
# ---------------------------------------------------------------------------

def _head_graph(tape, tensors, x, head_hidden):
    z = ad.add_rowvec(tape, ad.mm(tape, x, tensors["head_W0"]), tensors["head_b0"])
    if head_hidden:
        z = ad.add_rowvec(tape, ad.mm(tape, ad.relu(tape, z), tensors["head_W1"]),
                          tensors["head_b1"])
    return z


def _jca_graph(tape, tensors, xa, xv, mask, dims, head_hidden):
    inv_sqrt_d = 1.0 / math.sqrt(dims.d)
    J = ad.cat_cols(tape, xa, xv)
    C_a = ad.tanh(tape, ad.smul(
        tape, ad.mm(tape, ad.mm(tape, ad.transpose(tape, xa), tensors["W_ja"]), J),
        inv_sqrt_d))
    C_v = ad.tanh(tape, ad.smul(
        tape, ad.mm(tape, ad.mm(tape, ad.transpose(tape, xv), tensors["W_jv"]), J),
        inv_sqrt_d))
    H_a = ad.relu(tape, ad.add(
        tape, ad.mm(tape, tensors["W_a"], xa),
        ad.mm(tape, tensors["W_ca"], ad.transpose(tape, C_a))))
    H_v = ad.relu(tape, ad.add(
        tape, ad.mm(tape, tensors["W_v"], xv),
        ad.mm(tape, tensors["W_cv"], ad.transpose(tape, C_v))))
    X_att_a = ad.add(tape, ad.mm(tape, ad.transpose(tape, tensors["W_ha"]), H_a), xa)
    X_att_v = ad.add(tape, ad.mm(tape, ad.transpose(tape, tensors["W_hv"]), H_v), xv)
    X_att = ad.cat_cols(tape, X_att_v, X_att_a)  # visual first
    h = ad.mul(tape, X_att, mask) if mask is not None else X_att
    y = _head_graph(tape, tensors, h, head_hidden)
    return y, {"J": J, "C_a": C_a, "C_v": C_v, "H_a": H_a, "H_v": H_v,
               "X_att_a": X_att_a, "X_att_v": X_att_v, "X_att": X_att}


def _vanilla_ca_graph(tape, tensors, xa, xv, mask, dims, head_hidden):
    C_a = ad.tanh(tape, ad.smul(
        tape, ad.mm(tape, ad.mm(tape, ad.transpose(tape, xa), tensors["W_xa"]), xv),
        1.0 / math.sqrt(dims.d_v)))
    C_v = ad.tanh(tape, ad.smul(
        tape, ad.mm(tape, ad.mm(tape, ad.transpose(tape, xv), tensors["W_xv"]), xa),
        1.0 / math.sqrt(dims.d_a)))
    H_a = ad.relu(tape, ad.add(
        tape, ad.mm(tape, tensors["W_a"], xa),
        ad.mm(tape, tensors["W_ca"], ad.transpose(tape, C_a))))
    H_v = ad.relu(tape, ad.add(
        tape, ad.mm(tape, tensors["W_v"], xv),
        ad.mm(tape, tensors["W_cv"], ad.transpose(tape, C_v))))
    X_att_a = ad.add(tape, ad.mm(tape, ad.transpose(tape, tensors["W_ha"]), H_a), xa)
    X_att_v = ad.add(tape, ad.mm(tape, ad.transpose(tape, tensors["W_hv"]), H_v), xv)
    X_att = ad.cat_cols(tape, X_att_v, X_att_a)
    h = ad.mul(tape, X_att, mask) if mask is not None else X_att
    y = _head_graph(tape, tensors, h, head_hidden)
    return y, {"C_a": C_a, "C_v": C_v, "H_a": H_a, "H_v": H_v,
               "X_att_a": X_att_a, "X_att_v": X_att_v, "X_att": X_att}


def _concat_graph(tape, tensors, xa, xv, mask, dims, head_hidden):
    X = ad.cat_cols(tape, xa, xv)  # audio first, like J
    h = ad.mul(tape, X, mask) if mask is not None else X
    y = _head_graph(tape, tensors, h, head_hidden)
    return y, {"X": X}


_GRAPHS = {"jca": _jca_graph, "vanilla-ca": _vanilla_ca_graph, "concat": _concat_graph}


def predictions_graph(tape, tensors, params: ModelParams, xa_arr, xv_arr, mask_arr=None):
    """Build the taped forward for one sub-sequence; returns the L x 1 node.

    `tensors` maps parameter names to tape nodes (leaves during training,
    constants during evaluation).
    """
    xa = ad.constant(xa_arr)
    xv = ad.constant(xv_arr)
    mask = ad.constant(mask_arr) if mask_arr is not None else None
    y, _ = _GRAPHS[params.kind](tape, tensors, xa, xv, mask, params.dims, params.head_hidden)
    return y


# ---------------------------------------------------------------------------
# public forward / predict
# ---------------------------------------------------------------------------

@dataclass
class JcaActivations:
    """Every intermediate of one jca forward pass, for inspection and tests."""

    J: Matrix
    C_a: Matrix
    C_v: Matrix
    H_a: Matrix
    H_v: Matrix
    X_att_a: Matrix
    X_att_v: Matrix
    X_att: Matrix
    y_hat: np.ndarray  # shape (L,)


def _validate_inputs(params: ModelParams, xa, xv):
    dims = params.dims
    xa = as_matrix(xa, "X_a")
    xv = as_matrix(xv, "X_v")
    if xa.shape != (dims.L, dims.d_a):
        raise ShapeError(f"X_a: expected {(dims.L, dims.d_a)}, got {tuple(xa.shape)}")
    if xv.shape != (dims.L, dims.d_v):
        raise ShapeError(f"X_v: expected {(dims.L, dims.d_v)}, got {tuple(xv.shape)}")
    return xa, xv


def _check_stage(name: str, value: np.ndarray):
    if not np.isfinite(value).all():
        raise NumericError(f"forward: non-finite values at stage {name}")


def forward(params: ModelParams, xa, xv, dropout_mask=None) -> JcaActivations:
    """Full jca forward pass retaining all intermediates.

    dropout_mask, when given, is an L x d matrix with entries in
    {0, 1/(1-p)} (inverted dropout) applied to X_att before the head.
    """
    if params.kind != "jca":
        raise ConfigError(f"forward: params are for kind {params.kind!r}, expected 'jca'")
    xa, xv = _validate_inputs(params, xa, xv)
    mask = None
    if dropout_mask is not None:
        mask = as_matrix(dropout_mask, "dropout_mask", min_cols=1)
        if mask.shape != (params.dims.L, params.dims.d):
            raise ShapeError(
                f"dropout_mask: expected {(params.dims.L, params.dims.d)}, got {tuple(mask.shape)}"
            )
    tape = ad.Tape()
    tensors = {name: ad.constant(val) for name, val in params.tensors.items()}
    y, acts = _jca_graph(tape, tensors, ad.constant(xa), ad.constant(xv),
                         ad.constant(mask) if mask is not None else None,
                         params.dims, params.head_hidden)
    for name in ("C_a", "C_v", "H_a", "H_v", "X_att"):
        _check_stage(name, acts[name].value)
    _check_stage("y_hat", y.value)
    return JcaActivations(
        J=acts["J"].value, C_a=acts["C_a"].value, C_v=acts["C_v"].value,
        H_a=acts["H_a"].value, H_v=acts["H_v"].value,
        X_att_a=acts["X_att_a"].value, X_att_v=acts["X_att_v"].value,
        X_att=acts["X_att"].value, y_hat=y.value[:, 0].copy(),
    )


def _plain_predictions(params: ModelParams, xa, xv) -> np.ndarray:
    xa, xv = _validate_inputs(params, xa, xv)
    tape = ad.Tape()
    tensors = {name: ad.constant(val) for name, val in params.tensors.items()}
    y, _ = _GRAPHS[params.kind](tape, tensors, ad.constant(xa), ad.constant(xv),
                                None, params.dims, params.head_hidden)
    _check_stage("y_hat", y.value)
    return y.value[:, 0].copy()


def concat_forward(params: ModelParams, xa, xv) -> np.ndarray:
    """Concatenation baseline: head over [X_a ; X_v]; unclipped predictions."""
    if params.kind != "concat":
        raise ConfigError(f"concat_forward: params are for kind {params.kind!r}")
    return _plain_predictions(params, xa, xv)


def vanilla_ca_forward(params: ModelParams, xa, xv) -> np.ndarray:
    """Cross-attention baseline (opposite-modality correlation); unclipped."""
    if params.kind != "vanilla-ca":
        raise ConfigError(f"vanilla_ca_forward: params are for kind {params.kind!r}")
    return _plain_predictions(params, xa, xv)


def predict(params: ModelParams, xa, xv) -> np.ndarray:
    """Inference for any model kind: forward without dropout, clipped to [-1, 1]."""
    return np.clip(_plain_predictions(params, xa, xv), -1.0, 1.0)
