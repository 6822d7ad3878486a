"""Strict dense float64 matrix kernel.

Every model computation routes through these functions. There is no
broadcasting: any shape mismatch raises ShapeError naming both operands.
Results are fresh C-contiguous float64 arrays with the write flag cleared,
so values behave as immutable and are safe to share across threads.

Matrix products accumulate along the inner index in ascending order
(np.add.accumulate applies the recurrence r[k] = r[k-1] + x[k]), which makes
every product bitwise identical to a naive triple loop and bitwise
reproducible across runs.
"""

from __future__ import annotations

import numpy as np

from .errors import NumericError, ShapeError

# A Matrix is a 2-D, C-contiguous, float64 ndarray. Helpers below validate
# foreign input; outputs of this module satisfy the contract by construction.
Matrix = np.ndarray


def _freeze(arr: np.ndarray) -> np.ndarray:
    arr.flags.writeable = False
    return arr


def as_matrix(obj, name: str = "matrix", min_cols: int = 1) -> Matrix:
    """Validate arbitrary input as a finite 2-D float64 matrix.

    Returns a frozen C-contiguous copy. min_cols=0 admits zero-width blocks,
    which only concatenation accepts.
    """
    arr = np.array(obj, dtype=np.float64, order="C", copy=True)
    if arr.ndim != 2:
        raise ShapeError(f"{name}: expected a 2-D matrix, got ndim={arr.ndim}")
    if arr.shape[0] < 1 or arr.shape[1] < min_cols:
        raise ShapeError(f"{name}: invalid shape {arr.shape}")
    if arr.size and not np.isfinite(arr).all():
        raise NumericError(f"{name}: contains non-finite entries")
    return _freeze(arr)


def matmul(a: Matrix, b: Matrix) -> Matrix:
    """Matrix product with fixed ascending inner-index summation."""
    if a.ndim != 2 or b.ndim != 2 or a.shape[1] != b.shape[0] or a.shape[1] == 0:
        raise ShapeError(
            f"matmul: incompatible shapes {tuple(a.shape)} x {tuple(b.shape)}"
        )
    prod = a[:, :, None] * b[None, :, :]
    out = np.add.accumulate(prod, axis=1)[:, -1, :]
    return _freeze(np.ascontiguousarray(out))


def transpose(a: Matrix) -> Matrix:
    if a.ndim != 2:
        raise ShapeError(f"transpose: expected a 2-D matrix, got ndim={a.ndim}")
    return _freeze(np.ascontiguousarray(a.T))


def ew_tanh(a: Matrix) -> Matrix:
    return _freeze(np.tanh(a))


def ew_relu(a: Matrix) -> Matrix:
    return _freeze(np.maximum(a, 0.0))


def add(a: Matrix, b: Matrix) -> Matrix:
    if a.shape != b.shape:
        raise ShapeError(f"add: shape mismatch {tuple(a.shape)} vs {tuple(b.shape)}")
    return _freeze(a + b)


def sub(a: Matrix, b: Matrix) -> Matrix:
    if a.shape != b.shape:
        raise ShapeError(f"sub: shape mismatch {tuple(a.shape)} vs {tuple(b.shape)}")
    return _freeze(a - b)


def ew_mul(a: Matrix, b: Matrix) -> Matrix:
    if a.shape != b.shape:
        raise ShapeError(f"ew_mul: shape mismatch {tuple(a.shape)} vs {tuple(b.shape)}")
    return _freeze(a * b)


def scale(a: Matrix, s: float) -> Matrix:
    s = float(s)
    if not np.isfinite(s):
        raise NumericError(f"scale: non-finite scalar {s}")
    return _freeze(a * s)


def concat_cols(a: Matrix, b: Matrix) -> Matrix:
    """Column-wise concatenation, a's columns first. Zero-width blocks allowed."""
    if a.ndim != 2 or b.ndim != 2 or a.shape[0] != b.shape[0]:
        raise ShapeError(
            f"concat_cols: row mismatch {tuple(a.shape)} vs {tuple(b.shape)}"
        )
    return _freeze(np.concatenate([a, b], axis=1))


def concat_rows(blocks: list[Matrix]) -> Matrix:
    """Row-wise concatenation of equally wide blocks, in list order."""
    if not blocks:
        raise ShapeError("concat_rows: empty block list")
    cols = blocks[0].shape[1]
    for blk in blocks:
        if blk.ndim != 2 or blk.shape[1] != cols:
            raise ShapeError(
                f"concat_rows: column mismatch {tuple(blk.shape)} vs {cols} columns"
            )
    return _freeze(np.concatenate(blocks, axis=0))
