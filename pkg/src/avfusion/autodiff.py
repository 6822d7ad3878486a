"""Minimal reverse-mode tape over the strict matrix kernel.

Nodes are created eagerly, so the tape's insertion order is already a
topological order and backward() is a single reverse sweep. Forward values
are computed with the linalg kernels, which keeps any plain forward pass and
its taped twin bitwise identical. Backward products use BLAS matmul: the
gradient contract is agreement with finite differences, not a fixed
summation order, and the sweep is still deterministic on one platform.

Only what the fusion models and the CCC loss need is implemented; there is
no broadcasting beyond the explicit row-vector/scalar helpers and no
higher-order differentiation.
"""

from __future__ import annotations

import numpy as np

from . import linalg
from .errors import ShapeError


class Node:
    """One tape entry: a value, its accumulated gradient, and a vjp hook."""

    __slots__ = ("value", "grad", "track", "parents", "op", "name", "_vjp")

    def __init__(self, value, track, parents=(), op="const", name=None, vjp=None):
        self.value = value
        self.grad = None
        self.track = track
        self.parents = parents
        self.op = op
        self.name = name
        self._vjp = vjp


class Tape:
    __slots__ = ("nodes",)

    def __init__(self):
        self.nodes: list[Node] = []

    def _record(self, value, parents, op, vjp):
        track = any(p.track for p in parents)
        node = Node(value, track, parents, op, vjp=vjp if track else None)
        if track:
            self.nodes.append(node)
        return node

    def backward(self, root: Node) -> None:
        """Accumulate d(root)/d(leaf) into every tracked ancestor's .grad."""
        if root.value.shape != (1, 1):
            raise ShapeError(f"backward: root must be 1x1, got {root.value.shape}")
        root.grad = np.ones((1, 1))
        for node in reversed(self.nodes):
            if node.grad is not None and node._vjp is not None:
                node._vjp(node.grad)


def _acc(node: Node, g: np.ndarray) -> None:
    if not node.track:
        return
    if node.grad is None:
        node.grad = g.copy()
    else:
        node.grad += g


def constant(value) -> Node:
    """Untracked node; gradients never flow into it."""
    return Node(np.asarray(value, dtype=np.float64), track=False)


def leaf(tape: Tape, value, name: str) -> Node:
    """Tracked leaf (a trainable parameter)."""
    node = Node(np.asarray(value, dtype=np.float64), track=True, op="leaf", name=name)
    tape.nodes.append(node)
    return node


def mm(tape: Tape, x: Node, y: Node) -> Node:
    value = linalg.matmul(x.value, y.value)

    def vjp(g):
        _acc(x, g @ y.value.T)
        _acc(y, x.value.T @ g)

    return tape._record(value, (x, y), "mm", vjp)


def transpose(tape: Tape, x: Node) -> Node:
    value = linalg.transpose(x.value)

    def vjp(g):
        _acc(x, np.ascontiguousarray(g.T))

    return tape._record(value, (x,), "transpose", vjp)


def tanh(tape: Tape, x: Node) -> Node:
    value = linalg.ew_tanh(x.value)

    def vjp(g):
        # reuse the stored activation: d tanh = 1 - tanh^2
        _acc(x, g * (1.0 - value * value))

    return tape._record(value, (x,), "tanh", vjp)


def relu(tape: Tape, x: Node) -> Node:
    value = linalg.ew_relu(x.value)

    def vjp(g):
        # derivative at exactly 0 is defined as 0
        _acc(x, g * (x.value > 0.0))

    return tape._record(value, (x,), "relu", vjp)


def add(tape: Tape, x: Node, y: Node) -> Node:
    value = linalg.add(x.value, y.value)

    def vjp(g):
        _acc(x, g)
        _acc(y, g)

    return tape._record(value, (x, y), "add", vjp)


def sub(tape: Tape, x: Node, y: Node) -> Node:
    value = linalg.sub(x.value, y.value)

    def vjp(g):
        _acc(x, g)
        _acc(y, -g)

    return tape._record(value, (x, y), "sub", vjp)


def mul(tape: Tape, x: Node, y: Node) -> Node:
    value = linalg.ew_mul(x.value, y.value)

    def vjp(g):
        _acc(x, g * y.value)
        _acc(y, g * x.value)

    return tape._record(value, (x, y), "mul", vjp)


def smul(tape: Tape, x: Node, s: float) -> Node:
    value = linalg.scale(x.value, s)

    def vjp(g):
        _acc(x, g * s)

    return tape._record(value, (x,), "smul", vjp)


def cat_cols(tape: Tape, x: Node, y: Node) -> Node:
    value = linalg.concat_cols(x.value, y.value)
    split = x.value.shape[1]

    def vjp(g):
        _acc(x, np.ascontiguousarray(g[:, :split]))
        _acc(y, np.ascontiguousarray(g[:, split:]))

    return tape._record(value, (x, y), "cat_cols", vjp)


def cat_rows(tape: Tape, parts: list[Node]) -> Node:
    value = linalg.concat_rows([p.value for p in parts])
    offsets = np.cumsum([0] + [p.value.shape[0] for p in parts])

    def vjp(g):
        for part, lo, hi in zip(parts, offsets[:-1], offsets[1:]):
            _acc(part, np.ascontiguousarray(g[lo:hi, :]))

    return tape._record(value, tuple(parts), "cat_rows", vjp)


def add_rowvec(tape: Tape, x: Node, r: Node) -> Node:
    """x (m x n) plus a 1 x n row vector added to every row."""
    if r.value.shape != (1, x.value.shape[1]):
        raise ShapeError(
            f"add_rowvec: expected 1x{x.value.shape[1]} row, got {r.value.shape}"
        )
    value = linalg._freeze(x.value + r.value)

    def vjp(g):
        _acc(x, g)
        _acc(r, g.sum(axis=0, keepdims=True))

    return tape._record(value, (x, r), "add_rowvec", vjp)


def sub_scalar(tape: Tape, x: Node, s: Node) -> Node:
    """x minus a 1 x 1 scalar node, subtracted from every entry."""
    if s.value.shape != (1, 1):
        raise ShapeError(f"sub_scalar: expected 1x1 scalar, got {s.value.shape}")
    value = linalg._freeze(x.value - s.value)

    def vjp(g):
        _acc(x, g)
        _acc(s, np.array([[-g.sum()]]))

    return tape._record(value, (x, s), "sub_scalar", vjp)


def sum_all(tape: Tape, x: Node) -> Node:
    value = linalg._freeze(np.array([[np.sum(x.value)]]))

    def vjp(g):
        _acc(x, np.full(x.value.shape, g[0, 0]))

    return tape._record(value, (x,), "sum_all", vjp)


def div(tape: Tape, x: Node, y: Node) -> Node:
    """Elementwise division of 1 x 1 scalar nodes."""
    if x.value.shape != (1, 1) or y.value.shape != (1, 1):
        raise ShapeError("div: both operands must be 1x1")
    value = linalg._freeze(x.value / y.value)

    def vjp(g):
        _acc(x, g / y.value)
        _acc(y, -g * x.value / (y.value * y.value))

    return tape._record(value, (x, y), "div", vjp)


def param_leaves(node: Node) -> set[str]:
    """Names of all named leaves upstream of node (for kink attribution)."""
    seen: set[int] = set()
    names: set[str] = set()
    stack = [node]
    while stack:
        cur = stack.pop()
        if id(cur) in seen:
            continue
        seen.add(id(cur))
        if cur.op == "leaf" and cur.name is not None:
            names.add(cur.name)
        stack.extend(cur.parents)
    return names
