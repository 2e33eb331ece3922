"""Minimal reverse-mode differentiation tape over numpy arrays.

Only the primitives needed by the unfolded network are supported:
``conv2d_same``, ``conv2d_adjoint``, ``add``, ``sub``, ``neg``, ``mul``
(scalar scaling, including learnable step sizes), ``relu``, ``concat``
and ``sum_squares``.

The module-level functions :func:`conv2d_same`, :func:`conv2d_adjoint`,
:func:`relu` and :func:`concat` accept either plain arrays or :class:`Var`
objects, so the same forward code runs with or without a tape::

    tape = Tape()
    w = tape.leaf(np.ones((3, 3, 1, 1)))
    loss = sum_squares(conv2d_same(x, w))
    grads = tape.backward(loss)
    grads[w.index]
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import raster
from .errors import ShapeError, UnsupportedOpError


@dataclass
class TapeNode:
    op: str
    inputs: tuple
    value: np.ndarray
    saved: dict = field(default_factory=dict)


class Var:
    """Handle to a value recorded on a :class:`Tape`."""

    __array_ufunc__ = None

    def __init__(self, tape, index):
        self.tape = tape
        self.index = index

    @property
    def value(self):
        return self.tape.nodes[self.index].value

    @property
    def shape(self):
        return self.value.shape

    @property
    def dtype(self):
        return self.value.dtype

    def __add__(self, other):
        return _binary("add", self, other)

    def __radd__(self, other):
        return _binary("add", other, self)

    def __sub__(self, other):
        return _binary("sub", self, other)

    def __rsub__(self, other):
        return _binary("sub", other, self)

    def __mul__(self, other):
        return _binary("mul", self, other)

    def __rmul__(self, other):
        return _binary("mul", other, self)

    def __neg__(self):
        return self.tape.record("neg", -self.value, (self.index,))

    def __repr__(self):
        return f"Var(index={self.index}, shape={self.shape})"


class Tape:
    """Append-only record of the forward computation."""

    def __init__(self):
        self.nodes = []

    def leaf(self, value):
        return self.record("leaf", np.asarray(value), ())

    def constant(self, value):
        return self.record("const", np.asarray(value), ())

    def record(self, op, value, inputs, **saved):
        self.nodes.append(TapeNode(op, tuple(inputs), value, saved))
        return Var(self, len(self.nodes) - 1)

    def backward(self, loss):
        """Reverse sweep from a scalar ``loss``; returns a gradient per node index.

        Nodes that do not influence the loss get ``None``.
        """
        if loss.tape is not self:
            raise ValueError("loss was recorded on a different tape")
        if loss.value.size != 1:
            raise ShapeError(f"backward needs a scalar loss, got shape {loss.shape}")
        grads = [None] * len(self.nodes)
        grads[loss.index] = np.ones_like(loss.value)
        for idx in range(loss.index, -1, -1):
            g = grads[idx]
            node = self.nodes[idx]
            if g is None or not node.inputs:
                continue
            rule = _RULES.get(node.op)
            if rule is None:
                raise UnsupportedOpError(f"no backward rule for op {node.op!r}")
            in_values = [self.nodes[i].value for i in node.inputs]
            needs = [self.nodes[i].op != "const" for i in node.inputs]
            for i, gi in zip(node.inputs, rule(g, node, in_values, needs)):
                if gi is None or self.nodes[i].op == "const":
                    continue
                grads[i] = gi if grads[i] is None else grads[i] + gi
        return grads


def _value(x):
    return x.value if isinstance(x, Var) else np.asarray(x)


def _tape_of(*args):
    for a in args:
        if isinstance(a, Var):
            return a.tape
    return None


def _lift(tape, x):
    if isinstance(x, Var):
        if x.tape is not tape:
            raise ValueError("operands recorded on different tapes")
        return x
    return tape.constant(x)


def _binary(op, a, b):
    tape = _tape_of(a, b)
    va, vb = _value(a), _value(b)
    value = {"add": np.add, "sub": np.subtract, "mul": np.multiply}[op](va, vb)
    return tape.record(op, value, (_lift(tape, a).index, _lift(tape, b).index))


def _unbroadcast(g, shape):
    while g.ndim > len(shape):
        g = g.sum(axis=0)
    for axis, n in enumerate(shape):
        if n == 1 and g.shape[axis] != 1:
            g = g.sum(axis=axis, keepdims=True)
    return g


# ---------------------------------------------------------------------------
# Differentiable primitives
# ---------------------------------------------------------------------------

def conv2d_same(x, w):
    tape = _tape_of(x, w)
    value = raster.conv2d_same(_value(x), _value(w))
    if tape is None:
        return value
    return tape.record("conv2d_same", value, (_lift(tape, x).index, _lift(tape, w).index))


def conv2d_adjoint(y, w):
    tape = _tape_of(y, w)
    value = raster.conv2d_adjoint(_value(y), _value(w))
    if tape is None:
        return value
    return tape.record("conv2d_adjoint", value, (_lift(tape, y).index, _lift(tape, w).index))


def relu(x):
    tape = _tape_of(x)
    vx = _value(x)
    mask = vx > 0
    value = np.where(mask, vx, 0).astype(vx.dtype, copy=False)
    if tape is None:
        return value
    return tape.record("relu", value, (x.index,), mask=mask)


def concat(items, axis=-1):
    tape = _tape_of(*items)
    values = [_value(a) for a in items]
    value = np.concatenate(values, axis=axis)
    if tape is None:
        return value
    sizes = [v.shape[axis] for v in values]
    return tape.record(
        "concat", value, tuple(_lift(tape, a).index for a in items), axis=axis, sizes=sizes
    )


def sum_squares(x):
    tape = _tape_of(x)
    vx = _value(x)
    value = np.asarray(np.sum(vx * vx))
    if tape is None:
        return value
    return tape.record("sum_squares", value, (x.index,))


# ---------------------------------------------------------------------------
# Backward rules: (upstream grad, node, input values, needs-grad flags)
# -> one grad (or None) per input
# ---------------------------------------------------------------------------

def _conv_rule(g, node, inputs, needs):
    x, w = inputs
    gx = raster.conv2d_adjoint(g, w) if needs[0] else None
    gw = raster.conv2d_weight_grad(x, g, w.shape[0]) if needs[1] else None
    return gx, gw


def _conv_adjoint_rule(g, node, inputs, needs):
    y, w = inputs
    gy = raster.conv2d_same(g, w) if needs[0] else None
    # <adjoint(y, w), g> = <y, conv(g, w)>, so the weight gradient swaps roles
    gw = raster.conv2d_weight_grad(g, y, w.shape[0]) if needs[1] else None
    return gy, gw


def _add_rule(g, node, inputs, needs):
    a, b = inputs
    return _unbroadcast(g, a.shape), _unbroadcast(g, b.shape)


def _sub_rule(g, node, inputs, needs):
    a, b = inputs
    return _unbroadcast(g, a.shape), _unbroadcast(-g, b.shape)


def _mul_rule(g, node, inputs, needs):
    a, b = inputs
    return _unbroadcast(g * b, a.shape), _unbroadcast(g * a, b.shape)


def _neg_rule(g, node, inputs, needs):
    return (-g,)


def _relu_rule(g, node, inputs, needs):
    return (np.where(node.saved["mask"], g, 0),)


def _concat_rule(g, node, inputs, needs):
    axis = node.saved["axis"]
    bounds = np.cumsum(node.saved["sizes"])[:-1]
    return tuple(np.split(g, bounds, axis=axis))


def _sum_squares_rule(g, node, inputs, needs):
    (x,) = inputs
    return (2.0 * g * x,)


_RULES = {
    "conv2d_same": _conv_rule,
    "conv2d_adjoint": _conv_adjoint_rule,
    "add": _add_rule,
    "sub": _sub_rule,
    "mul": _mul_rule,
    "neg": _neg_rule,
    "relu": _relu_rule,
    "concat": _concat_rule,
    "sum_squares": _sum_squares_rule,
}
