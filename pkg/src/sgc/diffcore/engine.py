"""Minimal dense reverse-mode autodiff on numpy arrays.

Values are stored in float32 by default; reductions accumulate in float64
before casting back. Graphs built in float64 (pass float64 arrays in) stay
float64, which the gradient-check tests rely on.
"""

from __future__ import annotations

import numpy as np

from ..errors import ConfigError, ShapeError


class Node:
    """A value in the computation graph with lazily-allocated gradient."""

    __slots__ = ("value", "grad", "parents", "_backward")

    def __init__(self, value, parents=(), backward=None):
        self.value = np.asarray(value)
        self.grad = None
        self.parents = parents
        self._backward = backward

    @property
    def shape(self):
        return self.value.shape

    def ensure_grad(self):
        if self.grad is None:
            self.grad = np.zeros_like(self.value)
        return self.grad


def constant(value, dtype=np.float32):
    return Node(np.asarray(value, dtype=dtype))


def leaf(value, dtype=np.float32):
    """A differentiable leaf (parameter value)."""
    node = Node(np.asarray(value, dtype=dtype))
    node.ensure_grad()
    return node


class Parameter:
    """Named differentiable leaf participating in optimizer state."""

    def __init__(self, name, value):
        self.name = name
        self.node = leaf(value, dtype=np.asarray(value).dtype)

    @property
    def value(self):
        return self.node.value

    @value.setter
    def value(self, v):
        self.node.value = np.asarray(v, dtype=self.node.value.dtype)

    @property
    def grad(self):
        return self.node.ensure_grad()

    def zero_grad(self):
        self.node.grad = np.zeros_like(self.node.value)


def init_uniform(rng, shape, fan_in, dtype=np.float32):
    """Weight init: uniform(-1/sqrt(fan_in), +1/sqrt(fan_in))."""
    bound = 1.0 / np.sqrt(max(fan_in, 1))
    return rng.uniform(-bound, bound, size=shape).astype(dtype)


def _check_2d(a, op):
    if a.value.ndim != 2:
        raise ShapeError(f"{op}: expected 2-d operand, got shape {a.value.shape}")


def matmul(a: Node, b: Node):
    if a.value.ndim != 2 or b.value.ndim != 2 or a.value.shape[1] != b.value.shape[0]:
        raise ShapeError(f"matmul: incompatible shapes {a.value.shape} x {b.value.shape}")
    out = Node(a.value @ b.value, parents=(a, b))

    def backward():
        if a.grad is not None:
            a.grad += out.grad @ b.value.T
        if b.grad is not None:
            b.grad += a.value.T @ out.grad
    out._backward = backward
    return out


def add(a: Node, b: Node):
    """Elementwise add; b may broadcast over the leading dimension."""
    av, bv = a.value, b.value
    if av.shape != bv.shape:
        if bv.shape != av.shape[-bv.ndim:] and bv.shape != (1,) + av.shape[1:]:
            raise ShapeError(f"add: shapes {av.shape} and {bv.shape} not broadcastable")
    out = Node(av + bv, parents=(a, b))

    def backward():
        if a.grad is not None:
            a.grad += out.grad
        if b.grad is not None:
            g = out.grad
            while g.ndim > b.value.ndim:
                g = g.sum(axis=0)
            for axis, dim in enumerate(b.value.shape):
                if dim == 1 and g.shape[axis] != 1:
                    g = g.sum(axis=axis, keepdims=True)
            b.grad += g
    out._backward = backward
    return out


def sub(a: Node, b: Node):
    return add(a, scale(b, -1.0))


def mul(a: Node, b: Node):
    if a.value.shape != b.value.shape:
        raise ShapeError(f"mul: shapes {a.value.shape} and {b.value.shape} differ")
    out = Node(a.value * b.value, parents=(a, b))

    def backward():
        if a.grad is not None:
            a.grad += out.grad * b.value
        if b.grad is not None:
            b.grad += out.grad * a.value
    out._backward = backward
    return out


def scale(a: Node, s: float):
    out = Node(a.value * a.value.dtype.type(s), parents=(a,))

    def backward():
        if a.grad is not None:
            a.grad += out.grad * a.value.dtype.type(s)
    out._backward = backward
    return out


def sigmoid(a: Node):
    v = a.value
    out_v = np.where(v >= 0, 1.0 / (1.0 + np.exp(-np.abs(v))),
                     np.exp(-np.abs(v)) / (1.0 + np.exp(-np.abs(v)))).astype(v.dtype)
    out = Node(out_v, parents=(a,))

    def backward():
        if a.grad is not None:
            a.grad += out.grad * out.value * (1.0 - out.value)
    out._backward = backward
    return out


def tanh(a: Node):
    out = Node(np.tanh(a.value), parents=(a,))

    def backward():
        if a.grad is not None:
            a.grad += out.grad * (1.0 - out.value ** 2)
    out._backward = backward
    return out


def relu(a: Node):
    out = Node(np.maximum(a.value, 0), parents=(a,))

    def backward():
        if a.grad is not None:
            a.grad += out.grad * (a.value > 0)
    out._backward = backward
    return out


def row_sum(a: Node):
    """Sum over rows of a 2-d node -> 1 x f (float64 accumulation)."""
    _check_2d(a, "row_sum")
    out_v = a.value.sum(axis=0, dtype=np.float64, keepdims=True).astype(a.value.dtype)
    out = Node(out_v, parents=(a,))

    def backward():
        if a.grad is not None:
            a.grad += np.broadcast_to(out.grad, a.value.shape)
    out._backward = backward
    return out


def select_rows(a: Node, rows):
    _check_2d(a, "select_rows")
    rows = np.asarray(rows, dtype=np.intp)
    if rows.size == 0:
        raise ConfigError("select_rows: empty row subset")
    out = Node(a.value[rows], parents=(a,))

    def backward():
        if a.grad is not None:
            np.add.at(a.grad, rows, out.grad)
    out._backward = backward
    return out


def select_cols(a: Node, cols):
    _check_2d(a, "select_cols")
    cols = np.asarray(cols, dtype=np.intp)
    if cols.size == 0:
        raise ConfigError("select_cols: empty column subset")
    out = Node(a.value[:, cols], parents=(a,))

    def backward():
        if a.grad is not None:
            np.add.at(a.grad, (slice(None), cols), out.grad)
    out._backward = backward
    return out


def concat(a: Node, b: Node):
    """Concatenate along the last dimension."""
    if a.value.shape[:-1] != b.value.shape[:-1]:
        raise ShapeError(f"concat: shapes {a.value.shape} and {b.value.shape} "
                         "differ off the last axis")
    out = Node(np.concatenate([a.value, b.value], axis=-1), parents=(a, b))
    split = a.value.shape[-1]

    def backward():
        if a.grad is not None:
            a.grad += out.grad[..., :split]
        if b.grad is not None:
            b.grad += out.grad[..., split:]
    out._backward = backward
    return out


def mean(a: Node):
    out_v = np.asarray(a.value.mean(dtype=np.float64), dtype=a.value.dtype).reshape(())
    out = Node(out_v, parents=(a,))

    def backward():
        if a.grad is not None:
            a.grad += out.grad / a.value.size
    out._backward = backward
    return out


def total_sum(a: Node):
    out_v = np.asarray(a.value.sum(dtype=np.float64), dtype=a.value.dtype).reshape(())
    out = Node(out_v, parents=(a,))

    def backward():
        if a.grad is not None:
            a.grad += out.grad
    out._backward = backward
    return out


def dropout(a: Node, p, train, rng=None):
    """Inverted dropout; identity when p == 0 or in eval mode."""
    if not 0.0 <= p < 1.0:
        raise ConfigError(f"dropout p must be in [0, 1), got {p}")
    if not train or p == 0.0:
        out = Node(a.value, parents=(a,))

        def backward_id():
            if a.grad is not None:
                a.grad += out.grad
        out._backward = backward_id
        return out
    if rng is None:
        raise ConfigError("dropout in train mode requires an rng")
    mask = (rng.random(a.value.shape) >= p).astype(a.value.dtype) / (1.0 - p)
    out = Node(a.value * mask, parents=(a,))

    def backward():
        if a.grad is not None:
            a.grad += out.grad * mask
    out._backward = backward
    return out


def bce_with_logits(logits: Node, targets):
    """Elementwise binary cross-entropy on logits, numerically stable:
    max(z, 0) - z*y + log(1 + exp(-|z|))."""
    y = np.asarray(targets, dtype=logits.value.dtype)
    if y.shape != logits.value.shape:
        raise ShapeError(f"bce: shapes {logits.value.shape} and {y.shape} differ")
    z = logits.value
    out_v = np.maximum(z, 0) - z * y + np.log1p(np.exp(-np.abs(z)))
    out = Node(out_v.astype(z.dtype), parents=(logits,))

    def backward():
        if logits.grad is not None:
            sig = np.where(z >= 0, 1.0 / (1.0 + np.exp(-np.abs(z))),
                           np.exp(-np.abs(z)) / (1.0 + np.exp(-np.abs(z))))
            logits.grad += out.grad * (sig - y).astype(z.dtype)
    out._backward = backward
    return out


def squared_error(pred: Node, targets):
    y = np.asarray(targets, dtype=pred.value.dtype)
    if y.shape != pred.value.shape:
        raise ShapeError(f"squared_error: shapes {pred.value.shape} and {y.shape} differ")
    diff = pred.value - y
    out = Node((diff ** 2).astype(pred.value.dtype), parents=(pred,))

    def backward():
        if pred.grad is not None:
            pred.grad += out.grad * 2.0 * diff
    out._backward = backward
    return out


def backward(root: Node):
    """Reverse-mode sweep from a scalar root; accumulates into leaf grads."""
    if root.value.size != 1:
        raise ShapeError(f"backward: root must be scalar, got shape {root.value.shape}")
    order = []
    visited = set()
    stack = [(root, False)]
    while stack:
        node, processed = stack.pop()
        if processed:
            order.append(node)
            continue
        if id(node) in visited:
            continue
        visited.add(id(node))
        stack.append((node, True))
        for p in node.parents:
            if id(p) not in visited:
                stack.append((p, False))
    for node in order:
        if node is not root and node._backward is not None:
            node.grad = np.zeros_like(node.value)
    root.grad = np.ones_like(root.value)
    for node in reversed(order):
        if node._backward is not None:
            node._backward()
