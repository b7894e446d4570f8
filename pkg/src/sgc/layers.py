"""Neural building blocks: GRU update, per-edge-type message passing,
gated graph gather, and the fully connected head.

Layers are stateless given their parameters; forward passes build fresh
autodiff graphs over shared read-only parameters.
"""

from __future__ import annotations

import numpy as np

from . import diffcore as dc
from .errors import ConfigError, ShapeError


class Linear:
    """Affine map h @ W + b (bias optional)."""

    def __init__(self, name, f_in, f_out, rng, bias=True, dtype=np.float32):
        self.W = dc.Parameter(f"{name}.W", dc.init_uniform(rng, (f_in, f_out), f_in, dtype))
        self.b = dc.Parameter(f"{name}.b", np.zeros((1, f_out), dtype=dtype)) if bias else None

    def __call__(self, h):
        out = dc.matmul(h, self.W.node)
        if self.b is not None:
            out = dc.add(out, self.b.node)
        return out

    def parameters(self):
        return [self.W] + ([self.b] if self.b is not None else [])


class GRUCell:
    """Gated recurrent unit over rows: inputs (message m, hidden h), both N x f."""

    def __init__(self, name, f, rng, dtype=np.float32):
        self.f = f
        for gate in ("z", "r", "h"):
            setattr(self, f"W_{gate}", dc.Parameter(
                f"{name}.W_{gate}", dc.init_uniform(rng, (f, f), f, dtype)))
            setattr(self, f"U_{gate}", dc.Parameter(
                f"{name}.U_{gate}", dc.init_uniform(rng, (f, f), f, dtype)))
            setattr(self, f"b_{gate}", dc.Parameter(
                f"{name}.b_{gate}", np.zeros((1, f), dtype=dtype)))

    def parameters(self):
        return [getattr(self, f"{k}_{g}") for g in ("z", "r", "h")
                for k in ("W", "U", "b")]


def gru_update(cell: GRUCell, h, m):
    """h' = (1 - z) * h + z * tanh(W_h m + U_h (r * h) + b_h)."""
    if h.value.shape != m.value.shape or h.value.shape[1] != cell.f:
        raise ShapeError(f"gru_update: h {h.value.shape}, m {m.value.shape}, "
                         f"cell width {cell.f}")
    z = dc.sigmoid(dc.add(dc.add(dc.matmul(m, cell.W_z.node),
                                 dc.matmul(h, cell.U_z.node)), cell.b_z.node))
    r = dc.sigmoid(dc.add(dc.add(dc.matmul(m, cell.W_r.node),
                                 dc.matmul(h, cell.U_r.node)), cell.b_r.node))
    h_cand = dc.tanh(dc.add(dc.add(dc.matmul(m, cell.W_h.node),
                                   dc.matmul(dc.mul(r, h), cell.U_h.node)),
                            cell.b_h.node))
    one_minus_z = dc.add(dc.scale(z, -1.0), dc.constant(
        np.ones((1, cell.f), dtype=h.value.dtype), dtype=h.value.dtype))
    return dc.add(dc.mul(one_minus_z, h), dc.mul(z, h_cand))


class EdgeMessageNet:
    """One message function per edge type: a linear map or a one-hidden-layer
    ReLU network, both f -> f."""

    def __init__(self, name, f, n_edge_types, rng, kind="mlp", dtype=np.float32):
        if kind not in ("linear", "mlp"):
            raise ConfigError(f"unknown message net kind {kind!r}")
        self.kind = kind
        self.f = f
        self.n_edge_types = n_edge_types
        self.nets = []
        for e in range(n_edge_types):
            if kind == "linear":
                self.nets.append((Linear(f"{name}.e{e}", f, f, rng, bias=False,
                                         dtype=dtype),))
            else:
                self.nets.append((Linear(f"{name}.e{e}.l1", f, f, rng, dtype=dtype),
                                  Linear(f"{name}.e{e}.l2", f, f, rng, dtype=dtype)))

    def message(self, e, h):
        net = self.nets[e]
        if self.kind == "linear":
            return net[0](h)
        return net[1](dc.relu(net[0](h)))

    def parameters(self):
        return [p for net in self.nets for layer in net for p in layer.parameters()]


def message_pass(A, h, nets: EdgeMessageNet):
    """m_i = sum_e sum_j A[i, j, e] * NN_e(h_j), as slice-wise matrix products.

    `A` is a constant (N, N, N_et) array or a GraphTensors instance.
    """
    if hasattr(A, "A"):
        A = A.A
    A = np.asarray(A)
    if A.ndim != 3 or A.shape[2] != nets.n_edge_types:
        raise ShapeError(f"message_pass: adjacency {A.shape} vs "
                         f"{nets.n_edge_types} message nets")
    if A.shape[0] != h.value.shape[0]:
        raise ShapeError(f"message_pass: adjacency {A.shape} vs h {h.value.shape}")
    total = None
    for e in range(nets.n_edge_types):
        slice_e = dc.constant(A[:, :, e], dtype=h.value.dtype)
        contrib = dc.matmul(slice_e, nets.message(e, h))
        total = contrib if total is None else dc.add(total, contrib)
    return total


class GatherGate:
    """Gated reduction nets: i on concat(h_final, h_initial), j on h_final."""

    def __init__(self, name, f_final, f_initial, f_out, rng, dtype=np.float32):
        self.i_net = Linear(f"{name}.i", f_final + f_initial, f_out, rng, dtype=dtype)
        self.j_net = Linear(f"{name}.j", f_final, f_out, rng, dtype=dtype)

    def parameters(self):
        return self.i_net.parameters() + self.j_net.parameters()


def per_row_gate(gate: GatherGate, h_final, h_initial):
    """sigma(i(concat)) * j(h_final), rowwise; N x f_out feature map."""
    gated = dc.sigmoid(gate.i_net(dc.concat(h_final, h_initial)))
    return dc.mul(gated, gate.j_net(h_final))


def graph_gather(gate: GatherGate, h_final, h_initial, rows):
    """Sum the gated rows in `rows` -> 1 x f_out."""
    # canonical row order so the sum is independent of how rows are listed
    rows = np.sort(np.asarray(rows, dtype=np.intp))
    if rows.size == 0:
        raise ConfigError("graph_gather: empty row subset")
    gated = per_row_gate(gate, h_final, h_initial)
    return dc.row_sum(dc.select_rows(gated, rows))


class FCStack:
    """ReLU-activated fully connected layers; the last layer is linear."""

    def __init__(self, name, widths, rng, dtype=np.float32):
        if len(widths) < 2:
            raise ConfigError("FC stack needs at least input and output widths")
        self.layers = [Linear(f"{name}.fc{k}", widths[k], widths[k + 1], rng,
                              dtype=dtype)
                       for k in range(len(widths) - 1)]

    def parameters(self):
        return [p for layer in self.layers for p in layer.parameters()]


def fc_forward(stack: FCStack, x, dropout_p=0.0, train=False, rng=None):
    h = x
    for k, layer in enumerate(stack.layers):
        h = dc.dropout(h, dropout_p, train, rng)
        h = layer(h)
        if k < len(stack.layers) - 1:
            h = dc.relu(h)
    return h
