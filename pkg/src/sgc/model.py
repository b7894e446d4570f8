"""The staged spatial graph-convolution model and its variants.

Modes:
  staged        bond-only stage, then bond+distance stage, ligand gather
  ligand_only   staged pipeline restricted to ligand-only systems
  single_update one stage over every edge type, ligand gather
  ggnn_plain    one stage over every edge type, gather over all rows
"""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field

import numpy as np

from . import diffcore as dc
from .chemio import DEFAULT_ELEMENT_VOCAB, featurize
from .errors import ConfigError, NumericError
from .graphbuild import EdgeSchema, GraphTensors, bond_only_view, build_graph
from .layers import (EdgeMessageNet, FCStack, GatherGate, GRUCell, fc_forward,
                     graph_gather, gru_update, message_pass, per_row_gate)

MODES = ("staged", "single_update", "ligand_only", "ggnn_plain")
TASK_KINDS = ("regression", "multitask_classification")


@dataclass
class ModelConfig:
    mode: str = "staged"
    task_count: int = 1
    task_kind: str = "regression"
    f_bond: int = 64
    f_spatial: int = 64
    bond_K: int = 1
    spatial_K: int = 1
    f_gather: int = 64
    K: int = 2
    fc_widths: tuple = (32, 1)
    dropout: float = 0.0
    message_kind: str = "mlp"
    share_bond_messages: bool = False
    element_vocab: tuple = DEFAULT_ELEMENT_VOCAB
    schema: EdgeSchema = field(default_factory=EdgeSchema)
    seed: int = 0

    def __post_init__(self):
        if self.mode not in MODES:
            raise ConfigError(f"unknown mode {self.mode!r}")
        if self.task_kind not in TASK_KINDS:
            raise ConfigError(f"unknown task kind {self.task_kind!r}")
        if self.fc_widths[-1] != self.task_count:
            raise ConfigError(
                f"final FC width {self.fc_widths[-1]} != task count {self.task_count}")

    def to_json(self):
        d = asdict(self)
        d["schema"] = self.schema.to_dict()
        d["fc_widths"] = list(self.fc_widths)
        d["element_vocab"] = list(self.element_vocab)
        return json.dumps(d, indent=2)

    @classmethod
    def from_json(cls, text):
        d = json.loads(text)
        d["schema"] = EdgeSchema.from_dict(d["schema"])
        d["fc_widths"] = tuple(d["fc_widths"])
        d["element_vocab"] = tuple(d["element_vocab"])
        return cls(**d)


class PotentialNetModel:
    def __init__(self, config: ModelConfig, f_in=None):
        self.config = config
        cfg = config
        if f_in is None:
            from .chemio import feature_width
            f_in = feature_width(cfg.element_vocab)
        self.f_in = f_in
        rng = np.random.default_rng(cfg.seed)
        schema = cfg.schema
        dtype = np.float32

        if cfg.mode in ("staged", "ligand_only"):
            self.bond_nets = EdgeMessageNet("bond_msg", f_in, schema.n_bond_types,
                                            rng, kind=cfg.message_kind, dtype=dtype)
            self.bond_gru = GRUCell("bond_gru", f_in, rng, dtype=dtype)
            self.bond_gate = GatherGate("bond_gate", f_in, f_in, cfg.f_bond,
                                        rng, dtype=dtype)
            head_in = cfg.f_bond
            if cfg.spatial_K > 0:
                if cfg.share_bond_messages:
                    if cfg.f_bond != f_in:
                        raise ConfigError(
                            "sharing bond message nets requires f_bond == f_in "
                            f"({cfg.f_bond} != {f_in})")
                    self.spatial_nets = EdgeMessageNet(
                        "spatial_msg", cfg.f_bond, schema.n_edge_types, rng,
                        kind=cfg.message_kind, dtype=dtype)
                    self.spatial_nets.nets[:schema.n_bond_types] = \
                        self.bond_nets.nets[:schema.n_bond_types]
                else:
                    self.spatial_nets = EdgeMessageNet(
                        "spatial_msg", cfg.f_bond, schema.n_edge_types, rng,
                        kind=cfg.message_kind, dtype=dtype)
                self.spatial_gru = GRUCell("spatial_gru", cfg.f_bond, rng, dtype=dtype)
                self.spatial_gate = GatherGate("spatial_gate", cfg.f_bond,
                                               cfg.f_bond, cfg.f_spatial, rng,
                                               dtype=dtype)
                head_in = cfg.f_spatial
        else:
            self.nets = EdgeMessageNet("msg", f_in, schema.n_edge_types, rng,
                                       kind=cfg.message_kind, dtype=dtype)
            self.gru = GRUCell("gru", f_in, rng, dtype=dtype)
            self.gate = GatherGate("gate", f_in, f_in, cfg.f_gather, rng, dtype=dtype)
            head_in = cfg.f_gather

        self.head = FCStack("head", (head_in,) + tuple(cfg.fc_widths), rng,
                            dtype=dtype)

    def parameters(self):
        params = []
        cfg = self.config
        if cfg.mode in ("staged", "ligand_only"):
            params += self.bond_nets.parameters()
            params += self.bond_gru.parameters()
            params += self.bond_gate.parameters()
            if cfg.spatial_K > 0:
                seen = {id(p) for p in params}
                params += [p for p in self.spatial_nets.parameters()
                           if id(p) not in seen]
                params += self.spatial_gru.parameters()
                params += self.spatial_gate.parameters()
        else:
            params += self.nets.parameters()
            params += self.gru.parameters()
            params += self.gate.parameters()
        params += self.head.parameters()
        return params

    def state_dict(self):
        return {p.name: p.value.copy() for p in self.parameters()}

    def load_state_dict(self, arrays):
        for p in self.parameters():
            if p.name not in arrays:
                raise ConfigError(f"checkpoint missing parameter {p.name!r}")
            if tuple(arrays[p.name].shape) != tuple(p.value.shape):
                raise ConfigError(
                    f"checkpoint shape {arrays[p.name].shape} != model shape "
                    f"{p.value.shape} for {p.name!r}")
            p.value = arrays[p.name]

    def _check_graph(self, g: GraphTensors):
        cfg = self.config
        if g.n_edge_types != cfg.schema.n_edge_types:
            raise ConfigError(
                f"graph has {g.n_edge_types} edge types, model expects "
                f"{cfg.schema.n_edge_types}")
        if g.f_in != self.f_in:
            raise ConfigError(f"graph features f={g.f_in}, model expects {self.f_in}")
        if cfg.mode == "ligand_only" and g.n_ligand != g.n_atoms:
            raise ConfigError("ligand_only mode requires ligand-only systems")

    def forward(self, g: GraphTensors, train=False, rng=None):
        """Returns a 1 x T prediction node."""
        self._check_graph(g)
        cfg = self.config
        if train and cfg.dropout > 0 and rng is None:
            raise ConfigError("training forward with dropout requires an rng")
        x = dc.constant(g.x)
        ligand_rows = np.arange(g.n_ligand)

        if cfg.mode in ("staged", "ligand_only"):
            bonds = bond_only_view(g)
            h = x
            for _ in range(cfg.bond_K):
                m = message_pass(bonds.A, h, self.bond_nets)
                h = gru_update(self.bond_gru, h, m)
            h_b = per_row_gate(self.bond_gate, h, x)
            if cfg.spatial_K > 0:
                h = h_b
                for _ in range(cfg.spatial_K):
                    m = message_pass(g.A, h, self.spatial_nets)
                    h = gru_update(self.spatial_gru, h, m)
                h_sp = per_row_gate(self.spatial_gate, h, h_b)
            else:
                h_sp = h_b
            pooled = dc.row_sum(dc.select_rows(h_sp, ligand_rows))
        else:
            h = x
            for _ in range(cfg.K):
                m = message_pass(g.A, h, self.nets)
                h = gru_update(self.gru, h, m)
            if cfg.mode == "ggnn_plain":
                pooled = graph_gather(self.gate, h, x, np.arange(g.n_atoms))
            else:
                pooled = graph_gather(self.gate, h, x, ligand_rows)

        return fc_forward(self.head, pooled, cfg.dropout, train, rng)


def loss(pred, labels, kind="regression"):
    """Scalar loss over the present (non-None) tasks of one sample."""
    labels = list(labels)
    if len(labels) != pred.value.shape[1]:
        raise ConfigError(f"label vector length {len(labels)} != task count "
                          f"{pred.value.shape[1]}")
    present = [k for k, v in enumerate(labels) if v is not None]
    if not present:
        raise NumericError("all labels absent for sample")
    y = np.array([[labels[k] for k in present]], dtype=pred.value.dtype)
    sel = dc.select_cols(pred, present)
    if kind == "regression":
        return dc.mean(dc.squared_error(sel, y))
    if kind == "multitask_classification":
        return dc.mean(dc.bce_with_logits(sel, y))
    raise ConfigError(f"unknown loss kind {kind!r}")


def predict_batch(model: PotentialNetModel, systems, schema=None):
    """Eval-mode predictions, one row per input system."""
    if schema is None:
        schema = model.config.schema
    rows = []
    for s in systems:
        try:
            x = featurize(s, model.config.element_vocab)
            g = build_graph(s, x, schema)
            rows.append(model.forward(g, train=False).value[0])
        except Exception as exc:
            raise type(exc)(f"sample {s.sample_id!r}: {exc}") from exc
    return np.vstack(rows)
