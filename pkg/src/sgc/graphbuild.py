"""Graph tensor construction: distance matrix R and the N x N x N_et
adjacency tensor A in the ligand-first block layout.

Edge types are the bond-order classes followed by the non-covalent
distance bins; bonded pairs never activate a distance slice.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass, field, replace

import numpy as np

from .chemio import BOND_ORDERS, MolecularSystem
from .errors import ConfigError, ParseError

DEFAULT_DISTANCE_BINS = ((0.0, 2.0), (2.0, 2.5), (2.5, 3.0), (3.0, 4.5))
DEFAULT_POCKET_CUTOFF = 12.0


@dataclass(frozen=True)
class EdgeSchema:
    bond_types: tuple = BOND_ORDERS
    distance_bins: tuple = DEFAULT_DISTANCE_BINS

    def __post_init__(self):
        prev_hi = None
        for lo, hi in self.distance_bins:
            if not hi > lo >= 0:
                raise ConfigError(f"bad distance bin ({lo}, {hi}]")
            if prev_hi is not None and lo < prev_hi:
                raise ConfigError("distance bins must be disjoint and increasing")
            prev_hi = hi
        if self.distance_bins and not np.isfinite(self.distance_bins[-1][1]):
            raise ConfigError("last distance bin must have a finite upper bound")

    @property
    def n_bond_types(self):
        return len(self.bond_types)

    @property
    def n_edge_types(self):
        return len(self.bond_types) + len(self.distance_bins)

    def to_dict(self):
        return {"bond_types": list(self.bond_types),
                "distance_bins": [list(b) for b in self.distance_bins]}

    @classmethod
    def from_dict(cls, d):
        return cls(bond_types=tuple(d["bond_types"]),
                   distance_bins=tuple(tuple(b) for b in d["distance_bins"]))


@dataclass(frozen=True)
class GraphTensors:
    x: np.ndarray          # N x f_in node features, float32
    A: np.ndarray          # N x N x N_et binary adjacency, float32
    R: np.ndarray          # N x N distances in Angstroms, float32
    n_ligand: int
    schema: EdgeSchema = field(default_factory=EdgeSchema)

    @property
    def n_atoms(self):
        return self.x.shape[0]

    @property
    def f_in(self):
        return self.x.shape[1]

    @property
    def n_edge_types(self):
        return self.A.shape[2]


def build_distance_matrix(system: MolecularSystem):
    pos = system.positions()
    if not np.all(np.isfinite(pos)):
        raise ConfigError("non-finite coordinates")
    diff = pos[:, None, :] - pos[None, :, :]
    return np.sqrt((diff ** 2).sum(-1)).astype(np.float32)


def build_adjacency(system: MolecularSystem, R, schema: EdgeSchema, x=None):
    """Assemble GraphTensors; `x` defaults to an empty feature matrix."""
    n = system.n_atoms
    n_bt = schema.n_bond_types
    A = np.zeros((n, n, schema.n_edge_types), dtype=np.float32)
    type_index = {t: k for k, t in enumerate(schema.bond_types)}
    bonded = np.zeros((n, n), dtype=bool)
    for b in system.bonds:
        if b.order not in type_index:
            raise ConfigError(f"bond order {b.order!r} not in schema")
        e = type_index[b.order]
        A[b.i, b.j, e] = A[b.j, b.i, e] = 1.0
        bonded[b.i, b.j] = bonded[b.j, b.i] = True
    off_diag = ~np.eye(n, dtype=bool)
    for k, (lo, hi) in enumerate(schema.distance_bins):
        mask = (R > lo) & (R <= hi) & ~bonded & off_diag
        A[:, :, n_bt + k] = mask.astype(np.float32)
    if x is None:
        x = np.zeros((n, 0), dtype=np.float32)
    return GraphTensors(x=np.asarray(x, dtype=np.float32), A=A,
                        R=np.asarray(R, dtype=np.float32),
                        n_ligand=system.n_ligand, schema=schema)


def build_graph(system, x, schema=None):
    """Convenience: distance matrix + adjacency in one call."""
    if schema is None:
        schema = EdgeSchema()
    R = build_distance_matrix(system)
    return build_adjacency(system, R, schema, x=x)


def bond_only_view(g: GraphTensors):
    """Retain only the bond-type slices; x, R, n_ligand unchanged."""
    n_bt = g.schema.n_bond_types
    if g.A.shape[2] == n_bt:
        return g
    return replace(g, A=g.A[:, :, :n_bt],
                   schema=replace(g.schema, distance_bins=()))


def pocket_filter(system: MolecularSystem, cutoff=DEFAULT_POCKET_CUTOFF):
    """Drop protein atoms farther than `cutoff` from every ligand atom."""
    if system.n_ligand == system.n_atoms:
        return system
    pos = system.positions()
    lig = pos[:system.n_ligand]
    prot = pos[system.n_ligand:]
    d = np.sqrt(((prot[:, None, :] - lig[None, :, :]) ** 2).sum(-1))
    keep_prot = d.min(axis=1) <= cutoff
    keep = list(range(system.n_ligand)) + [
        system.n_ligand + k for k in np.nonzero(keep_prot)[0].tolist()]
    remap = {old: new for new, old in enumerate(keep)}
    atoms = tuple(system.atoms[i] for i in keep)
    bonds = tuple(type(b)(remap[b.i], remap[b.j], b.order)
                  for b in system.bonds if b.i in remap and b.j in remap)
    return replace(system, atoms=atoms, bonds=bonds)


_MAGIC = b"SGC1"


def save_graph(g: GraphTensors, path):
    """Binary cache: header {magic, N, f_in, N_et}, x float32, bit-packed A,
    R float32; all little-endian."""
    n, f_in = g.x.shape
    n_et = g.A.shape[2]
    with open(path, "wb") as fh:
        fh.write(_MAGIC)
        fh.write(struct.pack("<IIII", n, f_in, n_et, g.n_ligand))
        fh.write(g.x.astype("<f4").tobytes())
        bits = np.packbits(g.A.astype(np.uint8).reshape(-1))
        fh.write(struct.pack("<I", len(bits)))
        fh.write(bits.tobytes())
        fh.write(g.R.astype("<f4").tobytes())


def load_graph(path, schema=None):
    with open(path, "rb") as fh:
        magic = fh.read(4)
        if magic != _MAGIC:
            raise ParseError(f"bad cache magic {magic!r}")
        n, f_in, n_et, n_ligand = struct.unpack("<IIII", fh.read(16))
        x = np.frombuffer(fh.read(4 * n * f_in), dtype="<f4").reshape(n, f_in)
        (n_bits,) = struct.unpack("<I", fh.read(4))
        packed = np.frombuffer(fh.read(n_bits), dtype=np.uint8)
        A = np.unpackbits(packed, count=n * n * n_et).reshape(n, n, n_et)
        R = np.frombuffer(fh.read(4 * n * n), dtype="<f4").reshape(n, n)
    if schema is None:
        schema = EdgeSchema()
    if schema.n_edge_types != n_et:
        raise ConfigError(
            f"cache has {n_et} edge types, schema expects {schema.n_edge_types}")
    return GraphTensors(x=x.copy(), A=A.astype(np.float32), R=R.copy(),
                        n_ligand=n_ligand, schema=schema)
