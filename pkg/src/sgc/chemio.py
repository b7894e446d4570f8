"""Molecular file parsing (SDF V2000, PDB) and per-atom featurization.

All parsers are pure functions of their input bytes; parsed systems are
immutable after construction.
"""

from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass, replace

import numpy as np

from .errors import ParseError

HYBRIDIZATIONS = ("s", "sp", "sp2", "sp3", "sp3d", "sp3d2", "other")

_ELEMENT_SYMBOLS = (
    "H He Li Be B C N O F Ne Na Mg Al Si P S Cl Ar K Ca Sc Ti V Cr Mn Fe Co "
    "Ni Cu Zn Ga Ge As Se Br Kr Rb Sr Y Zr Nb Mo Tc Ru Rh Pd Ag Cd In Sn Sb "
    "Te I Xe Cs Ba La Ce Pr Nd Pm Sm Eu Gd Tb Dy Ho Er Tm Yb Lu Hf Ta W Re "
    "Os Ir Pt Au Hg Tl Pb Bi Po At Rn Fr Ra Ac Th Pa U"
).split()

SYMBOL_TO_Z = {s: i + 1 for i, s in enumerate(_ELEMENT_SYMBOLS)}
Z_TO_SYMBOL = {z: s for s, z in SYMBOL_TO_Z.items()}

# Covalent radii in Angstroms (Cordero et al. single-bond values for the
# elements common in PDB structures); fallback for anything else.
COVALENT_RADII = {
    1: 0.31, 5: 0.84, 6: 0.76, 7: 0.71, 8: 0.66, 9: 0.57, 11: 1.66,
    12: 1.41, 14: 1.11, 15: 1.07, 16: 1.05, 17: 1.02, 19: 2.03, 20: 1.76,
    25: 1.39, 26: 1.32, 27: 1.26, 28: 1.24, 29: 1.32, 30: 1.22, 34: 1.20,
    35: 1.20, 53: 1.39,
}
DEFAULT_COVALENT_RADIUS = 0.77
BOND_INFERENCE_TOLERANCE = 0.4

# Typical valences used for implicit-hydrogen estimation from SDF records.
_DEFAULT_VALENCE = {1: 1, 5: 3, 6: 4, 7: 3, 8: 2, 9: 1, 14: 4, 15: 3,
                    16: 2, 17: 1, 35: 1, 53: 1}

BOND_ORDERS = ("single", "double", "triple", "aromatic")
_ORDER_VALUE = {"single": 1.0, "double": 2.0, "triple": 3.0, "aromatic": 1.5}


@dataclass(frozen=True)
class Atom:
    element: int
    formal_charge: int = 0
    hybridization: str = "other"
    is_aromatic: bool = False
    degree: int = 0
    total_hydrogens: int = 0
    implicit_hydrogens: int = 0
    radical_electrons: int = 0
    position: tuple[float, float, float] = (0.0, 0.0, 0.0)

    def __post_init__(self):
        if self.element < 1:
            raise ParseError(f"atomic number must be >= 1, got {self.element}")
        if self.implicit_hydrogens > self.total_hydrogens:
            raise ParseError("implicit hydrogens exceed total hydrogens")
        if not all(math.isfinite(c) for c in self.position):
            raise ParseError("non-finite atom position")
        if self.hybridization not in HYBRIDIZATIONS:
            raise ParseError(f"unknown hybridization {self.hybridization!r}")


@dataclass(frozen=True)
class Bond:
    i: int
    j: int
    order: str = "single"

    def __post_init__(self):
        if self.i == self.j:
            raise ParseError("self-bond not allowed")
        if self.order not in BOND_ORDERS:
            raise ParseError(f"unknown bond order {self.order!r}")


@dataclass(frozen=True)
class MolecularSystem:
    """One sample: atoms ordered ligand-first, bonds, and optional labels."""

    atoms: tuple[Atom, ...]
    bonds: tuple[Bond, ...]
    n_ligand: int
    sample_id: str = ""
    labels: tuple = ()

    def __post_init__(self):
        n = len(self.atoms)
        if not 1 <= self.n_ligand <= n:
            raise ParseError(f"n_ligand {self.n_ligand} out of range for {n} atoms")
        seen = set()
        for b in self.bonds:
            if not (0 <= b.i < n and 0 <= b.j < n):
                raise ParseError(f"bond ({b.i},{b.j}) references atom out of range")
            key = (min(b.i, b.j), max(b.i, b.j))
            if key in seen:
                raise ParseError(f"duplicate bond for pair {key}")
            seen.add(key)

    @property
    def n_atoms(self):
        return len(self.atoms)

    def positions(self):
        return np.array([a.position for a in self.atoms], dtype=np.float64)


def _counts_line(line, lineno):
    try:
        n_atoms = int(line[0:3])
        n_bonds = int(line[3:6])
    except (ValueError, IndexError):
        raise ParseError(f"malformed counts line {line!r}", line=lineno)
    if n_atoms < 0 or n_bonds < 0:
        raise ParseError(f"negative counts in {line!r}", line=lineno)
    return n_atoms, n_bonds


_LEGACY_CHARGE = {0: 0, 1: 3, 2: 2, 3: 1, 5: -1, 6: -2, 7: -3}


def _aromatic_ring_bonds(n_atoms, type4_pairs):
    """Pairs from `type4_pairs` that lie on a cycle of the type-4 subgraph.

    An edge is on such a cycle iff it is not a bridge: removing it leaves
    its endpoints connected.
    """
    adj = {i: set() for i in range(n_atoms)}
    for a, b in type4_pairs:
        adj[a].add(b)
        adj[b].add(a)
    on_ring = set()
    for a, b in type4_pairs:
        adj[a].discard(b)
        adj[b].discard(a)
        stack, seen = [a], {a}
        found = False
        while stack:
            u = stack.pop()
            if u == b:
                found = True
                break
            for v in adj[u]:
                if v not in seen:
                    seen.add(v)
                    stack.append(v)
        if found:
            on_ring.add((a, b))
        adj[a].add(b)
        adj[b].add(a)
    return on_ring


def _derive_hybridization(element, orders):
    if not orders:
        return "other"
    n_double = sum(1 for o in orders if o == "double")
    n_triple = sum(1 for o in orders if o == "triple")
    aromatic = any(o == "aromatic" for o in orders)
    if n_triple >= 1 or n_double >= 2:
        return "sp"
    if n_double == 1 or aromatic:
        return "sp2"
    if element in _DEFAULT_VALENCE:
        return "sp3"
    return "other"


def parse_sdf(data):
    """Parse an MDL V2000 SDF stream into ligand-only molecular systems."""
    if isinstance(data, bytes):
        text = data.decode("utf-8")
    else:
        text = data
    lines = text.splitlines()
    systems = []
    pos = 0
    while pos < len(lines):
        # Skip blank padding between records.
        while pos < len(lines) and not lines[pos].strip():
            pos += 1
        if pos >= len(lines):
            break
        start = pos
        if len(lines) - start < 4:
            raise ParseError("truncated record header", line=start + 1)
        name = lines[start].strip()
        counts_lineno = start + 4
        n_atoms, n_bonds = _counts_line(lines[start + 3], counts_lineno)
        atom_start = start + 4
        bond_start = atom_start + n_atoms
        if bond_start + n_bonds > len(lines):
            raise ParseError("truncated record body", line=len(lines))

        raw_atoms = []
        for k in range(n_atoms):
            line = lines[atom_start + k]
            lineno = atom_start + k + 1
            try:
                x = float(line[0:10])
                y = float(line[10:20])
                z = float(line[20:30])
            except (ValueError, IndexError):
                raise ParseError(f"malformed atom coordinates {line!r}", line=lineno)
            symbol = line[31:34].strip()
            if symbol not in SYMBOL_TO_Z:
                raise ParseError(f"unknown element symbol {symbol!r}", line=lineno)
            charge_code = 0
            if len(line) >= 39:
                code_field = line[36:39].strip()
                if code_field:
                    charge_code = int(code_field)
            charge = _LEGACY_CHARGE.get(charge_code, 0)
            raw_atoms.append((SYMBOL_TO_Z[symbol], (x, y, z), charge))

        raw_bonds = []
        for k in range(n_bonds):
            line = lines[bond_start + k]
            lineno = bond_start + k + 1
            try:
                a = int(line[0:3])
                b = int(line[3:6])
                t = int(line[6:9])
            except (ValueError, IndexError):
                raise ParseError(f"malformed bond line {line!r}", line=lineno)
            if not (1 <= a <= n_atoms and 1 <= b <= n_atoms):
                raise ParseError(
                    f"bond references atom index out of range 1..{n_atoms}",
                    line=lineno)
            raw_bonds.append((a - 1, b - 1, t))

        # Property block: explicit charges / radicals override; record ends
        # at M END, then data items until $$$$.
        charges = {}
        radicals = {}
        pos = bond_start + n_bonds
        while pos < len(lines):
            line = lines[pos]
            if line.startswith("$$$$"):
                pos += 1
                break
            if line.startswith("M  CHG"):
                fields = line.split()
                for idx, val in zip(fields[3::2], fields[4::2]):
                    charges[int(idx) - 1] = int(val)
            elif line.startswith("M  RAD"):
                fields = line.split()
                for idx, val in zip(fields[3::2], fields[4::2]):
                    radicals[int(idx) - 1] = int(val)
            pos += 1

        type4 = [(min(a, b), max(a, b)) for a, b, t in raw_bonds if t == 4]
        aromatic_pairs = _aromatic_ring_bonds(n_atoms, type4)

        bonds = []
        neighbor_orders = [[] for _ in range(n_atoms)]
        explicit_h = [0] * n_atoms
        for a, b, t in raw_bonds:
            key = (min(a, b), max(a, b))
            if t == 4:
                order = "aromatic" if key in aromatic_pairs else "single"
            elif t in (1, 2, 3):
                order = BOND_ORDERS[t - 1]
            else:
                raise ParseError(f"unsupported bond type {t}")
            bonds.append(Bond(a, b, order))
            neighbor_orders[a].append(order)
            neighbor_orders[b].append(order)
            if raw_atoms[b][0] == 1:
                explicit_h[a] += 1
            if raw_atoms[a][0] == 1:
                explicit_h[b] += 1

        atoms = []
        for idx, (element, position, charge) in enumerate(raw_atoms):
            charge = charges.get(idx, charge)
            orders = neighbor_orders[idx]
            valence = _DEFAULT_VALENCE.get(element)
            used = sum(_ORDER_VALUE[o] for o in orders)
            implicit = 0
            if valence is not None:
                implicit = max(0, int(round(valence - used)))
            atoms.append(Atom(
                element=element,
                formal_charge=charge,
                hybridization=_derive_hybridization(element, orders),
                is_aromatic=any(o == "aromatic" for o in orders),
                degree=len(orders),
                total_hydrogens=explicit_h[idx] + implicit,
                implicit_hydrogens=implicit,
                radical_electrons=radicals.get(idx, 0),
                position=position,
            ))

        systems.append(MolecularSystem(
            atoms=tuple(atoms), bonds=tuple(bonds),
            n_ligand=n_atoms, sample_id=name))
    return systems


def write_sdf(systems):
    """Serialize ligand-only systems back to V2000 text (fixed %10.4f coords)."""
    out = io.StringIO()
    for s in systems:
        out.write(f"{s.sample_id}\n\n\n")
        out.write(f"{s.n_atoms:3d}{len(s.bonds):3d}  0  0  0  0  0  0  0  0999 V2000\n")
        for a in s.atoms:
            x, y, z = a.position
            sym = Z_TO_SYMBOL[a.element]
            out.write(f"{x:10.4f}{y:10.4f}{z:10.4f} {sym:<3s} 0  0  0  0  0  0  0  0  0  0  0  0\n")
        order_code = {"single": 1, "double": 2, "triple": 3, "aromatic": 4}
        for b in s.bonds:
            out.write(f"{b.i + 1:3d}{b.j + 1:3d}{order_code[b.order]:3d}  0  0  0  0\n")
        charged = [(i + 1, a.formal_charge) for i, a in enumerate(s.atoms)
                   if a.formal_charge]
        if charged:
            out.write(f"M  CHG{len(charged):3d}" +
                      "".join(f"{i:4d}{c:4d}" for i, c in charged) + "\n")
        out.write("M  END\n$$$$\n")
    return out.getvalue()


def _infer_bonds(positions, elements, conect_pairs):
    """Covalent-radius bond inference; CONECT pairs are honored as bonds."""
    n = len(elements)
    radii = np.array([COVALENT_RADII.get(z, DEFAULT_COVALENT_RADIUS)
                      for z in elements])
    pos = np.asarray(positions)
    pairs = set(conect_pairs)
    if n > 1:
        diff = pos[:, None, :] - pos[None, :, :]
        dist = np.sqrt((diff ** 2).sum(-1))
        thresh = radii[:, None] + radii[None, :] + BOND_INFERENCE_TOLERANCE
        ii, jj = np.nonzero(np.triu(dist <= thresh, k=1))
        pairs.update(zip(ii.tolist(), jj.tolist()))
    return sorted(pairs)


def parse_pdb(data, ligand_resname):
    """Parse a PDB complex; atoms matching `ligand_resname` form the ligand block.

    Bonds are inferred from covalent radii (dist <= r_i + r_j + 0.4 A);
    CONECT records add bonds for the listed pairs.
    """
    if isinstance(data, bytes):
        text = data.decode("utf-8")
    else:
        text = data
    ligand = []
    protein = []
    serial_records = {}
    conect_serial_pairs = []
    for lineno, line in enumerate(text.splitlines(), start=1):
        tag = line[0:6]
        if tag in ("ATOM  ", "HETATM"):
            if len(line) < 78 or not line[76:78].strip():
                raise ParseError("missing element column", line=lineno)
            symbol = line[76:78].strip().capitalize()
            if symbol not in SYMBOL_TO_Z:
                raise ParseError(f"unknown element symbol {symbol!r}", line=lineno)
            try:
                serial = int(line[6:11])
                x = float(line[30:38])
                y = float(line[38:46])
                z = float(line[46:54])
            except ValueError:
                raise ParseError(f"malformed coordinate record {line!r}", line=lineno)
            resname = line[17:20].strip()
            charge = 0
            if len(line) >= 80:
                cf = line[78:80].strip()
                if cf and cf[0].isdigit():
                    charge = int(cf[0]) * (-1 if cf.endswith("-") else 1)
            rec = (serial, SYMBOL_TO_Z[symbol], (x, y, z), charge, resname)
            if resname == ligand_resname:
                ligand.append(rec)
            else:
                protein.append(rec)
        elif tag == "CONECT":
            fields = [line[6:11], line[11:16], line[16:21], line[21:26], line[26:31]]
            serials = [int(f) for f in fields if f.strip()]
            for other in serials[1:]:
                conect_serial_pairs.append((serials[0], other))

    if not ligand:
        raise ParseError(f"no atoms with residue name {ligand_resname!r}")

    ordered = ligand + protein
    serial_to_index = {}
    for idx, rec in enumerate(ordered):
        serial_to_index.setdefault(rec[0], idx)
    conect_pairs = set()
    for a, b in conect_serial_pairs:
        if a in serial_to_index and b in serial_to_index:
            i, j = serial_to_index[a], serial_to_index[b]
            if i != j:
                conect_pairs.add((min(i, j), max(i, j)))

    elements = [r[1] for r in ordered]
    positions = [r[2] for r in ordered]
    pairs = _infer_bonds(positions, elements, conect_pairs)

    degree = [0] * len(ordered)
    explicit_h = [0] * len(ordered)
    for i, j in pairs:
        degree[i] += 1
        degree[j] += 1
        if elements[j] == 1:
            explicit_h[i] += 1
        if elements[i] == 1:
            explicit_h[j] += 1

    atoms = tuple(
        Atom(element=elements[k], formal_charge=ordered[k][3],
             hybridization="other", is_aromatic=False, degree=degree[k],
             total_hydrogens=explicit_h[k], implicit_hydrogens=0,
             radical_electrons=0, position=positions[k])
        for k in range(len(ordered)))
    bonds = tuple(Bond(i, j, "single") for i, j in pairs)
    return MolecularSystem(atoms=atoms, bonds=bonds, n_ligand=len(ligand))


def strip_hydrogens(system):
    """Drop hydrogen atoms, reindexing bonds and the ligand block."""
    keep = [i for i, a in enumerate(system.atoms) if a.element != 1]
    remap = {old: new for new, old in enumerate(keep)}
    atoms = tuple(system.atoms[i] for i in keep)
    bonds = tuple(Bond(remap[b.i], remap[b.j], b.order) for b in system.bonds
                  if b.i in remap and b.j in remap)
    n_ligand = sum(1 for i in keep if i < system.n_ligand)
    return replace(system, atoms=atoms, bonds=bonds, n_ligand=max(n_ligand, 1))


DEFAULT_ELEMENT_VOCAB = (6, 7, 8, 16, 9, 17, 35, 53, 15, 1)


def feature_width(element_vocab):
    return len(element_vocab) + 1 + 1 + len(HYBRIDIZATIONS) + 1 + 4


def featurize(system, element_vocab=DEFAULT_ELEMENT_VOCAB):
    """Node feature matrix: one-hot element (+other slot), charge, one-hot
    hybridization, aromatic flag, degree, hydrogens (total, implicit),
    radical electrons."""
    vocab_index = {z: k for k, z in enumerate(element_vocab)}
    n_vocab = len(element_vocab)
    f_in = feature_width(element_vocab)
    x = np.zeros((system.n_atoms, f_in), dtype=np.float32)
    hyb_index = {h: k for k, h in enumerate(HYBRIDIZATIONS)}
    for i, a in enumerate(system.atoms):
        col = vocab_index.get(a.element, n_vocab)
        x[i, col] = 1.0
        base = n_vocab + 1
        x[i, base] = a.formal_charge
        x[i, base + 1 + hyb_index[a.hybridization]] = 1.0
        base += 1 + len(HYBRIDIZATIONS)
        x[i, base] = 1.0 if a.is_aromatic else 0.0
        x[i, base + 1] = a.degree
        x[i, base + 2] = a.total_hydrogens
        x[i, base + 3] = a.implicit_hydrogens
        x[i, base + 4] = a.radical_electrons
    return x


def load_labels(data):
    """Load a sample_id -> label-vector table from CSV; empty cells are None."""
    if isinstance(data, bytes):
        text = data.decode("utf-8")
    else:
        text = data
    reader = csv.reader(io.StringIO(text))
    try:
        header = next(reader)
    except StopIteration:
        raise ParseError("empty label table")
    if len(header) < 2:
        raise ParseError("label table needs sample_id plus at least one task column")
    tasks = header[1:]
    table = {}
    for lineno, row in enumerate(reader, start=2):
        if not row or (len(row) == 1 and not row[0].strip()):
            continue
        sample_id = row[0]
        if sample_id in table:
            raise ParseError(f"duplicate sample_id {sample_id!r}", line=lineno)
        values = []
        for cell in row[1:]:
            cell = cell.strip()
            if not cell:
                values.append(None)
            else:
                try:
                    values.append(float(cell))
                except ValueError:
                    raise ParseError(f"non-numeric cell {cell!r}", line=lineno)
        values += [None] * (len(tasks) - len(values))
        table[sample_id] = values
    return tasks, table
