import numpy as np
import pytest

from sgc.chemio import (Atom, Bond, MolecularSystem, featurize,
                        feature_width, load_labels, parse_pdb, parse_sdf,
                        strip_hydrogens, write_sdf, SYMBOL_TO_Z)
from sgc.errors import ParseError
from conftest import make_system


def test_propanamide_record(propanamide_sdf):
    systems = parse_sdf(propanamide_sdf)
    assert len(systems) == 1
    s = systems[0]
    assert s.n_atoms == 5
    assert len(s.bonds) == 4
    assert s.n_ligand == 5
    assert [a.element for a in s.atoms] == [6, 6, 6, 8, 7]


def test_empty_stream():
    assert parse_sdf("") == []
    assert parse_sdf(b"\n\n") == []


def test_bond_index_zero_is_error(propanamide_sdf):
    bad = propanamide_sdf.replace("  1  2  1", "  0  2  1")
    with pytest.raises(ParseError):
        parse_sdf(bad)


def test_malformed_counts_line_reports_line_number():
    text = "mol\n\n\n  X  4\n"
    with pytest.raises(ParseError, match="line 4"):
        parse_sdf(text)


def test_unknown_element_symbol(propanamide_sdf):
    bad = propanamide_sdf.replace(" N ", " Qq", 1)
    with pytest.raises(ParseError, match="element"):
        parse_sdf(bad)


def test_truncated_record(propanamide_sdf):
    truncated = "\n".join(propanamide_sdf.splitlines()[:6])
    with pytest.raises(ParseError):
        parse_sdf(truncated)


def _ring_sdf(bond_type=4, close_ring=True):
    n = 6
    lines = ["benzene", "", "",
             f"{n:3d}{n if close_ring else n - 1:3d}  0  0  0  0  0  0  0  0999 V2000"]
    for k in range(n):
        a = 2 * np.pi * k / n
        lines.append(f"{1.4 * np.cos(a):10.4f}{1.4 * np.sin(a):10.4f}{0.0:10.4f} C   0  0")
    edges = [(k + 1, (k + 1) % n + 1) for k in range(n if close_ring else n - 1)]
    for i, j in edges:
        lines.append(f"{i:3d}{j:3d}{bond_type:3d}  0")
    lines += ["M  END", "$$$$"]
    return "\n".join(lines)


def test_aromatic_perception_ring():
    s = parse_sdf(_ring_sdf())[0]
    assert all(b.order == "aromatic" for b in s.bonds)
    assert all(a.is_aromatic for a in s.atoms)


def test_type4_chain_without_ring_degrades_to_single():
    s = parse_sdf(_ring_sdf(close_ring=False))[0]
    assert all(b.order == "single" for b in s.bonds)
    assert not any(a.is_aromatic for a in s.atoms)


def test_sdf_round_trip(propanamide_sdf):
    s = parse_sdf(propanamide_sdf)[0]
    rt = parse_sdf(write_sdf([s]))[0]
    assert rt.bonds == s.bonds
    assert [a.element for a in rt.atoms] == [a.element for a in s.atoms]
    assert np.allclose(rt.positions(), s.positions(), atol=1e-4)


def test_sdf_round_trip_random_coordinates():
    s = make_system(8, seed=5)
    rt = parse_sdf(write_sdf([s]))[0]
    assert np.allclose(rt.positions(), s.positions(), atol=1e-4)
    assert rt.bonds == s.bonds


def _pdb_lines(records, conect=()):
    lines = []
    for serial, name, resname, xyz, element in records:
        x, y, z = xyz
        lines.append(
            f"HETATM{serial:5d}  {name:<3s}{resname:>4s} A   1    "
            f"{x:8.3f}{y:8.3f}{z:8.3f}  1.00  0.00          {element:>2s}")
    for group in conect:
        lines.append("CONECT" + "".join(f"{s:5d}" for s in group))
    return "\n".join(lines) + "\n"


def test_pdb_bond_inference_at_154():
    text = _pdb_lines([(1, "C1", "LIG", (0, 0, 0), "C"),
                       (2, "C2", "LIG", (1.54, 0, 0), "C")])
    s = parse_pdb(text, "LIG")
    assert len(s.bonds) == 1


def test_pdb_no_bond_at_3A():
    text = _pdb_lines([(1, "C1", "LIG", (0, 0, 0), "C"),
                       (2, "C2", "LIG", (3.0, 0, 0), "C")])
    s = parse_pdb(text, "LIG")
    assert len(s.bonds) == 0


def test_pdb_conect_overrides_inference():
    text = _pdb_lines([(1, "C1", "LIG", (0, 0, 0), "C"),
                       (2, "C2", "LIG", (3.0, 0, 0), "C")],
                      conect=[(1, 2)])
    s = parse_pdb(text, "LIG")
    assert len(s.bonds) == 1


def test_pdb_missing_ligand_resname():
    text = _pdb_lines([(1, "CA", "ALA", (0, 0, 0), "C")])
    with pytest.raises(ParseError, match="LIG"):
        parse_pdb(text, "LIG")


def test_pdb_missing_element_column():
    line = "HETATM    1  C1  LIG A   1       0.000   0.000   0.000  1.00  0.00"
    with pytest.raises(ParseError, match="element"):
        parse_pdb(line + "\n", "LIG")


def test_pdb_ligand_block_first():
    text = _pdb_lines([(1, "CA", "ALA", (0, 0, 0), "C"),
                       (2, "C1", "LIG", (5, 0, 0), "C"),
                       (3, "N", "ALA", (1.3, 0, 0), "N"),
                       (4, "O1", "LIG", (6.2, 0, 0), "O")])
    s = parse_pdb(text, "LIG")
    assert s.n_ligand == 2
    assert [a.element for a in s.atoms] == [6, 8, 6, 7]


def test_featurize_element_one_hot():
    s = make_system(1, seed=0)
    s = MolecularSystem((Atom(element=6, position=(0, 0, 0)),), (), 1)
    x = featurize(s, element_vocab=(6, 7, 8))
    assert list(x[0, :3]) == [1.0, 0.0, 0.0]
    assert x.shape == (1, feature_width((6, 7, 8)))


def test_featurize_unknown_element_goes_to_other_slot():
    s = MolecularSystem((Atom(element=26, position=(0, 0, 0)),), (), 1)
    x = featurize(s, element_vocab=(6, 7, 8))
    assert x[0, 3] == 1.0
    assert x[0, :3].sum() == 0.0


def test_featurize_deterministic():
    s = make_system(10, seed=3)
    assert np.array_equal(featurize(s), featurize(s))


def test_featurize_field_copy():
    a = Atom(element=6, formal_charge=0, hybridization="sp3", degree=4,
             total_hydrogens=3, implicit_hydrogens=3, position=(0, 0, 0))
    s = MolecularSystem((a,), (), 1)
    x = featurize(s, element_vocab=(6,))
    # layout: [C, other, charge, 7 hybridizations, aromatic, degree, totH, implH, rad]
    assert x[0, 2] == 0.0
    assert x[0, 11] == 4.0
    assert x[0, 12] == 3.0


def test_featurize_finite(propanamide_sdf):
    s = parse_sdf(propanamide_sdf)[0]
    x = featurize(s)
    assert np.all(np.isfinite(x))


def test_load_labels_simple():
    tasks, table = load_labels(b"id,pKd\n1abc,6.2\n")
    assert tasks == ["pKd"]
    assert table == {"1abc": [6.2]}


def test_load_labels_absent_cell():
    _, table = load_labels("id,t1,t2\nm1,1,\n")
    assert table == {"m1": [1.0, None]}


def test_load_labels_duplicate_id():
    with pytest.raises(ParseError, match="duplicate"):
        load_labels("id,y\na,1\na,2\n")


def test_load_labels_non_numeric():
    with pytest.raises(ParseError, match="non-numeric"):
        load_labels("id,y\na,oops\n")


def test_strip_hydrogens():
    atoms = (Atom(element=6, position=(0, 0, 0), degree=1),
             Atom(element=1, position=(1, 0, 0), degree=1),
             Atom(element=8, position=(2, 0, 0)))
    bonds = (Bond(0, 1, "single"),)
    s = MolecularSystem(atoms, bonds, 3)
    stripped = strip_hydrogens(s)
    assert [a.element for a in stripped.atoms] == [6, 8]
    assert stripped.bonds == ()


def test_sdf_charges_and_radicals():
    text = ("ion\n\n\n  1  0  0  0  0  0  0  0  0  0999 V2000\n"
            "    0.0000    0.0000    0.0000 N   0  0  0  0  0  0  0  0  0  0  0  0\n"
            "M  CHG  1   1   1\nM  RAD  1   1   2\nM  END\n$$$$\n")
    s = parse_sdf(text)[0]
    assert s.atoms[0].formal_charge == 1
    assert s.atoms[0].radical_electrons == 2


def test_symbol_table_covers_common_elements():
    for sym in ("C", "N", "O", "S", "P", "Cl", "Br", "I", "Fe", "Zn"):
        assert sym in SYMBOL_TO_Z
