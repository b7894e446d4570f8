import numpy as np
import pytest

from sgc.chemio import Atom, Bond, MolecularSystem

PROPANAMIDE_SDF = """propanamide


  5  4  0  0  0  0  0  0  0  0999 V2000
    0.0000    0.0000    0.0000 C   0  0  0  0  0  0  0  0  0  0  0  0
    1.5000    0.0000    0.0000 C   0  0  0  0  0  0  0  0  0  0  0  0
    2.2000    1.3000    0.0000 C   0  0  0  0  0  0  0  0  0  0  0  0
    3.4200    1.3500    0.0000 O   0  0  0  0  0  0  0  0  0  0  0  0
    1.5000    2.4500    0.0000 N   0  0  0  0  0  0  0  0  0  0  0  0
  1  2  1  0  0  0  0
  2  3  1  0  0  0  0
  3  4  2  0  0  0  0
  3  5  1  0  0  0  0
M  END
$$$$
"""


@pytest.fixture
def propanamide_sdf():
    return PROPANAMIDE_SDF


def make_system(n_ligand, n_protein=0, seed=0, sample_id=None, spread=3.0):
    """Random chain-bonded system with ligand atoms first."""
    rng = np.random.default_rng(seed)
    n = n_ligand + n_protein
    pos = rng.normal(scale=spread, size=(n, 3))
    atoms = tuple(
        Atom(element=int(rng.choice([6, 7, 8, 16])), position=tuple(pos[i]),
             degree=2 if 0 < i < n - 1 else 1)
        for i in range(n))
    bonds = [Bond(i, i + 1, "single") for i in range(n_ligand - 1)]
    bonds += [Bond(n_ligand + i, n_ligand + i + 1, "single")
              for i in range(n_protein - 1)]
    return MolecularSystem(atoms, tuple(bonds), n_ligand,
                           sample_id=sample_id or f"sys{seed}")


def finite_difference_grads(forward, params, eps=1e-5, max_entries=None):
    """Central finite differences of a scalar-returning `forward` w.r.t.
    each parameter entry. Yields (param, index, fd_value, analytic_value);
    analytic grads must already be populated."""
    for p in params:
        analytic = p.grad.copy()
        it = np.nditer(p.value, flags=["multi_index"])
        count = 0
        while not it.finished:
            idx = it.multi_index
            old = p.value[idx]
            p.value[idx] = old + eps
            fp = float(forward().value)
            p.value[idx] = old - eps
            fm = float(forward().value)
            p.value[idx] = old
            yield p, idx, (fp - fm) / (2 * eps), analytic[idx]
            count += 1
            if max_entries is not None and count >= max_entries:
                break
            it.iternext()


def assert_grads_match(forward, params, rel_tol=1e-4, abs_floor=1e-6,
                       eps=1e-5, max_entries=None):
    import sgc.diffcore as dc
    for p in params:
        p.zero_grad()
    dc.backward(forward())
    for p, idx, fd, an in finite_difference_grads(forward, params, eps,
                                                  max_entries):
        denom = max(abs(fd), abs(an), abs_floor)
        assert abs(fd - an) / denom <= rel_tol, (
            f"{p.name}[{idx}]: finite diff {fd} vs analytic {an}")
