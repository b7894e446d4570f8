"""Fold construction: random splits and the agglomerative homology split
(Ward linkage over pairwise protein distances) with cluster-to-fold packing.
"""

from __future__ import annotations

import csv
import io
import warnings
from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigError, NumericError, ParseError

FOLDS = ("train", "valid", "test")

AMINO_ALPHABET = set("ACDEFGHIKLMNPQRSTVWYX")

GAP_PENALTY = -1
MATCH_SCORE = 1
MISMATCH_SCORE = 0


def sequence_identity(a, b):
    """Global-alignment identity: Needleman-Wunsch with match +1,
    mismatch 0, linear gap -1; identity = matches / alignment length."""
    for seq in (a, b):
        if not seq:
            raise ConfigError("empty sequence")
        bad = set(seq) - AMINO_ALPHABET
        if bad:
            raise ConfigError(f"illegal residue characters {sorted(bad)!r}")
    n, m = len(a), len(b)
    score = np.zeros((n + 1, m + 1), dtype=np.int64)
    score[:, 0] = GAP_PENALTY * np.arange(n + 1)
    score[0, :] = GAP_PENALTY * np.arange(m + 1)
    for i in range(1, n + 1):
        sub = np.where(np.frombuffer(a[i - 1].encode(), dtype=np.uint8) ==
                       np.frombuffer(b.encode(), dtype=np.uint8),
                       MATCH_SCORE, MISMATCH_SCORE)
        for j in range(1, m + 1):
            score[i, j] = max(score[i - 1, j - 1] + sub[j - 1],
                              score[i - 1, j] + GAP_PENALTY,
                              score[i, j - 1] + GAP_PENALTY)
    # Traceback, preferring diagonal, then up, then left.
    i, j = n, m
    matches = 0
    length = 0
    while i > 0 or j > 0:
        if i > 0 and j > 0:
            diag = score[i - 1, j - 1] + (MATCH_SCORE if a[i - 1] == b[j - 1]
                                          else MISMATCH_SCORE)
            if score[i, j] == diag:
                matches += a[i - 1] == b[j - 1]
                i -= 1
                j -= 1
                length += 1
                continue
        if i > 0 and score[i, j] == score[i - 1, j] + GAP_PENALTY:
            i -= 1
            length += 1
            continue
        j -= 1
        length += 1
    return matches / length


def identity_distance_matrix(sequences):
    """Pairwise 1 - identity over an ordered list of sequences."""
    n = len(sequences)
    D = np.zeros((n, n))
    for i in range(n):
        for j in range(i + 1, n):
            D[i, j] = D[j, i] = 1.0 - sequence_identity(sequences[i], sequences[j])
    return D


def _validate_distance_matrix(D):
    D = np.asarray(D, dtype=np.float64)
    if D.ndim != 2 or D.shape[0] != D.shape[1]:
        raise ConfigError(f"distance matrix must be square, got {D.shape}")
    if not np.allclose(D, D.T, atol=1e-12):
        raise ConfigError("distance matrix must be symmetric")
    if np.any(np.diag(D) != 0):
        raise ConfigError("distance matrix diagonal must be zero")
    if np.any(D < 0):
        raise ConfigError("distances must be non-negative")
    return D


def ward_merge_history(D, max_merges=None):
    """Ward merges via the Lance-Williams recurrence on squared distances.
    Ties break on the smallest (min-index, max-index) pair, indices being
    each cluster's smallest original member.

    Returns a list of (members_i, members_j, cost) with cost the Ward
    distance (sqrt of the squared-distance criterion) at the merge.
    """
    D = _validate_distance_matrix(D)
    n = D.shape[0]
    d2 = D.astype(np.float64) ** 2
    np.fill_diagonal(d2, np.inf)
    ids = np.arange(n)              # row -> smallest original member
    sizes = np.ones(n, dtype=np.float64)
    members = {i: [i] for i in range(n)}
    history = []
    n_merges = n - 1 if max_merges is None else min(max_merges, n - 1)
    for _ in range(n_merges):
        flat = np.argmin(d2)
        best = d2.flat[flat]
        ii, jj = np.nonzero(d2 == best)
        a, b = min(
            ((int(ids[min(p, q)]), int(ids[max(p, q)]), min(p, q), max(p, q))
             for p, q in zip(ii.tolist(), jj.tolist()) if p < q))[2:]
        cost2 = d2[a, b]
        ia, ib = int(ids[a]), int(ids[b])
        history.append((members[ia][:], members[ib][:],
                        float(np.sqrt(max(cost2, 0.0)))))
        na, nb = sizes[a], sizes[b]
        nk = sizes
        new_row = ((na + nk) * d2[a, :] + (nb + nk) * d2[b, :] - nk * cost2) \
            / (na + nb + nk)
        d2[a, :] = new_row
        d2[:, a] = new_row
        d2[a, a] = np.inf
        d2 = np.delete(np.delete(d2, b, axis=0), b, axis=1)
        members[min(ia, ib)] = sorted(members[ia] + members[ib])
        if max(ia, ib) in members:
            del members[max(ia, ib)]
        sizes[a] = na + nb
        sizes = np.delete(sizes, b)
        ids[a] = min(ia, ib)
        ids = np.delete(ids, b)
    return history


def ward_cluster(D, n_clusters=None, merge_threshold=None):
    """Agglomerative Ward clustering; cut by cluster count or by a Ward
    distance threshold. Returns integer labels, numbered by each cluster's
    smallest member index."""
    D = _validate_distance_matrix(D)
    n = D.shape[0]
    if (n_clusters is None) == (merge_threshold is None):
        raise ConfigError("specify exactly one of n_clusters / merge_threshold")
    if n_clusters is not None and not 1 <= n_clusters <= n:
        raise ConfigError(f"n_clusters {n_clusters} out of range 1..{n}")
    max_merges = n - n_clusters if n_clusters is not None else None
    history = ward_merge_history(D, max_merges=max_merges)
    clusters = [[i] for i in range(n)]
    for mi, mj, cost in history:
        if n_clusters is not None and len(clusters) <= n_clusters:
            break
        if merge_threshold is not None and cost > merge_threshold:
            break
        a = next(c for c in clusters if c[0] == mi[0])
        b = next(c for c in clusters if c[0] == mj[0])
        clusters.remove(a)
        clusters.remove(b)
        clusters.append(sorted(a + b))
    clusters.sort(key=lambda c: c[0])
    labels = np.empty(n, dtype=np.int64)
    for lab, c in enumerate(clusters):
        labels[c] = lab
    return labels


@dataclass
class FoldAssignment:
    assignment: dict
    provenance: dict = field(default_factory=dict)

    def ids(self, fold):
        return [s for s, f in self.assignment.items() if f == fold]

    def to_csv(self):
        out = io.StringIO()
        writer = csv.writer(out)
        writer.writerow(["sample_id", "fold"])
        for sample_id, fold in self.assignment.items():
            writer.writerow([sample_id, fold])
        return out.getvalue()

    @classmethod
    def from_csv(cls, text):
        if isinstance(text, bytes):
            text = text.decode("utf-8")
        reader = csv.reader(io.StringIO(text))
        header = next(reader, None)
        if header is None or [h.strip() for h in header[:2]] != ["sample_id", "fold"]:
            raise ParseError("fold CSV must start with header 'sample_id,fold'")
        assignment = {}
        for lineno, row in enumerate(reader, start=2):
            if not row:
                continue
            sample_id, fold = row[0], row[1]
            if fold not in FOLDS:
                raise ParseError(f"unknown fold {fold!r}", line=lineno)
            if sample_id in assignment:
                raise ParseError(f"duplicate sample_id {sample_id!r}", line=lineno)
            assignment[sample_id] = fold
        return cls(assignment=assignment, provenance={"method": "from_csv"})


def _check_fractions(fractions):
    if len(fractions) != 3 or abs(sum(fractions) - 1.0) > 1e-9:
        raise ConfigError(f"fractions must be 3 values summing to 1, got {fractions}")


def assign_folds(labels, fractions, seed, ids=None):
    """Pack whole clusters into folds: clusters sorted by size descending,
    each assigned to the fold with the largest current shortfall."""
    _check_fractions(fractions)
    labels = np.asarray(labels)
    n = labels.size
    if ids is None:
        ids = [str(i) for i in range(n)]
    if len(ids) != n:
        raise ConfigError("ids length must match labels length")
    rng = np.random.default_rng(seed)
    clusters = {}
    for idx, lab in enumerate(labels):
        clusters.setdefault(int(lab), []).append(idx)
    order = sorted(clusters, key=lambda lab: (-len(clusters[lab]), lab))
    targets = {f: frac * n for f, frac in zip(FOLDS, fractions)}
    counts = {f: 0 for f in FOLDS}
    assignment = {}
    max_cluster = max(fractions) * n
    for lab in order:
        group = clusters[lab]
        if len(group) > max_cluster:
            warnings.warn(
                f"cluster {lab} has {len(group)} samples, exceeding the "
                f"largest fold target ({max_cluster:.1f}); assigned to train")
            fold = "train"
        else:
            shortfalls = {f: targets[f] - counts[f] for f in FOLDS}
            best = max(shortfalls.values())
            tied = [f for f in FOLDS if shortfalls[f] == best]
            fold = tied[0] if len(tied) == 1 else str(rng.choice(tied))
        for idx in group:
            assignment[ids[idx]] = fold
        counts[fold] += len(group)
    achieved = {f: counts[f] / n for f in FOLDS}
    return FoldAssignment(
        assignment=assignment,
        provenance={"method": "agglomerative", "target_fractions": list(fractions),
                    "achieved_fractions": achieved,
                    "cluster_count": len(clusters)})


def random_split(ids, fractions, seed):
    """Seeded uniform shuffle, contiguous quota cut; rounding remainder
    goes to train."""
    _check_fractions(fractions)
    ids = list(ids)
    n = len(ids)
    rng = np.random.default_rng(seed)
    perm = rng.permutation(n)
    n_valid = int(round(fractions[1] * n))
    n_test = int(round(fractions[2] * n))
    n_train = n - n_valid - n_test
    assignment = {}
    for pos, k in enumerate(perm):
        if pos < n_train:
            fold = "train"
        elif pos < n_train + n_valid:
            fold = "valid"
        else:
            fold = "test"
        assignment[ids[k]] = fold
    achieved = {f: sum(1 for v in assignment.values() if v == f) / n for f in FOLDS}
    return FoldAssignment(
        assignment=assignment,
        provenance={"method": "random", "target_fractions": list(fractions),
                    "achieved_fractions": achieved, "seed": seed})


def load_distance_csv(text):
    """Square distance matrix CSV with a header row and first column of ids."""
    if isinstance(text, bytes):
        text = text.decode("utf-8")
    reader = csv.reader(io.StringIO(text))
    header = next(reader, None)
    if not header or len(header) < 2:
        raise ParseError("distance matrix CSV needs a header of sample ids")
    ids = header[1:]
    rows = []
    row_ids = []
    for lineno, row in enumerate(reader, start=2):
        if not row:
            continue
        row_ids.append(row[0])
        try:
            rows.append([float(v) for v in row[1:]])
        except ValueError:
            raise ParseError("non-numeric distance cell", line=lineno)
    if row_ids != ids:
        raise ParseError("distance matrix row ids must match header ids")
    D = np.array(rows, dtype=np.float64)
    if np.any(D < 0) or np.any(D > 1):
        raise ParseError("distances must lie in [0, 1]")
    return ids, _validate_distance_matrix(D)


def write_distance_csv(ids, D):
    out = io.StringIO()
    writer = csv.writer(out)
    writer.writerow([""] + list(ids))
    for i, sample_id in enumerate(ids):
        writer.writerow([sample_id] + [repr(float(v)) for v in D[i]])
    return out.getvalue()
