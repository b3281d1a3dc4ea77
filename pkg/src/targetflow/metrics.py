"""Chemical validity, fingerprints, canonical hashing, generative metrics.

Validity here means connected plus valence-feasible on the configured
valence table. That is deliberately weaker than full toolkit
sanitization; the agreement gap is measured by the external oracle
rather than hidden.
"""

from __future__ import annotations

import csv
import hashlib
import json
import struct
from dataclasses import dataclass, field

import numpy as np

from .errors import EmptyTrainingSetError, FingerprintWidthError
from .graphs import MolGraph

# Fixed, published hashing seed: all fingerprints and canonical digests
# are keyed blake2b so they are stable across platforms and sessions.
HASH_SEED = b"targetflow-fp-v1"


def _hash64(*fields: int) -> int:
    payload = struct.pack(f"<{len(fields)}Q", *fields)
    digest = hashlib.blake2b(payload, digest_size=8, key=HASH_SEED).digest()
    return int.from_bytes(digest, "little")


def check_valence(g: MolGraph, valences: dict[int, int] | None = None) -> bool:
    """True iff every atom's total bond order fits its valence cap and
    the occupied slots form one connected component."""
    if g.n_heavy == 0:
        return False
    if not g.is_connected():
        return False
    vocab = g.shape.vocab
    orders = g.bond_orders().sum(axis=1)
    for slot in np.nonzero(g.occupied)[0]:
        cap = (valences[g.atom_type(slot)] if valences is not None
               else vocab.max_valence(g.atom_type(slot)))
        if orders[slot] > cap:
            return False
    return True


@dataclass(frozen=True)
class Fingerprint:
    """Hashed circular (ECFP-style) fingerprint as a set bit collection."""

    bits: frozenset[int]
    width: int = 2048
    radius: int = 2

    @property
    def bit_count(self) -> int:
        return len(self.bits)


def circular_fingerprint(g: MolGraph, radius: int = 2, width: int = 2048) -> Fingerprint:
    """Iterative neighborhood hashing: round-0 identifiers come from the
    atom type; each round rehashes an atom's identifier with its sorted
    (bond order, neighbor identifier) pairs. Every identifier from every
    round sets bit (hash mod width)."""
    occupied = np.nonzero(g.occupied)[0]
    neighbors = {int(i): g.neighbors(int(i)) for i in occupied}
    ids = {int(i): _hash64(0, g.atom_type(int(i))) for i in occupied}
    bits = {v % width for v in ids.values()}
    for r in range(1, radius + 1):
        nxt = {}
        for i in occupied:
            i = int(i)
            env = sorted((order, ids[j]) for j, order in neighbors[i])
            flat = [r, ids[i]]
            for order, nid in env:
                flat.extend((order, nid))
            nxt[i] = _hash64(*flat)
        ids = nxt
        bits.update(v % width for v in ids.values())
    return Fingerprint(frozenset(bits), width=width, radius=radius)


def tanimoto(a: Fingerprint, b: Fingerprint) -> float:
    """|a AND b| / |a OR b|; 1.0 when both fingerprints are empty."""
    if a.width != b.width:
        raise FingerprintWidthError(f"widths differ: {a.width} vs {b.width}")
    union = len(a.bits | b.bits)
    if union == 0:
        return 1.0
    return len(a.bits & b.bits) / union


def canonical_hash(g: MolGraph) -> int:
    """64-bit isomorphism-invariant digest.

    Weisfeiler-Lehman style refinement over atom types and bond orders,
    run for N rounds, combined order-independently (sorted multiset of
    final labels plus the atom count).
    """
    occupied = [int(i) for i in np.nonzero(g.occupied)[0]]
    neighbors = {i: g.neighbors(i) for i in occupied}
    labels = {i: _hash64(1, g.atom_type(i)) for i in occupied}
    for _ in range(g.shape.max_atoms):
        refined = {}
        for i in occupied:
            env = sorted((order, labels[j]) for j, order in neighbors[i])
            flat = [labels[i]]
            for order, lab in env:
                flat.extend((order, lab))
            refined[i] = _hash64(*flat)
        labels = refined
    combined = sorted(labels.values())
    return _hash64(len(occupied), *combined)


def brute_force_isomorphic(a: MolGraph, b: MolGraph) -> bool:
    """Exhaustive permutation check; test oracle for canonical_hash.

    Only sensible for small graphs (factorial in the atom count).
    """
    from itertools import permutations

    occ_a = [int(i) for i in np.nonzero(a.occupied)[0]]
    occ_b = [int(i) for i in np.nonzero(b.occupied)[0]]
    if len(occ_a) != len(occ_b):
        return False
    types_a = [a.atom_type(i) for i in occ_a]
    types_b = [b.atom_type(i) for i in occ_b]
    if sorted(types_a) != sorted(types_b):
        return False
    orders_a = a.bond_orders()
    orders_b = b.bond_orders()
    for perm in permutations(range(len(occ_b))):
        if any(types_a[i] != types_b[perm[i]] for i in range(len(occ_a))):
            continue
        ok = True
        for i in range(len(occ_a)):
            for j in range(i + 1, len(occ_a)):
                if orders_a[occ_a[i], occ_a[j]] != orders_b[occ_b[perm[i]], occ_b[perm[j]]]:
                    ok = False
                    break
            if not ok:
                break
        if ok:
            return True
    return False


@dataclass
class MoleculeRow:
    index: int
    valid: bool
    hash_hex: str
    unique_first: bool
    novel: bool
    nn_tanimoto: float
    smiles: str = ""


@dataclass
class MetricsReport:
    """Generative metric suite over a generated set vs a training set.

    Percentages are in [0, 100]; uniqueness, novelty and similarity are
    computed over the valid molecules only.
    """

    validity: float
    uniqueness: float
    novelty: float
    mean_nn_tanimoto: float
    n_generated: int
    n_valid: int
    rows: list[MoleculeRow] = field(default_factory=list)

    def to_json(self) -> str:
        return json.dumps(
            {
                "validity_pct": self.validity,
                "uniqueness_pct": self.uniqueness,
                "novelty_pct": self.novelty,
                "mean_nn_tanimoto_pct": self.mean_nn_tanimoto,
                "n_generated": self.n_generated,
                "n_valid": self.n_valid,
            },
            indent=2,
            sort_keys=True,
        )

    def write_rows_csv(self, path):
        with open(path, "w", newline="", encoding="utf-8") as fh:
            w = csv.writer(fh)
            w.writerow(["index", "valid", "canonical_hash", "unique_first",
                        "novel", "nn_tanimoto", "smiles"])
            for r in self.rows:
                w.writerow([r.index, int(r.valid), r.hash_hex, int(r.unique_first),
                            int(r.novel), f"{r.nn_tanimoto:.17g}", r.smiles])


def evaluate(generated: list[MolGraph], train_set: list[MolGraph],
             radius: int = 2, width: int = 2048,
             smiles_of=None) -> MetricsReport:
    """Validity / uniqueness / novelty / nearest-neighbor Tanimoto.

    validity    = valid / generated
    uniqueness  = distinct canonical hashes among valid / valid
    novelty     = valid with hash absent from the training set / valid
    similarity  = mean over valid of max Tanimoto against the training set
    """
    if not train_set:
        raise EmptyTrainingSetError("novelty/similarity need a training set")

    train_hashes = {canonical_hash(t) for t in train_set}
    train_fps = [circular_fingerprint(t, radius, width) for t in train_set]

    rows: list[MoleculeRow] = []
    seen: set[int] = set()
    n_valid = 0
    n_unique = 0
    n_novel = 0
    sims: list[float] = []
    for idx, g in enumerate(generated):
        valid = check_valence(g)
        h = canonical_hash(g) if valid else 0
        unique_first = False
        novel = False
        sim = 0.0
        if valid:
            n_valid += 1
            if h not in seen:
                seen.add(h)
                n_unique += 1
                unique_first = True
            if h not in train_hashes:
                n_novel += 1
                novel = True
            fp = circular_fingerprint(g, radius, width)
            sim = max(tanimoto(fp, tfp) for tfp in train_fps)
            sims.append(sim)
        smi = smiles_of(g) if (smiles_of is not None and valid) else ""
        rows.append(MoleculeRow(idx, valid, f"{h:016x}", unique_first, novel, sim, smi))

    n_total = len(generated)
    validity = 100.0 * n_valid / n_total if n_total else 0.0
    uniqueness = 100.0 * n_unique / n_valid if n_valid else 0.0
    novelty = 100.0 * n_novel / n_valid if n_valid else 0.0
    mean_sim = 100.0 * float(np.mean(sims)) if sims else 0.0
    return MetricsReport(validity, uniqueness, novelty, mean_sim,
                         n_total, n_valid, rows)
