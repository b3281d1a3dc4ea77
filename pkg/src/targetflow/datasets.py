"""Drug-target pair datasets: TSV loading, deterministic splits, and the
synthetic desk-scale generator.

File format: UTF-8 TSV with three columns (target_id, amino-acid
sequence, SMILES); lines starting with '#' are ignored. Split
assignment hashes the target sequence, so a protein can never appear in
more than one of train/valid/test.
"""

from __future__ import annotations

import hashlib
from dataclasses import dataclass, field

import numpy as np

from .config import AMINO_ACIDS, GraphShape
from .errors import DataIOError, DatasetFormatError, SequenceAlphabetError, SmilesSyntaxError
from .graphs import MolGraph, graph_from_lists
from .metrics import check_valence
from .smiles import parse_smiles, write_smiles

SPLITS = ("train", "valid", "test")


@dataclass(frozen=True)
class PairRecord:
    target_id: str
    sequence: str
    smiles: str


@dataclass
class PairDataset:
    records: list[PairRecord] = field(default_factory=list)
    splits: list[str] = field(default_factory=list)   # parallel to records

    def __len__(self) -> int:
        return len(self.records)

    def split(self, name: str) -> list[PairRecord]:
        return [r for r, s in zip(self.records, self.splits) if s == name]

    def split_sizes(self) -> dict[str, int]:
        return {name: self.splits.count(name) for name in SPLITS}

    def unique_targets(self, name: str | None = None) -> list[str]:
        seen: dict[str, None] = {}
        for r, s in zip(self.records, self.splits):
            if name is None or s == name:
                seen.setdefault(r.sequence)
        return list(seen)


def split_of_sequence(sequence: str) -> str:
    """Deterministic 8/1/1 split from a hash of the target sequence."""
    digest = hashlib.sha256(sequence.encode("utf-8")).digest()
    bucket = digest[0] % 10
    if bucket < 8:
        return "train"
    return "valid" if bucket == 8 else "test"


def _validate_sequence(seq: str, line_no: int):
    bad = set(seq) - set(AMINO_ACIDS)
    if bad:
        raise SequenceAlphabetError(
            f"line {line_no}: non-canonical amino acid(s) {sorted(bad)!r}")


def load_pairs(path, shape: GraphShape | None = None) -> PairDataset:
    """Parse a TSV pair file; every SMILES is checked against the
    subset grammar so format errors surface with their line number."""
    shape = shape or GraphShape()
    try:
        with open(path, "r", encoding="utf-8") as fh:
            lines = fh.readlines()
    except OSError as exc:
        raise DataIOError(f"cannot read dataset {path}: {exc}") from exc

    ds = PairDataset()
    seq_of_id: dict[str, str] = {}
    for line_no, raw in enumerate(lines, start=1):
        line = raw.rstrip("\n").rstrip("\r")
        if not line or line.startswith("#"):
            continue
        cols = line.split("\t")
        if len(cols) != 3:
            raise DatasetFormatError(
                f"line {line_no}: expected 3 tab-separated columns, got {len(cols)}")
        target_id, sequence, smiles = cols
        _validate_sequence(sequence, line_no)
        # Splits hash the sequence, so one id with two sequences could
        # straddle splits; reject the inconsistency up front.
        if seq_of_id.setdefault(target_id, sequence) != sequence:
            raise DatasetFormatError(
                f"line {line_no}: target_id {target_id!r} maps to multiple sequences")
        try:
            parse_smiles(smiles, shape)
        except SmilesSyntaxError as exc:
            exc.line = line_no
            raise SmilesSyntaxError(f"line {line_no}: {exc.args[0]}") from exc
        ds.records.append(PairRecord(target_id, sequence, smiles))
        ds.splits.append(split_of_sequence(sequence))
    return ds


def save_pairs(ds: PairDataset, path):
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write("# target_id\tsequence\tsmiles\n")
        for r in ds.records:
            fh.write(f"{r.target_id}\t{r.sequence}\t{r.smiles}\n")


def random_valid_graph(shape: GraphShape, rng: np.random.Generator,
                       min_atoms: int = 1, max_atoms: int | None = None,
                       extra_edges: int = 2) -> MolGraph:
    """Rejection-sample a connected, valence-valid molecule.

    A random spanning tree guarantees connectivity; a few extra edges
    add rings; candidates failing check_valence are re-drawn.
    """
    max_atoms = min(max_atoms or shape.max_atoms, shape.max_atoms)
    while True:
        n = int(rng.integers(min_atoms, max_atoms + 1))
        # Bias toward carbon-like chemistry so rejection stays cheap.
        types = [int(rng.integers(0, shape.n_atom_types)) if rng.random() < 0.4 else 0
                 for _ in range(n)]
        bonds: list[tuple[int, int, int]] = []
        bonded = set()
        for i in range(1, n):
            j = int(rng.integers(0, i))
            order = int(rng.choice([1, 2, 3], p=[0.7, 0.2, 0.1]))
            order = min(order, shape.bond_channels)
            bonds.append((j, i, order))
            bonded.add((j, i))
        for _ in range(int(rng.integers(0, extra_edges + 1))):
            if n < 3:
                break
            i, j = sorted(int(v) for v in rng.choice(n, size=2, replace=False))
            if (i, j) in bonded:
                continue
            bonded.add((i, j))
            bonds.append((i, j, 1))
        g = graph_from_lists(shape, types, bonds)
        if check_valence(g):
            return g


def make_synthetic_pairs(n_pairs: int, seed: int,
                         shape: GraphShape | None = None,
                         drugs_per_target: int = 4,
                         seq_len: int = 60) -> PairDataset:
    """Deterministic desk-scale surrogate dataset.

    Targets are random sequences; each maps to ``drugs_per_target``
    random valid molecules, exercising the one-to-many setting.
    """
    shape = shape or GraphShape()
    if n_pairs % drugs_per_target != 0:
        raise DatasetFormatError(
            f"n_pairs={n_pairs} must be a multiple of drugs_per_target={drugs_per_target}")
    rng = np.random.default_rng(seed)
    ds = PairDataset()
    n_targets = n_pairs // drugs_per_target
    letters = np.array(list(AMINO_ACIDS))
    for ti in range(n_targets):
        seq = "".join(rng.choice(letters, size=seq_len))
        target_id = f"T{ti:04d}"
        for _ in range(drugs_per_target):
            g = random_valid_graph(shape, rng, min_atoms=3, max_atoms=9)
            ds.records.append(PairRecord(target_id, seq, write_smiles(g)))
            ds.splits.append(split_of_sequence(seq))
    return ds
