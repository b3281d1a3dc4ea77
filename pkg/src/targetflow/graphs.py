"""Discrete molecular graphs and their dequantized continuous form.

A molecule occupies the first ``n_heavy`` of N atom slots. ``atoms`` is
an N x K one-hot matrix (all-zero rows are padding); ``bonds`` is a
C x N x N one-hot tensor, symmetric in the last two indices, with the
all-zero channel state meaning "no bond". Channel c encodes bond order
c + 1 (single/double/triple by default).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .config import GraphShape
from .errors import ParameterRangeError, ShapeMismatchError


@dataclass(frozen=True)
class MolGraph:
    """One-hot encoded molecular graph over a fixed slot layout."""

    atoms: np.ndarray   # (N, K) int8
    bonds: np.ndarray   # (C, N, N) int8
    shape: GraphShape

    def __post_init__(self):
        object.__setattr__(self, "atoms", np.ascontiguousarray(self.atoms, dtype=np.int8))
        object.__setattr__(self, "bonds", np.ascontiguousarray(self.bonds, dtype=np.int8))
        self.validate()

    def validate(self):
        n, k, c = self.shape.max_atoms, self.shape.n_atom_types, self.shape.bond_channels
        if self.atoms.shape != (n, k):
            raise ShapeMismatchError(f"atoms shape {self.atoms.shape}, expected {(n, k)}")
        if self.bonds.shape != (c, n, n):
            raise ShapeMismatchError(f"bonds shape {self.bonds.shape}, expected {(c, n, n)}")
        row_sums = self.atoms.sum(axis=1)
        if not np.all((row_sums == 0) | (row_sums == 1)):
            raise ShapeMismatchError("atom rows must be one-hot or all-zero")
        if not np.array_equal(self.bonds, np.swapaxes(self.bonds, 1, 2)):
            raise ShapeMismatchError("bond tensor must be symmetric in the slot indices")
        if np.any(np.diagonal(self.bonds, axis1=1, axis2=2) != 0):
            raise ShapeMismatchError("self bonds are not allowed")
        if np.any(self.bonds.sum(axis=0) > 1):
            raise ShapeMismatchError("at most one bond channel per slot pair")
        occupied = row_sums == 1
        touched = self.bonds.sum(axis=(0, 1)) > 0
        if np.any(touched & ~occupied):
            raise ShapeMismatchError("bonds must not touch padding slots")

    @property
    def n_heavy(self) -> int:
        return int(self.atoms.sum())

    @property
    def occupied(self) -> np.ndarray:
        return self.atoms.sum(axis=1) == 1

    def atom_type(self, slot: int) -> int:
        return int(np.argmax(self.atoms[slot]))

    def bond_orders(self) -> np.ndarray:
        """(N, N) integer matrix of bond orders (0 = no bond)."""
        c = self.shape.bond_channels
        orders = np.arange(1, c + 1, dtype=np.int64)
        return np.einsum("c,cij->ij", orders, self.bonds.astype(np.int64))

    def neighbors(self, slot: int) -> list[tuple[int, int]]:
        """(other_slot, order) pairs bonded to ``slot``."""
        row = self.bond_orders()[slot]
        return [(int(j), int(row[j])) for j in np.nonzero(row)[0]]

    def component_labels(self) -> np.ndarray:
        """Connected-component id per occupied slot, -1 for padding."""
        occ = self.occupied
        orders = self.bond_orders()
        labels = np.full(self.shape.max_atoms, -1, dtype=np.int64)
        comp = 0
        for start in np.nonzero(occ)[0]:
            if labels[start] != -1:
                continue
            stack = [int(start)]
            labels[start] = comp
            while stack:
                i = stack.pop()
                for j in np.nonzero(orders[i])[0]:
                    if labels[j] == -1:
                        labels[j] = comp
                        stack.append(int(j))
            comp += 1
        return labels

    def is_connected(self) -> bool:
        labels = self.component_labels()
        return self.n_heavy > 0 and labels.max(initial=-1) == 0

    def same_graph(self, other: "MolGraph") -> bool:
        """Slot-identical equality (not isomorphism)."""
        return (
            self.shape == other.shape
            and np.array_equal(self.atoms, other.atoms)
            and np.array_equal(self.bonds, other.bonds)
        )


def empty_graph(shape: GraphShape) -> MolGraph:
    n, k, c = shape.max_atoms, shape.n_atom_types, shape.bond_channels
    return MolGraph(np.zeros((n, k), np.int8), np.zeros((c, n, n), np.int8), shape)


def graph_from_lists(shape: GraphShape, types: list[int],
                     bonds: list[tuple[int, int, int]]) -> MolGraph:
    """Build a MolGraph from atom type indices and (i, j, order) bonds."""
    n, k, c = shape.max_atoms, shape.n_atom_types, shape.bond_channels
    if len(types) > n:
        raise ShapeMismatchError(f"{len(types)} atoms exceed {n} slots")
    a = np.zeros((n, k), np.int8)
    for slot, t in enumerate(types):
        a[slot, t] = 1
    b = np.zeros((c, n, n), np.int8)
    for i, j, order in bonds:
        b[order - 1, i, j] = 1
        b[order - 1, j, i] = 1
    return MolGraph(a, b, shape)


@dataclass(frozen=True)
class ContinuousGraph:
    """Real-valued graph tensors, the flow's input/output domain."""

    atoms_cont: np.ndarray   # (N, K) float64
    bonds_cont: np.ndarray   # (C, N, N) float64
    shape: GraphShape

    def __post_init__(self):
        object.__setattr__(self, "atoms_cont", np.ascontiguousarray(self.atoms_cont, dtype=np.float64))
        object.__setattr__(self, "bonds_cont", np.ascontiguousarray(self.bonds_cont, dtype=np.float64))
        n, k, c = self.shape.max_atoms, self.shape.n_atom_types, self.shape.bond_channels
        if self.atoms_cont.shape != (n, k):
            raise ShapeMismatchError(f"atoms_cont shape {self.atoms_cont.shape}, expected {(n, k)}")
        if self.bonds_cont.shape != (c, n, n):
            raise ShapeMismatchError(f"bonds_cont shape {self.bonds_cont.shape}, expected {(c, n, n)}")
        if not (np.all(np.isfinite(self.atoms_cont)) and np.all(np.isfinite(self.bonds_cont))):
            raise ShapeMismatchError("continuous graph entries must be finite")


def dequantize(g: MolGraph, noise_scale: float, rng: np.random.Generator) -> ContinuousGraph:
    """Add independent uniform noise in [0, noise_scale) to the one-hot
    tensors. Any noise_scale in (0, 1) keeps discretize() an exact
    inverse; below 0.5 even the per-entry threshold margin is preserved.
    """
    if not 0.0 < noise_scale < 1.0:
        raise ParameterRangeError(f"noise_scale must lie in (0, 1), got {noise_scale}")
    a = g.atoms.astype(np.float64) + rng.uniform(0.0, noise_scale, g.atoms.shape)
    b = g.bonds.astype(np.float64) + rng.uniform(0.0, noise_scale, g.bonds.shape)
    return ContinuousGraph(a, b, g.shape)


def discretize(x: ContinuousGraph) -> MolGraph:
    """Total function mapping continuous tensors back to a valid MolGraph.

    Per atom row: padding if the max score is < 0.5, else argmax over
    the K types (a tie at exactly 0.5 resolves to occupied). Per slot
    pair: scores are symmetrized by averaging x[c,i,j] and x[c,j,i];
    a bond exists when the max averaged score is >= 0.5, with the
    channel chosen by argmax. Bonds touching padding slots are dropped.
    """
    shape = x.shape
    n = shape.max_atoms

    atoms = np.zeros((n, shape.n_atom_types), np.int8)
    row_max = x.atoms_cont.max(axis=1)
    occupied = row_max >= 0.5
    for i in np.nonzero(occupied)[0]:
        atoms[i, int(np.argmax(x.atoms_cont[i]))] = 1

    bonds = np.zeros((shape.bond_channels, n, n), np.int8)
    sym = 0.5 * (x.bonds_cont + np.swapaxes(x.bonds_cont, 1, 2))
    for i in range(n):
        if not occupied[i]:
            continue
        for j in range(i + 1, n):
            if not occupied[j]:
                continue
            scores = sym[:, i, j]
            if scores.max() >= 0.5:
                c = int(np.argmax(scores))
                bonds[c, i, j] = 1
                bonds[c, j, i] = 1
    return MolGraph(atoms, bonds, shape)
