"""Target-conditioned generation through the inverse flows.

A (possibly space-sampled) target embedding is split into its atom and
bond blocks; the bond block is decoded first, discretized, and the atom
block is decoded conditioned on that discrete bond tensor. The result
is discretized into a MolGraph and, by default, valence-corrected.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ParameterRangeError, UntrainedModelError
from .graphs import ContinuousGraph, MolGraph, discretize
from .metrics import check_valence
from .model import TargetConditionedFlow
from .objectives import SpaceParams, sample_space


@dataclass(frozen=True)
class GenerationRequest:
    sequence: str
    n_samples: int = 1
    lam: float | None = None     # None: use the model's trained lambda
    seed: int = 0

    def __post_init__(self):
        if self.n_samples < 1:
            raise ParameterRangeError("n_samples must be >= 1")


def discretize_bonds(b_cont: np.ndarray) -> np.ndarray:
    """Bond-only discretization used for conditioning the atom decode:
    symmetrized scores, a bond where the max averaged score is >= 0.5,
    channel by argmax. No occupancy mask (atoms are not decoded yet)."""
    c, n = b_cont.shape[0], b_cont.shape[1]
    sym = 0.5 * (b_cont + np.swapaxes(b_cont, 1, 2))
    out = np.zeros((c, n, n), dtype=np.float64)
    for i in range(n):
        for j in range(i + 1, n):
            scores = sym[:, i, j]
            if scores.max() >= 0.5:
                ch = int(np.argmax(scores))
                out[ch, i, j] = 1.0
                out[ch, j, i] = 1.0
    return out


def generate(model: TargetConditionedFlow, req: GenerationRequest,
             correct: bool = True) -> list[MolGraph]:
    """Generate ``n_samples`` molecules for one target sequence.

    Deterministic for a fixed (model, request): the request's seed owns
    all sampling randomness. With lam = 0 every sample is the same graph.
    """
    if not model.initialized:
        raise UntrainedModelError("flow normalization was never initialized; "
                                  "train or load a checkpoint first")
    rng = np.random.default_rng(req.seed)
    z_t = model.encoder.encode(req.sequence).z
    lam = model.space_lambda if req.lam is None else req.lam
    space = SpaceParams(lam=lam, sigma=model.sigma)
    split = model.shape.atom_block

    out: list[MolGraph] = []
    for _ in range(req.n_samples):
        z = sample_space(z_t, space, rng)
        z_atoms = z[:split][None, :]
        z_bonds = z[split:][None, :]
        b_cont, _ = model.bond_flow.inverse(z_bonds)
        b_disc = discretize_bonds(b_cont[0])
        a_cont, _ = model.atom_flow.inverse(z_atoms, b_disc[None])
        g = discretize(ContinuousGraph(a_cont[0], b_cont[0], model.shape))
        if correct:
            g = validity_correction(g)
        out.append(g)
    return out


def validity_correction(g: MolGraph, valences: dict[int, int] | None = None) -> MolGraph:
    """Deterministically repair valence violations, then keep the largest
    connected component.

    While any atom exceeds its valence cap, the largest-order bond at
    the worst-offending atom is decremented (or deleted when single);
    ties break toward the lowest atom index, then the lowest (i, j)
    pair. Idempotent; the output is a subgraph of the input with
    possibly weakened bond orders. A graph with no atoms passes through
    unchanged (there is nothing to correct).
    """
    vocab = g.shape.vocab
    caps = {t: (valences[t] if valences is not None else vocab.max_valence(t))
            for t in range(g.shape.n_atom_types)}
    atoms = g.atoms.copy()
    occupied = atoms.sum(axis=1) == 1
    types = {int(i): int(np.argmax(atoms[i])) for i in np.nonzero(occupied)[0]}
    orders = g.bond_orders().astype(np.int64)

    if not types:
        return g

    while True:
        totals = orders.sum(axis=1)
        worst, worst_excess = -1, 0
        for i in sorted(types):
            excess = int(totals[i]) - caps[types[i]]
            if excess > worst_excess:
                worst, worst_excess = i, excess
        if worst < 0:
            break
        # Largest-order bond at the offender, lowest (i, j) on ties.
        partners = np.nonzero(orders[worst])[0]
        best = None
        for j in partners:
            key = (-int(orders[worst, j]), min(worst, int(j)), max(worst, int(j)))
            if best is None or key < best[0]:
                best = (key, int(j))
        j = best[1]
        orders[worst, j] -= 1
        orders[j, worst] -= 1

    # Keep the largest connected component (lowest-slot tie-break).
    n = g.shape.max_atoms
    labels = np.full(n, -1, dtype=np.int64)
    comp_sizes: list[int] = []
    for start in sorted(types):
        if labels[start] != -1:
            continue
        comp = len(comp_sizes)
        stack = [start]
        labels[start] = comp
        size = 0
        while stack:
            i = stack.pop()
            size += 1
            for jj in np.nonzero(orders[i])[0]:
                if labels[jj] == -1:
                    labels[jj] = comp
                    stack.append(int(jj))
        comp_sizes.append(size)
    keep = int(np.argmax(comp_sizes))   # argmax takes the first (lowest-slot) max

    new_atoms = np.zeros_like(g.atoms)
    new_bonds = np.zeros_like(g.bonds)
    for i, t in types.items():
        if labels[i] == keep:
            new_atoms[i, t] = 1
    for i in range(n):
        if labels[i] != keep:
            continue
        for j in range(i + 1, n):
            if labels[j] == keep and orders[i, j] > 0:
                new_bonds[int(orders[i, j]) - 1, i, j] = 1
                new_bonds[int(orders[i, j]) - 1, j, i] = 1
    corrected = MolGraph(new_atoms, new_bonds, g.shape)
    assert corrected.n_heavy == 0 or check_valence(corrected)
    return corrected
