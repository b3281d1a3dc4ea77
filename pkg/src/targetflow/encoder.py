"""Protein sequence encoder: k-mer counts through a small MLP.

Maps an amino-acid string to the target embedding z in R^D plus its
L2-normalized projection onto the unit hypersphere. Any deterministic,
differentiable mapping works here; k-mer counts keep the package free
of pretrained weights.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np

from .config import AMINO_ACIDS
from .errors import SequenceAlphabetError, ShapeMismatchError

log = logging.getLogger(__name__)

_AA_INDEX = {a: i for i, a in enumerate(AMINO_ACIDS)}


@dataclass(frozen=True)
class TargetEmbedding:
    """A target's embedding and its projection onto the unit hypersphere."""

    z: np.ndarray
    z_hat: np.ndarray

    def __post_init__(self):
        if np.linalg.norm(self.z) > 0:
            if abs(np.linalg.norm(self.z_hat) - 1.0) > 1e-9:
                raise ShapeMismatchError("z_hat must be unit-norm")


def kmer_featurize(seq: str, k: int) -> np.ndarray:
    """Count vector over the 20^k k-mers in lexicographic order.

    The total count is max(len(seq) - k + 1, 0); unknown letters raise.
    """
    if k not in (1, 2, 3):
        raise ShapeMismatchError(f"k must be 1, 2 or 3, got {k}")
    counts = np.zeros(20 ** k)
    for pos in range(len(seq) - k + 1):
        idx = 0
        for ch in seq[pos:pos + k]:
            code = _AA_INDEX.get(ch)
            if code is None:
                raise SequenceAlphabetError(f"unknown amino acid {ch!r}")
            idx = idx * 20 + code
        counts[idx] += 1.0
    # Letters beyond the last window still need validating.
    for ch in seq[max(len(seq) - k + 1, 0):]:
        if ch not in _AA_INDEX:
            raise SequenceAlphabetError(f"unknown amino acid {ch!r}")
    return counts


class SequenceEncoder:
    """counts(20^k) -> L2 feature scaling -> affine(hidden) -> tanh ->
    affine(D).

    Init keeps per-coordinate output variance near 1, so fresh target
    embeddings start at the flow latents' natural scale (norm ~ sqrt(D))
    instead of collapsing at the origin.
    """

    def __init__(self, k: int, hidden: int, out_dim: int,
                 rng: np.random.Generator, max_seq_len: int = 2000):
        self.k = k
        self.max_seq_len = max_seq_len
        d_in = 20 ** k
        self.w1 = rng.standard_normal((d_in, hidden))
        self.b1 = np.zeros(hidden)
        # tanh of a unit-variance preactivation has variance ~0.39.
        self.w2 = rng.standard_normal((hidden, out_dim)) / np.sqrt(0.39 * hidden)
        self.b2 = np.zeros(out_dim)

    @property
    def out_dim(self) -> int:
        return self.w2.shape[1]

    def params(self, prefix: str = "") -> dict[str, np.ndarray]:
        return {prefix + "w1": self.w1, prefix + "b1": self.b1,
                prefix + "w2": self.w2, prefix + "b2": self.b2}

    def featurize(self, seq: str) -> np.ndarray:
        """k-mer counts scaled to unit L2 norm (zero vector stays zero)."""
        if len(seq) > self.max_seq_len:
            log.warning("truncating %d-residue sequence to %d",
                        len(seq), self.max_seq_len)
            seq = seq[:self.max_seq_len]
        counts = kmer_featurize(seq, self.k)
        norm = np.linalg.norm(counts)
        return counts / norm if norm > 0 else counts

    def forward(self, feats: np.ndarray):
        """feats (B, 20^k) -> embeddings (B, D), with cache."""
        if feats.ndim != 2 or feats.shape[1] != self.w1.shape[0]:
            raise ShapeMismatchError(
                f"expected (B, {self.w1.shape[0]}), got {feats.shape}")
        h = np.tanh(feats @ self.w1 + self.b1)
        z = h @ self.w2 + self.b2
        return z, (feats, h)

    def backward(self, cache, dz: np.ndarray):
        feats, h = cache
        dw2 = h.T @ dz
        db2 = dz.sum(axis=0)
        dh = dz @ self.w2.T
        dpre = dh * (1.0 - h * h)
        dw1 = feats.T @ dpre
        db1 = dpre.sum(axis=0)
        return {"w1": dw1, "b1": db1, "w2": dw2, "b2": db2}

    def encode(self, seq: str) -> TargetEmbedding:
        """Single sequence -> TargetEmbedding; z_hat is z scaled to unit
        norm (left as-is for the zero vector)."""
        z, _ = self.forward(self.featurize(seq)[None, :])
        z = z[0]
        norm = np.linalg.norm(z)
        z_hat = z / norm if norm > 0 else z.copy()
        return TargetEmbedding(z, z_hat)
