"""Model assembly: sequence encoder plus the two flow stacks, with a
flat named-parameter registry shared by the optimizer, the gradient
audit, and checkpointing.
"""

from __future__ import annotations

import numpy as np

from .config import GraphShape, TrainConfig
from .encoder import SequenceEncoder
from .flows import AtomFlow, BondFlow


class TargetConditionedFlow:
    """Everything trainable: g_T, the bond flow, and the atom flow.

    ``sigma`` is the elementwise std of the training targets' embeddings,
    refreshed during training and persisted in checkpoints so generation
    can sample one-to-many spaces without the training data.
    """

    def __init__(self, shape: GraphShape, cfg: TrainConfig, rng: np.random.Generator):
        self.shape = shape
        self.cfg = cfg
        self.encoder = SequenceEncoder(cfg.kmer_size, cfg.encoder_hidden,
                                       shape.latent_dim, rng,
                                       max_seq_len=cfg.max_seq_len)
        self.bond_flow = BondFlow(shape, cfg.coupling_blocks,
                                  cfg.conditioner_hidden, rng)
        self.atom_flow = AtomFlow(shape, cfg.coupling_blocks,
                                  cfg.conditioner_hidden, rng)
        self.sigma = np.zeros(shape.latent_dim)
        self.space_lambda = cfg.space_lambda
        self.epoch = 0

    def params(self) -> dict[str, np.ndarray]:
        out: dict[str, np.ndarray] = {}
        out.update(self.encoder.params("encoder/"))
        out.update(self.bond_flow.params("bond_flow/"))
        out.update(self.atom_flow.params("atom_flow/"))
        return dict(sorted(out.items()))

    @property
    def n_parameters(self) -> int:
        return sum(p.size for p in self.params().values())

    @property
    def initialized(self) -> bool:
        return self.bond_flow.initialized

    def embed_molecules(self, atoms_cont: np.ndarray, bonds_cont: np.ndarray,
                        bonds_discrete: np.ndarray):
        """Forward both flows; returns (z_m, logdet, caches)."""
        z_b, ld_b, bcache = self.bond_flow.forward(bonds_cont)
        z_a, ld_a, acache = self.atom_flow.forward(atoms_cont, bonds_discrete)
        z_m = np.concatenate([z_a, z_b], axis=1)
        return z_m, ld_a + ld_b, (acache, bcache)


def build_model(shape: GraphShape, cfg: TrainConfig, seed: int | None = None,
                rng: np.random.Generator | None = None) -> TargetConditionedFlow:
    if rng is None:
        rng = np.random.default_rng(cfg.seed if seed is None else seed)
    return TargetConditionedFlow(shape, cfg, rng)
