"""Shared configuration: atom vocabulary, tensor shapes, training knobs.

The graph tensors are sized by three numbers fixed up front: the slot
count N (padding included), the atom-type count K, and the bond-channel
count C. The flow latent dimension is D = N*K + C*N*N, split into an
atom block (first N*K coordinates) and a bond block (the rest).
"""

from __future__ import annotations

from dataclasses import dataclass, field, asdict

from .errors import ParameterRangeError

# Default vocabulary: common drug-like heavy elements with their maximum
# valences. The element list is configurable; the bond channels are
# single/double/triple (kekulized input, no aromatic channel).
DEFAULT_ATOM_SYMBOLS = ("C", "N", "O", "F", "P", "S", "Cl", "Br", "I", "B", "Si")

MAX_VALENCE = {
    "C": 4, "N": 3, "O": 2, "F": 1, "P": 5, "S": 6,
    "Cl": 1, "Br": 1, "I": 1, "B": 3, "Si": 4,
}

AMINO_ACIDS = "ACDEFGHIKLMNPQRSTVWY"


@dataclass(frozen=True)
class AtomVocab:
    """Ordered element symbols and their valence caps."""

    symbols: tuple[str, ...] = DEFAULT_ATOM_SYMBOLS

    def __post_init__(self):
        seen = set()
        for s in self.symbols:
            if s in seen:
                raise ParameterRangeError(f"duplicate element {s!r} in vocabulary")
            if s not in MAX_VALENCE:
                raise ParameterRangeError(f"no valence entry for element {s!r}")
            seen.add(s)

    @property
    def size(self) -> int:
        return len(self.symbols)

    def index(self, symbol: str) -> int:
        return self.symbols.index(symbol)

    def max_valence(self, type_index: int) -> int:
        return MAX_VALENCE[self.symbols[type_index]]

    def two_letter_symbols(self) -> tuple[str, ...]:
        return tuple(s for s in self.symbols if len(s) == 2)


@dataclass(frozen=True)
class GraphShape:
    """Tensor dimensions of the molecular graph encoding."""

    max_atoms: int = 9
    vocab: AtomVocab = field(default_factory=AtomVocab)
    bond_channels: int = 3

    def __post_init__(self):
        if self.max_atoms < 1:
            raise ParameterRangeError("max_atoms must be >= 1")
        if self.bond_channels < 1:
            raise ParameterRangeError("bond_channels must be >= 1")

    @property
    def n_atom_types(self) -> int:
        return self.vocab.size

    @property
    def atom_block(self) -> int:
        return self.max_atoms * self.n_atom_types

    @property
    def bond_block(self) -> int:
        return self.bond_channels * self.max_atoms * self.max_atoms

    @property
    def latent_dim(self) -> int:
        return self.atom_block + self.bond_block


@dataclass
class TrainConfig:
    """Training hyperparameters; defaults mirror the reference recipe
    (Adam, learning rate 0.001, batch size 16, 100 epochs)."""

    learning_rate: float = 0.001
    batch_size: int = 16
    epochs: int = 100
    seed: int = 0
    space_lambda: float = 0.1      # one-to-many noise scale
    kernel_t: float = 2.0          # Gaussian potential temperature
    coupling_blocks: int = 4       # Q, per flow stack
    noise_scale: float = 0.4       # dequantization noise, must stay < 0.5
    align_weight: float = 1.0
    unif_weight: float = 1.0
    logdet_weight: float = 0.0     # optional stabilizer, off by default
    grad_clip: float = 10.0        # global-norm clip, disclosed stabilizer
    kmer_size: int = 3
    encoder_hidden: int = 256
    conditioner_hidden: int = 64
    adam_beta1: float = 0.9
    adam_beta2: float = 0.999
    adam_eps: float = 1e-8
    max_seq_len: int = 2000

    def __post_init__(self):
        if self.batch_size < 2:
            raise ParameterRangeError("batch_size must be >= 2")
        for name in ("epochs", "kernel_t", "noise_scale"):
            if getattr(self, name) <= 0:
                raise ParameterRangeError(f"{name} must be positive")
        if not self.noise_scale < 1.0:
            raise ParameterRangeError("noise_scale must lie in (0, 1)")
        if self.learning_rate < 0:
            raise ParameterRangeError("learning_rate must be >= 0")
        if self.space_lambda < 0:
            raise ParameterRangeError("space_lambda must be >= 0")
        if self.kmer_size not in (1, 2, 3):
            raise ParameterRangeError("kmer_size must be 1, 2 or 3")

    def as_dict(self) -> dict:
        return asdict(self)
