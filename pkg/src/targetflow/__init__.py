"""targetflow: conditional normalizing flows that generate molecular
graphs from protein target sequences.

The library is numpy-first: exact invertible flow layers with analytic
log-determinants and hand-derived reverse-mode gradients, a kekulized
SMILES subset, sequence-conditioned training objectives (alignment on
latents, Gaussian-potential uniformity on the unit hypersphere, and
one-to-many latent spaces), plus a generative metric suite.
"""

from .config import AtomVocab, GraphShape, TrainConfig
from .datasets import PairDataset, load_pairs, make_synthetic_pairs, save_pairs
from .encoder import SequenceEncoder, TargetEmbedding, kmer_featurize
from .errors import TargetFlowError
from .graphs import ContinuousGraph, MolGraph, dequantize, discretize
from .metrics import (
    Fingerprint,
    MetricsReport,
    canonical_hash,
    check_valence,
    circular_fingerprint,
    evaluate,
    tanimoto,
)
from .model import TargetConditionedFlow, build_model
from .sampling import GenerationRequest, generate, validity_correction
from .smiles import parse_smiles, write_smiles
from .training import (
    audit_gradients,
    load_checkpoint,
    prepare_records,
    save_checkpoint,
    train,
)

__version__ = "0.1.0"

__all__ = [
    "AtomVocab",
    "ContinuousGraph",
    "Fingerprint",
    "GenerationRequest",
    "GraphShape",
    "MetricsReport",
    "MolGraph",
    "PairDataset",
    "SequenceEncoder",
    "TargetConditionedFlow",
    "TargetEmbedding",
    "TargetFlowError",
    "TrainConfig",
    "audit_gradients",
    "kmer_featurize",
    "build_model",
    "canonical_hash",
    "check_valence",
    "circular_fingerprint",
    "dequantize",
    "discretize",
    "evaluate",
    "generate",
    "load_checkpoint",
    "load_pairs",
    "make_synthetic_pairs",
    "parse_smiles",
    "prepare_records",
    "save_checkpoint",
    "save_pairs",
    "tanimoto",
    "train",
    "validity_correction",
    "write_smiles",
    "__version__",
]
