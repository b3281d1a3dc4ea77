"""Typed exception hierarchy.

Every operation in the package either returns a value or raises one of
these; nothing else escapes. Callers that need coarse handling can catch
``TargetFlowError``; the CLI maps subclasses onto exit codes.
"""


class TargetFlowError(Exception):
    """Base class for all package errors."""


# --- molecule / SMILES ingestion ---------------------------------------


class SmilesSyntaxError(TargetFlowError, ValueError):
    """Malformed SMILES token, unclosed branch or ring, or stray byte."""

    def __init__(self, message, position=None, line=None):
        self.position = position
        self.line = line
        where = ""
        if line is not None:
            where += f" (line {line})"
        if position is not None:
            where += f" (char {position})"
        super().__init__(message + where)


class UnknownElementError(SmilesSyntaxError):
    """Element symbol outside the configured atom vocabulary."""


class AromaticSmilesError(SmilesSyntaxError):
    """Lowercase aromatic atoms; input must be kekulized."""


class MoleculeTooLargeError(TargetFlowError, ValueError):
    """More heavy atoms than the configured slot count, or a graph too
    dense to serialize with single-digit ring closures."""


class DisconnectedGraphError(TargetFlowError, ValueError):
    """Operation requires a single connected component."""


# --- datasets and files --------------------------------------------------


class DataIOError(TargetFlowError, OSError):
    """File missing, unreadable, or truncated."""


class DatasetFormatError(TargetFlowError, ValueError):
    """Wrong column count or undecodable dataset line."""


class CheckpointIOError(DataIOError):
    """Checkpoint file damaged; message carries the failing byte offset."""


class CheckpointVersionError(TargetFlowError, ValueError):
    """Checkpoint format version or model configuration mismatch."""


# --- numerics ------------------------------------------------------------


class ShapeMismatchError(TargetFlowError, ValueError):
    """Tensor shape does not match the configured dimensions."""


class ParameterRangeError(TargetFlowError, ValueError):
    """Scalar argument outside its documented range (e.g. noise scale)."""


class ActnormNotInitializedError(TargetFlowError, RuntimeError):
    """Inverse pass requested before data-dependent initialization."""


class ZeroScaleError(TargetFlowError, ValueError):
    """Actnorm scale would be zero (degenerate initialization batch)."""


class SingularMixerError(TargetFlowError, ValueError):
    """Channel-mixing matrix determinant below the invertibility floor."""


class MissingForwardCacheError(TargetFlowError, RuntimeError):
    """backward() called without a matching cached forward pass."""


class SequenceAlphabetError(TargetFlowError, ValueError):
    """Amino-acid sequence contains a letter outside the 20 canonical."""


class EmptyBatchError(TargetFlowError, ValueError):
    """Statistic requested over an empty collection."""


class NotNormalizedError(TargetFlowError, ValueError):
    """Kernel input expected on the unit hypersphere."""


class BatchTooSmallError(TargetFlowError, ValueError):
    """Uniformity loss needs at least two distinct targets in a batch."""


class NonFiniteLossError(TargetFlowError, ArithmeticError):
    """NaN/inf encountered in a loss or its inputs; aborts the epoch."""


class FingerprintWidthError(TargetFlowError, ValueError):
    """Tanimoto between fingerprints of different widths."""


class EmptyTrainingSetError(TargetFlowError, ValueError):
    """Novelty/similarity need a non-empty training set."""


class UntrainedModelError(TargetFlowError, RuntimeError):
    """Generation from a model whose normalization was never initialized."""
