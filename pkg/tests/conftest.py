import numpy as np
import pytest

from targetflow.config import AtomVocab, GraphShape


@pytest.fixture
def shape():
    return GraphShape()


@pytest.fixture
def tiny_shape():
    # N=4, K=3, C=2: the smallest configuration the numeric-Jacobian
    # and audit tests use.
    return GraphShape(max_atoms=4, vocab=AtomVocab(("C", "N", "O")), bond_channels=2)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)
