import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from targetflow.config import GraphShape
from targetflow.datasets import random_valid_graph
from targetflow.errors import ParameterRangeError, ShapeMismatchError
from targetflow.graphs import ContinuousGraph, MolGraph, dequantize, discretize, graph_from_lists


def test_invariants_reject_asymmetric_bonds(shape):
    n, k, c = shape.max_atoms, shape.n_atom_types, shape.bond_channels
    a = np.zeros((n, k), np.int8)
    a[0, 0] = a[1, 0] = 1
    b = np.zeros((c, n, n), np.int8)
    b[0, 0, 1] = 1  # missing the mirror entry
    with pytest.raises(ShapeMismatchError):
        MolGraph(a, b, shape)


def test_invariants_reject_double_channel(shape):
    g = graph_from_lists(shape, [0, 0], [(0, 1, 1)])
    b = g.bonds.copy()
    b[1, 0, 1] = b[1, 1, 0] = 1
    with pytest.raises(ShapeMismatchError):
        MolGraph(g.atoms, b, shape)


def test_invariants_reject_bond_to_padding(shape):
    n, k, c = shape.max_atoms, shape.n_atom_types, shape.bond_channels
    a = np.zeros((n, k), np.int8)
    a[0, 0] = 1
    b = np.zeros((c, n, n), np.int8)
    b[0, 0, 1] = b[0, 1, 0] = 1
    with pytest.raises(ShapeMismatchError):
        MolGraph(a, b, shape)


def test_invariants_reject_self_bond(shape):
    with pytest.raises(ShapeMismatchError):
        graph_from_lists(shape, [0], [(0, 0, 1)])


def test_dequantize_range_errors(shape, rng):
    g = graph_from_lists(shape, [0], [])
    for bad in (0.0, 1.0, -0.1, 1.5):
        with pytest.raises(ParameterRangeError):
            dequantize(g, bad, rng)


def test_dequantize_zero_noise_limit(shape, rng):
    g = graph_from_lists(shape, [0, 1], [(0, 1, 2)])
    cg = dequantize(g, 1e-12, rng)
    assert np.allclose(cg.atoms_cont, g.atoms, atol=1e-11)
    assert np.allclose(cg.bonds_cont, g.bonds, atol=1e-11)


def test_dequantize_deterministic(shape):
    g = graph_from_lists(shape, [0, 1], [(0, 1, 1)])
    a = dequantize(g, 0.4, np.random.default_rng(7))
    b = dequantize(g, 0.4, np.random.default_rng(7))
    assert np.array_equal(a.atoms_cont, b.atoms_cont)
    assert np.array_equal(a.bonds_cont, b.bonds_cont)


def test_dequantize_noise_mean(shape):
    # Law of large numbers on U[0, 0.4): the empirical per-entry noise
    # mean over 1000 draws sits within 0.2 +/- 0.02.
    g = graph_from_lists(shape, [0, 0, 0], [(0, 1, 1), (1, 2, 1)])
    rng = np.random.default_rng(99)
    total = np.zeros_like(g.atoms, dtype=np.float64)
    for _ in range(1000):
        total += dequantize(g, 0.4, rng).atoms_cont - g.atoms
    assert np.all(np.abs(total / 1000 - 0.2) < 0.02)


def test_discretize_exact_one_hot(shape):
    g = graph_from_lists(shape, [0, 1, 2], [(0, 1, 2), (1, 2, 1)])
    cg = ContinuousGraph(g.atoms.astype(float), g.bonds.astype(float), shape)
    assert discretize(cg).same_graph(g)


def test_discretize_asymmetric_tie_rule(shape):
    # Scores 0.9 and 0.1 average to exactly 0.5; the tie resolves to a
    # bond on the scored channel.
    n, k, c = shape.max_atoms, shape.n_atom_types, shape.bond_channels
    a = np.zeros((n, k))
    a[0, 0] = a[1, 0] = 1.0
    b = np.zeros((c, n, n))
    b[1, 0, 1] = 0.9
    b[1, 1, 0] = 0.1
    g = discretize(ContinuousGraph(a, b, shape))
    assert g.bonds[1, 0, 1] == 1 and g.bonds[1, 1, 0] == 1
    # Just below the threshold: no bond.
    b[1, 0, 1] = 0.89
    g2 = discretize(ContinuousGraph(a, b, shape))
    assert g2.bonds.sum() == 0


@settings(max_examples=60, deadline=None)
@given(seed=st.integers(0, 10**6), noise=st.floats(1e-6, 0.5))
def test_dequantize_discretize_roundtrip(seed, noise):
    # Identity holds for any noise scale up to the 0.5 argmax margin.
    shape = GraphShape()
    rng = np.random.default_rng(seed)
    g = random_valid_graph(shape, rng, min_atoms=1)
    assert discretize(dequantize(g, noise, rng)).same_graph(g)


def test_symmetry_preserved_by_discretize(shape, rng):
    x = ContinuousGraph(rng.uniform(0, 1, (shape.max_atoms, shape.n_atom_types)),
                        rng.uniform(0, 1, (shape.bond_channels, shape.max_atoms,
                                           shape.max_atoms)),
                        shape)
    g = discretize(x)
    assert np.array_equal(g.bonds, np.swapaxes(g.bonds, 1, 2))
    assert np.all(np.diagonal(g.bonds, axis1=1, axis2=2) == 0)
