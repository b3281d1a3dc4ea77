"""Acceptance gate: every criterion at its stated tolerance, one printed
pass/fail line each.

Run with ``pytest tests/test_acceptance.py -v -s``. The directional
reproduction (the P6 group) trains three desk-scale models at the
pinned defaults (lr 0.001, batch 16, 100 epochs) on the deterministic
synthetic dataset; expect a few minutes of wall time.
"""

import itertools
import math
import time

import numpy as np
import pytest

from targetflow.config import AtomVocab, GraphShape, TrainConfig
from targetflow.datasets import make_synthetic_pairs, random_valid_graph
from targetflow.errors import TargetFlowError
from targetflow.flows import AtomFlow, BondFlow
from targetflow.graphs import dequantize, graph_from_lists
from targetflow.metrics import canonical_hash, check_valence, evaluate
from targetflow.model import build_model
from targetflow.objectives import (
    log_mean_pairwise_potential,
    unif_loss,
    unif_loss_grads,
)
from targetflow.sampling import GenerationRequest, generate, validity_correction
from targetflow.smiles import parse_smiles, write_smiles
from targetflow.training import audit_gradients, prepare_records, train


def report(criterion: str, ok: bool, detail: str):
    print(f"{criterion}: {'PASS' if ok else 'FAIL'} ({detail})")
    assert ok, f"{criterion}: {detail}"


# --- P1 invertibility -------------------------------------------------------


def test_p1_invertibility():
    t0 = time.monotonic()
    shape = GraphShape()
    cfg = TrainConfig()
    rng = np.random.default_rng(101)
    bond_flow = BondFlow(shape, cfg.coupling_blocks, cfg.conditioner_hidden, rng)
    atom_flow = AtomFlow(shape, cfg.coupling_blocks, cfg.conditioner_hidden, rng)

    mols = [random_valid_graph(shape, rng, min_atoms=1, max_atoms=9) for _ in range(100)]
    conts = [dequantize(g, 0.4, rng) for g in mols]
    bonds_cont = np.stack([c.bonds_cont for c in conts])
    atoms_cont = np.stack([c.atoms_cont for c in conts])
    bonds_disc = np.stack([g.bonds.astype(np.float64) for g in mols])

    bond_flow.forward(bonds_cont)  # actnorm init
    for p in bond_flow.params().values():
        p += 0.05 * rng.standard_normal(p.shape)
    for p in atom_flow.params().values():
        p += 0.05 * rng.standard_normal(p.shape)

    z_b, _, _ = bond_flow.forward(bonds_cont)
    z_a, _, _ = atom_flow.forward(atoms_cont, bonds_disc)
    back_b, _ = bond_flow.inverse(z_b)
    back_a, _ = atom_flow.inverse(z_a, bonds_disc)
    err = max(np.abs(back_b - bonds_cont).max(), np.abs(back_a - atoms_cont).max())
    elapsed = time.monotonic() - t0
    report("P1 invertibility",
           err < 1e-7 and elapsed < 10.0,
           f"max abs error {err:.3e} over 100 molecules in {elapsed:.1f}s")


# --- P2 log-det correctness -------------------------------------------------


def numeric_logdet(f, x0, eps=1e-6):
    d = x0.size
    jac = np.zeros((d, d))
    flat = x0.reshape(-1)
    for i in range(d):
        xp = flat.copy()
        xm = flat.copy()
        xp[i] += eps
        xm[i] -= eps
        zp = f(xp.reshape((1,) + x0.shape))
        zm = f(xm.reshape((1,) + x0.shape))
        jac[:, i] = (zp[0].reshape(-1) - zm[0].reshape(-1)) / (2 * eps)
    return np.linalg.slogdet(jac)[1]


def test_p2_logdet_correctness():
    t0 = time.monotonic()
    shape = GraphShape(max_atoms=4, vocab=AtomVocab(("C", "N", "O")), bond_channels=2)
    rng = np.random.default_rng(202)
    bond_flow = BondFlow(shape, 2, 8, rng)
    atom_flow = AtomFlow(shape, 2, 8, rng)
    init = rng.uniform(0, 1, (32, 2, 4, 4))
    bond_flow.forward(0.5 * (init + np.swapaxes(init, 2, 3)))
    for stack in (bond_flow, atom_flow):
        for p in stack.params().values():
            p += 0.15 * rng.standard_normal(p.shape)
    b_disc = np.zeros((1, 2, 4, 4))
    b_disc[0, 0, 0, 1] = b_disc[0, 0, 1, 0] = 1
    b_disc[0, 1, 2, 3] = b_disc[0, 1, 3, 2] = 1

    worst = 0.0
    for _ in range(20):
        xb = rng.standard_normal((2, 4, 4))
        _, ld, _ = bond_flow.forward(xb[None])
        num = numeric_logdet(lambda v: bond_flow.forward(v)[0], xb)
        worst = max(worst, abs(ld[0] - num) / max(abs(num), 1e-9))
        xa = rng.standard_normal((4, 3))
        _, ld, _ = atom_flow.forward(xa[None], b_disc)
        num = numeric_logdet(lambda v: atom_flow.forward(v, b_disc)[0], xa)
        worst = max(worst, abs(ld[0] - num) / max(abs(num), 1e-9))
    elapsed = time.monotonic() - t0
    report("P2 log-det correctness",
           worst < 1e-3 and elapsed < 60.0,
           f"worst relative error {worst:.3e} on 20 inputs x 2 stacks in {elapsed:.1f}s")


# --- P3 gradient audit ------------------------------------------------------


def test_p3_gradient_audit():
    t0 = time.monotonic()
    shape = GraphShape(max_atoms=4, vocab=AtomVocab(("C", "N", "O")), bond_channels=2)
    cfg = TrainConfig(kmer_size=1, encoder_hidden=6, conditioner_hidden=4,
                      coupling_blocks=2, batch_size=8, epochs=1, seed=303)
    ds = make_synthetic_pairs(16, 303, shape, drugs_per_target=4)
    model = build_model(shape, cfg)
    data = prepare_records(ds.records, shape, model)
    assert model.n_parameters <= 5000

    fresh = audit_gradients(model, data.take(np.arange(8)), cfg,
                            tolerance=1e-3, fd_step=1e-4)
    train(model, data, cfg)  # one epoch so every head is off zero
    trained = audit_gradients(model, data.take(np.arange(8)), cfg,
                              tolerance=1e-3, fd_step=1e-4)
    elapsed = time.monotonic() - t0
    report("P3 gradient audit",
           fresh.passed and trained.passed and elapsed < 300.0,
           f"{fresh.n_checked} params, max rel err fresh {fresh.max_rel_err:.2e} / "
           f"trained {trained.max_rel_err:.2e} in {elapsed:.1f}s")


# --- P4 uniformity-loss values ----------------------------------------------


def test_p4_uniformity_values():
    identical = unif_loss(np.array([[1.0, 0.0], [1.0, 0.0]]), 2.0)
    antipodal = unif_loss(np.array([[1.0, 0.0], [-1.0, 0.0]]), 2.0)

    # The stated square value corresponds to vertices (+/-1, +/-1) (norm
    # sqrt(2)): the direct 12-ordered-pair summation over that literal
    # configuration. The square inscribed in S^1 is checked against an
    # independent direct-summation oracle as well.
    stated = log_mean_pairwise_potential(
        np.array([[1.0, 1.0], [1.0, -1.0], [-1.0, 1.0], [-1.0, -1.0]]), 2.0)
    unit_square = np.array([[1.0, 0.0], [0.0, 1.0], [-1.0, 0.0], [0.0, -1.0]])

    def oracle(points, t):
        total, count = 0.0, 0
        for i, x in enumerate(points):
            for j, y in enumerate(points):
                if i != j:
                    total += math.exp(-t * float(((x - y) ** 2).sum()))
                    count += 1
        return math.log(total / count)

    on_sphere = unif_loss(unit_square, 2.0)
    ok = (identical == 0.0
          and abs(antipodal + 8.0) < 1e-9
          and abs(stated + 8.4052) < 1e-3
          and abs(on_sphere - oracle(unit_square, 2.0)) < 1e-12)
    report("P4 uniformity-loss values", ok,
           f"identical {identical:.1e}, antipodal {antipodal:.10f}, "
           f"square(+/-1,+/-1) {stated:.4f}, square-on-S1 {on_sphere:.4f}")


# --- P5 uniformity optimization ---------------------------------------------


def test_p5_uniformity_optimization():
    rng = np.random.default_rng(505)
    z = rng.standard_normal((2, 3))
    z /= np.linalg.norm(z, axis=1, keepdims=True)
    steps = 0
    cos = 1.0
    for steps in range(1, 501):
        _, dz = unif_loss_grads(z, 2.0)
        z = z - 0.1 * dz
        z /= np.linalg.norm(z, axis=1, keepdims=True)
        cos = float(z[0] @ z[1])
        if cos < -0.99:
            break
    report("P5 uniformity optimization", cos < -0.99,
           f"cosine {cos:.5f} after {steps} projected-descent steps")


# --- P6 end-to-end directional reproduction ----------------------------------


@pytest.fixture(scope="module")
def desk_scale_runs():
    """Three 100-epoch trainings at the pinned defaults on the
    deterministic 64-pair synthetic set, plus per-target generation."""
    t0 = time.monotonic()
    shape = GraphShape()
    ds = make_synthetic_pairs(64, 7, shape)
    records = ds.split("train")
    targets: list[str] = []
    for r in records:
        if r.sequence not in targets:
            targets.append(r.sequence)

    def run(**overrides):
        cfg = TrainConfig(epochs=100, seed=3, **overrides)
        model = build_model(shape, cfg)
        data = prepare_records(records, shape, model)
        train(model, data, cfg)
        raw = []
        for ti, seq in enumerate(targets):
            raw += generate(model, GenerationRequest(sequence=seq, n_samples=10,
                                                     seed=1000 + ti), correct=False)
        corrected = [validity_correction(g) for g in raw]
        return evaluate(corrected, data.graphs), raw

    full, full_raw = run()
    lam0, _ = run(space_lambda=0.0)
    nounif, _ = run(unif_weight=0.0)
    elapsed = time.monotonic() - t0
    assert elapsed < 900.0, f"P6 runtime {elapsed:.0f}s exceeds 15 min"
    return full, lam0, nounif, full_raw


def test_p6a_validity_with_correction(desk_scale_runs):
    full, _, _, full_raw = desk_scale_runs
    raw_validity = 100.0 * sum(check_valence(g) for g in full_raw) / len(full_raw)
    report("P6a validity", full.validity == 100.0,
           f"corrected {full.validity:.2f}% (before correction {raw_validity:.1f}%)")


def test_p6b_one_to_many_uniqueness(desk_scale_runs):
    full, lam0, _, _ = desk_scale_runs
    ratio = full.uniqueness / max(lam0.uniqueness, 1e-9)
    report("P6b one-to-many uniqueness", ratio >= 5.0,
           f"{full.uniqueness:.1f}% vs {lam0.uniqueness:.1f}% at lambda=0 "
           f"(ratio {ratio:.2f}, need >= 5)")


def test_p6c_uniformity_ablation(desk_scale_runs):
    # Known-red at desk scale: the pinned-defaults objective admits a
    # global scale collapse that hits both ablation arms equally, so the
    # full-scale Table-4 direction does not reproduce here. The blocking
    # analysis lives in the decisions ledger; the criterion is asserted
    # as stated rather than weakened.
    full, _, nounif, _ = desk_scale_runs
    ratio = full.mean_nn_tanimoto / max(nounif.mean_nn_tanimoto, 1e-9)
    report("P6c uniformity-ablation similarity", ratio >= 1.5,
           f"nn-Tanimoto {full.mean_nn_tanimoto:.2f}% with unif vs "
           f"{nounif.mean_nn_tanimoto:.2f}% without (ratio {ratio:.2f}, need >= 1.5)")


# --- P7 metric suite ----------------------------------------------------------


def test_p7_metric_suite_exactness():
    invalid = parse_smiles("O=N=O")
    dup = parse_smiles("C1CC1")
    in_train = parse_smiles("CCO")
    rep = evaluate([invalid, dup, dup, in_train], [in_train, parse_smiles("C")])
    ok_eval = (rep.validity == 75.0
               and abs(rep.uniqueness - 200.0 / 3.0) < 1e-9
               and abs(rep.novelty - 200.0 / 3.0) < 1e-9)

    # Exhaustive <=5-atom carbon corpus: digest equality must coincide
    # with isomorphism. The oracle canonical form is the lexicographic
    # max over all slot permutations of the bond-order matrix.
    shape = GraphShape(max_atoms=5)
    partitions_agree = True
    n_graphs = 0
    for n in range(1, 6):
        by_canon: dict[tuple, set[int]] = {}
        by_hash: dict[int, set[tuple]] = {}
        for g in _enumerate_carbon_graphs(n, shape):
            n_graphs += 1
            canon = _canonical_form(g, n)
            h = canonical_hash(g)
            by_canon.setdefault(canon, set()).add(h)
            by_hash.setdefault(h, set()).add(canon)
        if not all(len(v) == 1 for v in by_canon.values()):
            partitions_agree = False
        if not all(len(v) == 1 for v in by_hash.values()):
            partitions_agree = False
    report("P7 metric suite", ok_eval and partitions_agree,
           f"hand case {rep.validity:.0f}/{rep.uniqueness:.1f}/{rep.novelty:.1f}; "
           f"hash<->isomorphism agreement on {n_graphs} carbon graphs")


def _enumerate_carbon_graphs(n, shape):
    pairs = list(itertools.combinations(range(n), 2))
    for mask in range(1 << len(pairs)):
        edges = [pairs[i] for i in range(len(pairs)) if mask >> i & 1]
        if len(edges) < n - 1:
            continue
        # Quick connectivity check on the skeleton.
        adj = {i: set() for i in range(n)}
        for i, j in edges:
            adj[i].add(j)
            adj[j].add(i)
        seen = {0}
        stack = [0]
        while stack:
            u = stack.pop()
            for v in adj[u]:
                if v not in seen:
                    seen.add(v)
                    stack.append(v)
        if len(seen) != n:
            continue
        yield from _assign_orders(n, shape, edges)


def _assign_orders(n, shape, edges):
    orders = [1] * len(edges)

    def degree_ok():
        deg = [0] * n
        for (i, j), o in zip(edges, orders):
            deg[i] += o
            deg[j] += o
        return all(d <= 4 for d in deg)

    def rec(k):
        if k == len(edges):
            if degree_ok():
                yield graph_from_lists(shape, [0] * n,
                                       [(i, j, o) for (i, j), o in zip(edges, orders)])
            return
        for o in (1, 2, 3):
            orders[k] = o
            deg = [0] * n
            feasible = True
            for (i, j), oo in zip(edges[:k + 1], orders[:k + 1]):
                deg[i] += oo
                deg[j] += oo
                if deg[i] > 4 or deg[j] > 4:
                    feasible = False
                    break
            if feasible:
                yield from rec(k + 1)
        orders[k] = 1

    yield from rec(0)


def _canonical_form(g, n):
    orders = g.bond_orders()[:n, :n]
    best = None
    for perm in itertools.permutations(range(n)):
        p = np.asarray(perm)
        enc = tuple(orders[p][:, p].reshape(-1).tolist())
        if best is None or enc > best:
            best = enc
    return best


# --- P8 parser fuzz -----------------------------------------------------------


def test_p8_parser_fuzz():
    t0 = time.monotonic()
    rng = np.random.default_rng(808)
    shape = GraphShape()
    crashes = 0
    for _ in range(100_000):
        length = int(rng.integers(0, 30))
        s = bytes(rng.integers(1, 256, size=length)).decode("latin-1")
        try:
            g = parse_smiles(s, shape)
            g.validate()
        except TargetFlowError:
            pass
        except Exception:
            crashes += 1

    failures = 0
    for _ in range(1000):
        g = random_valid_graph(shape, rng, min_atoms=1)
        if canonical_hash(parse_smiles(write_smiles(g), shape)) != canonical_hash(g):
            failures += 1
    elapsed = time.monotonic() - t0
    report("P8 parser fuzz", crashes == 0 and failures == 0,
           f"{crashes} crashes in 1e5 byte strings, {failures} round-trip "
           f"failures in 1000 graphs, {elapsed:.1f}s")
