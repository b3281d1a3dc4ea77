import numpy as np
import pytest

import targetflow.training as training
from targetflow.config import AtomVocab, GraphShape, TrainConfig
from targetflow.datasets import make_synthetic_pairs
from targetflow.errors import (
    BatchTooSmallError,
    CheckpointIOError,
    CheckpointVersionError,
    NonFiniteLossError,
)
from targetflow.model import build_model
from targetflow.training import (
    adam_init,
    adam_step,
    audit_gradients,
    draw_step_noise,
    load_checkpoint,
    loss_and_grads,
    prepare_records,
    save_checkpoint,
    train,
    train_epoch,
)


def tiny_setup(seed=0, n_pairs=16, **cfg_kw):
    """A deliberately small model (k=1 encoder, small hiddens) so audits
    and training tests stay fast."""
    shape = GraphShape(max_atoms=4, vocab=AtomVocab(("C", "N", "O")), bond_channels=2)
    defaults = dict(kmer_size=1, encoder_hidden=6, conditioner_hidden=4,
                    coupling_blocks=2, batch_size=8, epochs=2, seed=seed)
    defaults.update(cfg_kw)
    cfg = TrainConfig(**defaults)
    ds = make_synthetic_pairs(n_pairs, seed + 1, shape, drugs_per_target=4)
    model = build_model(shape, cfg)
    data = prepare_records(ds.records, shape, model)
    return shape, cfg, model, data


class TestAdam:
    def test_zero_gradient_keeps_params(self):
        params = {"w": np.array([1.0, -2.0, 3.0])}
        grads = {"w": np.zeros(3)}
        state = adam_init(params)
        adam_step(params, grads, state, lr=0.1)
        assert np.array_equal(params["w"], [1.0, -2.0, 3.0])
        assert state.step == 1

    def test_moments_decay(self):
        params = {"w": np.array([0.0])}
        state = adam_init(params)
        state.m["w"][...] = 1.0
        state.v["w"][...] = 1.0
        adam_step(params, {"w": np.zeros(1)}, state, lr=0.0)
        assert state.m["w"][0] == pytest.approx(0.9)
        assert state.v["w"][0] == pytest.approx(0.999)

    def test_first_step_magnitude_is_lr(self):
        # Bias correction makes the first update lr * g/|g| up to eps.
        params = {"w": np.array([5.0])}
        state = adam_init(params)
        adam_step(params, {"w": np.array([0.3])}, state, lr=0.001)
        assert params["w"][0] == pytest.approx(5.0 - 0.001, abs=1e-7)

    def test_determinism(self):
        rng = np.random.default_rng(0)
        g_seq = [rng.standard_normal(4) for _ in range(10)]

        def run():
            params = {"w": np.ones(4)}
            state = adam_init(params)
            for g in g_seq:
                adam_step(params, {"w": g}, state, lr=0.01)
            return params["w"]

        assert np.array_equal(run(), run())


class TestLossPipeline:
    def test_loss_decreases(self):
        shape, cfg, model, data = tiny_setup(epochs=10, n_pairs=32)
        history = train(model, data, cfg)
        assert history[-1].total < history[0].total

    def test_frozen_params_identical_reports(self):
        shape, cfg, model, data = tiny_setup(learning_rate=0.0)
        adam = adam_init(model.params())
        model.bond_flow.forward(data.bonds + 0.1)  # init actnorm once
        r1 = train_epoch(model, data, cfg, adam, np.random.default_rng(5))
        r2 = train_epoch(model, data, cfg, adam, np.random.default_rng(5))
        assert r1 == r2

    def test_bit_identical_trajectories(self):
        _, cfg, m1, d1 = tiny_setup(epochs=3)
        h1 = train(m1, d1, cfg)
        _, _, m2, d2 = tiny_setup(epochs=3)
        h2 = train(m2, d2, cfg)
        assert [r.total for r in h1] == [r.total for r in h2]
        p1, p2 = m1.params(), m2.params()
        assert all(np.array_equal(p1[k], p2[k]) for k in p1)

    def test_single_target_batch_rejected(self):
        shape, cfg, model, _ = tiny_setup()
        ds = make_synthetic_pairs(8, 3, shape, drugs_per_target=8)
        data = prepare_records(ds.records, shape, model)
        noise = draw_step_noise(model, data, cfg, np.random.default_rng(0))
        with pytest.raises(BatchTooSmallError):
            loss_and_grads(model, data, noise, cfg)

    def test_non_finite_loss_aborts(self):
        shape, cfg, model, data = tiny_setup()
        model.encoder.b2[...] = np.nan
        noise = draw_step_noise(model, data, cfg, np.random.default_rng(0))
        with pytest.raises(NonFiniteLossError):
            loss_and_grads(model, data, noise, cfg)

    def test_unif_weight_zero_skips_batch_rule(self):
        # Without the uniformity term a single-target batch is fine.
        shape, cfg, model, _ = tiny_setup(unif_weight=0.0)
        ds = make_synthetic_pairs(8, 3, shape, drugs_per_target=8)
        data = prepare_records(ds.records, shape, model)
        noise = draw_step_noise(model, data, cfg, np.random.default_rng(0))
        report, _ = loss_and_grads(model, data, noise, cfg)
        assert report.unif == 0.0


class TestAudit:
    def test_tiny_model_passes(self):
        shape, cfg, model, data = tiny_setup()
        assert model.n_parameters <= 5000
        batch = data.take(np.arange(8))
        report = audit_gradients(model, batch, cfg, tolerance=1e-3)
        assert report.passed, report.summary()
        assert report.n_checked == model.n_parameters

    def test_corrupted_gradient_flagged(self, monkeypatch):
        shape, cfg, model, data = tiny_setup()
        batch = data.take(np.arange(8))
        real = training.loss_and_grads

        def corrupted(*args, **kwargs):
            out = real(*args, **kwargs)
            if len(out) == 2 and out[1]:
                report, grads = out
                # Flip the output-head gradient, which is live even on a
                # fresh model (w1 grads vanish under the zero-init head).
                key = next(k for k in grads if "coupling" in k and k.endswith("w2"))
                grads[key] = -grads[key]
                return report, grads
            return out

        monkeypatch.setattr(training, "loss_and_grads", corrupted)
        report = audit_gradients(model, batch, cfg, tolerance=1e-3)
        assert not report.passed
        assert any("coupling" in f.param for f in report.failures)

    def test_sections_reported(self):
        shape, cfg, model, data = tiny_setup()
        report = audit_gradients(model, data.take(np.arange(8)), cfg)
        assert set(report.sections) == {"encoder", "bond_flow", "atom_flow"}


class TestCheckpoints:
    def test_roundtrip_bitwise(self, tmp_path):
        shape, cfg, model, data = tiny_setup(epochs=2)
        train(model, data, cfg)
        path = tmp_path / "model.sflw"
        save_checkpoint(model, path)
        loaded = load_checkpoint(path)
        p1, p2 = model.params(), loaded.params()
        assert all(np.array_equal(p1[k], p2[k]) for k in p1)
        assert np.array_equal(model.sigma, loaded.sigma)
        assert loaded.epoch == model.epoch

    def test_save_load_save_identical(self, tmp_path):
        shape, cfg, model, data = tiny_setup(epochs=1)
        train(model, data, cfg)
        a, b = tmp_path / "a.sflw", tmp_path / "b.sflw"
        save_checkpoint(model, a)
        save_checkpoint(load_checkpoint(a), b)
        assert a.read_bytes() == b.read_bytes()

    def test_truncated_file(self, tmp_path):
        shape, cfg, model, data = tiny_setup(epochs=1)
        train(model, data, cfg)
        path = tmp_path / "model.sflw"
        save_checkpoint(model, path)
        blob = path.read_bytes()
        (tmp_path / "cut.sflw").write_bytes(blob[:len(blob) // 2])
        with pytest.raises(CheckpointIOError, match="offset"):
            load_checkpoint(tmp_path / "cut.sflw")

    def test_bad_magic(self, tmp_path):
        p = tmp_path / "junk.sflw"
        p.write_bytes(b"NOPE" + b"\x00" * 64)
        with pytest.raises(CheckpointVersionError):
            load_checkpoint(p)

    def test_shape_mismatch_rejected(self, tmp_path):
        shape, cfg, model, data = tiny_setup(epochs=1)
        train(model, data, cfg)
        path = tmp_path / "model.sflw"
        save_checkpoint(model, path)
        with pytest.raises(CheckpointVersionError):
            load_checkpoint(path, expect_shape=GraphShape())  # default 9/11/3

    def test_version_rejected(self, tmp_path):
        shape, cfg, model, data = tiny_setup(epochs=1)
        train(model, data, cfg)
        path = tmp_path / "model.sflw"
        save_checkpoint(model, path)
        blob = bytearray(path.read_bytes())
        blob[4] = 99
        (tmp_path / "v99.sflw").write_bytes(bytes(blob))
        with pytest.raises(CheckpointVersionError):
            load_checkpoint(tmp_path / "v99.sflw")
