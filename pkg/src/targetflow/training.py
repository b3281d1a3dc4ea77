"""Joint optimization of encoder and flows: Adam, the per-batch loss
pipeline with hand-rolled backprop, finite-difference gradient
auditing, and the binary checkpoint format.

Determinism contract: a fixed seed and fixed data give a bit-identical
loss trajectory on one thread. All randomness flows through explicit
``numpy.random.Generator`` instances.
"""

from __future__ import annotations

import hashlib
import json
import struct
from dataclasses import dataclass, field

import numpy as np

from .config import AtomVocab, GraphShape, TrainConfig
from .datasets import PairRecord
from .errors import (
    CheckpointIOError,
    CheckpointVersionError,
    NonFiniteLossError,
    ShapeMismatchError,
)
from .graphs import MolGraph
from .model import TargetConditionedFlow, build_model
from .objectives import (
    LossReport,
    align_loss_grads,
    batch_statistics,
    batch_std,
    total_loss,
    unif_loss_grads,
)
from .smiles import parse_smiles

CHECKPOINT_MAGIC = b"SFLW"
CHECKPOINT_VERSION = 1


# --- Adam ----------------------------------------------------------------


@dataclass
class AdamState:
    m: dict[str, np.ndarray]
    v: dict[str, np.ndarray]
    step: int = 0


def adam_init(params: dict[str, np.ndarray]) -> AdamState:
    return AdamState(
        m={k: np.zeros_like(p) for k, p in params.items()},
        v={k: np.zeros_like(p) for k, p in params.items()},
    )


def adam_step(params: dict[str, np.ndarray], grads: dict[str, np.ndarray],
              state: AdamState, lr: float, betas=(0.9, 0.999), eps: float = 1e-8):
    """Standard bias-corrected Adam; updates parameters in place."""
    b1, b2 = betas
    state.step += 1
    t = state.step
    step_size = lr / (1 - b1 ** t)
    denom_corr = 1.0 / np.sqrt(1 - b2 ** t)
    for name, p in params.items():
        g = grads.get(name)
        if g is None:
            g = np.zeros_like(p)
        if g.shape != p.shape:
            raise ShapeMismatchError(f"gradient shape {g.shape} vs param {p.shape} for {name}")
        m = state.m[name]
        v = state.v[name]
        m *= b1
        m += (1 - b1) * g
        v *= b2
        v += (1 - b2) * np.square(g)
        denom = np.sqrt(v)
        denom *= denom_corr
        denom += eps
        upd = m / denom
        upd *= step_size
        p -= upd
    return params, state


# --- training data -------------------------------------------------------


@dataclass
class TrainingData:
    """Pre-featurized records: k-mer counts, one-hot graph tensors, and
    the target identity (the sequence itself) per record."""

    feats: np.ndarray          # (n, 20^k)
    atoms: np.ndarray          # (n, N, K) float64 one-hot
    bonds: np.ndarray          # (n, C, N, N) float64 one-hot
    target_ids: list[str]
    graphs: list[MolGraph] = field(default_factory=list)

    def __len__(self) -> int:
        return self.feats.shape[0]

    def take(self, idx) -> "TrainingData":
        return TrainingData(self.feats[idx], self.atoms[idx], self.bonds[idx],
                            [self.target_ids[i] for i in idx],
                            [self.graphs[i] for i in idx] if self.graphs else [])


def prepare_records(records: list[PairRecord], shape: GraphShape,
                    model: TargetConditionedFlow) -> TrainingData:
    feats = np.stack([model.encoder.featurize(r.sequence) for r in records])
    graphs = [parse_smiles(r.smiles, shape) for r in records]
    atoms = np.stack([g.atoms.astype(np.float64) for g in graphs])
    bonds = np.stack([g.bonds.astype(np.float64) for g in graphs])
    return TrainingData(feats, atoms, bonds, [r.sequence for r in records], graphs)


@dataclass
class StepNoise:
    """All randomness of one step, realized up front so the loss is a
    deterministic function of the parameters (the finite-difference
    audit relies on this; the space noise is non-differentiated by
    design)."""

    atom_noise: np.ndarray
    bond_noise: np.ndarray
    space_eps: np.ndarray


def draw_step_noise(model: TargetConditionedFlow, batch: TrainingData,
                    cfg: TrainConfig, rng: np.random.Generator) -> StepNoise:
    atom_noise = rng.uniform(0.0, cfg.noise_scale, batch.atoms.shape)
    bond_noise = rng.uniform(0.0, cfg.noise_scale, batch.bonds.shape)
    n, d = batch.feats.shape[0], model.shape.latent_dim
    if cfg.space_lambda > 0:
        z_t, _ = model.encoder.forward(batch.feats)
        sigma = batch_std(z_t)
        space_eps = np.sqrt(cfg.space_lambda) * sigma * rng.standard_normal((n, d))
    else:
        space_eps = np.zeros((n, d))
    return StepNoise(atom_noise, bond_noise, space_eps)


# --- loss + gradients ----------------------------------------------------


def loss_and_grads(model: TargetConditionedFlow, batch: TrainingData,
                   noise: StepNoise, cfg: TrainConfig,
                   want_grads: bool = True):
    """One deterministic forward/backward pass.

    Returns (LossReport, grads). The report's align/unif carry the
    configured weights; report.objective is the scalar the gradients
    belong to (total plus the optional log-det regularizer).
    """
    w_a, w_u, w_ld = cfg.align_weight, cfg.unif_weight, cfg.logdet_weight
    n = len(batch)

    z_t, enc_cache = model.encoder.forward(batch.feats)
    z_s = z_t + noise.space_eps
    a_cont = batch.atoms + noise.atom_noise
    b_cont = batch.bonds + noise.bond_noise

    z_b, ld_b, bcache = model.bond_flow.forward(b_cont)
    z_a, ld_a, acache = model.atom_flow.forward(a_cont, batch.bonds)
    z_m = np.concatenate([z_a, z_b], axis=1)

    l_align, d_zs, d_zm = align_loss_grads(z_s, z_m)
    if w_u != 0.0:
        l_unif, d_zt_unif = unif_loss_grads(z_t, cfg.kernel_t, batch.target_ids)
    else:
        l_unif, d_zt_unif = 0.0, np.zeros_like(z_t)

    logdet = ld_a + ld_b
    reg = -w_ld * float(logdet.mean()) if w_ld != 0.0 else 0.0

    report = total_loss(w_a * l_align, w_u * l_unif)
    report.objective = report.total + reg
    report.mean_embedding_norm, report.min_pairwise_distance = batch_statistics(z_t)
    if not np.isfinite(report.objective):
        raise NonFiniteLossError(
            f"non-finite objective (align={l_align}, unif={l_unif}, reg={reg})")

    if not want_grads:
        return report, {}

    split = model.shape.atom_block
    d_zm = w_a * d_zm
    dldet = np.full(n, -w_ld / n) if w_ld != 0.0 else np.zeros(n)
    _, g_atom = model.atom_flow.backward(acache, d_zm[:, :split], dldet)
    _, g_bond = model.bond_flow.backward(bcache, d_zm[:, split:], dldet)
    d_zt = w_a * d_zs + w_u * d_zt_unif
    g_enc = model.encoder.backward(enc_cache, d_zt)

    grads: dict[str, np.ndarray] = {}
    grads.update({f"encoder/{k}": v for k, v in g_enc.items()})
    grads.update({f"atom_flow/{k}": v for k, v in g_atom.items()})
    grads.update({f"bond_flow/{k}": v for k, v in g_bond.items()})
    return report, grads


def clip_global_norm(grads: dict[str, np.ndarray], max_norm: float) -> float:
    total = float(np.sqrt(sum(float(np.dot(g.ravel(), g.ravel()))
                              for g in grads.values())))
    if max_norm > 0 and total > max_norm:
        scale = max_norm / total
        for g in grads.values():
            g *= scale
    return total


# --- training loop -------------------------------------------------------


def train_epoch(model: TargetConditionedFlow, data: TrainingData,
                cfg: TrainConfig, adam: AdamState,
                rng: np.random.Generator) -> LossReport:
    """One pass over the data in shuffled batches; returns mean losses."""
    order = rng.permutation(len(data))
    reports: list[LossReport] = []
    betas = (cfg.adam_beta1, cfg.adam_beta2)
    for start in range(0, len(order), cfg.batch_size):
        idx = order[start:start + cfg.batch_size]
        if len(idx) < 2:
            continue
        batch = data.take(idx)
        noise = draw_step_noise(model, batch, cfg, rng)
        report, grads = loss_and_grads(model, batch, noise, cfg)
        clip_global_norm(grads, cfg.grad_clip)
        if cfg.learning_rate > 0:
            adam_step(model.params(), grads, adam, cfg.learning_rate,
                      betas, cfg.adam_eps)
        reports.append(report)
    mean = LossReport(
        align=float(np.mean([r.align for r in reports])),
        unif=float(np.mean([r.unif for r in reports])),
        total=float(np.mean([r.total for r in reports])),
        mean_embedding_norm=float(np.mean([r.mean_embedding_norm for r in reports])),
        min_pairwise_distance=float(np.min([r.min_pairwise_distance for r in reports])),
        objective=float(np.mean([r.objective for r in reports])),
    )
    return mean


def refresh_sigma(model: TargetConditionedFlow, data: TrainingData):
    """Recompute the stored space sigma from one embedding per unique
    training target."""
    seen: dict[str, int] = {}
    for i, tid in enumerate(data.target_ids):
        seen.setdefault(tid, i)
    feats = data.feats[sorted(seen.values())]
    z_t, _ = model.encoder.forward(feats)
    model.sigma = batch_std(z_t)


def train(model: TargetConditionedFlow, data: TrainingData, cfg: TrainConfig,
          rng: np.random.Generator | None = None,
          on_epoch=None) -> list[LossReport]:
    """Full training run; initializes actnorm on the first batch."""
    if rng is None:
        rng = np.random.default_rng(cfg.seed)
    adam = adam_init(model.params())
    model.adam_state = adam
    history: list[LossReport] = []
    for epoch in range(cfg.epochs):
        report = train_epoch(model, data, cfg, adam, rng)
        refresh_sigma(model, data)
        model.epoch = epoch + 1
        history.append(report)
        if on_epoch is not None:
            on_epoch(epoch, report)
    return history


# --- gradient audit -------------------------------------------------------


@dataclass
class AuditFailure:
    param: str
    index: tuple
    analytic: float
    numeric: float
    rel_err: float


@dataclass
class AuditReport:
    passed: bool
    max_rel_err: float
    n_checked: int
    tolerance: float
    failures: list[AuditFailure] = field(default_factory=list)
    sections: dict[str, int] = field(default_factory=dict)

    def summary(self) -> str:
        state = "PASS" if self.passed else "FAIL"
        lines = [f"gradient audit {state}: {self.n_checked} parameters, "
                 f"max rel err {self.max_rel_err:.3e} (tolerance {self.tolerance:g})"]
        for f in self.failures[:10]:
            lines.append(f"  {f.param}{list(f.index)}: analytic {f.analytic:.6e} "
                         f"vs numeric {f.numeric:.6e} (rel {f.rel_err:.3e})")
        return "\n".join(lines)


def audit_gradients(model: TargetConditionedFlow, batch: TrainingData,
                    cfg: TrainConfig, tolerance: float = 1e-3,
                    fd_step: float = 1e-4,
                    rng: np.random.Generator | None = None) -> AuditReport:
    """Compare every analytic parameter gradient of the objective against
    central finite differences on one fixed batch with frozen noise.

    Intended for small models (a few thousand parameters); cost is two
    full forward passes per scalar parameter.
    """
    if rng is None:
        rng = np.random.default_rng(cfg.seed)
    # One forward initializes actnorm before anything is differentiated.
    noise = draw_step_noise(model, batch, cfg, rng)
    loss_and_grads(model, batch, noise, cfg, want_grads=False)

    _, grads = loss_and_grads(model, batch, noise, cfg)

    def objective() -> float:
        report, _ = loss_and_grads(model, batch, noise, cfg, want_grads=False)
        return report.objective

    failures: list[AuditFailure] = []
    sections: dict[str, int] = {}
    max_err = 0.0
    n_checked = 0
    for name, arr in model.params().items():
        sections[name.split("/")[0]] = sections.get(name.split("/")[0], 0) + arr.size
        g = grads.get(name, np.zeros_like(arr))
        it = np.nditer(arr, flags=["multi_index"])
        while not it.finished:
            idx = it.multi_index
            old = arr[idx]
            arr[idx] = old + fd_step
            up = objective()
            arr[idx] = old - fd_step
            down = objective()
            arr[idx] = old
            numeric = (up - down) / (2.0 * fd_step)
            analytic = float(g[idx])
            denom = max(abs(analytic), abs(numeric))
            err = abs(analytic - numeric) / denom if denom > 1e-6 else 0.0
            if err > max_err:
                max_err = err
            if err > tolerance:
                failures.append(AuditFailure(name, idx, analytic, numeric, err))
            n_checked += 1
            it.iternext()
    return AuditReport(passed=not failures, max_rel_err=max_err,
                       n_checked=n_checked, tolerance=tolerance,
                       failures=failures, sections=sections)


# --- checkpoints -----------------------------------------------------------


def _config_snapshot(model: TargetConditionedFlow) -> bytes:
    snap = {
        "format": CHECKPOINT_VERSION,
        "shape": {
            "max_atoms": model.shape.max_atoms,
            "symbols": list(model.shape.vocab.symbols),
            "bond_channels": model.shape.bond_channels,
        },
        "train": model.cfg.as_dict(),
        "epoch": model.epoch,
        "adam_step": getattr(model, "adam_state", None).step
        if getattr(model, "adam_state", None) else 0,
        "actnorm_initialized": [blk["actnorm"].initialized
                                for blk in model.bond_flow.blocks],
        "space_lambda": model.space_lambda,
    }
    return json.dumps(snap, sort_keys=True, separators=(",", ":")).encode("utf-8")


def _checkpoint_tensors(model: TargetConditionedFlow) -> dict[str, np.ndarray]:
    tensors = dict(model.params())
    tensors["space/sigma"] = model.sigma
    adam = getattr(model, "adam_state", None)
    if adam is not None:
        for k, v in adam.m.items():
            tensors[f"adam/m/{k}"] = v
        for k, v in adam.v.items():
            tensors[f"adam/v/{k}"] = v
    return dict(sorted(tensors.items()))


def save_checkpoint(model: TargetConditionedFlow, path) -> str:
    """Write the versioned binary container; returns its sha256 digest."""
    config = _config_snapshot(model)
    blob = bytearray()
    blob += CHECKPOINT_MAGIC
    blob += struct.pack("<I", CHECKPOINT_VERSION)
    blob += hashlib.sha256(config).digest()
    blob += struct.pack("<I", len(config))
    blob += config
    tensors = _checkpoint_tensors(model)
    blob += struct.pack("<I", len(tensors))
    for name, arr in tensors.items():
        nb = name.encode("utf-8")
        blob += struct.pack("<I", len(nb))
        blob += nb
        blob += struct.pack("<I", arr.ndim)
        blob += struct.pack(f"<{arr.ndim}I", *arr.shape) if arr.ndim else b""
        blob += np.ascontiguousarray(arr, dtype="<f8").tobytes()
    with open(path, "wb") as fh:
        fh.write(blob)
    return hashlib.sha256(bytes(blob)).hexdigest()


class _Reader:
    def __init__(self, data: bytes):
        self.data = data
        self.pos = 0

    def take(self, n: int) -> bytes:
        if self.pos + n > len(self.data):
            raise CheckpointIOError(
                f"checkpoint truncated: need {n} bytes at offset {self.pos}, "
                f"file has {len(self.data)}")
        out = self.data[self.pos:self.pos + n]
        self.pos += n
        return out

    def u32(self) -> int:
        return struct.unpack("<I", self.take(4))[0]


def load_checkpoint(path, expect_shape: GraphShape | None = None):
    """Rebuild a model (and its Adam state) from a checkpoint file.

    Raises CheckpointVersionError on format-version or configuration
    mismatch, CheckpointIOError on damage.
    """
    try:
        with open(path, "rb") as fh:
            data = fh.read()
    except OSError as exc:
        raise CheckpointIOError(f"cannot read checkpoint {path}: {exc}") from exc

    r = _Reader(data)
    if r.take(4) != CHECKPOINT_MAGIC:
        raise CheckpointVersionError("not a checkpoint file (bad magic)")
    version = r.u32()
    if version != CHECKPOINT_VERSION:
        raise CheckpointVersionError(
            f"unsupported checkpoint version {version} (expected {CHECKPOINT_VERSION})")
    digest = r.take(32)
    config_raw = r.take(r.u32())
    if hashlib.sha256(config_raw).digest() != digest:
        raise CheckpointIOError("config digest mismatch (corrupt checkpoint)")
    snap = json.loads(config_raw.decode("utf-8"))

    shape = GraphShape(max_atoms=snap["shape"]["max_atoms"],
                       vocab=AtomVocab(tuple(snap["shape"]["symbols"])),
                       bond_channels=snap["shape"]["bond_channels"])
    if expect_shape is not None and shape != expect_shape:
        raise CheckpointVersionError(
            f"checkpoint graph shape {shape} does not match expected {expect_shape}")
    cfg = TrainConfig(**snap["train"])
    model = build_model(shape, cfg, seed=cfg.seed)
    model.epoch = snap["epoch"]
    model.space_lambda = snap["space_lambda"]
    for blk, flag in zip(model.bond_flow.blocks, snap["actnorm_initialized"]):
        blk["actnorm"].initialized = bool(flag)

    n_tensors = r.u32()
    tensors: dict[str, np.ndarray] = {}
    for _ in range(n_tensors):
        name = r.take(r.u32()).decode("utf-8")
        ndim = r.u32()
        dims = struct.unpack(f"<{ndim}I", r.take(4 * ndim)) if ndim else ()
        count = int(np.prod(dims)) if dims else 1
        arr = np.frombuffer(r.take(8 * count), dtype="<f8").reshape(dims).copy()
        tensors[name] = arr

    params = model.params()
    adam = adam_init(params)
    adam.step = snap["adam_step"]
    for name, arr in params.items():
        if name not in tensors:
            raise CheckpointVersionError(f"checkpoint missing tensor {name}")
        if tensors[name].shape != arr.shape:
            raise CheckpointVersionError(
                f"tensor {name} shape {tensors[name].shape} vs model {arr.shape}")
        arr[...] = tensors[name]
        if f"adam/m/{name}" in tensors:
            adam.m[name][...] = tensors[f"adam/m/{name}"]
            adam.v[name][...] = tensors[f"adam/v/{name}"]
    model.sigma = tensors.get("space/sigma", np.zeros(shape.latent_dim))
    model.adam_state = adam
    return model
