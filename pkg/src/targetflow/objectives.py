"""The training loss surface.

Alignment pulls the drug graph latent toward (a sample from the space
around) its target's embedding; uniformity spreads the normalized
target embeddings over the unit hypersphere by penalizing the log-mean
pairwise Gaussian potential; the total objective is their sum.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import (
    BatchTooSmallError,
    EmptyBatchError,
    NonFiniteLossError,
    NotNormalizedError,
    ParameterRangeError,
    ShapeMismatchError,
)


@dataclass
class SpaceParams:
    """One-to-many sampling space: Gaussian with variance lam * sigma^2
    around an (unnormalized) target embedding."""

    lam: float = 0.1
    sigma: np.ndarray | None = None

    def __post_init__(self):
        if self.lam < 0:
            raise ParameterRangeError("lambda must be >= 0")
        if self.sigma is not None and np.any(self.sigma < 0):
            raise ParameterRangeError("sigma must be elementwise >= 0")


@dataclass
class LossReport:
    """total is always align + unif; objective additionally carries the
    optional log-det stabilizer when one is configured (they coincide at
    the default weight of zero)."""

    align: float
    unif: float
    total: float
    mean_embedding_norm: float = 0.0
    min_pairwise_distance: float = 0.0
    objective: float | None = None

    def __post_init__(self):
        if not (np.isfinite(self.align) and np.isfinite(self.unif)):
            raise NonFiniteLossError(
                f"non-finite loss terms: align={self.align}, unif={self.unif}")
        if self.objective is None:
            self.objective = self.total


def batch_std(embeddings) -> np.ndarray:
    """Elementwise population standard deviation of a stack of vectors."""
    z = np.asarray(embeddings, dtype=np.float64)
    if z.ndim != 2 or z.shape[0] < 1:
        raise EmptyBatchError("batch_std needs at least one vector")
    return z.std(axis=0)


def sample_space(z_t: np.ndarray, sp: SpaceParams, rng: np.random.Generator) -> np.ndarray:
    """Draw z_t + eps with eps ~ Normal(0, lam * sigma^2) elementwise.

    Applied to the unnormalized embedding; lam = 0 returns z_t exactly.
    """
    z_t = np.asarray(z_t, dtype=np.float64)
    if sp.lam == 0.0:
        return z_t.copy()
    sigma = sp.sigma if sp.sigma is not None else np.ones_like(z_t)
    if sigma.shape != z_t.shape:
        raise ShapeMismatchError(f"sigma shape {sigma.shape} vs z {z_t.shape}")
    return z_t + np.sqrt(sp.lam) * sigma * rng.standard_normal(z_t.shape)


def align_loss(z_space_sample: np.ndarray, z_m: np.ndarray) -> float:
    """Euclidean distance between the space sample and the drug latent,
    averaged over the batch when given (B, D) stacks."""
    zs = np.atleast_2d(np.asarray(z_space_sample, dtype=np.float64))
    zm = np.atleast_2d(np.asarray(z_m, dtype=np.float64))
    if zs.shape != zm.shape:
        raise ShapeMismatchError(f"shape mismatch {zs.shape} vs {zm.shape}")
    return float(np.linalg.norm(zs - zm, axis=1).mean())


def gaussian_kernel(x: np.ndarray, y: np.ndarray, t: float) -> float:
    """exp(-t * |x - y|^2) for unit vectors x, y."""
    if t <= 0:
        raise ParameterRangeError("kernel temperature t must be > 0")
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    for v in (x, y):
        if abs(np.linalg.norm(v) - 1.0) > 1e-6:
            raise NotNormalizedError("kernel inputs must be unit vectors")
    d = x - y
    return float(np.exp(-t * np.dot(d, d)))


def log_mean_pairwise_potential(points: np.ndarray, t: float,
                                target_ids=None) -> float:
    """log of the mean Gaussian potential exp(-t |x - y|^2) over all
    ordered pairs x != y, excluding pairs that share a target id.

    This is the raw summation over whatever points it is given; the
    uniformity loss feeds it normalized embeddings.
    """
    pts = np.asarray(points, dtype=np.float64)
    n = pts.shape[0]
    if target_ids is None:
        target_ids = list(range(n))
    if len(set(target_ids)) < 2:
        raise BatchTooSmallError("need at least two distinct targets")
    sq = ((pts[:, None, :] - pts[None, :, :]) ** 2).sum(axis=2)
    ids = np.asarray(target_ids)
    mask = ids[:, None] != ids[None, :]
    vals = np.exp(-t * sq[mask])
    return float(np.log(vals.mean()))


def unif_loss(embeddings: np.ndarray, t: float, target_ids=None) -> float:
    """Uniformity loss: log-mean pairwise Gaussian potential of the
    L2-normalized embeddings, over ordered pairs of distinct targets.

    Always <= 0; equals 0 only when all normalized embeddings coincide.
    """
    if t <= 0:
        raise ParameterRangeError("kernel temperature t must be > 0")
    z = np.atleast_2d(np.asarray(embeddings, dtype=np.float64))
    if z.shape[0] < 2:
        raise BatchTooSmallError("uniformity loss needs a batch of >= 2")
    norms = np.linalg.norm(z, axis=1, keepdims=True)
    z_hat = np.divide(z, norms, out=z.copy(), where=norms > 0)
    return log_mean_pairwise_potential(z_hat, t, target_ids)


def total_loss(align: float, unif: float) -> LossReport:
    """Unweighted sum of the two loss terms."""
    if not (np.isfinite(align) and np.isfinite(unif)):
        raise NonFiniteLossError(f"non-finite inputs: align={align}, unif={unif}")
    return LossReport(align=float(align), unif=float(unif),
                      total=float(align) + float(unif))


def batch_statistics(embeddings: np.ndarray) -> tuple[float, float]:
    """(mean embedding norm, min pairwise distance) for a LossReport."""
    z = np.atleast_2d(np.asarray(embeddings, dtype=np.float64))
    mean_norm = float(np.linalg.norm(z, axis=1).mean())
    if z.shape[0] < 2:
        return mean_norm, 0.0
    sq = ((z[:, None, :] - z[None, :, :]) ** 2).sum(axis=2)
    iu = np.triu_indices(z.shape[0], k=1)
    return mean_norm, float(np.sqrt(sq[iu].min()))


# --- gradients (used by the trainer's hand-rolled backprop) -----------


def align_loss_grads(z_space_sample: np.ndarray, z_m: np.ndarray):
    """(loss, d/dz_space, d/dz_m) of the batch-mean Euclidean distance."""
    zs = np.atleast_2d(np.asarray(z_space_sample, dtype=np.float64))
    zm = np.atleast_2d(np.asarray(z_m, dtype=np.float64))
    diff = zs - zm
    dist = np.linalg.norm(diff, axis=1)
    loss = float(dist.mean())
    safe = np.where(dist > 0, dist, 1.0)
    dzs = diff / (safe[:, None] * zs.shape[0])
    dzs[dist == 0] = 0.0
    return loss, dzs, -dzs


def unif_loss_grads(embeddings: np.ndarray, t: float, target_ids=None):
    """(loss, d/dz) of the uniformity loss through the normalization."""
    z = np.atleast_2d(np.asarray(embeddings, dtype=np.float64))
    n = z.shape[0]
    if n < 2:
        raise BatchTooSmallError("uniformity loss needs a batch of >= 2")
    if target_ids is None:
        target_ids = list(range(n))
    ids = np.asarray(target_ids)
    if len(set(target_ids)) < 2:
        raise BatchTooSmallError("need at least two distinct targets")
    norms = np.linalg.norm(z, axis=1, keepdims=True)
    z_hat = np.divide(z, norms, out=z.copy(), where=norms > 0)

    diff = z_hat[:, None, :] - z_hat[None, :, :]
    sq = (diff ** 2).sum(axis=2)
    mask = ids[:, None] != ids[None, :]
    kern = np.exp(-t * sq) * mask
    m = int(mask.sum())
    s = float(kern.sum())
    loss = float(np.log(s / m))

    # dL/dK_xy = 1/S; dK_xy/dz_hat_x = -2t K_xy (z_hat_x - z_hat_y).
    # Each unordered pair appears in both orders and the kernel is
    # symmetric, so the two contributions double up.
    w = kern / s
    dz_hat = -4.0 * t * (w[:, :, None] * diff).sum(axis=1)
    # back through normalization: dz = (dz_hat - z_hat (z_hat . dz_hat)) / |z|
    dots = (dz_hat * z_hat).sum(axis=1, keepdims=True)
    dz = np.divide(dz_hat - z_hat * dots, norms, out=np.zeros_like(z), where=norms > 0)
    return loss, dz
