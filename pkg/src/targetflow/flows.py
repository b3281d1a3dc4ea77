"""Exact invertible flow layers with analytic log-det Jacobians and
hand-derived reverse-mode gradients.

Layer API: ``forward(x) -> (y, logdet, cache)``, ``inverse(y) -> (x,
logdet)``, ``backward(cache, dy, dlogdet) -> (dx, grads)``. ``logdet``
is per-sample (shape ``(B,)``); ``grads`` maps parameter names to
arrays matching ``params()``. Inverses are exact, so
``inverse(forward(x)) == x`` up to float rounding, and a stack's
log-det is the sum of its layers'.

The bond stack is actnorm -> channel mixer -> masked affine coupling,
repeated; couplings scale-and-shift one coordinate block by a sigmoid
of conditioner outputs computed from the other block. The atom stack is
a sequence of graph-conditional couplings whose conditioners are
relational graph convolutions over the (discrete) bond tensor.
"""

from __future__ import annotations

import numpy as np
from scipy.special import expit, log_expit

from .config import GraphShape
from .errors import (
    ActnormNotInitializedError,
    MissingForwardCacheError,
    ShapeMismatchError,
    SingularMixerError,
    ZeroScaleError,
)

_DET_FLOOR = 1e-12


def _require_cache(cache):
    if cache is None:
        raise MissingForwardCacheError("backward() needs the cache from forward()")


class Actnorm:
    """Per-channel affine normalization, y = scale * (x + bias).

    Data-dependent initialization: the first forward batch sets bias and
    scale so that batch has per-channel zero mean and unit variance.
    """

    def __init__(self, n_channels: int, spatial_size: int):
        self.scale = np.ones(n_channels)
        self.bias = np.zeros(n_channels)
        self.spatial_size = spatial_size
        self.initialized = False

    def params(self, prefix: str = "") -> dict[str, np.ndarray]:
        return {prefix + "scale": self.scale, prefix + "bias": self.bias}

    def _bshape(self, x):
        # (B, C, ...) with prod(...) == spatial_size
        extra = (1,) * (x.ndim - 2)
        return (1, len(self.scale)) + extra

    def initialize(self, x: np.ndarray):
        axes = (0,) + tuple(range(2, x.ndim))
        mean = x.mean(axis=axes)
        std = x.std(axis=axes)
        if np.any(std < _DET_FLOOR) or not np.all(np.isfinite(std)):
            raise ZeroScaleError("degenerate channel variance in init batch")
        # In place, so parameter references taken before initialization
        # (optimizer state, audits) stay live.
        self.bias[...] = -mean
        self.scale[...] = 1.0 / std
        self.initialized = True

    def _check_scale(self):
        if np.any(np.abs(self.scale) < _DET_FLOOR):
            raise ZeroScaleError("actnorm scale too close to zero")

    def forward(self, x: np.ndarray):
        if not self.initialized:
            self.initialize(x)
        self._check_scale()
        shp = self._bshape(x)
        y = self.scale.reshape(shp) * (x + self.bias.reshape(shp))
        logdet = np.full(x.shape[0], self.spatial_size * np.log(np.abs(self.scale)).sum())
        return y, logdet, (x,)

    def inverse(self, y: np.ndarray):
        if not self.initialized:
            raise ActnormNotInitializedError("actnorm inverse before initialization")
        self._check_scale()
        shp = self._bshape(y)
        x = y / self.scale.reshape(shp) - self.bias.reshape(shp)
        logdet = np.full(y.shape[0], -self.spatial_size * np.log(np.abs(self.scale)).sum())
        return x, logdet

    def backward(self, cache, dy: np.ndarray, dlogdet: np.ndarray):
        _require_cache(cache)
        (x,) = cache
        shp = self._bshape(x)
        axes = (0,) + tuple(range(2, x.ndim))
        dx = dy * self.scale.reshape(shp)
        dscale = (dy * (x + self.bias.reshape(shp))).sum(axis=axes)
        dscale += dlogdet.sum() * self.spatial_size / self.scale
        dbias = dy.sum(axis=axes) * self.scale
        return dx, {"scale": dscale, "bias": dbias}


class ChannelMixer:
    """Invertible mixing matrix applied across channels, initialized as
    a random rotation (zero log-determinant)."""

    def __init__(self, n_channels: int, spatial_size: int, rng: np.random.Generator):
        w = rng.standard_normal((n_channels, n_channels))
        q, _ = np.linalg.qr(w)
        self.weight = q
        self.spatial_size = spatial_size

    def params(self, prefix: str = "") -> dict[str, np.ndarray]:
        return {prefix + "weight": self.weight}

    def _logabsdet(self) -> float:
        sign, logabs = np.linalg.slogdet(self.weight)
        if sign == 0 or np.exp(logabs) < _DET_FLOOR:
            raise SingularMixerError("mixing matrix is numerically singular")
        return float(logabs)

    def forward(self, x: np.ndarray):
        ld = self._logabsdet()
        xs = x.reshape(x.shape[0], x.shape[1], -1)
        y = np.einsum("cd,bds->bcs", self.weight, xs).reshape(x.shape)
        logdet = np.full(x.shape[0], self.spatial_size * ld)
        return y, logdet, (x,)

    def inverse(self, y: np.ndarray):
        ld = self._logabsdet()
        inv = np.linalg.inv(self.weight)
        ys = y.reshape(y.shape[0], y.shape[1], -1)
        x = np.einsum("cd,bds->bcs", inv, ys).reshape(y.shape)
        logdet = np.full(y.shape[0], -self.spatial_size * ld)
        return x, logdet

    def backward(self, cache, dy: np.ndarray, dlogdet: np.ndarray):
        _require_cache(cache)
        (x,) = cache
        xs = x.reshape(x.shape[0], x.shape[1], -1)
        dys = dy.reshape(xs.shape)
        dx = np.einsum("cd,bcs->bds", self.weight, dys).reshape(x.shape)
        dw = np.einsum("bcs,bds->cd", dys, xs)
        dw += dlogdet.sum() * self.spatial_size * np.linalg.inv(self.weight).T
        return dx, {"weight": dw}


class DenseConditioner:
    """Two dense layers (tanh hidden) mapping the visible coordinate
    block to scale logits and translations for the complement block.
    The output layer starts at zero, so a fresh coupling halves its
    inputs (sigmoid(0) = 0.5) and translates by nothing."""

    def __init__(self, d_in: int, d_out: int, hidden: int, rng: np.random.Generator):
        self.w1 = rng.standard_normal((d_in, hidden)) / np.sqrt(d_in)
        self.b1 = np.zeros(hidden)
        self.w2 = np.zeros((hidden, 2 * d_out))
        self.b2 = np.zeros(2 * d_out)
        self.d_out = d_out

    def params(self, prefix: str = "") -> dict[str, np.ndarray]:
        return {prefix + "w1": self.w1, prefix + "b1": self.b1,
                prefix + "w2": self.w2, prefix + "b2": self.b2}

    def forward(self, xa: np.ndarray):
        h = np.tanh(xa @ self.w1 + self.b1)
        out = h @ self.w2 + self.b2
        s, t = out[:, :self.d_out], out[:, self.d_out:]
        return s, t, (xa, h)

    def backward(self, cache, ds: np.ndarray, dt: np.ndarray):
        _require_cache(cache)
        xa, h = cache
        dout = np.concatenate([ds, dt], axis=1)
        dw2 = h.T @ dout
        db2 = dout.sum(axis=0)
        dh = dout @ self.w2.T
        dpre = dh * (1.0 - h * h)
        dw1 = xa.T @ dpre
        db1 = dpre.sum(axis=0)
        dxa = dpre @ self.w1.T
        return dxa, {"w1": dw1, "b1": db1, "w2": dw2, "b2": db2}


class MaskedCoupling:
    """Affine coupling on flat vectors with an arbitrary index split.

    Forward: y_vis = x_vis, y_tr = x_tr * sigmoid(S(x_vis)) + T(x_vis);
    per-sample log-det is sum(log sigmoid(S)). The contiguous split of
    the textbook formulation is the special case visible = [0..d).
    """

    def __init__(self, dim: int, visible_idx: np.ndarray, conditioner: DenseConditioner):
        self.dim = dim
        self.visible_idx = np.asarray(visible_idx, dtype=np.int64)
        mask = np.ones(dim, dtype=bool)
        mask[self.visible_idx] = False
        self.transform_idx = np.nonzero(mask)[0]
        if len(self.visible_idx) == 0 or len(self.transform_idx) == 0:
            raise ShapeMismatchError("coupling split must leave both blocks non-empty")
        self.cond = conditioner

    def params(self, prefix: str = "") -> dict[str, np.ndarray]:
        return self.cond.params(prefix)

    def _check(self, x):
        if x.ndim != 2 or x.shape[1] != self.dim:
            raise ShapeMismatchError(f"expected (B, {self.dim}), got {x.shape}")

    def forward(self, x: np.ndarray):
        self._check(x)
        xa = x[:, self.visible_idx]
        xb = x[:, self.transform_idx]
        s, t, ccache = self.cond.forward(xa)
        sig = expit(s)
        yb = xb * sig + t
        y = np.empty_like(x)
        y[:, self.visible_idx] = xa
        y[:, self.transform_idx] = yb
        logdet = log_expit(s).sum(axis=1)
        return y, logdet, (xa, xb, s, sig, ccache)

    def inverse(self, y: np.ndarray):
        self._check(y)
        ya = y[:, self.visible_idx]
        yb = y[:, self.transform_idx]
        s, t, _ = self.cond.forward(ya)
        sig = expit(s)
        xb = (yb - t) / sig
        x = np.empty_like(y)
        x[:, self.visible_idx] = ya
        x[:, self.transform_idx] = xb
        logdet = -log_expit(s).sum(axis=1)
        return x, logdet

    def backward(self, cache, dy: np.ndarray, dlogdet: np.ndarray):
        _require_cache(cache)
        xa, xb, s, sig, ccache = cache
        dya = dy[:, self.visible_idx]
        dyb = dy[:, self.transform_idx]
        dxb = dyb * sig
        # d/ds of (xb * sigmoid(s)): xb * sig * (1 - sig); of log sigmoid: 1 - sig.
        ds = dyb * xb * sig * (1.0 - sig) + dlogdet[:, None] * (1.0 - sig)
        dt = dyb
        dxa_cond, grads = self.cond.backward(ccache, ds, dt)
        dx = np.empty_like(dy)
        dx[:, self.visible_idx] = dya + dxa_cond
        dx[:, self.transform_idx] = dxb
        return dx, grads


class GraphConditioner:
    """Two relational message-passing layers over the degree-normalized
    bond adjacency; the second layer is the (zero-initialized) output
    head producing K scale logits and K translations per atom row."""

    def __init__(self, n_types: int, hidden: int, n_channels: int,
                 rng: np.random.Generator):
        k, h, c = n_types, hidden, n_channels
        self.w1c = rng.standard_normal((c, k, h)) / np.sqrt(k)
        self.w1s = rng.standard_normal((k, h)) / np.sqrt(k)
        self.b1 = np.zeros(h)
        self.w2c = np.zeros((c, h, 2 * k))
        self.w2s = np.zeros((h, 2 * k))
        self.b2 = np.zeros(2 * k)
        self.n_types = k

    def params(self, prefix: str = "") -> dict[str, np.ndarray]:
        return {prefix + "w1c": self.w1c, prefix + "w1s": self.w1s,
                prefix + "b1": self.b1, prefix + "w2c": self.w2c,
                prefix + "w2s": self.w2s, prefix + "b2": self.b2}

    def forward(self, h_vis: np.ndarray, b_hat: np.ndarray):
        m1 = (np.einsum("bcij,bjk,ckh->bih", b_hat, h_vis, self.w1c, optimize=True)
              + h_vis @ self.w1s + self.b1)
        h1 = np.tanh(m1)
        out = (np.einsum("bcij,bjh,cho->bio", b_hat, h1, self.w2c, optimize=True)
               + h1 @ self.w2s + self.b2)
        k = self.n_types
        return out[..., :k], out[..., k:], (h_vis, b_hat, h1)

    def backward(self, cache, ds: np.ndarray, dt: np.ndarray):
        _require_cache(cache)
        h_vis, b_hat, h1 = cache
        dout = np.concatenate([ds, dt], axis=-1)
        dw2c = np.einsum("bcij,bjh,bio->cho", b_hat, h1, dout, optimize=True)
        dw2s = np.einsum("bih,bio->ho", h1, dout)
        db2 = dout.sum(axis=(0, 1))
        dh1 = (np.einsum("bcij,cho,bio->bjh", b_hat, self.w2c, dout, optimize=True)
               + dout @ self.w2s.T)
        dm1 = dh1 * (1.0 - h1 * h1)
        dw1c = np.einsum("bcij,bjk,bih->ckh", b_hat, h_vis, dm1, optimize=True)
        dw1s = np.einsum("bik,bih->kh", h_vis, dm1)
        db1 = dm1.sum(axis=(0, 1))
        dh_vis = (np.einsum("bcij,ckh,bih->bjk", b_hat, self.w1c, dm1, optimize=True)
                  + dm1 @ self.w1s.T)
        return dh_vis, {"w1c": dw1c, "w1s": dw1s, "b1": db1,
                        "w2c": dw2c, "w2s": dw2s, "b2": db2}


class GraphCoupling:
    """Graph-conditional affine coupling on atom rows: rows selected by
    the mask pass through unchanged and drive the conditioner; the rest
    are scaled by sigmoid(S) and translated by T."""

    def __init__(self, visible_rows: np.ndarray, conditioner: GraphConditioner):
        self.visible = np.asarray(visible_rows, dtype=bool)
        self.hidden = ~self.visible
        if not self.visible.any() or not self.hidden.any():
            raise ShapeMismatchError("row mask must leave both blocks non-empty")
        self.cond = conditioner

    def params(self, prefix: str = "") -> dict[str, np.ndarray]:
        return self.cond.params(prefix)

    def _vis(self, x):
        return x * self.visible[None, :, None]

    def forward(self, x: np.ndarray, b_hat: np.ndarray):
        if x.ndim != 3 or x.shape[1] != self.visible.size:
            raise ShapeMismatchError(f"expected (B, {self.visible.size}, K), got {x.shape}")
        s, t, ccache = self.cond.forward(self._vis(x), b_hat)
        sig = expit(s)
        hid = self.hidden
        y = x.copy()
        y[:, hid, :] = x[:, hid, :] * sig[:, hid, :] + t[:, hid, :]
        logdet = log_expit(s)[:, hid, :].sum(axis=(1, 2))
        return y, logdet, (x, s, sig, t, ccache)

    def inverse(self, y: np.ndarray, b_hat: np.ndarray):
        s, t, _ = self.cond.forward(self._vis(y), b_hat)
        sig = expit(s)
        hid = self.hidden
        x = y.copy()
        x[:, hid, :] = (y[:, hid, :] - t[:, hid, :]) / sig[:, hid, :]
        logdet = -log_expit(s)[:, hid, :].sum(axis=(1, 2))
        return x, logdet

    def backward(self, cache, dy: np.ndarray, dlogdet: np.ndarray):
        _require_cache(cache)
        x, s, sig, t, ccache = cache
        hid = self.hidden
        ds = np.zeros_like(s)
        dt = np.zeros_like(t)
        ds[:, hid, :] = (dy[:, hid, :] * x[:, hid, :] * sig[:, hid, :] * (1.0 - sig[:, hid, :])
                         + dlogdet[:, None, None] * (1.0 - sig[:, hid, :]))
        dt[:, hid, :] = dy[:, hid, :]
        dxv, grads = self.cond.backward(ccache, ds, dt)
        dx = np.zeros_like(dy)
        dx[:, hid, :] = dy[:, hid, :] * sig[:, hid, :]
        dx[:, self.visible, :] = dy[:, self.visible, :]
        dx += dxv * self.visible[None, :, None]
        return dx, grads


def bond_parity_mask(shape: GraphShape, parity: int) -> np.ndarray:
    """Checkerboard-in-channel mask over the flattened bond tensor:
    coordinate (c, i, j) is visible when (c + i + j) % 2 == parity."""
    c, n = shape.bond_channels, shape.max_atoms
    ci, ii, jj = np.meshgrid(np.arange(c), np.arange(n), np.arange(n), indexing="ij")
    flat = ((ci + ii + jj) % 2 == parity).reshape(-1)
    return np.nonzero(flat)[0]


def normalized_adjacency(b_disc: np.ndarray) -> np.ndarray:
    """Per-channel adjacency divided by (total degree + 1); rows then
    sum to < 1, the self-loop share staying with the atom itself."""
    deg = b_disc.sum(axis=(1, 3)) + 1.0          # (B, N)
    return b_disc / deg[:, None, :, None]


class BondFlow:
    """Glow-style stack for the bond tensor: (actnorm -> mixer ->
    coupling) x Q, producing a flat latent of size C*N*N."""

    def __init__(self, shape: GraphShape, blocks: int, hidden: int,
                 rng: np.random.Generator):
        self.shape = shape
        c, n = shape.bond_channels, shape.max_atoms
        self.dim = c * n * n
        self.blocks = []
        for q in range(blocks):
            vis = bond_parity_mask(shape, q % 2)
            cond = DenseConditioner(len(vis), self.dim - len(vis), hidden, rng)
            self.blocks.append({
                "actnorm": Actnorm(c, n * n),
                "mixer": ChannelMixer(c, n * n, rng),
                "coupling": MaskedCoupling(self.dim, vis, cond),
            })

    def params(self, prefix: str = "") -> dict[str, np.ndarray]:
        out: dict[str, np.ndarray] = {}
        for q, blk in enumerate(self.blocks):
            for name, layer in blk.items():
                out.update(layer.params(f"{prefix}block{q}/{name}/"))
        return out

    @property
    def initialized(self) -> bool:
        return all(blk["actnorm"].initialized for blk in self.blocks)

    def _check(self, x):
        c, n = self.shape.bond_channels, self.shape.max_atoms
        if x.ndim != 4 or x.shape[1:] != (c, n, n):
            raise ShapeMismatchError(f"expected (B, {c}, {n}, {n}), got {x.shape}")

    def forward(self, b_cont: np.ndarray):
        self._check(b_cont)
        x = b_cont
        total = np.zeros(x.shape[0])
        caches = []
        for blk in self.blocks:
            x, ld, c1 = blk["actnorm"].forward(x)
            total += ld
            x, ld, c2 = blk["mixer"].forward(x)
            total += ld
            flat = x.reshape(x.shape[0], -1)
            flat, ld, c3 = blk["coupling"].forward(flat)
            total += ld
            x = flat.reshape(x.shape)
            caches.append((c1, c2, c3))
        return x.reshape(x.shape[0], -1), total, caches

    def inverse(self, z: np.ndarray):
        if z.ndim != 2 or z.shape[1] != self.dim:
            raise ShapeMismatchError(f"expected (B, {self.dim}), got {z.shape}")
        c, n = self.shape.bond_channels, self.shape.max_atoms
        x = z.reshape(z.shape[0], c, n, n)
        total = np.zeros(x.shape[0])
        for blk in reversed(self.blocks):
            flat = x.reshape(x.shape[0], -1)
            flat, ld = blk["coupling"].inverse(flat)
            total += ld
            x = flat.reshape(x.shape)
            x, ld = blk["mixer"].inverse(x)
            total += ld
            x, ld = blk["actnorm"].inverse(x)
            total += ld
        return x, total

    def backward(self, caches, dz: np.ndarray, dlogdet: np.ndarray):
        c, n = self.shape.bond_channels, self.shape.max_atoms
        dx = dz.reshape(dz.shape[0], c, n, n)
        grads: dict[str, np.ndarray] = {}
        for q in range(len(self.blocks) - 1, -1, -1):
            blk = self.blocks[q]
            c1, c2, c3 = caches[q]
            flat = dx.reshape(dx.shape[0], -1)
            flat, g = blk["coupling"].backward(c3, flat, dlogdet)
            for k, v in g.items():
                grads[f"block{q}/coupling/{k}"] = v
            dx = flat.reshape(dx.shape)
            dx, g = blk["mixer"].backward(c2, dx, dlogdet)
            for k, v in g.items():
                grads[f"block{q}/mixer/{k}"] = v
            dx, g = blk["actnorm"].backward(c1, dx, dlogdet)
            for k, v in g.items():
                grads[f"block{q}/actnorm/{k}"] = v
        return dx, grads


class AtomFlow:
    """Graph-conditional stack for the atom matrix: alternating even/odd
    row couplings conditioned on the molecule's discrete bond tensor."""

    def __init__(self, shape: GraphShape, blocks: int, hidden: int,
                 rng: np.random.Generator):
        self.shape = shape
        n, k = shape.max_atoms, shape.n_atom_types
        self.dim = n * k
        self.couplings = []
        rows = np.arange(n)
        for q in range(blocks):
            vis = rows % 2 == q % 2
            cond = GraphConditioner(k, hidden, shape.bond_channels, rng)
            self.couplings.append(GraphCoupling(vis, cond))

    def params(self, prefix: str = "") -> dict[str, np.ndarray]:
        out: dict[str, np.ndarray] = {}
        for q, cpl in enumerate(self.couplings):
            out.update(cpl.params(f"{prefix}coupling{q}/"))
        return out

    def _check(self, a, b_disc):
        n, k = self.shape.max_atoms, self.shape.n_atom_types
        c = self.shape.bond_channels
        if a.ndim != 3 or a.shape[1:] != (n, k):
            raise ShapeMismatchError(f"expected atoms (B, {n}, {k}), got {a.shape}")
        if b_disc.shape != (a.shape[0], c, n, n):
            raise ShapeMismatchError(
                f"expected bonds (B, {c}, {n}, {n}), got {b_disc.shape}")

    def forward(self, a_cont: np.ndarray, b_disc: np.ndarray):
        self._check(a_cont, b_disc)
        b_hat = normalized_adjacency(b_disc.astype(np.float64))
        x = a_cont
        total = np.zeros(x.shape[0])
        caches = []
        for cpl in self.couplings:
            x, ld, cc = cpl.forward(x, b_hat)
            total += ld
            caches.append(cc)
        return x.reshape(x.shape[0], -1), total, caches

    def inverse(self, z: np.ndarray, b_disc: np.ndarray):
        n, k = self.shape.max_atoms, self.shape.n_atom_types
        if z.ndim != 2 or z.shape[1] != self.dim:
            raise ShapeMismatchError(f"expected (B, {self.dim}), got {z.shape}")
        b_hat = normalized_adjacency(b_disc.astype(np.float64))
        x = z.reshape(z.shape[0], n, k)
        total = np.zeros(x.shape[0])
        for cpl in reversed(self.couplings):
            x, ld = cpl.inverse(x, b_hat)
            total += ld
        return x, total

    def backward(self, caches, dz: np.ndarray, dlogdet: np.ndarray):
        n, k = self.shape.max_atoms, self.shape.n_atom_types
        dx = dz.reshape(dz.shape[0], n, k)
        grads: dict[str, np.ndarray] = {}
        for q in range(len(self.couplings) - 1, -1, -1):
            dx, g = self.couplings[q].backward(caches[q], dx, dlogdet)
            for key, v in g.items():
                grads[f"coupling{q}/{key}"] = v
        return dx, grads
