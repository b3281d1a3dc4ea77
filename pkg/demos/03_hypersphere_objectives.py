"""The loss surface: alignment, hyperspherical uniformity, one-to-many.

Shows the Gaussian pairwise potential on the unit hypersphere, how
minimizing its log-mean spreads embeddings apart, and how the adaptive
space around each target embedding enables one target to map to many
drug latents.
"""

import numpy as np

from targetflow.objectives import (
    SpaceParams,
    align_loss,
    batch_std,
    gaussian_kernel,
    sample_space,
    total_loss,
    unif_loss,
    unif_loss_grads,
)

# Kernel values at the extremes (t = 2).
x, y = np.array([1.0, 0.0]), np.array([0.0, 1.0])
print(f"kernel identical:  {gaussian_kernel(x, x, 2.0):.6f}")
print(f"kernel orthogonal: {gaussian_kernel(x, y, 2.0):.6f}")
print(f"kernel antipodal:  {gaussian_kernel(x, -x, 2.0):.6f}")

# Uniformity loss is the log-mean pairwise potential: 0 when everything
# coincides, more negative the more spread the batch is.
tight = np.tile([1.0, 0.0], (4, 1))
spread = np.array([[1.0, 0.0], [0.0, 1.0], [-1.0, 0.0], [0.0, -1.0]])
print(f"\nuniformity, collapsed batch: {unif_loss(tight, 2.0):.4f}")
print(f"uniformity, square on S^1:   {unif_loss(spread, 2.0):.4f}")

# Projected gradient descent on the uniformity loss pushes free points
# apart; two points end up antipodal.
rng = np.random.default_rng(1)
z = rng.standard_normal((2, 3))
z /= np.linalg.norm(z, axis=1, keepdims=True)
for step in range(500):
    _, dz = unif_loss_grads(z, 2.0)
    z = z - 0.1 * dz
    z /= np.linalg.norm(z, axis=1, keepdims=True)
print(f"\nafter descent, cosine between the two points: {float(z[0] @ z[1]):+.5f}")

# One-to-many: each target embedding owns a Gaussian space whose scale
# follows the batch spread (variance lambda * sigma^2).
embeddings = rng.standard_normal((6, 4)) * np.array([1.0, 2.0, 0.5, 1.5])
sigma = batch_std(embeddings)
space = SpaceParams(lam=0.1, sigma=sigma)
z_t = embeddings[0]
samples = np.stack([sample_space(z_t, space, rng) for _ in range(5)])
print(f"\nbatch sigma: {np.round(sigma, 3)}")
print("five samples from the space around one target:")
for s in samples:
    print(f"  distance to the center: {np.linalg.norm(s - z_t):.3f}")

# The total objective is simply the sum of the two terms.
rep = total_loss(align_loss(samples[0], z_t), unif_loss(embeddings, 2.0))
print(f"\nalign {rep.align:.4f} + unif {rep.unif:.4f} = total {rep.total:.4f}")
