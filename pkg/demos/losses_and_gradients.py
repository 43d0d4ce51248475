"""
Objectives and their gradients
==============================

Hand-checkable loss values, then analytic gradients against finite differences.
"""
import numpy as np

from biplanar import (LossWeights, grad_projection, grad_recon, lsgan_d_loss, lsgan_g_loss, projection_loss,
                      recon_loss, total_generator_objective)
from biplanar.losses import finite_diff_check, kink_mask, projections

shape = (2, 2, 2)
print("D loss, perfect discriminator:", lsgan_d_loss(np.ones(shape), np.zeros(shape)))
print("D loss, undecided:", lsgan_d_loss(np.full(shape, 0.5), np.full(shape, 0.5)))
print("G loss, fooled nothing:", lsgan_g_loss(np.zeros(shape)))

print("MSE of (0,0) vs (1,3):", recon_loss(np.zeros(2), np.array([1.0, 3.0])))

# projections are means along one axis; a constant shift moves every plane by |c|
t = np.random.default_rng(0).uniform(size=(4, 5, 6))
print("projection dims:", {k: v.shape for k, v in projections(t).items()})
print("projection loss of a +0.3 shift:", projection_loss(t + 0.3, t))

print("weighted total for (3, 1, 2):", total_generator_objective(3, 1, 2, LossWeights()))

# central differences agree with the analytic gradients away from L1 kinks
rng = np.random.default_rng(1)
p, t = rng.normal(size=(4, 4, 4)), rng.normal(size=(4, 4, 4))
print("recon gradient error:", finite_diff_check(lambda v: recon_loss(v, t), p, grad_recon(p, t)))
mask = kink_mask(p, t)
print("projection gradient error:",
      finite_diff_check(lambda v: projection_loss(v, t), p, grad_projection(p, t), mask=mask))
print("doubled gradient error (should be ~1):",
      finite_diff_check(lambda v: recon_loss(v, t), p, 2 * grad_recon(p, t)))
