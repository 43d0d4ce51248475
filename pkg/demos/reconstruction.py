"""
Matching projections by gradient descent
========================================

Three mean projections of a cube are fitted from an empty volume. The
projections match exactly while the volume itself need not equal the cube.
"""
import numpy as np

from biplanar import OptimizeSpec, reconstruct
from biplanar.losses import projection_loss_to
from biplanar.recon import default_step, phantom_targets

truth, targets = phantom_targets("cube", 16, half_side=4)
spec = OptimizeSpec(iterations=2000, targets=targets)
print("default step:", default_step((16, 16, 16), spec.weights, True, False))

vol, trace = reconstruct(spec, (16, 16, 16))
for i in (0, 10, 100, 500, 1999):
    print(f"iteration {i:5d}  objective {trace[i]:.3e}")

print("final projection residual:", projection_loss_to(vol.values, targets))
print("voxels that differ from the cube:", int(np.sum(np.abs(vol.values - truth.values) > 1e-3)))
