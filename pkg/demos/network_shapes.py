"""
Generator and discriminator shapes
==================================

Audit both networks symbolically, then run the desk-scale pair end to end.
"""
import time

import numpy as np

from biplanar import (DiscriminatorConfig, GeneratorConfig, audit_shapes, discriminator_forward,
                      generator_forward, make_biplanar, phantom)
from biplanar import discriminator as disc
from biplanar.generator import init_weights

# the 128 configuration, walked layer by layer without any arithmetic
for name, shape in audit_shapes(GeneratorConfig()).items():
    if name.startswith(("pa.enc.", "pa.conna", "fuse.", "output")) and name.count(".") <= 2:
        print(f"{name:16s} {shape}")

print("discriminator ladder:", [s[1] for s in disc.audit_shapes(DiscriminatorConfig()).values()])

# desk scale: radiographs of a sphere in, a 32^3 volume out
cfg = GeneratorConfig.desk()
pa, lat = make_biplanar(phantom("sphere", 32, spacing=10.0, value=1500.0, radius=10), (32, 32))
t0 = time.perf_counter()
vol = generator_forward(pa, lat, cfg, init_weights(cfg, seed=0))
print(f"generator: {vol.dims} in {time.perf_counter() - t0:.2f} s, range [{vol.values.min():.3f}, "
      f"{vol.values.max():.3f}]")

dcfg = DiscriminatorConfig.desk()
scores = discriminator_forward(vol, (pa, lat), dcfg, disc.init_weights(dcfg, seed=0))
print("patch scores:", scores.shape, "mean", float(np.mean(scores)))
