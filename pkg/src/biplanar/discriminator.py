"""
3D patch discriminator.

Strided conv3d-norm-relu modules (kernel 4) followed by a final conv3d to one
channel. Every output voxel scores one overlapping receptive-field patch. The
radiographs conditioning the score are broadcast along their ray axes and
stacked with the volume as extra input channels.
"""
from __future__ import annotations

from collections import OrderedDict
from dataclasses import dataclass

import numpy as np

from .generator import lateral_to_pa
from .tensor import ConvSpec, conv3d, conv_out_extent, instance_norm, relu, seeded_init
from .volume import Image2D, Volume3D


@dataclass(frozen=True)
class DiscriminatorConfig:
    input_size: int = 128
    channel_widths: tuple[int, ...] = (64, 128, 256, 512)
    kernel: int = 4
    strides: tuple[int, ...] = (2, 2, 2, 1)
    conditional: bool = True

    def __post_init__(self):
        object.__setattr__(self, "channel_widths", tuple(int(c) for c in self.channel_widths))
        object.__setattr__(self, "strides", tuple(int(s) for s in self.strides))
        if any(c < 1 for c in self.channel_widths):
            raise ValueError(f"channel widths must be positive, got {self.channel_widths}")
        if any(b < a for a, b in zip(self.channel_widths, self.channel_widths[1:])):
            raise ValueError(f"channel widths must be non-decreasing, got {self.channel_widths}")
        if len(self.strides) != len(self.channel_widths):
            raise ValueError("one stride per channel width is required")

    @classmethod
    def desk(cls, **kw) -> "DiscriminatorConfig":
        base = dict(input_size=32, channel_widths=(8, 16, 32, 64))
        base.update(kw)
        return cls(**base)

    @property
    def in_channels(self) -> int:
        return 3 if self.conditional else 1


def weight_shapes(cfg: DiscriminatorConfig) -> "OrderedDict[str, tuple[int, ...]]":
    shapes: "OrderedDict[str, tuple[int, ...]]" = OrderedDict()
    cin = cfg.in_channels
    k = cfg.kernel
    for i, cout in enumerate(cfg.channel_widths):
        shapes[f"d.{i}.w"] = (cout, cin, k, k, k)
        shapes[f"d.{i}.b"] = (cout,)
        cin = cout
    shapes["d.final.w"] = (1, cin, k, k, k)
    shapes["d.final.b"] = (1,)
    return shapes


def audit_shapes(cfg: DiscriminatorConfig) -> "OrderedDict[str, tuple[int, ...]]":
    report: "OrderedDict[str, tuple[int, ...]]" = OrderedDict()
    e = cfg.input_size
    report["input"] = (cfg.in_channels, e, e, e)
    layers = [(f"d.{i}", c, s) for i, (c, s) in enumerate(zip(cfg.channel_widths, cfg.strides))]
    layers.append(("d.final", 1, 1))
    for name, c, s in layers:
        n = conv_out_extent(e, cfg.kernel, s, 1)
        if n < 1:
            raise ValueError(f"layer {name}: extent {e} too small for kernel {cfg.kernel} stride {s}")
        e = n
        report[name] = (c, e, e, e)
    return report


def init_weights(cfg: DiscriminatorConfig, seed: int = 0, dtype=np.float64) -> dict[str, np.ndarray]:
    weights = {}
    for idx, (name, shape) in enumerate(weight_shapes(cfg).items()):
        if name.endswith(".b"):
            weights[name] = np.zeros(shape, dtype=dtype)
        else:
            sub = int(np.random.SeedSequence([seed, 1000 + idx]).generate_state(1, np.uint64)[0])
            weights[name] = seeded_init(shape, "normal", sub, dtype=dtype)
    return weights


def condition_channels(pa, lateral, size: int) -> np.ndarray:
    """Broadcast PA ``[x, z]`` along y and lateral ``[u, z]`` along x; returns ``[2, n, n, n]``."""
    pa = np.asarray(pa.values if isinstance(pa, Image2D) else pa, dtype=np.float64)
    lat = np.asarray(lateral.values if isinstance(lateral, Image2D) else lateral, dtype=np.float64)
    for name, img in (("PA", pa), ("lateral", lat)):
        if img.shape != (size, size):
            raise ValueError(f"{name} condition has dims {img.shape}, volume needs ({size}, {size})")
    pa3 = np.broadcast_to(pa[:, None, :], (size, size, size))
    lat3 = lateral_to_pa(np.broadcast_to(lat[None, :, None, :], (1, size, size, size)))[0]
    return np.stack([pa3, lat3])


def discriminator_forward(vol, condition, cfg: DiscriminatorConfig, weights: dict[str, np.ndarray],
                          dtype=np.float64) -> np.ndarray:
    """Patch score grid (3D array) for ``vol`` given its ``(pa, lateral)`` radiographs."""
    v = np.asarray(vol.values if isinstance(vol, Volume3D) else vol, dtype=dtype)
    if v.shape != (cfg.input_size,) * 3:
        raise ValueError(f"discriminator expects a {cfg.input_size}^3 volume, got {v.shape}")
    for name, shape in weight_shapes(cfg).items():
        if tuple(weights[name].shape) != shape:
            raise ValueError(f"layer {name}: weight shape {weights[name].shape} != expected {shape}")
    x = v[None]
    if cfg.conditional:
        if condition is None:
            raise ValueError("conditional discriminator needs (pa, lateral) images")
        x = np.concatenate([x, condition_channels(*condition, cfg.input_size).astype(dtype)])
    for i, stride in enumerate(cfg.strides):
        w, b = weights[f"d.{i}.w"].astype(dtype), weights[f"d.{i}.b"].astype(dtype)
        x = relu(instance_norm(conv3d(x, w, b, ConvSpec(cfg.kernel, stride, 1))))
    w, b = weights["d.final.w"].astype(dtype), weights["d.final.b"].astype(dtype)
    return conv3d(x, w, b, ConvSpec(cfg.kernel, 1, 1))[0]
