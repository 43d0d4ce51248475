"""
Analytic test objects rasterized by sampling at voxel centres.

Centres and sizes are in voxel units; voxel ``i`` has its centre at index
``i``, so the middle of an ``n``-voxel axis is ``(n - 1) / 2``.
"""
from __future__ import annotations

import numpy as np

from .volume import Volume3D

KINDS = ("cube", "sphere", "two_spheres", "ramp")


def _dims(dims) -> tuple[int, int, int]:
    d = tuple(int(v) for v in np.broadcast_to(dims, (3,)))
    if min(d) < 1:
        raise ValueError(f"phantom dims must be positive, got {d}")
    return d


def _check_inside(dims, center, reach, kind):
    for n, c, r in zip(dims, center, np.broadcast_to(reach, (3,))):
        if c - r < -0.5 - 1e-9 or c + r > n - 0.5 + 1e-9:
            raise ValueError(f"{kind} at {tuple(center)} with extent {r} does not fit in grid {dims}")


def phantom(kind: str, dims, spacing: float = 1.0, value: float = 1.0, center=None,
            half_side: float | None = None, radius: float | None = None,
            axis: int = 0, low: float = 0.0, high: float = 1.0, separation: float | None = None) -> Volume3D:
    """Rasterize a phantom; see ``KINDS``.

    ``cube`` keeps voxels with every ``|i - c| <= half_side``; ``sphere`` keeps
    ``|i - c| <= radius``; ``two_spheres`` places two spheres of ``radius``
    ``separation`` voxels apart along x; ``ramp`` rises linearly from ``low``
    to ``high`` along ``axis``.
    """
    dims = _dims(dims)
    c = np.array([(n - 1) / 2 for n in dims] if center is None else center, dtype=float)
    if c.shape != (3,):
        raise ValueError(f"center must have 3 coordinates, got {center}")
    idx = np.meshgrid(*(np.arange(n, dtype=float) for n in dims), indexing="ij")
    out = np.zeros(dims)
    if kind == "cube":
        h = min(dims) / 4 if half_side is None else float(half_side)
        _check_inside(dims, c, h, kind)
        inside = np.ones(dims, dtype=bool)
        for i in range(3):
            inside &= np.abs(idx[i] - c[i]) <= h + 1e-9
        out[inside] = value
    elif kind == "sphere":
        r = min(dims) / 4 if radius is None else float(radius)
        _check_inside(dims, c, r, kind)
        out[sum((idx[i] - c[i]) ** 2 for i in range(3)) <= r * r + 1e-9] = value
    elif kind == "two_spheres":
        r = min(dims) / 6 if radius is None else float(radius)
        sep = 3 * r if separation is None else float(separation)
        for sgn in (-1, 1):
            cc = c + np.array([sgn * sep / 2, 0, 0])
            _check_inside(dims, cc, r, kind)
            out[sum((idx[i] - cc[i]) ** 2 for i in range(3)) <= r * r + 1e-9] = value
    elif kind == "ramp":
        if axis not in (0, 1, 2):
            raise ValueError(f"ramp axis must be 0, 1 or 2, got {axis}")
        n = dims[axis]
        out = low + (high - low) * idx[axis] / max(n - 1, 1)
    else:
        raise ValueError(f"unknown phantom kind {kind!r}; choose from {KINDS}")
    return Volume3D.centered(out, spacing)
