"""
CT volume and 2D image containers with physical metadata.

Physical convention: ``origin`` is the position (mm) of the centre of the first
voxel and voxel ``i`` along an axis sits at ``origin + i * spacing``. A grid
of ``n`` voxels therefore covers the box ``[origin - s/2, origin + (n - 1/2) s]``.
Volume axes are ``(x, y, z)`` = (left-right, posterior-anterior, inferior-superior).
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import fileio
from .fileio import HeaderError

CT_MAX = 4095.0


def round_half_up(x: float) -> int:
    # tolerance absorbs float noise such as 2.4999999999
    return int(math.floor(x + 0.5 + 1e-9))


def _triple(v, name):
    v = tuple(float(a) for a in np.broadcast_to(np.asarray(v, dtype=float), (3,)))
    return v


@dataclass(frozen=True)
class Volume3D:
    values: np.ndarray
    spacing: tuple[float, float, float] = (1.0, 1.0, 1.0)
    origin: tuple[float, float, float] = (0.0, 0.0, 0.0)

    def __post_init__(self):
        values = np.asarray(self.values)
        if values.ndim != 3:
            raise ValueError(f"Volume3D values must be 3D, got shape {values.shape}")
        if not np.issubdtype(values.dtype, np.number):
            raise ValueError(f"Volume3D values must be numeric, got {values.dtype}")
        object.__setattr__(self, "values", values)
        object.__setattr__(self, "spacing", _triple(self.spacing, "spacing"))
        object.__setattr__(self, "origin", _triple(self.origin, "origin"))
        if any(s <= 0 for s in self.spacing):
            raise ValueError(f"spacing must be positive, got {self.spacing}")
        if not np.all(np.isfinite(values)):
            raise ValueError("Volume3D values must be finite")

    @property
    def dims(self) -> tuple[int, int, int]:
        return tuple(self.values.shape)

    @property
    def extent(self) -> tuple[float, float, float]:
        """Physical side lengths in mm (``dims * spacing``)."""
        return tuple(n * s for n, s in zip(self.dims, self.spacing))

    @property
    def center(self) -> tuple[float, float, float]:
        return tuple(o + (n - 1) * s / 2 for o, n, s in zip(self.origin, self.dims, self.spacing))

    @property
    def box(self) -> tuple[np.ndarray, np.ndarray]:
        """Lower and upper corners of the physical bounding box."""
        o, s, n = (np.asarray(a, dtype=float) for a in (self.origin, self.spacing, self.dims))
        return o - s / 2, o + (n - 0.5) * s

    def with_values(self, values) -> "Volume3D":
        return Volume3D(values, self.spacing, self.origin)

    def __array__(self, dtype=None, copy=None):
        return self.values if dtype is None else self.values.astype(dtype)

    @classmethod
    def centered(cls, values, spacing=1.0) -> "Volume3D":
        """Volume whose physical centre is the coordinate origin."""
        values = np.asarray(values)
        sp = _triple(spacing, "spacing")
        origin = tuple(-(n - 1) * s / 2 for n, s in zip(values.shape, sp))
        return cls(values, sp, origin)


@dataclass(frozen=True)
class Image2D:
    """Detector image indexed ``[u, v]``; ``v`` points up (patient superior)."""

    values: np.ndarray
    spacing: tuple[float, float] = (1.0, 1.0)
    origin: tuple[float, float] = field(default=(0.0, 0.0))

    def __post_init__(self):
        values = np.asarray(self.values)
        if values.ndim != 2:
            raise ValueError(f"Image2D values must be 2D, got shape {values.shape}")
        object.__setattr__(self, "values", values)
        object.__setattr__(self, "spacing", tuple(float(a) for a in np.broadcast_to(self.spacing, (2,))))
        object.__setattr__(self, "origin", tuple(float(a) for a in np.broadcast_to(self.origin, (2,))))
        if any(s <= 0 for s in self.spacing):
            raise ValueError(f"spacing must be positive, got {self.spacing}")
        if not np.all(np.isfinite(values)):
            raise ValueError("Image2D values must be finite")

    @property
    def dims(self) -> tuple[int, int]:
        return tuple(self.values.shape)

    def __array__(self, dtype=None, copy=None):
        return self.values if dtype is None else self.values.astype(dtype)


# -- file I/O ---------------------------------------------------------------

def save_volume(vol: Volume3D, path) -> Path:
    """Write ``path`` (header) plus a sibling ``.raw`` payload."""
    return fileio.write_array(path, vol.values, {"spacing": vol.spacing, "origin": vol.origin})


def load_volume(path) -> Volume3D:
    values, fields = fileio.read_array(path)
    if values.ndim != 3:
        raise HeaderError(f"{path}: expected 3 dims for a volume, got {values.ndim}")
    spacing, origin = _geometry_fields(fields, 3, path)
    return Volume3D(values, spacing, origin)


def save_image(img: Image2D, path) -> Path:
    return fileio.write_array(path, img.values, {"spacing": img.spacing, "origin": img.origin})


def load_image(path) -> Image2D:
    values, fields = fileio.read_array(path)
    if values.ndim != 2:
        raise HeaderError(f"{path}: expected 2 dims for an image, got {values.ndim}")
    spacing, origin = _geometry_fields(fields, 2, path)
    return Image2D(values, spacing, origin)


def _geometry_fields(fields, n, path):
    for key in ("spacing", "origin"):
        if key not in fields:
            raise HeaderError(f"{path}: missing required key {key!r}")
    spacing = fileio.parse_floats(fields["spacing"], "spacing", n)
    origin = fileio.parse_floats(fields["origin"], "origin", n)
    if any(s <= 0 for s in spacing):
        raise HeaderError(f"{path}: spacing must be positive, got {spacing}")
    return spacing, origin


# -- resampling ---------------------------------------------------------------

def _linear_along(arr: np.ndarray, coords: np.ndarray, axis: int) -> np.ndarray:
    """Linear interpolation at fractional indices ``coords`` along ``axis``.

    Coordinates between -0.5 and n-0.5 (inside the voxel box) are clamped to the
    outermost centres; coordinates outside the box produce zeros.
    """
    n = arr.shape[axis]
    inside = (coords >= -0.5) & (coords <= n - 0.5)
    c = np.clip(coords, 0, n - 1)
    lo = np.floor(c).astype(int)
    lo = np.minimum(lo, max(n - 2, 0))
    hi = np.minimum(lo + 1, n - 1)
    frac = c - lo
    shape = [1] * arr.ndim
    shape[axis] = -1
    frac = frac.reshape(shape)
    out = np.take(arr, lo, axis=axis) * (1 - frac) + np.take(arr, hi, axis=axis) * frac
    return out * inside.reshape(shape)


def resample_isotropic(vol: Volume3D, target_spacing: float = 1.0) -> Volume3D:
    """Trilinear resampling onto a cubic grid of ``target_spacing`` mm.

    The new grid has ``round_half_up(extent / target_spacing)`` voxels per axis
    and shares the physical centre of the source.
    """
    if target_spacing <= 0:
        raise ValueError(f"target_spacing must be positive, got {target_spacing}")
    if any(n < 2 for n in vol.dims):
        raise ValueError(f"cannot resample degenerate volume of dims {vol.dims}")
    t = float(target_spacing)
    out = vol.values.astype(np.float64)
    new_dims, new_origin = [], []
    for axis, (n, s, c) in enumerate(zip(vol.dims, vol.spacing, vol.center)):
        m = max(round_half_up(n * s / t), 1)
        o = c - (m - 1) * t / 2
        coords = (o + np.arange(m) * t - vol.origin[axis]) / s
        out = _linear_along(out, coords, axis)
        new_dims.append(m)
        new_origin.append(o)
    return Volume3D(out, (t, t, t), tuple(new_origin))


def crop_metric_cube(vol: Volume3D, side_mm: float = 320.0, center=None) -> Volume3D:
    """Cut a cube of ``side_mm`` from an isotropic volume, zero-filling outside.

    The cube is snapped to the source voxel grid so values are copied, not
    interpolated. ``center`` defaults to the physical centre of ``vol``.
    """
    if side_mm <= 0:
        raise ValueError(f"side_mm must be positive, got {side_mm}")
    s = vol.spacing[0]
    if not np.allclose(vol.spacing, s, rtol=1e-9, atol=0):
        raise ValueError(f"crop_metric_cube needs isotropic spacing, got {vol.spacing}")
    m = max(round_half_up(side_mm / s), 1)
    center = vol.center if center is None else _triple(center, "center")
    out = np.zeros((m, m, m), dtype=vol.values.dtype)
    src, dst, origin = [], [], []
    for axis in range(3):
        start = round_half_up((center[axis] - (m - 1) * s / 2 - vol.origin[axis]) / s)
        lo, hi = max(start, 0), min(start + m, vol.dims[axis])
        if hi <= lo:
            lo = hi = 0
        src.append(slice(lo, hi))
        dst.append(slice(lo - start, lo - start + (hi - lo)))
        origin.append(vol.origin[axis] + start * s)
    out[tuple(dst)] = vol.values[tuple(src)]
    return Volume3D(out, (s, s, s), tuple(origin))


def normalize(vol, mode: str = "to_unit"):
    """Affine map between CT values ``[0, 4095]`` and ``[0, 1]``.

    Values are clamped to the source range first. Accepts a :class:`Volume3D`
    or an array and returns the same kind.
    """
    values = np.asarray(vol.values if isinstance(vol, Volume3D) else vol, dtype=np.float64)
    if mode == "to_unit":
        out = np.clip(values, 0.0, CT_MAX) / CT_MAX
    elif mode == "inverse":
        out = np.clip(values, 0.0, 1.0) * CT_MAX
    else:
        raise ValueError(f"mode must be 'to_unit' or 'inverse', got {mode!r}")
    return vol.with_values(out) if isinstance(vol, Volume3D) else out
