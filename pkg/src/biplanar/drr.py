"""
Digitally reconstructed radiographs by ray marching through a CT volume.

Each detector pixel casts one ray. Attenuation is integrated with a fixed-step
midpoint rule over the ray's intersection with the volume box, sampling the
attenuation map trilinearly, and the pixel stores ``1 - exp(-integral)`` so that
dense tissue is bright.
"""
from __future__ import annotations

from dataclasses import dataclass, replace
from pathlib import Path

import numpy as np
from scipy import ndimage

from . import fileio
from .volume import Image2D, Volume3D

VIEWS = {
    # direction of travel, detector up
    "PA": ((0.0, 1.0, 0.0), (0.0, 0.0, 1.0)),
    "lateral": ((1.0, 0.0, 0.0), (0.0, 0.0, 1.0)),
}

_MAX_SAMPLES_PER_CHUNK = 1 << 22


@dataclass(frozen=True)
class AttenuationModel:
    """Linear attenuation ``mu = mu_water * ct / 1024`` in 1/mm, clamped at 0."""

    mu_water: float = 0.02

    def __call__(self, ct_values) -> np.ndarray:
        return np.maximum(np.asarray(ct_values, dtype=np.float64) * (self.mu_water / 1024.0), 0.0)


@dataclass(frozen=True)
class ProjectionGeometry:
    """Source/detector description.

    ``detector_spacing`` of ``None`` picks a pixel size whose field of view
    covers the whole volume; ``step_mm`` of ``None`` uses a quarter of the
    smallest voxel spacing. ``isocenter`` defaults to the volume centre.
    """

    mode: str = "parallel"
    view: str = "PA"
    detector_dims: tuple[int, int] = (128, 128)
    detector_spacing: float | tuple[float, float] | None = None
    source_to_detector_mm: float = 1500.0
    source_to_isocenter_mm: float = 1000.0
    step_mm: float | None = None
    direction: tuple[float, float, float] | None = None
    up: tuple[float, float, float] | None = None
    isocenter: tuple[float, float, float] | None = None

    def __post_init__(self):
        if self.mode not in ("parallel", "cone_beam"):
            raise ValueError(f"mode must be 'parallel' or 'cone_beam', got {self.mode!r}")
        if self.view not in ("PA", "lateral", "custom"):
            raise ValueError(f"view must be 'PA', 'lateral' or 'custom', got {self.view!r}")
        if self.view == "custom" and (self.direction is None or self.up is None):
            raise ValueError("custom view needs direction and up vectors")
        w, h = self.detector_dims
        if w < 1 or h < 1:
            raise ValueError(f"detector_dims must be positive, got {self.detector_dims}")
        if self.step_mm is not None and self.step_mm <= 0:
            raise ValueError(f"step_mm must be positive, got {self.step_mm}")
        if self.detector_spacing is not None and min(np.broadcast_to(self.detector_spacing, (2,))) <= 0:
            raise ValueError(f"detector_spacing must be positive, got {self.detector_spacing}")
        if self.mode == "cone_beam":
            if self.source_to_detector_mm <= 0 or self.source_to_isocenter_mm <= 0:
                raise ValueError("cone-beam distances must be positive")
            if self.source_to_isocenter_mm >= self.source_to_detector_mm:
                raise ValueError("source_to_isocenter_mm must be smaller than source_to_detector_mm")
        d, u = self.axes()[:2]
        if abs(np.linalg.norm(d) - 1) > 1e-9 or abs(np.linalg.norm(u) - 1) > 1e-9 or abs(d @ u) > 1e-9:
            raise ValueError(f"direction {tuple(d)} and up {tuple(u)} must be orthonormal")

    def axes(self) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        """``(direction, up, u)`` where ``u = direction x up`` is the detector's first axis."""
        if self.view == "custom":
            d, up = self.direction, self.up
        else:
            d, up = VIEWS[self.view]
        d, up = np.asarray(d, dtype=float), np.asarray(up, dtype=float)
        return d, up, np.cross(d, up)

    @property
    def magnification(self) -> float:
        if self.mode == "parallel":
            return 1.0
        return self.source_to_detector_mm / self.source_to_isocenter_mm

    def pixel_spacing_for(self, vol: Volume3D) -> tuple[float, float]:
        if self.detector_spacing is not None:
            return tuple(float(v) for v in np.broadcast_to(self.detector_spacing, (2,)))
        lo, hi = vol.box
        s = float(np.max(hi - lo)) / max(self.detector_dims) * self.magnification
        return s, s

    def step_for(self, vol: Volume3D) -> float:
        return self.step_mm if self.step_mm is not None else min(vol.spacing) / 4


def save_geometry(geom: ProjectionGeometry, path) -> Path:
    path = Path(path)
    d, up, _ = geom.axes()
    items = {
        "mode": geom.mode,
        "view": geom.view,
        "direction": list(d),
        "up": list(up),
        "detector_dims": list(geom.detector_dims),
        "source_to_detector_mm": geom.source_to_detector_mm,
        "source_to_isocenter_mm": geom.source_to_isocenter_mm,
    }
    if geom.detector_spacing is not None:
        items["detector_spacing"] = list(np.broadcast_to(geom.detector_spacing, (2,)).astype(float))
    if geom.step_mm is not None:
        items["step_mm"] = geom.step_mm
    if geom.isocenter is not None:
        items["isocenter"] = list(geom.isocenter)
    path.write_text(fileio.format_key_values(items))
    return path


def geometry_from_fields(fields: dict[str, str]) -> ProjectionGeometry:
    kw = {}
    if "mode" in fields:
        kw["mode"] = {"cone": "cone_beam"}.get(fields["mode"], fields["mode"])
    if "view" in fields:
        kw["view"] = fields["view"]
    if "detector_dims" in fields:
        kw["detector_dims"] = fileio.parse_ints(fields["detector_dims"], "detector_dims", 2)
    if "detector_spacing" in fields:
        vals = fileio.parse_floats(fields["detector_spacing"], "detector_spacing")
        kw["detector_spacing"] = vals[0] if len(vals) == 1 else vals
    for key in ("source_to_detector_mm", "source_to_isocenter_mm", "step_mm"):
        if key in fields:
            kw[key] = fileio.parse_floats(fields[key], key, 1)[0]
    if "isocenter" in fields:
        kw["isocenter"] = fileio.parse_floats(fields["isocenter"], "isocenter", 3)
    if kw.get("view") == "custom":
        kw["direction"] = fileio.parse_floats(fields["direction"], "direction", 3)
        kw["up"] = fileio.parse_floats(fields["up"], "up", 3)
    return ProjectionGeometry(**kw)


def load_geometry(path) -> ProjectionGeometry:
    path = Path(path)
    return geometry_from_fields(fileio.parse_key_values(path.read_text(), str(path)))


# -- ray marching ---------------------------------------------------------------

def _clip_to_box(origins, dirs, lo, hi):
    """Entry/exit parameters (t >= 0) of rays against an axis-aligned box."""
    with np.errstate(divide="ignore", invalid="ignore"):
        t1 = (lo - origins) / dirs
        t2 = (hi - origins) / dirs
    tnear = np.minimum(t1, t2)
    tfar = np.maximum(t1, t2)
    parallel = dirs == 0
    inside = (origins >= lo) & (origins <= hi)
    tnear = np.where(parallel, np.where(inside, -np.inf, np.inf), tnear)
    tfar = np.where(parallel, np.where(inside, np.inf, -np.inf), tfar)
    t0 = np.maximum(tnear.max(axis=1), 0.0)
    t1 = tfar.min(axis=1)
    miss = ~(t1 > t0)
    # misses get an empty segment at t = 0
    return np.where(miss, 0.0, t0), np.where(miss, 0.0, t1)


def _integrate(mu: np.ndarray, vol: Volume3D, origins, dirs, step: float) -> np.ndarray:
    origins = np.atleast_2d(np.asarray(origins, dtype=np.float64))
    dirs = np.atleast_2d(np.asarray(dirs, dtype=np.float64))
    lo, hi = vol.box
    t0, t1 = _clip_to_box(origins, dirs, lo, hi)
    length = t1 - t0
    nsteps = np.ceil(length / step - 1e-9).astype(np.int64)
    nsteps[length <= 0] = 0
    dt = np.where(nsteps > 0, length / np.maximum(nsteps, 1), 0.0)
    origin = np.asarray(vol.origin)
    spacing = np.asarray(vol.spacing)
    upper = np.asarray(vol.dims, dtype=float) - 1
    out = np.zeros(len(origins))
    order = np.argsort(nsteps, kind="stable")
    count = max(1, _MAX_SAMPLES_PER_CHUNK // max(int(nsteps.max(initial=0)), 1))
    start = 0
    while start < len(order):
        # rays sorted by length so each chunk pads little
        idx = order[start:start + count]
        start += len(idx)
        kmax = int(nsteps[idx].max())
        if kmax == 0:
            continue
        k = np.arange(kmax) + 0.5
        t = t0[idx, None] + k[None, :] * dt[idx, None]
        pts = origins[idx, None, :] + t[..., None] * dirs[idx, None, :]
        coords = np.clip((pts - origin) / spacing, 0, upper)
        samples = ndimage.map_coordinates(mu, coords.reshape(-1, 3).T, order=1, mode="nearest", prefilter=False)
        samples = samples.reshape(len(idx), kmax)
        samples[np.arange(kmax)[None, :] >= nsteps[idx, None]] = 0.0
        # fixed left-to-right summation per ray
        out[idx] = samples.sum(axis=1) * dt[idx]
    return out


def line_integral(vol: Volume3D, origin, direction, step_mm: float | None = None,
                  atten: AttenuationModel | None = AttenuationModel()) -> float:
    """Integral of attenuation along the ray ``origin + t * direction, t >= 0``.

    With ``atten=None`` the volume values are taken as attenuation coefficients
    directly. Rays that miss the volume box return 0.
    """
    d = np.asarray(direction, dtype=np.float64)
    norm = np.linalg.norm(d)
    if norm == 0:
        raise ValueError("ray direction must be non-zero")
    if abs(norm - 1) > 1e-9:
        raise ValueError(f"ray direction must be a unit vector, |d| = {norm}")
    step = min(vol.spacing) / 4 if step_mm is None else float(step_mm)
    if step <= 0:
        raise ValueError(f"step_mm must be positive, got {step_mm}")
    mu = vol.values.astype(np.float64) if atten is None else atten(vol.values)
    return float(_integrate(mu, vol, origin, d, step)[0])


def detector_rays(vol: Volume3D, geom: ProjectionGeometry):
    """Per-pixel ray origins and unit directions, each shaped ``[w*h, 3]``."""
    d, up, u = geom.axes()
    w, h = geom.detector_dims
    du, dv = geom.pixel_spacing_for(vol)
    iso = np.asarray(vol.center if geom.isocenter is None else geom.isocenter, dtype=float)
    a = (np.arange(w) - (w - 1) / 2) * du
    b = (np.arange(h) - (h - 1) / 2) * dv
    A, B = np.meshgrid(a, b, indexing="ij")
    offsets = A.reshape(-1, 1) * u + B.reshape(-1, 1) * up
    if geom.mode == "parallel":
        lo, hi = vol.box
        back = float(np.linalg.norm(hi - lo)) + float(np.linalg.norm(iso - np.asarray(vol.center))) + 1.0
        origins = iso - back * d + offsets
        dirs = np.broadcast_to(d, origins.shape)
    else:
        source = iso - geom.source_to_isocenter_mm * d
        targets = source + geom.source_to_detector_mm * d + offsets
        dirs = targets - source
        dirs = dirs / np.linalg.norm(dirs, axis=1, keepdims=True)
        origins = np.broadcast_to(source, dirs.shape)
    return origins, dirs


def render_drr(vol: Volume3D, geom: ProjectionGeometry = ProjectionGeometry(),
               atten: AttenuationModel = AttenuationModel()) -> Image2D:
    """Render one radiograph; pixel ``[i, j]`` is ``1 - exp(-integral)``."""
    origins, dirs = detector_rays(vol, geom)
    mu = atten(vol.values)
    integrals = _integrate(mu, vol, origins, dirs, geom.step_for(vol))
    w, h = geom.detector_dims
    img = -np.expm1(-integrals).reshape(w, h)
    spacing = geom.pixel_spacing_for(vol)
    origin = tuple(-(n - 1) * s / 2 for n, s in zip((w, h), spacing))
    return Image2D(np.clip(img, 0.0, 1.0), spacing, origin)


def make_biplanar(vol: Volume3D, detector_dims=(128, 128), mode: str = "parallel",
                  atten: AttenuationModel = AttenuationModel(), **geometry) -> tuple[Image2D, Image2D]:
    """PA and lateral radiographs with identical detector settings."""
    mode = {"cone": "cone_beam"}.get(mode, mode)
    base = ProjectionGeometry(mode=mode, view="PA", detector_dims=tuple(detector_dims), **geometry)
    pa = render_drr(vol, base, atten)
    lat = render_drr(vol, replace(base, view="lateral"), atten)
    return pa, lat
