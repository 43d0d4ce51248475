"""
Generator/discriminator objectives and their non-adversarial gradients.

All expectations are arithmetic means over elements, so the loss weights do
not depend on volume size. Orthogonal projections are means along one axis.
Volumes are ``(x, y, z)`` arrays; axial, coronal and sagittal projections
collapse z, y and x respectively.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np

from .volume import Image2D, Volume3D

PLANE_AXIS = {"axial": 2, "coronal": 1, "sagittal": 0}
PLANES = tuple(PLANE_AXIS)


@dataclass(frozen=True)
class LossWeights:
    """Weights of the adversarial, reconstruction and projection terms."""

    lambda1: float = 0.1
    lambda2: float = 10.0
    lambda3: float = 10.0

    def __post_init__(self):
        if min(self.lambda1, self.lambda2, self.lambda3) < 0:
            raise ValueError(f"loss weights must be non-negative, got {self}")


def _arr(v) -> np.ndarray:
    return np.asarray(v.values if isinstance(v, (Volume3D, Image2D)) else v, dtype=np.float64)


def _pair(pred, target, name):
    p, t = _arr(pred), _arr(target)
    if p.shape != t.shape:
        raise ValueError(f"{name}: shape mismatch {p.shape} vs {t.shape}")
    if p.size == 0:
        raise ValueError(f"{name}: empty input")
    return p, t


def lsgan_d_loss(d_real, d_fake) -> float:
    r, f = _pair(d_real, d_fake, "lsgan_d_loss")
    return 0.5 * (float(np.mean((r - 1.0) ** 2)) + float(np.mean(f ** 2)))


def lsgan_g_loss(d_fake) -> float:
    f = _arr(d_fake)
    if f.size == 0:
        raise ValueError("lsgan_g_loss: empty input")
    return 0.5 * float(np.mean((f - 1.0) ** 2))


def recon_loss(pred, target) -> float:
    """Voxel-wise mean squared error."""
    p, t = _pair(pred, target, "recon_loss")
    return float(np.mean((p - t) ** 2))


def project_plane(vol, plane: str):
    """Mean along the plane's normal axis.

    Returns an :class:`Image2D` for a :class:`Volume3D` input, else an array.
    """
    if plane not in PLANE_AXIS:
        raise ValueError(f"plane must be one of {PLANES}, got {plane!r}")
    axis = PLANE_AXIS[plane]
    a = _arr(vol)
    if a.ndim != 3 or a.size == 0:
        raise ValueError(f"project_plane needs a non-empty 3D volume, got shape {a.shape}")
    img = a.mean(axis=axis)
    if isinstance(vol, Volume3D):
        keep = [i for i in range(3) if i != axis]
        return Image2D(img, tuple(vol.spacing[i] for i in keep), tuple(vol.origin[i] for i in keep))
    return img


def projections(vol) -> dict[str, np.ndarray]:
    """Axial, coronal and sagittal mean projections as arrays."""
    a = _arr(vol)
    if a.ndim != 3 or a.size == 0:
        raise ValueError(f"projections need a non-empty 3D volume, got shape {a.shape}")
    return {name: a.mean(axis=axis) for name, axis in PLANE_AXIS.items()}


def _check_targets(p, targets, name):
    if p.ndim != 3:
        raise ValueError(f"{name} needs a 3D volume, got shape {p.shape}")
    out = {}
    for plane, axis in PLANE_AXIS.items():
        if plane not in targets:
            raise ValueError(f"{name}: missing {plane} target projection")
        t = _arr(targets[plane])
        expected = tuple(n for i, n in enumerate(p.shape) if i != axis)
        if t.shape != expected:
            raise ValueError(f"{name}: {plane} target has dims {t.shape}, volume needs {expected}")
        out[plane] = t
    return out


def projection_loss_to(pred, targets: dict) -> float:
    """Projection loss of ``pred`` against precomputed plane projections."""
    p = _arr(pred)
    targets = _check_targets(p, targets, "projection_loss")
    return sum(float(np.mean(np.abs(p.mean(axis=PLANE_AXIS[k]) - targets[k]))) for k in PLANES) / 3.0


def projection_loss(pred, target) -> float:
    """Average over the three planes of the mean absolute projection difference."""
    p, t = _pair(pred, target, "projection_loss")
    if p.ndim != 3:
        raise ValueError(f"projection_loss needs 3D volumes, got shape {p.shape}")
    return projection_loss_to(p, projections(t))


def total_generator_objective(g_adv: float, rl: float, pl: float, w: LossWeights = LossWeights()) -> float:
    return w.lambda1 * g_adv + w.lambda2 * rl + w.lambda3 * pl


def total_discriminator_objective(d_loss: float, w: LossWeights = LossWeights()) -> float:
    return w.lambda1 * d_loss


def grad_recon(pred, target) -> np.ndarray:
    """Gradient of :func:`recon_loss` with respect to ``pred``."""
    p, t = _pair(pred, target, "grad_recon")
    return 2.0 * (p - t) / p.size


def grad_projection_to(pred, targets: dict) -> np.ndarray:
    """Subgradient of :func:`projection_loss_to`; ``sign(0) = 0``.

    Every voxel collects ``sign(residual) / (3 * axis_len * plane_pixels)`` from
    the projection pixel it falls on in each plane.
    """
    p = _arr(pred)
    targets = _check_targets(p, targets, "grad_projection")
    g = np.zeros_like(p)
    for plane in PLANES:
        axis = PLANE_AXIS[plane]
        residual = p.mean(axis=axis) - targets[plane]
        g += np.expand_dims(np.sign(residual), axis) / (3.0 * p.shape[axis] * residual.size)
    return g


def grad_projection(pred, target) -> np.ndarray:
    """Gradient of :func:`projection_loss` with respect to ``pred``."""
    p, t = _pair(pred, target, "grad_projection")
    if p.ndim != 3:
        raise ValueError(f"grad_projection needs 3D volumes, got shape {p.shape}")
    return grad_projection_to(p, projections(t))


def plane_residuals(pred, target) -> dict[str, np.ndarray]:
    p, t = _pair(pred, target, "plane_residuals")
    return {name: p.mean(axis=a) - t.mean(axis=a) for name, a in PLANE_AXIS.items()}


def kink_mask(pred, target, tol: float = 1e-6) -> np.ndarray:
    """True for voxels whose projection residual is within ``tol`` of 0 in any plane."""
    p = _arr(pred)
    mask = np.zeros(p.shape, dtype=bool)
    for name, r in plane_residuals(pred, target).items():
        axis = PLANE_AXIS[name]
        mask |= np.broadcast_to(np.expand_dims(np.abs(r) <= tol, axis), p.shape)
    return mask


def finite_diff_check(f: Callable[[np.ndarray], float], point, analytic_grad, h: float = 1e-5,
                      mask=None, floor: float = 1e-8) -> float:
    """Largest relative error of ``analytic_grad`` against central differences.

    Errors are ``|fd - an| / max(|fd|, floor)``, relative to the
    finite-difference estimate. Coordinates where ``mask`` is True are skipped.
    """
    if h <= 0:
        raise ValueError(f"h must be positive, got {h}")
    x = np.array(point, dtype=np.float64)
    an = np.asarray(analytic_grad, dtype=np.float64)
    if an.shape != x.shape:
        raise ValueError(f"analytic_grad shape {an.shape} != point shape {x.shape}")
    skip = np.zeros(x.shape, dtype=bool) if mask is None else np.asarray(mask, dtype=bool)
    flat = x.reshape(-1)
    worst = 0.0
    for i in np.flatnonzero(~skip.reshape(-1)):
        old = flat[i]
        flat[i] = old + h
        fp = f(x)
        flat[i] = old - h
        fm = f(x)
        flat[i] = old
        if not (np.isfinite(fp) and np.isfinite(fm)):
            raise ValueError(f"f is not finite near coordinate {np.unravel_index(i, x.shape)}")
        fd = (fp - fm) / (2 * h)
        a = an.reshape(-1)[i]
        err = abs(fd - a) / max(abs(fd), floor)
        worst = max(worst, err)
    return worst
