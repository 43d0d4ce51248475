"""
Volume reconstruction by projected gradient descent on the projection and
reconstruction losses.

Three mean projections leave the volume underdetermined, so only the
projection residual is expected to vanish, not the voxel-wise error.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .losses import LossWeights, grad_projection_to, grad_recon, projection_loss_to, projections, recon_loss
from .phantoms import phantom
from .volume import Volume3D


@dataclass
class OptimizeSpec:
    """Descent settings.

    ``targets`` maps plane name to a target projection; ``ground_truth``
    enables the reconstruction term. ``step_size=None`` applies
    :func:`default_step`. ``init`` is ``"zeros"``, ``"noise"`` or a constant.
    """

    iterations: int = 2000
    step_size: float | None = None
    weights: LossWeights = field(default_factory=LossWeights)
    init: str | float = "zeros"
    seed: int = 0
    targets: dict | None = None
    ground_truth: np.ndarray | Volume3D | None = None

    def __post_init__(self):
        if self.iterations < 1:
            raise ValueError(f"iterations must be >= 1, got {self.iterations}")
        if self.step_size is not None and self.step_size <= 0:
            raise ValueError(f"step_size must be positive, got {self.step_size}")


def default_step(dims, weights: LossWeights, use_projection: bool, use_recon: bool) -> float:
    """Step that moves any voxel by at most a quarter of one over the longest axis.

    Per voxel, the projection subgradient is bounded by ``lambda3 / N`` and the
    reconstruction gradient by ``2 lambda2 / N`` inside the unit box.
    """
    n = int(np.prod(dims))
    bound = (weights.lambda3 if use_projection else 0.0) + (2 * weights.lambda2 if use_recon else 0.0)
    if bound == 0:
        return 1.0
    return n / (4 * max(dims) * bound)


def _objective(v, spec, targets, gt):
    w = spec.weights
    total = 0.0
    if targets is not None:
        total += w.lambda3 * projection_loss_to(v, targets)
    if gt is not None:
        total += w.lambda2 * recon_loss(v, gt)
    return total


def _gradient(v, spec, targets, gt):
    w = spec.weights
    g = np.zeros_like(v)
    if targets is not None:
        g += w.lambda3 * grad_projection_to(v, targets)
    if gt is not None:
        g += w.lambda2 * grad_recon(v, gt)
    return g


def initial_volume(spec: OptimizeSpec, dims) -> np.ndarray:
    if spec.init == "zeros":
        return np.zeros(dims)
    if spec.init == "noise":
        return np.random.Generator(np.random.PCG64(spec.seed)).uniform(0.0, 1.0, size=dims)
    return np.full(dims, float(np.clip(float(spec.init), 0.0, 1.0)))


def reconstruct(spec: OptimizeSpec, dims, spacing: float = 1.0) -> tuple[Volume3D, list[float]]:
    """Run ``v <- clip(v - step * grad, 0, 1)``; ``trace[i]`` is the objective before update ``i``."""
    dims = tuple(int(d) for d in dims)
    gt = None
    if spec.ground_truth is not None:
        gt = np.asarray(getattr(spec.ground_truth, "values", spec.ground_truth), dtype=np.float64)
        if gt.shape != dims:
            raise ValueError(f"ground truth dims {gt.shape} != {dims}")
    targets = spec.targets
    if targets is not None:
        # validates dims against the volume
        projection_loss_to(np.zeros(dims), targets)
    if targets is None and gt is None:
        raise ValueError("reconstruct needs target projections or a ground-truth volume")
    step = spec.step_size
    if step is None:
        step = default_step(dims, spec.weights, targets is not None, gt is not None)
    v = initial_volume(spec, dims)
    trace = []
    for _ in range(spec.iterations):
        trace.append(_objective(v, spec, targets, gt))
        v = np.clip(v - step * _gradient(v, spec, targets, gt), 0.0, 1.0)
    return Volume3D.centered(v, spacing), trace


def phantom_targets(kind: str, dims, **params) -> tuple[Volume3D, dict]:
    vol = phantom(kind, dims, **params)
    return vol, projections(vol)


def save_trace(trace, path) -> Path:
    path = Path(path)
    path.write_text("".join(f"{i} {v!r}\n" for i, v in enumerate(trace)))
    return path


def load_trace(path) -> list[float]:
    return [float(line.split()[1]) for line in Path(path).read_text().splitlines() if line.strip()]
