"""
PSNR and 3D SSIM at the 12-bit CT range, plus mean(±std) aggregation.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .volume import CT_MAX, Volume3D, normalize


def _pair(pred, target, name):
    p = np.asarray(pred.values if isinstance(pred, Volume3D) else pred, dtype=np.float64)
    t = np.asarray(target.values if isinstance(target, Volume3D) else target, dtype=np.float64)
    if p.shape != t.shape:
        raise ValueError(f"{name}: dims mismatch {p.shape} vs {t.shape}")
    return p, t


def psnr(pred, target, max_value: float = CT_MAX) -> float:
    """``10 log10(max_value^2 / MSE)`` in dB; identical inputs give ``math.inf``."""
    if max_value <= 0:
        raise ValueError(f"max_value must be positive, got {max_value}")
    p, t = _pair(pred, target, "psnr")
    mse = float(np.mean((p - t) ** 2))
    if mse == 0.0:
        return math.inf
    return 10.0 * math.log10(max_value ** 2 / mse)


def _box_mean(a: np.ndarray, w: int) -> np.ndarray:
    # shifted-slice sums: no running cumulative sum, so no drift on big volumes
    for axis in range(a.ndim):
        n = a.shape[axis] - w + 1
        acc = np.zeros(a.shape[:axis] + (n,) + a.shape[axis + 1:])
        for k in range(w):
            acc += np.take(a, np.arange(k, k + n), axis=axis)
        a = acc
    return a / w ** a.ndim


def ssim(pred, target, window: int = 8, k1: float = 0.01, k2: float = 0.03, L: float = CT_MAX) -> float:
    """Mean SSIM over every position of a uniform ``window``-cube (population statistics)."""
    p, t = _pair(pred, target, "ssim")
    if p.ndim != 3:
        raise ValueError(f"ssim needs 3D volumes, got shape {p.shape}")
    if min(p.shape) < window:
        raise ValueError(f"volume dims {p.shape} smaller than the {window}^3 window")
    c1, c2 = (k1 * L) ** 2, (k2 * L) ** 2
    # centre on the global means before squaring to limit cancellation
    mp, mt = p.mean(), t.mean()
    pc, tc = p - mp, t - mt
    mu_p, mu_t = _box_mean(pc, window), _box_mean(tc, window)
    var_p = _box_mean(pc * pc, window) - mu_p ** 2
    var_t = _box_mean(tc * tc, window) - mu_t ** 2
    cov = _box_mean(pc * tc, window) - mu_p * mu_t
    mu_p, mu_t = mu_p + mp, mu_t + mt
    num = (2 * mu_p * mu_t + c1) * (2 * cov + c2)
    den = (mu_p ** 2 + mu_t ** 2 + c1) * (var_p + var_t + c2)
    return float(np.mean(num / den))


@dataclass(frozen=True)
class CaseMetrics:
    case_id: str
    psnr_db: float
    ssim: float

    @property
    def psnr_infinite(self) -> bool:
        return math.isinf(self.psnr_db)

    def line(self) -> str:
        return f"{self.case_id} {'inf' if self.psnr_infinite else f'{self.psnr_db:.4f}'} {self.ssim:.6f}"


@dataclass(frozen=True)
class MetricReport:
    cases: list[CaseMetrics] = field(default_factory=list)
    psnr_mean: float = math.nan
    psnr_std: float = math.nan
    ssim_mean: float = math.nan
    ssim_std: float = math.nan
    psnr_excluded: int = 0

    def summary(self) -> str:
        psnr_txt = "inf" if math.isinf(self.psnr_mean) else format_mean_std(self.psnr_mean, self.psnr_std, 2)
        return (f"PSNR {psnr_txt} SSIM {format_mean_std(self.ssim_mean, self.ssim_std, 3)} "
                f"n={len(self.cases)} psnr_inf_excluded={self.psnr_excluded}")

    def text(self) -> str:
        lines = ["# case psnr_db ssim"] + [c.line() for c in self.cases] + [self.summary()]
        return "\n".join(lines) + "\n"


def format_mean_std(mean: float, std: float, decimals: int) -> str:
    """Table-style ``23.10(±0.21)``."""
    return f"{mean:.{decimals}f}(±{std:.{decimals}f})"


def evaluate_case(pred, target, case_id: str = "case", normalized: bool = False, **ssim_kw) -> CaseMetrics:
    """PSNR/SSIM of one pair; ``normalized`` maps [0, 1] inputs back to CT values first."""
    if normalized:
        pred, target = normalize(pred, "inverse"), normalize(target, "inverse")
    return CaseMetrics(case_id, psnr(pred, target), ssim(pred, target, **ssim_kw))


def aggregate(cases) -> MetricReport:
    """Mean and population std; infinite PSNR values are left out and counted."""
    cases = list(cases)
    if not cases:
        raise ValueError("aggregate needs at least one case")
    finite = np.array([c.psnr_db for c in cases if not c.psnr_infinite])
    ss = np.array([c.ssim for c in cases])
    if finite.size:
        pm, ps = float(finite.mean()), float(finite.std())
    else:
        pm, ps = math.inf, 0.0
    return MetricReport(cases, pm, ps, float(ss.mean()), float(ss.std()), len(cases) - finite.size)
