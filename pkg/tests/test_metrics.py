import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from biplanar.metrics import CaseMetrics, aggregate, evaluate_case, format_mean_std, psnr, ssim
from biplanar.volume import Volume3D


def direct_ssim(p, t, w=8, k1=0.01, k2=0.03, L=4095.0):
    """Window-by-window SSIM from the textbook formula."""
    c1, c2 = (k1 * L) ** 2, (k2 * L) ** 2
    vals = []
    for i in range(p.shape[0] - w + 1):
        for j in range(p.shape[1] - w + 1):
            for k in range(p.shape[2] - w + 1):
                a = p[i:i + w, j:j + w, k:k + w]
                b = t[i:i + w, j:j + w, k:k + w]
                ma, mb = a.mean(), b.mean()
                va, vb = a.var(), b.var()
                cov = ((a - ma) * (b - mb)).mean()
                vals.append((2 * ma * mb + c1) * (2 * cov + c2) / ((ma * ma + mb * mb + c1) * (va + vb + c2)))
    return float(np.mean(vals))


def test_psnr_endpoint_is_zero_db():
    assert psnr(np.zeros((4, 4, 4)), np.full((4, 4, 4), 4095.0)) == 0.0


def test_psnr_identical_is_infinite():
    v = np.random.default_rng(0).uniform(0, 4095, (4, 4, 4))
    assert psnr(v, v) == math.inf


def test_psnr_twenty_db():
    # every voxel off by max/10 gives MSE = max^2 / 100
    t = np.zeros((5, 5, 5))
    assert psnr(t + 409.5, t) == pytest.approx(20.0, abs=1e-12)
    assert psnr(t + 0.1, t, max_value=1.0) == pytest.approx(20.0, abs=1e-12)


def test_psnr_errors():
    with pytest.raises(ValueError):
        psnr(np.zeros((2, 2, 2)), np.zeros((2, 2, 3)))
    with pytest.raises(ValueError):
        psnr(np.zeros(2), np.zeros(2), max_value=0)


@settings(max_examples=30, deadline=None)
@given(seed=st.integers(0, 2**32 - 1), s1=st.floats(1, 50), s2=st.floats(51, 500))
def test_psnr_symmetric_and_decreasing(seed, s1, s2):
    r = np.random.default_rng(seed)
    t = r.uniform(0, 4095, (4, 4, 4))
    noise = r.normal(size=t.shape)
    a, b = t + s1 * noise, t + s2 * noise
    assert psnr(a, t) == psnr(t, a)
    assert psnr(a, t) > psnr(b, t)


def test_ssim_identical():
    v = np.random.default_rng(1).uniform(0, 4095, (10, 10, 10))
    assert ssim(v, v) == pytest.approx(1.0, abs=1e-12)


def test_ssim_constant_offset():
    t = np.zeros((8, 8, 8))
    c1 = (0.01 * 4095) ** 2
    d = 1000.0
    val = ssim(t + d, t)
    assert val < 0.5
    assert val == pytest.approx(c1 / (d * d + c1), rel=1e-12)


def test_ssim_matches_direct_oracle():
    r = np.random.default_rng(2)
    p, t = r.uniform(0, 4095, (8, 8, 8)), r.uniform(0, 4095, (8, 8, 8))
    assert abs(ssim(p, t) - direct_ssim(p, t)) < 1e-9
    p, t = r.uniform(0, 4095, (11, 10, 9)), r.uniform(0, 4095, (11, 10, 9))
    t = 0.6 * p + 0.4 * t
    assert abs(ssim(p, t) - direct_ssim(p, t)) < 1e-9


@settings(max_examples=15, deadline=None)
@given(seed=st.integers(0, 2**32 - 1))
def test_ssim_bounded(seed):
    r = np.random.default_rng(seed)
    p, t = r.uniform(0, 4095, (9, 9, 9)), r.uniform(0, 4095, (9, 9, 9))
    assert -1 <= ssim(p, t) <= 1
    assert -1 <= ssim(p, 4095 - p) <= 1


def test_ssim_depends_on_range_constant():
    r = np.random.default_rng(3)
    p, t = r.uniform(0, 1, (8, 8, 8)), r.uniform(0, 1, (8, 8, 8))
    # rescaling both inputs is matched only by rescaling L too
    assert ssim(p, t, L=1.0) == pytest.approx(ssim(4095 * p, 4095 * t, L=4095.0), abs=1e-12)
    assert abs(ssim(p, t, L=4095.0) - ssim(p, t, L=1.0)) > 1e-3


def test_ssim_errors():
    with pytest.raises(ValueError, match="window"):
        ssim(np.zeros((7, 8, 8)), np.zeros((7, 8, 8)))
    with pytest.raises(ValueError):
        ssim(np.zeros((8, 8)), np.zeros((8, 8)))


def test_aggregate_cases():
    rep = aggregate([CaseMetrics("a", 20.0, 0.5), CaseMetrics("b", 30.0, 0.7)])
    assert rep.psnr_mean == 25.0 and rep.psnr_std == 5.0
    assert format_mean_std(rep.psnr_mean, rep.psnr_std, 0) == "25(±5)"
    assert rep.ssim_mean == pytest.approx(0.6) and rep.ssim_std == pytest.approx(0.1)
    single = aggregate([CaseMetrics("a", 27.29, 0.721)])
    assert single.psnr_mean == 27.29 and single.psnr_std == 0 and single.ssim_std == 0


def test_aggregate_excludes_infinite():
    rep = aggregate([CaseMetrics("a", 20.0, 0.5), CaseMetrics("b", math.inf, 1.0), CaseMetrics("c", 22.0, 0.5)])
    assert rep.psnr_excluded == 1
    assert rep.psnr_mean == 21.0
    assert "psnr_inf_excluded=1" in rep.summary()
    assert "b inf" in rep.text()


def test_aggregate_identical_and_empty():
    rep = aggregate([CaseMetrics(str(i), 23.1, 0.6) for i in range(4)])
    assert rep.psnr_std == 0 and rep.ssim_std == 0
    with pytest.raises(ValueError):
        aggregate([])


def test_table_style_format():
    assert format_mean_std(23.1, 0.21, 2) == "23.10(±0.21)"
    rep = aggregate([CaseMetrics("a", 20.0, 0.5), CaseMetrics("b", 30.0, 0.7)])
    assert rep.summary().startswith("PSNR 25.00(±5.00) SSIM 0.600(±0.100)")


def test_evaluate_case_denormalizes():
    r = np.random.default_rng(4)
    t = r.uniform(0, 1, (8, 8, 8))
    p = np.clip(t + r.normal(0, 0.01, t.shape), 0, 1)
    a = evaluate_case(Volume3D(p), Volume3D(t), "x", normalized=True)
    b = evaluate_case(p * 4095, t * 4095, "x")
    assert a.psnr_db == pytest.approx(b.psnr_db, abs=1e-9)
    assert a.ssim == pytest.approx(b.ssim, abs=1e-9)
