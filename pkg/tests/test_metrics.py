import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from fgsr.metrics import (
    DegenerateMetricError,
    InfinitePSNRError,
    SsimParams,
    compute_metric,
    mse,
    psnr,
    ssim,
    uqi,
)

from . import oracles

GLOBAL = SsimParams(mode="global")


def _pair(seed, h=16, w=16):
    rng = np.random.default_rng(seed)
    x = rng.uniform(0, 255, size=(h, w, 3))
    y = np.clip(x + rng.normal(0, 25, size=x.shape), 0, 255)
    return x, y


def test_mse_basics():
    x = np.full((4, 4, 3), 10.0)
    assert mse(x, x) == 0.0
    assert mse(x, x + 2) == 4.0


def test_mse_matches_loop_oracle():
    x, y = _pair(0, 8, 8)
    assert math.isclose(mse(x, y), oracles.mse(x, y), rel_tol=1e-9)


def test_mse_shape_mismatch():
    with pytest.raises(ValueError):
        mse(np.zeros((4, 4, 3)), np.zeros((4, 5, 3)))


def test_psnr_closed_forms():
    a, b = np.full((5, 5, 3), 100.0), np.full((5, 5, 3), 104.0)
    # closed forms: 10*log10(104^2/16) and 10*log10(255^2/16)
    assert round(psnr(a, b, "paper"), 4) == 28.2995
    assert round(psnr(a, b, "standard"), 4) == 36.0896
    assert psnr(a, b, "paper") == pytest.approx(10 * math.log10(104 ** 2 / 16), abs=1e-12)


def test_psnr_identical_is_an_error():
    x = np.zeros((3, 3, 3))
    with pytest.raises(InfinitePSNRError):
        psnr(x, x)


def test_psnr_unknown_variant():
    with pytest.raises(ValueError):
        psnr(np.zeros((2, 2, 3)), np.ones((2, 2, 3)), "bogus")


@pytest.mark.parametrize("params", [SsimParams(), GLOBAL])
def test_ssim_identity(params):
    x, _ = _pair(1)
    assert ssim(x, x, params) == pytest.approx(1.0, abs=1e-12)


def test_ssim_windowed_matches_sliding_oracle_16x16():
    x, y = _pair(2)
    assert ssim(x, y) == pytest.approx(oracles.ssim(x, y), rel=1e-6)


def test_ssim_global_matches_oracle():
    x, y = _pair(3)
    assert ssim(x, y, GLOBAL) == pytest.approx(oracles.ssim(x, y, "global"), rel=1e-9)


def test_ssim_window_too_large():
    with pytest.raises(ValueError, match="smaller than"):
        ssim(np.zeros((10, 30, 3)), np.zeros((10, 30, 3)))


def test_ssim_params_validation():
    for kw in [dict(c1=0), dict(c2=-1), dict(window_size=4), dict(window_size=1),
               dict(window_sigma=0), dict(mode="nope")]:
        with pytest.raises(ValueError):
            SsimParams(**kw)
    assert SsimParams().c1 == pytest.approx(6.5025)
    assert SsimParams().c2 == pytest.approx(58.5225)


def test_uqi_identity_and_degenerate():
    x, _ = _pair(4)
    assert uqi(x, x) == pytest.approx(1.0, abs=1e-12)
    assert uqi(x, x, "global") == pytest.approx(1.0, abs=1e-12)
    c = np.full((16, 16, 3), 37.3)
    for mode in ("global", "windowed"):
        with pytest.raises(DegenerateMetricError):
            uqi(c, c + 5, mode)


def test_uqi_global_matches_oracle():
    x, y = _pair(5)
    assert uqi(x, y, "global") == pytest.approx(oracles.uqi(x, y, "global"), rel=1e-9)


def test_uqi_windowed_matches_oracle_and_skips_flat_windows():
    x, y = _pair(6)
    x[:9, :9] = 80.0
    y[:9, :9] = 80.0
    assert uqi(x, y) == pytest.approx(oracles.uqi(x, y, "windowed"), rel=1e-6)


def test_compute_metric_dispatch():
    x, y = _pair(7)
    assert compute_metric("PSNR", x, y, psnr_variant="standard").variant == "standard"
    assert compute_metric("ssim", x, y).value == ssim(x, y)
    with pytest.raises(ValueError):
        compute_metric("lpips", x, y)


pairs = st.integers(0, 2**32 - 1).map(lambda s: _pair(s, 12, 12))


@settings(max_examples=25, deadline=None)
@given(pairs)
def test_symmetry(p):
    x, y = p
    assert mse(x, y) == mse(y, x)
    for variant in ("paper", "standard"):
        assert psnr(x, y, variant) == pytest.approx(psnr(y, x, variant), rel=1e-14)
    assert ssim(x, y, SsimParams(window_size=5)) == pytest.approx(ssim(y, x, SsimParams(window_size=5)), abs=1e-14)
    assert ssim(x, y, GLOBAL) == pytest.approx(ssim(y, x, GLOBAL), abs=1e-14)
    assert uqi(x, y) == pytest.approx(uqi(y, x), abs=1e-14)
    assert uqi(x, y, "global") == pytest.approx(uqi(y, x, "global"), abs=1e-14)


@settings(max_examples=25, deadline=None)
@given(arrays(np.float64, (11, 11, 3), elements=st.floats(0, 255)))
def test_self_similarity_is_one(x):
    if np.ptp(x, axis=(0, 1)).min() < 1e-3:
        return  # need every channel non-constant
    assert ssim(x, x) == pytest.approx(1.0, abs=1e-12)
    assert ssim(x, x, GLOBAL) == pytest.approx(1.0, abs=1e-12)
    assert uqi(x, x, "global") == pytest.approx(1.0, abs=1e-12)


@pytest.mark.parametrize("seed", range(10))
def test_noise_monotonicity(seed):
    rng = np.random.default_rng(seed)
    x = rng.uniform(60, 190, size=(16, 16, 3))
    noise = rng.normal(size=x.shape)
    errs = [mse(x, x + t * noise) for t in (1, 2, 4, 8, 16)]
    psnrs = [psnr(x, x + t * noise) for t in (1, 2, 4, 8, 16)]
    assert all(a < b for a, b in zip(errs, errs[1:]))
    assert all(a > b for a, b in zip(psnrs, psnrs[1:]))
