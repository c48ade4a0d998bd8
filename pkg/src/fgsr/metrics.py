"""Full-reference image quality metrics: MSE, PSNR, SSIM and UQI.

All metrics take two (H, W, 3) images on the 0-255 scale. Variances and
covariances use the population convention (divide by N, or by the window
weight total, which is 1).
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Literal

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from .imaging import as_image, check_same_shape

DEGENERATE_EPS = 1e-12


class InfinitePSNRError(ArithmeticError):
    """The images are identical, so PSNR is unbounded."""


class DegenerateMetricError(ArithmeticError):
    """The UQI denominator vanished everywhere (constant inputs)."""


@dataclass(frozen=True)
class SsimParams:
    c1: float = (0.01 * 255) ** 2
    c2: float = (0.03 * 255) ** 2
    window_size: int = 11
    window_sigma: float = 1.5
    mode: Literal["global", "windowed"] = "windowed"

    def __post_init__(self):
        if self.c1 <= 0 or self.c2 <= 0:
            raise ValueError("SSIM constants must be positive")
        if self.window_size < 3 or self.window_size % 2 == 0:
            raise ValueError(f"window_size must be odd and >= 3, got {self.window_size}")
        if self.window_sigma <= 0:
            raise ValueError("window_sigma must be positive")
        if self.mode not in ("global", "windowed"):
            raise ValueError(f"unknown SSIM mode {self.mode!r}")


@dataclass(frozen=True)
class MetricValue:
    name: str
    value: float
    variant: str = "standard"


def _pair(x, y):
    x = as_image(x)
    y = as_image(y)
    check_same_shape(x, y)
    return x, y


def mse(x, y) -> float:
    x, y = _pair(x, y)
    d = x - y
    return float(np.mean(d * d))


def psnr(x, y, variant: str = "paper") -> float:
    """PSNR in dB.

    ``variant="paper"`` uses the larger of the two image maxima as the peak;
    ``variant="standard"`` uses the fixed 8-bit peak of 255.
    """
    x, y = _pair(x, y)
    err = mse(x, y)
    if err == 0.0:
        raise InfinitePSNRError("images are identical: PSNR is infinite")
    if variant == "paper":
        peak = max(float(x.max()), float(y.max()))
    elif variant == "standard":
        peak = 255.0
    else:
        raise ValueError(f"unknown PSNR variant {variant!r}")
    return float(10.0 * np.log10(peak * peak / err))


def gaussian_window(size: int = 11, sigma: float = 1.5) -> np.ndarray:
    """Normalised 1-D Gaussian taps; the 2-D window is their outer product."""
    r = np.arange(size, dtype=np.float64) - (size - 1) / 2
    g = np.exp(-(r * r) / (2.0 * sigma * sigma))
    return g / g.sum()


def _filter_valid(plane: np.ndarray, taps_r: np.ndarray, taps_c: np.ndarray) -> np.ndarray:
    """Separable correlation over every fully-contained window position."""
    rows = sliding_window_view(plane, taps_r.size, axis=0) @ taps_r
    return sliding_window_view(rows, taps_c.size, axis=1) @ taps_c


def _local_stats(a, b, taps):
    # shifting by one sample is exact and removes cancellation on flat regions
    sa, sb = a.flat[0], b.flat[0]
    a, b = a - sa, b - sb
    m_a = _filter_valid(a, taps, taps)
    m_b = _filter_valid(b, taps, taps)
    var_a = _filter_valid(a * a, taps, taps) - m_a * m_a
    var_b = _filter_valid(b * b, taps, taps) - m_b * m_b
    cov = _filter_valid(a * b, taps, taps) - m_a * m_b
    return m_a + sa, m_b + sb, var_a, var_b, cov


def _global_stats(a, b):
    sa, sb = a.flat[0], b.flat[0]
    a, b = a - sa, b - sb
    m_a, m_b = a.mean(), b.mean()
    var_a = np.mean(a * a) - m_a * m_a
    var_b = np.mean(b * b) - m_b * m_b
    cov = np.mean(a * b) - m_a * m_b
    return m_a + sa, m_b + sb, var_a, var_b, cov


def _ssim_map(stats, c1, c2):
    mu_a, mu_b, var_a, var_b, cov = stats
    num = (2.0 * mu_a * mu_b + c1) * (2.0 * cov + c2)
    den = (mu_a * mu_a + mu_b * mu_b + c1) * (var_a + var_b + c2)
    return num / den


def ssim(x, y, params: SsimParams | None = None) -> float:
    """Structural similarity, computed per channel and averaged."""
    params = params or SsimParams()
    x, y = _pair(x, y)
    if params.mode == "windowed":
        k = params.window_size
        if x.shape[0] < k or x.shape[1] < k:
            raise ValueError(f"image {x.shape[:2]} is smaller than the {k}x{k} SSIM window")
        taps = gaussian_window(k, params.window_sigma)
    scores = []
    for c in range(3):
        a, b = x[..., c], y[..., c]
        if params.mode == "global":
            stats = _global_stats(a, b)
        else:
            stats = _local_stats(a, b, taps)
        scores.append(float(np.mean(_ssim_map(stats, params.c1, params.c2))))
    return float(np.mean(scores))


def _uqi_map(stats):
    mu_a, mu_b, var_a, var_b, cov = stats
    num = 4.0 * cov * (mu_a * mu_b)
    den = (var_a + var_b) * (mu_a * mu_a + mu_b * mu_b)
    return num, den


def uqi(x, y, mode: str = "windowed", window: int = 8) -> float:
    """Universal image quality index (SSIM without stabilisers).

    Windowed mode slides a ``window``-square box (stride 1) and averages the
    local indices, skipping windows whose denominator is below 1e-12. A
    channel with no usable window is left out of the channel average; if
    nothing at all is usable :class:`DegenerateMetricError` is raised.
    """
    x, y = _pair(x, y)
    if mode not in ("global", "windowed"):
        raise ValueError(f"unknown UQI mode {mode!r}")
    if mode == "windowed":
        if window < 1:
            raise ValueError("window must be positive")
        if x.shape[0] < window or x.shape[1] < window:
            raise ValueError(f"image {x.shape[:2]} is smaller than the {window}x{window} UQI window")
        taps = np.full(window, 1.0 / window)

    scores = []
    for c in range(3):
        a, b = x[..., c], y[..., c]
        stats = _global_stats(a, b) if mode == "global" else _local_stats(a, b, taps)
        num, den = _uqi_map(stats)
        num, den = np.atleast_1d(num), np.atleast_1d(den)
        ok = den >= DEGENERATE_EPS
        if ok.any():
            scores.append(float(np.mean(num[ok] / den[ok])))
    if not scores:
        raise DegenerateMetricError("UQI is undefined: every window has zero variance or zero mean")
    return float(np.mean(scores))


METRIC_NAMES = ("mse", "psnr", "ssim", "uqi")


def compute_metric(name: str, x, y, *, psnr_variant: str = "paper",
                   ssim_params: SsimParams | None = None,
                   uqi_mode: str = "windowed", uqi_window: int = 8) -> MetricValue:
    """Dispatch by metric name; the single entry point used by evaluation and the CLI."""
    name = name.lower()
    if name == "mse":
        return MetricValue("MSE", mse(x, y))
    if name == "psnr":
        return MetricValue("PSNR", psnr(x, y, psnr_variant),
                           "paper" if psnr_variant == "paper" else "standard")
    if name == "ssim":
        return MetricValue("SSIM", ssim(x, y, ssim_params))
    if name == "uqi":
        return MetricValue("UQI", uqi(x, y, uqi_mode, uqi_window))
    raise ValueError(f"unknown metric {name!r}; expected one of {METRIC_NAMES}")
