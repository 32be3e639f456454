"""Image quality metrics (SSIM, PSNR) and a point-target sidelobe measure."""

from __future__ import annotations

import math

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

PSNR_CAP_DB = 999.0


def _check_pair(test, reference) -> tuple[np.ndarray, np.ndarray]:
    a = np.asarray(test, dtype=float)
    b = np.asarray(reference, dtype=float)
    if a.shape != b.shape:
        raise ValueError(f"shape mismatch: {a.shape} vs {b.shape}")
    return a, b


def ssim(test, reference, window: int = 8, k1: float = 0.01, k2: float = 0.03, dynamic_range: float = 255.0) -> float:
    """Mean SSIM over all ``window x window`` uniform windows (valid positions only)."""
    a, b = _check_pair(test, reference)
    if dynamic_range <= 0:
        raise ValueError("dynamic_range must be positive")
    if a.ndim != 2 or min(a.shape) < window:
        raise ValueError(f"images of shape {a.shape} are smaller than the {window}x{window} window")
    c1 = (k1 * dynamic_range) ** 2
    c2 = (k2 * dynamic_range) ** 2

    def local_mean(x):
        return sliding_window_view(x, (window, window)).mean(axis=(-2, -1))

    mu_a, mu_b = local_mean(a), local_mean(b)
    var_a = local_mean(a * a) - mu_a * mu_a
    var_b = local_mean(b * b) - mu_b * mu_b
    cov = local_mean(a * b) - mu_a * mu_b
    num = (2 * mu_a * mu_b + c1) * (2 * cov + c2)
    den = (mu_a * mu_a + mu_b * mu_b + c1) * (var_a + var_b + c2)
    return float(np.mean(num / den))


def psnr(test, reference, peak: float = 255.0) -> float:
    """``10 log10(peak^2 / MSE)``; ``inf`` when the images are identical."""
    a, b = _check_pair(test, reference)
    mse = float(np.mean((a - b) ** 2))
    if mse == 0.0:
        return math.inf
    return 10.0 * math.log10(peak**2 / mse)


def capped_db(value: float) -> float:
    """PSNR value as written to reports (``inf`` becomes 999)."""
    return PSNR_CAP_DB if math.isinf(value) else value


def to_display(image, reference) -> np.ndarray:
    """Magnitude scaled to 0..255 by the reference magnitude's peak."""
    peak = float(np.max(np.abs(reference)))
    if peak == 0:
        return np.zeros(np.shape(image))
    return 255.0 * np.abs(image) / peak


def complex_psnr(image, reference) -> float:
    """PSNR of complex images evaluated on display-scaled magnitudes."""
    return psnr(to_display(image, reference), to_display(reference, reference))


def complex_ssim(image, reference) -> float:
    return ssim(to_display(image, reference), to_display(reference, reference))


def upsample(cut, factor: int = 16) -> np.ndarray:
    """Band-limited interpolation of a 1-D cut by zero-padding its spectrum at Nyquist."""
    c = np.asarray(cut, dtype=complex)
    n = c.size
    spec = np.fft.fft(c)
    half = (n + 1) // 2
    padded = np.zeros(n * factor, dtype=complex)
    padded[:half] = spec[:half]
    padded[n * factor - (n - half):] = spec[half:]
    return np.fft.ifft(padded) * factor


def pslr(cut, factor: int = 16) -> float:
    """Peak sidelobe ratio (dB) of a 1-D impulse-response cut.

    The mainlobe extends from the peak down to the first local minimum on
    each side of the (circular, upsampled) cut.
    """
    mag = np.abs(upsample(cut, factor))
    n = mag.size
    i = int(np.argmax(mag))
    right = i
    while mag[(right + 1) % n] < mag[right % n] and right - i < n // 2:
        right += 1
    left = i
    while mag[(left - 1) % n] < mag[left % n] and i - left < n // 2:
        left -= 1
    mask = np.ones(n, dtype=bool)
    mask[np.arange(left, right + 1) % n] = False
    if not mask.any():
        return -math.inf
    return 20.0 * math.log10(mag[mask].max() / mag[i])
