"""Synthetic sparse scenes ("ship-like" blobs plus point scatterers) and a
compact radar geometry sized for 32-64 pixel rasters."""

from __future__ import annotations

import numpy as np

from .sar import SPEED_OF_LIGHT, SarParams

# scatterer / blob counts per sparsity tier
TIERS = {
    "sparse": (4, 1),
    "medium": (10, 3),
    "dense": (24, 6),
}


def toy_params(aperture_pulses: float = 24.0) -> SarParams:
    """Short-pulse, short-range variant of the X-band system.

    The closest range is chosen so the synthetic aperture spans about
    ``aperture_pulses`` pulses at the nominal PRF, and the 80 ns pulse
    covers 16 range samples.
    """
    f0, prf, v, la = 9.6e9, 200.0, 200.0, 2.0
    wavelength = SPEED_OF_LIGHT / f0
    r0 = aperture_pulses / prf * la * v / wavelength
    return SarParams(
        carrier_frequency=f0,
        range_bandwidth=150e6,
        range_sampling_rate=200e6,
        pulse_duration=80e-9,
        range_chirp_rate=150e6 / 80e-9,
        doppler_rate=2.0 * v**2 / (wavelength * r0),
        prf=prf,
        platform_velocity=v,
        platform_height=r0,
        antenna_length_azimuth=la,
    )


def sparse_scene(shape: tuple[int, int], rng: np.random.Generator, tier: str = "sparse") -> np.ndarray:
    """Complex scene with isolated point scatterers and a few elongated blobs.

    Magnitudes are in ``[0.3, 1]`` and phases uniform, so the peak is at
    most 1.
    """
    if tier not in TIERS:
        raise ValueError(f"unknown sparsity tier {tier!r}; choose from {sorted(TIERS)}")
    n_points, n_blobs = TIERS[tier]
    na, nr = shape
    amp = np.zeros(shape)
    for _ in range(n_blobs):
        length = int(rng.integers(2, 5))
        k, j = int(rng.integers(0, na)), int(rng.integers(0, nr))
        horizontal = rng.random() < 0.5
        for t in range(length):
            kk, jj = (k, (j + t) % nr) if horizontal else ((k + t) % na, j)
            amp[kk, jj] = rng.uniform(0.3, 0.8)
    cells = rng.choice(na * nr, size=n_points, replace=False)
    amp.ravel()[cells] = rng.uniform(0.5, 1.0, n_points)
    phase = np.exp(2j * np.pi * rng.random(shape))
    return amp * phase


def scene_set(count: int, shape: tuple[int, int], seed: int, tier: str = "sparse") -> list[np.ndarray]:
    rng = np.random.default_rng(seed)
    return [sparse_scene(shape, rng, tier) for _ in range(count)]
