"""Stripmap SAR geometry, raw-echo simulation and a dense measurement-matrix
oracle for tiny scenes.

Conventions
-----------
* Echo rasters are ``(pulses, range_samples)``; scene rasters are
  ``(azimuth_cells, range_cells)``.
* Scene cell ``(k, j)`` sits at azimuth position ``azimuth_origin + k * dx``
  and closest slant range ``range_origin + j * dr``.
* Broadside geometry: a target at azimuth ``x`` is illuminated while
  ``|eta - x / v| <= T_a / 2`` with ``T_a = wavelength * r0 / (L_az * v)``.
* Both envelopes are rectangular.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

SPEED_OF_LIGHT = 299792458.0

# dense oracle size cap, in matrix entries
MAX_MATRIX_ENTRIES = 2**22


@dataclass(frozen=True)
class SarParams:
    """Radar and platform constants.

    ``wavelength`` defaults to ``c / carrier_frequency``; an explicit value
    must agree with it to 1e-6 relative.
    """

    carrier_frequency: float
    range_bandwidth: float
    range_sampling_rate: float
    pulse_duration: float
    range_chirp_rate: float
    doppler_rate: float
    prf: float
    platform_velocity: float
    platform_height: float
    antenna_length_azimuth: float
    wavelength: float = None  # type: ignore[assignment]
    speed_of_light: float = SPEED_OF_LIGHT

    def __post_init__(self):
        if self.wavelength is None:
            object.__setattr__(self, "wavelength", self.speed_of_light / self.carrier_frequency)
        for name in (
            "carrier_frequency",
            "range_bandwidth",
            "range_sampling_rate",
            "pulse_duration",
            "range_chirp_rate",
            "doppler_rate",
            "prf",
            "platform_velocity",
            "platform_height",
            "antenna_length_azimuth",
            "wavelength",
            "speed_of_light",
        ):
            value = getattr(self, name)
            if not (math.isfinite(value) and value > 0):
                raise ValueError(f"{name} must be finite and positive, got {value!r}")
        if self.range_sampling_rate < self.range_bandwidth:
            raise ValueError("range_sampling_rate must be >= range_bandwidth")
        rel = abs(self.wavelength * self.carrier_frequency - self.speed_of_light) / self.speed_of_light
        if rel > 1e-6:
            raise ValueError(
                f"wavelength {self.wavelength} inconsistent with carrier frequency "
                f"(lambda * f0 deviates from c by {rel:.2e} relative)"
            )

    @classmethod
    def table2(cls) -> "SarParams":
        """X-band airborne system used throughout the experiments.

        The wavelength is derived from the 9.6 GHz carrier; together with
        the 10 km reference range this reproduces the listed Doppler rate
        of 256.1772 Hz/s.
        """
        return cls(
            carrier_frequency=9.6e9,
            range_bandwidth=150e6,
            range_sampling_rate=200e6,
            pulse_duration=1e-6,
            range_chirp_rate=200e12,
            doppler_rate=256.1772,
            prf=200.0,
            platform_velocity=200.0,
            platform_height=10000.0,
            antenna_length_azimuth=2.0,
        )

    @property
    def range_spacing(self) -> float:
        return self.speed_of_light / (2.0 * self.range_sampling_rate)

    @property
    def azimuth_spacing(self) -> float:
        return self.platform_velocity / self.prf

    @property
    def reference_range(self) -> float:
        """Closest slant range of the scene centre (broadside, equal to the platform height)."""
        return self.platform_height

    def synthetic_aperture_time(self, r0: float) -> float:
        return self.wavelength * r0 / (self.antenna_length_azimuth * self.platform_velocity)

    def doppler_rate_at(self, r0: float) -> float:
        return 2.0 * self.platform_velocity**2 / (self.wavelength * r0)


@dataclass(frozen=True)
class PointTarget:
    x: float
    r0: float
    amplitude: complex = 1.0

    def __post_init__(self):
        if not (math.isfinite(self.r0) and self.r0 > 0):
            raise ValueError("r0 must be positive")


@dataclass
class ReflectivityMap:
    data: np.ndarray
    azimuth_spacing: float
    range_spacing: float
    azimuth_origin: float = 0.0
    range_origin: float = 0.0

    def __post_init__(self):
        self.data = np.asarray(self.data, dtype=complex)
        if self.data.ndim != 2 or min(self.data.shape) < 1:
            raise ValueError(f"reflectivity map must be a non-empty 2-D array, got shape {self.data.shape}")
        if not (self.azimuth_spacing > 0 and self.range_spacing > 0):
            raise ValueError("grid spacings must be positive")

    @property
    def shape(self) -> tuple[int, int]:
        return self.data.shape

    @property
    def azimuth_positions(self) -> np.ndarray:
        return self.azimuth_origin + self.azimuth_spacing * np.arange(self.shape[0])

    @property
    def ranges(self) -> np.ndarray:
        return self.range_origin + self.range_spacing * np.arange(self.shape[1])

    def with_data(self, data: np.ndarray) -> "ReflectivityMap":
        return ReflectivityMap(data, self.azimuth_spacing, self.range_spacing, self.azimuth_origin, self.range_origin)


@dataclass
class EchoMatrix:
    data: np.ndarray
    azimuth_times: np.ndarray
    fast_time_origin: float = 0.0
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        self.data = np.asarray(self.data, dtype=complex)
        self.azimuth_times = np.asarray(self.azimuth_times, dtype=float)
        if self.data.ndim != 2:
            raise ValueError("echo data must be 2-D")
        if self.data.shape[0] != self.azimuth_times.size:
            raise ValueError(
                f"echo has {self.data.shape[0]} rows but {self.azimuth_times.size} azimuth times"
            )
        if np.any(np.diff(self.azimuth_times) <= 0):
            raise ValueError("azimuth_times must be strictly increasing")

    @property
    def shape(self) -> tuple[int, int]:
        return self.data.shape


def azimuth_grid(params: SarParams, count: int, start: float = 0.0) -> np.ndarray:
    """Uniform pulse times at the nominal PRF."""
    return start + np.arange(count) / params.prf


def fast_time_grid(params: SarParams, count: int, center_range: float | None = None) -> np.ndarray:
    """Uniform fast-time samples whose middle bin (``count // 2``) maps to ``center_range``."""
    if center_range is None:
        center_range = params.reference_range
    t0 = 2.0 * center_range / params.speed_of_light - (count // 2) / params.range_sampling_rate
    return t0 + np.arange(count) / params.range_sampling_rate


def scene_grid(params: SarParams, data: np.ndarray, fast_times: np.ndarray, azimuth_origin: float = 0.0) -> ReflectivityMap:
    """Wrap ``data`` in a map aligned 1:1 with the pulse / fast-time raster."""
    return ReflectivityMap(
        data,
        params.azimuth_spacing,
        params.range_spacing,
        azimuth_origin=azimuth_origin,
        range_origin=params.speed_of_light * float(fast_times[0]) / 2.0,
    )


def slant_range(params: SarParams, eta, x, r0):
    """Instantaneous platform-to-target range ``sqrt((x - v eta)^2 + r0^2)``."""
    eta = np.asarray(eta, dtype=float)
    x = np.asarray(x, dtype=float)
    r0 = np.asarray(r0, dtype=float)
    if not (np.all(np.isfinite(eta)) and np.all(np.isfinite(x)) and np.all(np.isfinite(r0))):
        raise ValueError("slant_range inputs must be finite")
    if np.any(r0 <= 0):
        raise ValueError("r0 must be positive")
    out = np.sqrt((x - params.platform_velocity * eta) ** 2 + r0**2)
    return float(out) if out.ndim == 0 else out


def _echo_kernel(params: SarParams, x: float, r0: float, eta: np.ndarray, tau: np.ndarray) -> np.ndarray:
    c = params.speed_of_light
    r = np.sqrt((x - params.platform_velocity * eta) ** 2 + r0**2)[:, None]
    t = tau[None, :] - 2.0 * r / c
    phase = math.pi * params.range_chirp_rate * t**2 - 4.0 * math.pi * params.carrier_frequency * r / c
    range_env = np.abs(t) <= params.pulse_duration / 2.0
    az_env = (np.abs(eta - x / params.platform_velocity) <= params.synthetic_aperture_time(r0) / 2.0)[:, None]
    return np.where(range_env & az_env, np.exp(1j * phase), 0.0)


def _check_grids(azimuth_times, fast_times) -> tuple[np.ndarray, np.ndarray]:
    eta = np.asarray(azimuth_times, dtype=float).ravel()
    tau = np.asarray(fast_times, dtype=float).ravel()
    if eta.size == 0 or tau.size == 0:
        raise ValueError("azimuth and fast-time grids must be non-empty")
    if not (np.all(np.isfinite(eta)) and np.all(np.isfinite(tau))):
        raise ValueError("grids must be finite")
    return eta, tau


def point_target_echo(params: SarParams, target: PointTarget, azimuth_times, fast_times) -> EchoMatrix:
    """Raw echo of a single scatterer sampled on ``azimuth_times x fast_times``.

    Each sample carries the LFM range phase, the two-way carrier phase and
    the rectangular range / azimuth envelopes, scaled by the target
    amplitude.
    """
    eta, tau = _check_grids(azimuth_times, fast_times)
    if tau.size > 1:
        step = np.diff(tau)
        if np.max(np.abs(step * params.range_sampling_rate - 1.0)) > 1e-6:
            raise ValueError("fast-time grid must be uniform at 1 / range_sampling_rate")
    data = target.amplitude * _echo_kernel(params, target.x, target.r0, eta, tau)
    return EchoMatrix(data, eta, float(tau[0]))


def _check_scene_grid(params: SarParams, scene: ReflectivityMap) -> None:
    if abs(scene.range_spacing / params.range_spacing - 1.0) > 1e-9:
        raise ValueError(
            f"scene range spacing {scene.range_spacing} does not match c / (2 fs) = {params.range_spacing}"
        )
    if abs(scene.azimuth_spacing / params.azimuth_spacing - 1.0) > 1e-9:
        raise ValueError(
            f"scene azimuth spacing {scene.azimuth_spacing} does not match v / prf = {params.azimuth_spacing}"
        )


def scene_echo(
    params: SarParams,
    scene: ReflectivityMap,
    azimuth_times,
    fast_times,
    noise_sigma: float = 0.0,
    seed: int | None = None,
) -> EchoMatrix:
    """Superpose the echoes of every nonzero scene cell and add circular
    complex white Gaussian noise of standard deviation ``noise_sigma``."""
    _check_scene_grid(params, scene)
    eta, tau = _check_grids(azimuth_times, fast_times)
    if noise_sigma < 0:
        raise ValueError("noise_sigma must be non-negative")
    data = np.zeros((eta.size, tau.size), dtype=complex)
    xs, rs = scene.azimuth_positions, scene.ranges
    for k, j in zip(*np.nonzero(scene.data)):
        data += scene.data[k, j] * _echo_kernel(params, xs[k], rs[j], eta, tau)
    if noise_sigma > 0:
        rng = np.random.default_rng(seed)
        noise = rng.standard_normal(data.shape) + 1j * rng.standard_normal(data.shape)
        data += noise * (noise_sigma / math.sqrt(2.0))
    return EchoMatrix(data, eta, float(tau[0]))


def reference_point_echo(params: SarParams, shape: tuple[int, int], r_ref: float | None = None) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Echo of a unit scatterer at the centre cell, rolled so its cell is (0, 0).

    Returns ``(kernel, azimuth_times, fast_times)``; circularly shifting the
    kernel by ``(k, j)`` approximates the echo of cell ``(k, j)``.
    """
    na, nr = shape
    eta = azimuth_grid(params, na)
    tau = fast_time_grid(params, nr, r_ref)
    x_c = (na // 2) * params.azimuth_spacing
    r_c = params.speed_of_light * tau[nr // 2] / 2.0
    kernel = _echo_kernel(params, x_c, r_c, eta, tau)
    return np.roll(kernel, (-(na // 2), -(nr // 2)), axis=(0, 1)), eta, tau


def echo_from_image(
    params: SarParams,
    amplitude_image,
    seed: int,
    r_ref: float | None = None,
) -> tuple[EchoMatrix, ReflectivityMap]:
    """Echo of an amplitude image: random-phase SLC circularly convolved with
    the reference point-target echo (computed with 2-D FFTs)."""
    image = np.asarray(amplitude_image, dtype=float)
    if image.ndim != 2:
        raise ValueError(f"amplitude image must be 2-D, got {image.ndim}-D")
    if np.any(image < 0) or np.any(image > 255) or not np.all(np.isfinite(image)):
        raise ValueError("amplitude image values must lie in [0, 255]")
    rng = np.random.default_rng(seed)
    slc = image * np.exp(2j * np.pi * rng.random(image.shape))
    kernel, eta, tau = reference_point_echo(params, image.shape, r_ref)
    data = np.fft.ifft2(np.fft.fft2(kernel) * np.fft.fft2(slc))
    return EchoMatrix(data, eta, float(tau[0])), scene_grid(params, slc, tau)


def build_measurement_matrix(
    params: SarParams,
    azimuth_times,
    fast_times,
    scene_shape: tuple[int, int],
    azimuth_origin: float = 0.0,
    range_origin: float | None = None,
) -> np.ndarray:
    """Explicit measurement matrix mapping ``vec(scene)`` to ``vec(echo)``.

    Both vectorisations are column-major (Fortran order): echo row index is
    ``pulse + M * range_sample`` and scene column index is
    ``azimuth_cell + Ma * range_cell``.  Only meant for tiny instances.
    """
    eta, tau = _check_grids(azimuth_times, fast_times)
    ma, mr = scene_shape
    n_entries = eta.size * tau.size * ma * mr
    if n_entries > MAX_MATRIX_ENTRIES:
        raise ValueError(f"measurement matrix would have {n_entries} entries (cap {MAX_MATRIX_ENTRIES})")
    if range_origin is None:
        range_origin = params.speed_of_light * float(tau[0]) / 2.0
    h = np.empty((eta.size * tau.size, ma * mr), dtype=complex)
    for j in range(mr):
        r0 = range_origin + j * params.range_spacing
        for k in range(ma):
            x = azimuth_origin + k * params.azimuth_spacing
            h[:, k + ma * j] = _echo_kernel(params, x, r0, eta, tau).ravel(order="F")
    return h
