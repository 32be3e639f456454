"""Nonuniform chirp-scaling operator pair.

``H`` (imaging, echo -> image)::

    sigma = IF_eta( IF_tau( F_tau( NF(S) * theta1 ) * theta2 ) * theta3 )

``H*`` (inverse, image -> echo)::

    S = NIF( IF_tau( F_tau( F_eta(sigma) * conj(theta3) ) * conj(theta2) ) * conj(theta1) )

``NF`` is the ``Na x M`` nonuniform azimuth DFT at the pulse times of the
plan and ``NIF = NF^H / Na``.  With numpy's FFT normalisation ``H*`` is
exactly the adjoint of ``H`` under the plain complex inner product, so
``H H* + lam I`` is Hermitian positive semi-definite.

Doppler bins are stored in FFT order; the frequency attached to bin ``n`` is
``n * prf / Na`` wrapped into ``[-prf/2, prf/2)`` (numpy ``fftfreq``).
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .sar import EchoMatrix, ReflectivityMap, SarParams


@dataclass(frozen=True)
class NuftPlan:
    positions: np.ndarray
    doppler_bin_count: int
    prf: float

    def __post_init__(self):
        pos = np.asarray(self.positions, dtype=float).ravel()
        object.__setattr__(self, "positions", pos)
        if pos.size < 1:
            raise ValueError("plan needs at least one azimuth position")
        if self.doppler_bin_count < 1:
            raise ValueError("doppler_bin_count must be positive")
        if not (self.prf > 0):
            raise ValueError("prf must be positive")
        if not np.all(np.isfinite(pos)):
            raise ValueError("positions must be finite")
        nf = np.exp(-2j * np.pi * np.outer(self.doppler_frequencies, pos))
        object.__setattr__(self, "_nf", nf)

    @classmethod
    def uniform(cls, count: int, prf: float, start: float = 0.0) -> "NuftPlan":
        return cls(start + np.arange(count) / prf, count, prf)

    @property
    def M(self) -> int:
        return self.positions.size

    @property
    def Na(self) -> int:
        return self.doppler_bin_count

    @property
    def storage_frequencies(self) -> np.ndarray:
        """Unwrapped bin frequencies ``(n - 1) * prf / Na``."""
        return np.arange(self.Na) * self.prf / self.Na

    @property
    def doppler_frequencies(self) -> np.ndarray:
        return np.fft.fftfreq(self.Na, 1.0 / self.prf)

    @property
    def nf_matrix(self) -> np.ndarray:
        return self._nf

    @property
    def nif_matrix(self) -> np.ndarray:
        return self._nf.conj().T / self.Na

    def with_positions(self, positions) -> "NuftPlan":
        return NuftPlan(positions, self.Na, self.prf)


def _check_rows(x: np.ndarray, n: int, what: str) -> np.ndarray:
    x = np.asarray(x)
    if x.shape[0] != n:
        raise ValueError(f"{what}: expected {n} rows, got {x.shape[0]}")
    return x


def nuft_forward(plan: NuftPlan, azimuth_signal) -> np.ndarray:
    """``out[n] = sum_m s[m] exp(-j 2 pi eta_m f_n)``, column-wise over range."""
    x = _check_rows(azimuth_signal, plan.M, "nuft_forward")
    return plan.nf_matrix @ x


def nuift_inverse(plan: NuftPlan, doppler_signal) -> np.ndarray:
    """``out[m] = (1/Na) sum_n s[n] exp(+j 2 pi eta_m f_n)``, column-wise over range."""
    x = _check_rows(doppler_signal, plan.Na, "nuift_inverse")
    return plan.nif_matrix @ x


def _freq_column(plan: NuftPlan, ndim: int) -> np.ndarray:
    f = 2j * np.pi * plan.doppler_frequencies
    return f if ndim == 1 else f[:, None]


def nuft_pattern_vjp(plan: NuftPlan, azimuth_signal, cotangent) -> np.ndarray:
    """Gradient w.r.t. the pulse times of ``Re<g, NF(eta) x>``."""
    x = np.asarray(azimuth_signal)
    g = np.asarray(cotangent)
    w = plan.nf_matrix.conj().T @ (_freq_column(plan, g.ndim) * g)
    prod = (x * w.conj()).real
    return prod if prod.ndim == 1 else prod.sum(axis=1)


def nuift_pattern_vjp(plan: NuftPlan, doppler_signal, cotangent) -> np.ndarray:
    """Gradient w.r.t. the pulse times of ``Re<g, NIF(eta) x>``."""
    x = np.asarray(doppler_signal)
    g = np.asarray(cotangent)
    w = plan.nif_matrix @ (_freq_column(plan, x.ndim) * x)
    prod = (g.conj() * w).real
    return prod if prod.ndim == 1 else prod.sum(axis=1)


def migration_factor(wavelength: float, velocity: float, f_eta) -> np.ndarray:
    """``D(f) = sqrt(1 - (wavelength f / 2v)^2)``; raises for evanescent bins."""
    arg = 1.0 - (wavelength * np.asarray(f_eta, dtype=float) / (2.0 * velocity)) ** 2
    if np.any(arg <= 0):
        raise ValueError("migration factor D <= 0: Doppler frequency beyond 2v / wavelength")
    return np.sqrt(arg)


@dataclass(frozen=True)
class CsaFilters:
    theta1: np.ndarray
    theta2: np.ndarray
    theta3: np.ndarray
    reference_range: float

    @property
    def shape(self) -> tuple[int, int]:
        return self.theta1.shape


def make_csa_filters(params: SarParams, plan: NuftPlan, fast_times, r_ref: float | None = None) -> CsaFilters:
    """Chirp-scaling phase filters on the plan's Doppler grid (broadside, ``f_ref = 0``).

    theta1 (range-Doppler) equalises range migration to the reference range,
    theta2 (2-D frequency) does range compression and bulk RCMC, theta3
    (range-Doppler) does azimuth compression and removes the residual phase
    left by the scaling step.
    """
    tau = np.asarray(fast_times, dtype=float).ravel()
    if tau.size < 1:
        raise ValueError("fast-time grid is empty")
    if r_ref is None:
        r_ref = params.reference_range
    c, f0, v = params.speed_of_light, params.carrier_frequency, params.platform_velocity
    lam, kr = params.wavelength, params.range_chirp_rate

    f_eta = plan.doppler_frequencies
    if np.any(np.abs(f_eta) >= plan.prf):
        raise ValueError("Doppler frequencies must stay below the PRF")
    d = migration_factor(lam, v, f_eta)[:, None]
    d_ref = 1.0
    km = kr / (1.0 - kr * lam * r_ref * f_eta[:, None] ** 2 / (2.0 * v**2 * f0**2 * d**3))

    t_ref = tau[None, :] - 2.0 * r_ref / (c * d)
    theta1 = np.exp(1j * math.pi * km * (d_ref / d - 1.0) * t_ref**2)

    f_tau = np.fft.fftfreq(tau.size, 1.0 / params.range_sampling_rate)[None, :]
    theta2 = np.exp(1j * math.pi * d * f_tau**2 / (km * d_ref)) * np.exp(
        4j * math.pi * r_ref * f_tau * (1.0 / d - 1.0 / d_ref) / c
    )

    r0 = c * tau[None, :] / 2.0
    residual = 4.0 * math.pi * km / c**2 * (1.0 - d / d_ref) * (r0 - r_ref) ** 2 / d**2
    theta3 = np.exp(4j * math.pi * r0 * f0 * d / c) * np.exp(-1j * residual)
    return CsaFilters(theta1, theta2, theta3, float(r_ref))


class CsaOperator:
    """Imaging operator ``H`` and its inverse / adjoint ``H*`` for one sampling plan."""

    def __init__(self, filters: CsaFilters, plan: NuftPlan):
        if filters.shape[0] != plan.Na:
            raise ValueError(f"filters have {filters.shape[0]} Doppler bins, plan has {plan.Na}")
        self.filters = filters
        self.plan = plan
        self._t1c = filters.theta1.conj()
        self._t2c = filters.theta2.conj()
        self._t3c = filters.theta3.conj()

    @property
    def image_shape(self) -> tuple[int, int]:
        return self.filters.shape

    @property
    def echo_shape(self) -> tuple[int, int]:
        return (self.plan.M, self.filters.shape[1])

    def with_plan(self, plan: NuftPlan) -> "CsaOperator":
        return CsaOperator(self.filters, plan)

    def _check(self, x: np.ndarray, shape: tuple[int, int], what: str) -> np.ndarray:
        x = np.asarray(x)
        if x.shape != shape:
            raise ValueError(f"{what}: expected shape {shape}, got {x.shape}")
        return x

    # range-Doppler -> image
    def doppler_to_image(self, x: np.ndarray) -> np.ndarray:
        f = self.filters
        y = np.fft.ifft(np.fft.fft(x * f.theta1, axis=1) * f.theta2, axis=1)
        return np.fft.ifft(y * f.theta3, axis=0)

    # image -> range-Doppler (inverse of doppler_to_image)
    def image_to_doppler(self, sigma: np.ndarray) -> np.ndarray:
        y = np.fft.fft(sigma, axis=0) * self._t3c
        return np.fft.ifft(np.fft.fft(y, axis=1) * self._t2c, axis=1) * self._t1c

    def image(self, echo) -> np.ndarray:
        s = self._check(echo, self.echo_shape, "csa_image")
        return self.doppler_to_image(self.plan.nf_matrix @ s)

    def echo(self, sigma) -> np.ndarray:
        x = self._check(sigma, self.image_shape, "csa_inverse")
        return self.plan.nif_matrix @ self.image_to_doppler(x)

    def normal(self, sigma, lam: float = 0.0) -> np.ndarray:
        """``(H H* + lam I) sigma``."""
        if lam < 0:
            raise ValueError("lambda must be non-negative")
        sigma = np.asarray(sigma)
        return self.image(self.echo(sigma)) + lam * sigma

    def image_pattern_vjp(self, echo, cotangent) -> np.ndarray:
        """d/d(eta) of ``Re<g, H(eta) S>`` with ``S`` held fixed."""
        back = self.image_to_doppler(np.asarray(cotangent)) / self.plan.Na
        return nuft_pattern_vjp(self.plan, echo, back)

    def echo_pattern_vjp(self, sigma, cotangent) -> np.ndarray:
        """d/d(eta) of ``Re<g, H*(eta) sigma>`` with ``sigma`` held fixed."""
        return nuift_pattern_vjp(self.plan, self.image_to_doppler(np.asarray(sigma)), cotangent)

    def normal_pattern_vjp(self, sigma, cotangent) -> np.ndarray:
        """d/d(eta) of ``Re<u, H H* sigma>``."""
        return self.image_pattern_vjp(self.echo(sigma), cotangent) + self.echo_pattern_vjp(
            sigma, self.echo(cotangent)
        )

    def dense_matrices(self) -> tuple[np.ndarray, np.ndarray]:
        """Explicit ``H`` and ``H*`` acting on Fortran-order vectorisations (tiny sizes only)."""
        ni, ne = int(np.prod(self.image_shape)), int(np.prod(self.echo_shape))
        h = np.empty((ni, ne), dtype=complex)
        hs = np.empty((ne, ni), dtype=complex)
        for k in range(ne):
            e = np.zeros(ne, dtype=complex)
            e[k] = 1.0
            h[:, k] = self.image(e.reshape(self.echo_shape, order="F")).ravel(order="F")
        for k in range(ni):
            e = np.zeros(ni, dtype=complex)
            e[k] = 1.0
            hs[:, k] = self.echo(e.reshape(self.image_shape, order="F")).ravel(order="F")
        return h, hs


def _data(x):
    return x.data if isinstance(x, (EchoMatrix, ReflectivityMap)) else np.asarray(x)


def csa_image(filters: CsaFilters, plan: NuftPlan, echo, params: SarParams | None = None) -> ReflectivityMap:
    """Focus an echo sampled at the plan's pulse times into a reflectivity map.

    Grid spacings come from ``params`` when given (otherwise unit spacing);
    the range origin follows the echo's fast-time origin.
    """
    out = CsaOperator(filters, plan).image(_data(echo))
    dx = params.azimuth_spacing if params else 1.0
    dr = params.range_spacing if params else 1.0
    r_origin = 0.0
    if params is not None and isinstance(echo, EchoMatrix):
        r_origin = params.speed_of_light * echo.fast_time_origin / 2.0
    return ReflectivityMap(out, dx, dr, 0.0, r_origin)


def csa_inverse(filters: CsaFilters, plan: NuftPlan, scene, fast_time_origin: float | None = None, params: SarParams | None = None) -> EchoMatrix:
    """Synthesize the echo of ``scene`` at the plan's pulse times."""
    out = CsaOperator(filters, plan).echo(_data(scene))
    if fast_time_origin is None:
        fast_time_origin = 0.0
        if params is not None and isinstance(scene, ReflectivityMap):
            fast_time_origin = 2.0 * scene.range_origin / params.speed_of_light
    return EchoMatrix(out, plan.positions, fast_time_origin)


def normal_apply(filters: CsaFilters, plan: NuftPlan, lam: float, image) -> np.ndarray:
    """``csa_image(csa_inverse(x)) + lam x``."""
    return CsaOperator(filters, plan).normal(_data(image), lam)
