import cmath
import logging
import math

import numpy as np
import pytest

from conftest import crandn, small_system
from sparsesar.operators import (
    CsaOperator,
    NuftPlan,
    csa_image,
    csa_inverse,
    make_csa_filters,
    migration_factor,
    normal_apply,
    nuft_forward,
    nuift_inverse,
)
from sparsesar.sar import PointTarget, azimuth_grid, fast_time_grid, point_target_echo, scene_grid, SPEED_OF_LIGHT

log = logging.getLogger(__name__)


def _loop_nuft(plan, x):
    f = plan.doppler_frequencies
    out = np.zeros(plan.Na, dtype=complex)
    for n in range(plan.Na):
        for m in range(plan.M):
            out[n] += x[m] * cmath.exp(-2j * math.pi * plan.positions[m] * f[n])
    return out


def test_uniform_plan_is_dft():
    plan = NuftPlan.uniform(16, 200.0)
    n = np.arange(16)
    dft = np.exp(-2j * np.pi * np.outer(n, n) / 16)
    np.testing.assert_allclose(plan.nf_matrix, dft, atol=1e-12)
    x = crandn(np.random.default_rng(0), (16, 3))
    np.testing.assert_allclose(nuft_forward(plan, x), np.fft.fft(x, axis=0), atol=1e-12)


def test_impulse_at_origin_has_flat_spectrum():
    plan = NuftPlan([0.0, 0.013, 0.02], 11, 200.0)
    np.testing.assert_allclose(nuft_forward(plan, np.array([1.0, 0, 0])), np.ones(11), atol=0)


def test_nuft_matches_loop_oracle(rng):
    plan = NuftPlan(np.sort(rng.uniform(0, 7 / 200.0, 7)), 11, 200.0)
    x = crandn(rng, 7)
    oracle = _loop_nuft(plan, x)
    assert np.max(np.abs(nuft_forward(plan, x) - oracle)) <= 1e-13 * np.max(np.abs(oracle))


def test_nif_is_scaled_adjoint(rng):
    plan = NuftPlan(np.sort(rng.uniform(0, 0.1, 9)), 13, 200.0)
    np.testing.assert_allclose(plan.nif_matrix, plan.nf_matrix.conj().T / 13, rtol=0, atol=1e-14)
    x = crandn(rng, (13, 2))
    np.testing.assert_array_equal(nuift_inverse(plan, x), plan.nif_matrix @ x)


def test_uniform_inverse_pair():
    plan = NuftPlan.uniform(24, 200.0)
    np.testing.assert_allclose(plan.nif_matrix @ plan.nf_matrix, np.eye(24), atol=1e-12)


def test_nonuniform_pair_is_not_identity(rng):
    plan = NuftPlan(np.sort(rng.uniform(0, 32 / 200.0, 16)), 32, 200.0)
    dev = np.linalg.norm(plan.nf_matrix @ plan.nif_matrix - np.eye(32))
    log.info("||NF NIF - I||_F for M=16, Na=32: %.3f", dev)
    assert np.isfinite(dev)


def test_length_mismatch():
    plan = NuftPlan.uniform(8, 200.0)
    with pytest.raises(ValueError):
        nuft_forward(plan, np.ones(7))
    with pytest.raises(ValueError):
        nuift_inverse(plan, np.ones(9))


def test_doppler_frequencies_wrap():
    plan = NuftPlan.uniform(8, 200.0)
    np.testing.assert_allclose(plan.storage_frequencies, 25.0 * np.arange(8))
    np.testing.assert_allclose(plan.doppler_frequencies, [0, 25, 50, 75, -100, -75, -50, -25])


def test_migration_factor():
    lam, v = 0.03, 200.0
    f = 0.6 * 2 * v / lam
    assert migration_factor(lam, v, f) == pytest.approx(0.8, rel=1e-14)
    assert migration_factor(lam, v, 0.0) == 1.0
    with pytest.raises(ValueError):
        migration_factor(lam, v, 2 * v / lam)


def test_filters_unit_modulus_and_zero_doppler(table2):
    tau, plan, filt = small_system(table2, 64, 128)
    for theta in (filt.theta1, filt.theta2, filt.theta3):
        assert theta.shape == (64, 128)
        np.testing.assert_allclose(np.abs(theta), 1.0, atol=1e-12)
    np.testing.assert_array_equal(filt.theta1[0], np.ones(128))


def test_filters_reject_evanescent_doppler(table2):
    tau = fast_time_grid(table2, 8)
    # PRF so high that the Doppler grid reaches 2v / lambda
    plan = NuftPlan.uniform(8, 4 * 2 * table2.platform_velocity / table2.wavelength)
    with pytest.raises(ValueError):
        make_csa_filters(table2, plan, tau)


def test_point_target_focuses_at_true_cell(toy):
    n = 32
    eta = azimuth_grid(toy, n)
    tau = fast_time_grid(toy, n)
    plan = NuftPlan(eta, n, toy.prf)
    filt = make_csa_filters(toy, plan, tau)
    for k, j in [(16, 16), (12, 20)]:
        target = PointTarget(k * toy.azimuth_spacing, SPEED_OF_LIGHT * tau[j] / 2)
        img = csa_image(filt, plan, point_target_echo(toy, target, eta, tau), toy)
        assert np.unravel_index(np.argmax(np.abs(img.data)), img.shape) == (k, j)


def test_zero_echo_gives_zero_image(toy):
    tau, plan, filt = small_system(toy, 16, 16)
    np.testing.assert_array_equal(csa_image(filt, plan, np.zeros((16, 16))).data, 0)


def test_roundtrip_identity_uniform(toy, rng):
    tau, plan, filt = small_system(toy, 32, 32)
    sigma = crandn(rng, (32, 32))
    back = csa_image(filt, plan, csa_inverse(filt, plan, sigma)).data
    assert np.linalg.norm(back - sigma) <= 1e-9 * np.linalg.norm(sigma)


def test_inverse_scalar_linearity(toy, rng):
    tau, _, filt = small_system(toy, 16, 16)
    plan = NuftPlan(np.sort(rng.uniform(0, 16 / toy.prf, 10)), 16, toy.prf)
    sigma = crandn(rng, (16, 16))
    a = 0.3 - 2.0j
    np.testing.assert_allclose(
        csa_inverse(filt, plan, a * sigma).data, a * csa_inverse(filt, plan, sigma).data, rtol=1e-13, atol=1e-13
    )


def test_operators_superpose(toy, rng):
    tau, _, filt = small_system(toy, 16, 16)
    op = CsaOperator(filt, NuftPlan(np.sort(rng.uniform(0, 16 / toy.prf, 9)), 16, toy.prf))
    x, y = crandn(rng, (16, 16)), crandn(rng, (16, 16))
    a, b = 1.5 + 0.5j, -0.25j
    lhs = op.echo(a * x + b * y)
    assert np.linalg.norm(lhs - a * op.echo(x) - b * op.echo(y)) <= 1e-12 * np.linalg.norm(lhs)
    s, t = crandn(rng, (9, 16)), crandn(rng, (9, 16))
    lhs = op.image(a * s + b * t)
    assert np.linalg.norm(lhs - a * op.image(s) - b * op.image(t)) <= 1e-12 * np.linalg.norm(lhs)


def test_inverse_shows_range_migration(table2):
    na, nr = 256, 256
    tau = fast_time_grid(table2, nr)
    plan = NuftPlan(azimuth_grid(table2, na), na, table2.prf)
    filt = make_csa_filters(table2, plan, tau)
    sigma = np.zeros((na, nr), dtype=complex)
    sigma[128, 128] = 1.0
    echo = csa_inverse(filt, plan, scene_grid(table2, sigma, tau), params=table2)
    # range-compress each pulse and locate its peak
    f_tau = np.fft.fftfreq(nr, 1 / table2.range_sampling_rate)
    compressed = np.fft.ifft(np.fft.fft(echo.data, axis=1) * np.exp(1j * np.pi * f_tau**2 / table2.range_chirp_rate), axis=1)
    r0 = SPEED_OF_LIGHT * tau[128] / 2
    x = 128 * table2.azimuth_spacing
    ta = table2.synthetic_aperture_time(r0)
    inside = np.abs(plan.positions - x / table2.platform_velocity) < 0.4 * ta
    delay = 2 * np.sqrt((x - table2.platform_velocity * plan.positions) ** 2 + r0**2) / SPEED_OF_LIGHT
    expected_bin = (delay - tau[0]) * table2.range_sampling_rate
    peaks = np.argmax(np.abs(compressed), axis=1)
    assert np.max(np.abs(peaks[inside] - expected_bin[inside])) <= 1.0


def test_normal_operator_properties(toy, rng):
    tau, plan, filt = small_system(toy, 16, 16)
    x = crandn(rng, (16, 16))
    np.testing.assert_allclose(normal_apply(filt, plan, 0.0, x), x, atol=1e-9 * np.abs(x).max())
    np.testing.assert_array_equal(normal_apply(filt, plan, 0.5, np.zeros((16, 16))), 0)
    sparse_plan = NuftPlan(np.sort(rng.uniform(0, 16 / toy.prf, 7)), 16, toy.prf)
    for _ in range(10):
        x, y = crandn(rng, (16, 16)), crandn(rng, (16, 16))
        nx = normal_apply(filt, sparse_plan, 0.3, x)
        ny = normal_apply(filt, sparse_plan, 0.3, y)
        lhs, rhs = np.vdot(nx, y), np.vdot(x, ny)
        assert abs(lhs - rhs) <= 1e-8 * abs(lhs)
        assert np.vdot(x, normal_apply(filt, sparse_plan, 0.0, x)).real >= 0


def test_dimension_mismatch(toy):
    tau, plan, filt = small_system(toy, 16, 16)
    with pytest.raises(ValueError):
        csa_image(filt, plan, np.zeros((15, 16)))
    with pytest.raises(ValueError):
        csa_inverse(filt, plan, np.zeros((16, 15)))
    with pytest.raises(ValueError):
        CsaOperator(filt, NuftPlan.uniform(8, toy.prf))
