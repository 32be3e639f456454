import numpy as np
import pytest

from conftest import crandn, small_system
from sparsesar.denoiser import (
    DenoiserModel,
    conv2d,
    denoiser_apply,
    init_denoiser,
    zero_denoiser,
)
from sparsesar.operators import CsaOperator, NuftPlan
from sparsesar.recon import (
    CGBreakdown,
    DivergenceError,
    MatrixOperator,
    ModlConfig,
    cg_solve,
    ista_baseline,
    l1_objective,
    modl_forward,
    modl_reconstruct,
    soft_threshold,
)
from sparsesar.sar import azimuth_grid, build_measurement_matrix, fast_time_grid


@pytest.fixture(scope="module")
def tiny(toy):
    eta = azimuth_grid(toy, 16, start=-4 / toy.prf)
    tau = fast_time_grid(toy, 32)
    a = build_measurement_matrix(toy, eta, tau, (8, 8))
    return MatrixOperator(a, (8, 8), (16, 32))


def _dense_solve(op, lam, rhs):
    n = op.matrix.conj().T @ op.matrix + lam * np.eye(op.matrix.shape[1])
    return np.linalg.solve(n, rhs.ravel(order="F")).reshape(op.image_shape, order="F")


# ---- conjugate gradients ----------------------------------------------------


def test_cg_scalar_system(rng):
    b = crandn(rng, (4, 4))
    np.testing.assert_allclose(cg_solve(lambda x: 2 * x, b, iterations=1), b / 2, atol=1e-15)
    np.testing.assert_array_equal(cg_solve(lambda x: 2 * x, np.zeros((3, 3))), 0)


def test_cg_matches_dense_spd(rng):
    g = crandn(rng, (16, 16))
    a = g.conj().T @ g + np.eye(16)
    b = crandn(rng, 16)
    x = cg_solve(lambda v: a @ v, b, iterations=200, tol=1e-14)
    ref = np.linalg.solve(a, b)
    assert np.linalg.norm(x - ref) <= 1e-8 * np.linalg.norm(ref)


@pytest.mark.parametrize("d", [4, 16, 64])
def test_cg_finishes_within_dimension(rng, d):
    q, _ = np.linalg.qr(crandn(rng, (d, d)))
    a = (q * np.linspace(1, 10, d)) @ q.conj().T
    b = crandn(rng, d)
    x = cg_solve(lambda v: a @ v, b, iterations=d, tol=1e-14)
    assert np.linalg.norm(a @ x - b) <= 1e-10 * np.linalg.norm(b)


def test_cg_reports_breakdown():
    with pytest.raises(CGBreakdown):
        cg_solve(lambda x: -x, np.ones(3))
    with pytest.raises(ValueError):
        cg_solve(lambda x: x, np.ones(3), iterations=0)


def test_cg_matches_physical_normal_equations(tiny, rng):
    b = tiny.image(tiny.echo(crandn(rng, (8, 8))))
    for lam in (1.0, 0.1):
        x = cg_solve(lambda v: tiny.normal(v, lam), b, iterations=200, tol=1e-14)
        ref = _dense_solve(tiny, lam, b)
        assert np.linalg.norm(x - ref) <= 1e-6 * np.linalg.norm(ref)


# ---- denoiser ---------------------------------------------------------------


def test_zero_denoiser_identity_or_zero(rng):
    x = crandn(rng, (8, 8))
    np.testing.assert_array_equal(denoiser_apply(zero_denoiser(3, 4), x), x)
    np.testing.assert_array_equal(denoiser_apply(zero_denoiser(3, 4, residual=False), x), 0)


def test_single_layer_matches_loop(rng):
    w = rng.standard_normal((2, 2, 3, 3))
    b = rng.standard_normal(2)
    model = DenoiserModel([w], [b], residual=False)
    x = crandn(rng, (8, 8))
    planes = np.stack([x.real, x.imag])
    padded = np.pad(planes, ((0, 0), (1, 1), (1, 1)))
    expected = np.zeros((2, 8, 8))
    for o in range(2):
        for i in range(8):
            for j in range(8):
                acc = b[o]
                for c in range(2):
                    for k in range(3):
                        for l in range(3):
                            acc += w[o, c, k, l] * padded[c, i + k, j + l]
                expected[o, i, j] = acc
    out = denoiser_apply(model, x)
    np.testing.assert_allclose(out.real, expected[0], atol=1e-12)
    np.testing.assert_allclose(out.imag, expected[1], atol=1e-12)
    np.testing.assert_allclose(conv2d(planes, w, b), expected, atol=1e-12)


def test_denoiser_validates_shapes(rng):
    with pytest.raises(ValueError):
        DenoiserModel([np.zeros((2, 3, 3, 3))], [np.zeros(2)])
    with pytest.raises(ValueError):
        DenoiserModel([np.zeros((4, 2, 3, 3))], [np.zeros(4)])
    with pytest.raises(ValueError):
        DenoiserModel([np.zeros((2, 2, 5, 5))], [np.zeros(2)])
    with pytest.raises(ValueError):
        denoiser_apply(init_denoiser(2, 4), np.zeros(5))


def test_denoiser_preserves_shape(rng):
    x = crandn(rng, (7, 11))
    assert denoiser_apply(init_denoiser(4, 8, seed=1), x).shape == (7, 11)


# ---- unrolled reconstruction ------------------------------------------------


def test_config_validation():
    with pytest.raises(ValueError):
        ModlConfig(unroll_count=0)
    with pytest.raises(ValueError):
        ModlConfig(cg_iterations=0)
    with pytest.raises(ValueError):
        ModlConfig(lam=-1.0)


def test_identity_denoiser_full_sampling_returns_mf_image(toy, rng):
    tau, plan, filt = small_system(toy, 16, 16)
    op = CsaOperator(filt, plan)
    echo = op.echo(crandn(rng, (16, 16)))
    for lam in (1e-8, 1.0):
        out = modl_reconstruct(echo, op, zero_denoiser(2, 4), ModlConfig(5, 10, lam))
        np.testing.assert_allclose(out, op.image(echo), atol=1e-6 * np.abs(op.image(echo)).max())


def test_zero_output_denoiser_is_regularised_solve(tiny, rng):
    echo = tiny.echo(crandn(rng, (8, 8)))
    cfg = ModlConfig(unroll_count=3, cg_iterations=200, lam=0.5, cg_tol=1e-14)
    out = modl_reconstruct(echo, tiny, zero_denoiser(2, 4, residual=False), cfg)
    ref = _dense_solve(tiny, 0.5, tiny.image(echo))
    assert np.linalg.norm(out - ref) <= 1e-6 * np.linalg.norm(ref)
    # model=None is the same zero denoiser
    np.testing.assert_allclose(modl_reconstruct(echo, tiny, None, cfg), out, atol=1e-14)


def test_identity_denoiser_fixed_point(toy, rng):
    tau, plan, filt = small_system(toy, 16, 16)
    op = CsaOperator(filt, plan)
    echo = op.echo(crandn(rng, (16, 16)))
    _, trace = modl_forward(op, echo, zero_denoiser(2, 4), ModlConfig(4, 10, 1.0))
    for s in trace.sigmas[2:]:
        assert np.linalg.norm(s - trace.sigmas[1]) <= 1e-10 * np.linalg.norm(trace.sigmas[1])


def test_identity_denoiser_undersampled_approaches_least_squares(tiny, rng):
    # iterating sigma <- (N + lam)^-1 (b + lam sigma) converges to N^-1 b
    echo = tiny.echo(crandn(rng, (8, 8)))
    cfg = ModlConfig(unroll_count=60, cg_iterations=200, lam=1.0, cg_tol=1e-14)
    out = modl_reconstruct(echo, tiny, zero_denoiser(2, 4), cfg)
    ref = _dense_solve(tiny, 0.0, tiny.image(echo))
    assert np.linalg.norm(out - ref) <= 1e-6 * np.linalg.norm(ref)


def test_unroll_structure_and_determinism(toy, rng):
    tau, _, filt = small_system(toy, 16, 16)
    op = CsaOperator(filt, NuftPlan(np.sort(rng.uniform(0, 16 / toy.prf, 8)), 16, toy.prf))
    echo = op.echo(crandn(rng, (16, 16)))
    model = init_denoiser(3, 8, seed=4, last_scale=1.0)
    one = modl_reconstruct(echo, op, model, ModlConfig(1, 10, 0.8))
    z = denoiser_apply(model, op.image(echo))
    manual = cg_solve(lambda x: op.normal(x, 0.8), op.image(echo) + 0.8 * z, 10, 1e-10)
    np.testing.assert_array_equal(one, manual)
    two = modl_reconstruct(echo, op, model, ModlConfig(2, 10, 0.8))
    assert np.linalg.norm(two - one) > 1e-6 * np.linalg.norm(one)
    again = modl_reconstruct(echo, op, model, ModlConfig(2, 10, 0.8))
    assert two.tobytes() == again.tobytes()


def test_output_energy_bounded(toy, rng):
    tau, _, filt = small_system(toy, 16, 16)
    model = init_denoiser(3, 8, seed=2)
    for _ in range(5):
        op = CsaOperator(filt, NuftPlan(np.sort(rng.uniform(0, 16 / toy.prf, 8)), 16, toy.prf))
        echo = crandn(rng, op.echo_shape)
        out = modl_reconstruct(echo, op, model, ModlConfig())
        assert np.all(np.isfinite(out))
        assert np.linalg.norm(out) <= 10 * np.linalg.norm(op.image(echo))


# ---- ISTA baseline ------------------------------------------------------------


def test_soft_threshold():
    x = np.array([3 + 4j, 0.5, 0.0, -2.0])
    np.testing.assert_allclose(soft_threshold(x, 1.0), [2.4 + 3.2j, 0, 0, -1.0])


def test_ista_least_squares_monotone(tiny, rng):
    echo = tiny.echo(crandn(rng, (8, 8)))
    hist = []
    ista_baseline(echo, tiny, 0.0, iterations=100, history=hist)
    assert all(b <= a * (1 + 1e-12) for a, b in zip(hist, hist[1:]))
    assert hist[-1] < 0.1 * hist[0]


def test_ista_huge_threshold_gives_zero(tiny, rng):
    echo = tiny.echo(crandn(rng, (8, 8)))
    out = ista_baseline(echo, tiny, 1e12, iterations=20)
    np.testing.assert_array_equal(out, 0)


def test_ista_matches_dense_fista(tiny, rng):
    truth = crandn(rng, (8, 8)) * (rng.random((8, 8)) < 0.2)
    echo = tiny.echo(truth)
    lam1 = 0.1 * np.abs(tiny.image(echo)).max()
    obj = l1_objective(tiny, echo, ista_baseline(echo, tiny, lam1, iterations=500), lam1)

    a = tiny.matrix
    s = echo.ravel(order="F")
    lip = 2 * np.linalg.norm(a, 2) ** 2
    x = y = np.zeros(64, dtype=complex)
    t = 1.0
    for _ in range(5000):
        x_new = soft_threshold(y - 2 * a.conj().T @ (a @ y - s) / lip, lam1 / lip)
        t_new = (1 + np.sqrt(1 + 4 * t * t)) / 2
        y = x_new + (t - 1) / t_new * (x_new - x)
        x, t = x_new, t_new
    r = s - a @ x
    oracle = np.vdot(r, r).real + lam1 * np.abs(x).sum()
    assert abs(obj - oracle) <= 1e-4 * oracle


def test_ista_rejects_unstable_step(tiny, rng):
    echo = tiny.echo(crandn(rng, (8, 8)))
    with pytest.raises(ValueError):
        ista_baseline(echo, tiny, 0.1, step=10.0)


def test_ista_detects_divergence(tiny, rng, monkeypatch):
    import sparsesar.recon as recon

    echo = tiny.echo(crandn(rng, (8, 8)))
    # underestimate the Lipschitz constant so the default step is unstable
    monkeypatch.setattr(recon, "power_iteration", lambda *a, **k: 1e-3)
    with pytest.raises(DivergenceError):
        ista_baseline(echo, tiny, 0.0, iterations=50)
