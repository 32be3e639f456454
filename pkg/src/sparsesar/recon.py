"""Data-consistency CG solver, unrolled MoDL reconstruction and an ISTA
baseline on the imaging operator's normal equations."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .denoiser import DenoiserModel, denoiser_apply


class CGBreakdown(ArithmeticError):
    """CG hit a direction of zero or negative curvature."""


class DivergenceError(RuntimeError):
    pass


def _vdot(a: np.ndarray, b: np.ndarray) -> complex:
    return np.vdot(a.ravel(), b.ravel())


def cg_solve(
    apply_normal: Callable[[np.ndarray], np.ndarray],
    rhs,
    iterations: int = 10,
    tol: float = 1e-10,
    x0=None,
) -> np.ndarray:
    """Conjugate gradients for ``A x = rhs`` with Hermitian PSD ``A``.

    Stops after ``iterations`` steps or once ``||r|| <= tol ||rhs||``.
    """
    if iterations < 1:
        raise ValueError("iterations must be at least 1")
    b = np.asarray(rhs)
    b_norm = math.sqrt(_vdot(b, b).real)
    x = np.zeros_like(b, dtype=complex) if x0 is None else np.array(x0, dtype=complex)
    if b_norm == 0.0 and x0 is None:
        return x
    r = b - apply_normal(x) if x0 is not None else b.astype(complex)
    p = r.copy()
    rs = _vdot(r, r).real
    for _ in range(iterations):
        if math.sqrt(rs) <= tol * b_norm:
            break
        ap = apply_normal(p)
        curvature = _vdot(p, ap).real
        if not (curvature > 0 and math.isfinite(curvature)):
            raise CGBreakdown(f"non-positive curvature {curvature:.3e} with residual {math.sqrt(rs):.3e}")
        alpha = rs / curvature
        x = x + alpha * p
        r = r - alpha * ap
        rs_new = _vdot(r, r).real
        p = r + (rs_new / rs) * p
        rs = rs_new
    return x


@dataclass
class ModlConfig:
    unroll_count: int = 5
    cg_iterations: int = 10
    lam: float = 1.0
    cg_tol: float = 1e-10

    def __post_init__(self):
        if self.unroll_count < 1:
            raise ValueError("unroll_count must be at least 1")
        if self.cg_iterations < 1:
            raise ValueError("cg_iterations must be at least 1")
        if not (self.lam >= 0 and math.isfinite(self.lam)):
            raise ValueError("lam must be a finite non-negative number")


class MatrixOperator:
    """Explicit measurement matrix ``A`` (scene -> echo) in the operator interface.

    ``echo`` applies ``A``, ``image`` applies ``A^H``; both act on
    Fortran-order vectorisations so they match ``build_measurement_matrix``.
    """

    def __init__(self, matrix: np.ndarray, image_shape: tuple[int, int], echo_shape: tuple[int, int]):
        self.matrix = np.asarray(matrix)
        self.image_shape = tuple(image_shape)
        self.echo_shape = tuple(echo_shape)
        if self.matrix.shape != (int(np.prod(echo_shape)), int(np.prod(image_shape))):
            raise ValueError("matrix shape does not match image / echo shapes")

    def echo(self, sigma) -> np.ndarray:
        return (self.matrix @ np.asarray(sigma).ravel(order="F")).reshape(self.echo_shape, order="F")

    def image(self, echo) -> np.ndarray:
        return (self.matrix.conj().T @ np.asarray(echo).ravel(order="F")).reshape(self.image_shape, order="F")

    def normal(self, sigma, lam: float = 0.0) -> np.ndarray:
        sigma = np.asarray(sigma)
        return self.image(self.echo(sigma)) + lam * sigma


@dataclass
class ModlTrace:
    """Intermediate states of one unrolled forward pass."""

    rhs0: np.ndarray
    sigmas: list[np.ndarray] = field(default_factory=list)
    zs: list[np.ndarray] = field(default_factory=list)


def modl_forward(operator, echo, model: DenoiserModel | None, config: ModlConfig) -> tuple[np.ndarray, ModlTrace]:
    """Run the unrolled recursion and keep every intermediate.

    ``sigma_0 = H(S)``; for each unroll ``z = D(sigma)`` and
    ``sigma <- (H H* + lam I)^-1 (H(S) + lam z)``.  ``model=None`` means a
    zero denoiser output.
    """
    b = operator.image(np.asarray(echo))
    lam = config.lam
    trace = ModlTrace(rhs0=b, sigmas=[b])
    sigma = b
    for _ in range(config.unroll_count):
        z = denoiser_apply(model, sigma) if model is not None else np.zeros_like(sigma)
        sigma = cg_solve(lambda x: operator.normal(x, lam), b + lam * z, config.cg_iterations, config.cg_tol)
        trace.zs.append(z)
        trace.sigmas.append(sigma)
    return sigma, trace


def modl_reconstruct(echo, operator, model: DenoiserModel | None, config: ModlConfig) -> np.ndarray:
    """Unrolled CNN + CG reconstruction with weights shared across unrolls."""
    data = echo.data if hasattr(echo, "data") else echo
    return modl_forward(operator, data, model, config)[0]


def power_iteration(apply, shape, iterations: int = 50, seed: int = 0) -> float:
    """Largest eigenvalue estimate of a Hermitian PSD operator."""
    rng = np.random.default_rng(seed)
    x = rng.standard_normal(shape) + 1j * rng.standard_normal(shape)
    x /= np.linalg.norm(x)
    value = 0.0
    for _ in range(iterations):
        y = apply(x)
        value = float(np.linalg.norm(y))
        if value == 0.0:
            return 0.0
        x = y / value
    return value


def soft_threshold(x: np.ndarray, t: float) -> np.ndarray:
    mag = np.abs(x)
    scale = np.maximum(mag - t, 0.0) / np.where(mag > 0, mag, 1.0)
    return x * scale


def l1_objective(operator, echo, sigma, lambda_l1: float) -> float:
    resid = echo - operator.echo(sigma)
    return float(np.vdot(resid, resid).real + lambda_l1 * np.abs(sigma).sum())


def ista_baseline(
    echo,
    operator,
    lambda_l1: float,
    step: float | None = None,
    iterations: int = 100,
    slack: float = 1e-10,
    history: list | None = None,
) -> np.ndarray:
    """Iterative soft thresholding for ``||S - H* sigma||^2 + lambda_l1 ||sigma||_1``.

    The step defaults to ``1 / L`` with ``L = 2 ||H H*||`` estimated by power
    iteration.  Raises ``DivergenceError`` if the objective increases by more
    than ``slack`` (relative).
    """
    s = np.asarray(echo.data if hasattr(echo, "data") else echo)
    if lambda_l1 < 0:
        raise ValueError("lambda_l1 must be non-negative")
    lipschitz = 2.0 * power_iteration(operator.normal, operator.image_shape) * 1.01
    if step is None:
        step = 1.0 / lipschitz
    elif step <= 0 or step > 1.0 / lipschitz * 1.05:
        raise ValueError(f"step {step:.3e} exceeds the stability bound {1.0 / lipschitz:.3e}")
    sigma = np.zeros(operator.image_shape, dtype=complex)
    f_old = l1_objective(operator, s, sigma, lambda_l1)
    if history is not None:
        history.append(f_old)
    for it in range(iterations):
        grad = 2.0 * operator.image(operator.echo(sigma) - s)
        sigma = soft_threshold(sigma - step * grad, step * lambda_l1)
        f_new = l1_objective(operator, s, sigma, lambda_l1)
        if history is not None:
            history.append(f_new)
        if f_new > f_old + slack * max(1.0, abs(f_old)):
            raise DivergenceError(f"objective increased at iteration {it}: {f_old:.6e} -> {f_new:.6e}")
        f_old = f_new
    return sigma
