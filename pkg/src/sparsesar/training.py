"""Joint learning of the azimuth sampling pattern, the denoiser weights and
the regularisation weight.

Gradients are written out by hand.  Through each data-consistency block
``sigma = (H H* + lam I)^-1 r`` the backward pass solves
``u = (H H* + lam I)^-1 g`` with CG (the matrix is Hermitian) and then
collects

* ``dL/dr = u``,
* ``dL/dlam += Re<u, z> - Re<u, sigma>``,
* ``dL/deta -= d/deta Re<u, H H* sigma>`` (explicit operator derivative).

The pulse times also enter through ``H(S)`` in the initial image and, when
echoes are regenerated from the scene, through ``S = H*(scene)``.
Complex gradients follow ``dL = Re<g, dx>``, so ``||x - t||^2`` has
gradient ``2 (x - t)``.
"""

from __future__ import annotations

import json
import logging
import math
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from .denoiser import DenoiserModel, denoiser_backprop
from .operators import CsaFilters, CsaOperator, NuftPlan
from .recon import ModlConfig, cg_solve, modl_forward
from .sampling import SamplingPattern, project_constraints

log = logging.getLogger(__name__)


class TrainingError(RuntimeError):
    pass


def mse_loss(reconstruction, target) -> float:
    """Squared Frobenius norm of the difference (real and imaginary parts)."""
    a = np.asarray(getattr(reconstruction, "data", reconstruction))
    b = np.asarray(getattr(target, "data", target))
    if a.shape != b.shape:
        raise ValueError(f"shape mismatch: {a.shape} vs {b.shape}")
    d = (a - b).ravel()
    return float(np.vdot(d, d).real)


def cg_backprop(apply_normal, upstream_grad, iterations: int = 10, tol: float = 1e-10) -> np.ndarray:
    """``(H H* + lam I)^-1`` applied to an upstream gradient (the block Jacobian is Hermitian)."""
    return cg_solve(apply_normal, upstream_grad, iterations, tol)


@dataclass
class GradBundle:
    d_pattern: np.ndarray
    d_weights: DenoiserModel | None
    d_lambda: float
    d_echo: np.ndarray | None = None

    def all_finite(self) -> bool:
        ok = bool(np.all(np.isfinite(self.d_pattern))) and math.isfinite(self.d_lambda)
        if self.d_weights is not None:
            ok = ok and all(np.all(np.isfinite(p)) for p in self.d_weights.parameters())
        return ok


class SceneEchoSource:
    """Regenerates the echo of a fixed complex scene at any sampling plan.

    The measured data follow the operator forward model ``S = H*(scene)``
    plus optional seeded circular Gaussian noise; the noise realisation
    depends only on the seed and the echo shape.
    """

    def __init__(self, scene: np.ndarray, noise_sigma: float = 0.0, seed: int = 0):
        self.scene = np.asarray(scene, dtype=complex)
        self.noise_sigma = float(noise_sigma)
        self.seed = seed

    def echo(self, operator: CsaOperator) -> np.ndarray:
        s = operator.echo(self.scene)
        if self.noise_sigma > 0:
            rng = np.random.default_rng(self.seed)
            n = rng.standard_normal(s.shape) + 1j * rng.standard_normal(s.shape)
            s = s + n * (self.noise_sigma / math.sqrt(2.0))
        return s

    def pattern_vjp(self, operator: CsaOperator, cotangent) -> np.ndarray:
        return operator.echo_pattern_vjp(self.scene, cotangent)


def modl_backward(
    operator: CsaOperator,
    echo: np.ndarray,
    trace,
    model: DenoiserModel | None,
    config: ModlConfig,
    upstream: np.ndarray,
    backprop_iterations: int | None = None,
    backprop_tol: float | None = None,
) -> GradBundle:
    """Reverse pass through ``modl_forward`` given ``dL/dsigma_K``.

    ``d_echo`` is the gradient w.r.t. the echo; ``d_pattern`` contains only
    the dependence of the operators on the pulse times (data held fixed).
    """
    lam = config.lam
    iters = backprop_iterations or config.cg_iterations
    tol = config.cg_tol if backprop_tol is None else backprop_tol

    def normal(x):
        return operator.normal(x, lam)

    g = np.asarray(upstream, dtype=complex)
    d_rhs0 = np.zeros_like(g)
    d_lambda = 0.0
    d_pattern = np.zeros(operator.plan.M)
    d_weights = model.zeros_like() if model is not None else None
    for k in range(config.unroll_count, 0, -1):
        sigma_k = trace.sigmas[k]
        z_k = trace.zs[k - 1]
        u = cg_backprop(normal, g, iters, tol)
        d_rhs0 += u
        d_lambda += float(np.vdot(u, z_k).real - np.vdot(u, sigma_k).real)
        d_pattern -= operator.normal_pattern_vjp(sigma_k, u)
        if model is not None:
            dw, g = denoiser_backprop(model, trace.sigmas[k - 1], lam * u)
            d_weights = d_weights.with_parameters([a + b for a, b in zip(d_weights.parameters(), dw.parameters())])
        else:
            g = np.zeros_like(g)
    d_rhs0 += g
    d_pattern += operator.image_pattern_vjp(echo, d_rhs0)
    d_echo = operator.echo(d_rhs0)
    return GradBundle(d_pattern, d_weights, d_lambda, d_echo)


def loss_and_grad(
    operator: CsaOperator,
    source: SceneEchoSource,
    target: np.ndarray,
    model: DenoiserModel | None,
    config: ModlConfig,
    through_echo: bool = True,
    backprop_iterations: int | None = None,
    backprop_tol: float | None = None,
) -> tuple[float, GradBundle, np.ndarray]:
    """Loss of one training pair and its gradient bundle.

    ``through_echo`` adds the dependence of the regenerated echo on the
    pulse times; without it the echo is treated as fixed data.
    """
    echo = source.echo(operator)
    recon, trace = modl_forward(operator, echo, model, config)
    target = np.asarray(target)
    loss = mse_loss(recon, target)
    grads = modl_backward(
        operator, echo, trace, model, config, 2.0 * (recon - target), backprop_iterations, backprop_tol
    )
    if through_echo:
        grads.d_pattern = grads.d_pattern + source.pattern_vjp(operator, grads.d_echo)
    return loss, grads, recon


def pattern_gradient(operator, source, target, model, config, through_echo: bool = True, **kw) -> np.ndarray:
    """``dL/deta`` accumulated over every NF / NIF application of the unrolled network."""
    return loss_and_grad(operator, source, target, model, config, through_echo, **kw)[1].d_pattern


def finite_difference_check(
    func: Callable[[np.ndarray], float],
    x: np.ndarray,
    analytic: np.ndarray,
    indices: Sequence[int] | None = None,
    step: float = 1e-5,
) -> float:
    """Worst-case relative error ``||a - fd||_inf / ||fd||_inf`` of an analytic
    gradient against central differences at the selected coordinates."""
    x = np.asarray(x, dtype=float)
    analytic = np.asarray(analytic, dtype=float).ravel()
    idx = np.arange(x.size) if indices is None else np.asarray(indices)
    flat = x.ravel()
    fd = np.empty(idx.size)
    for n, i in enumerate(idx):
        if flat[i] + step == flat[i] or flat[i] - step == flat[i]:
            raise ValueError(f"step {step} underflows at coordinate {i} (value {flat[i]})")
        xp = flat.copy()
        xp[i] += step
        xm = flat.copy()
        xm[i] -= step
        fd[n] = (func(xp.reshape(x.shape)) - func(xm.reshape(x.shape))) / (2.0 * step)
    scale = np.max(np.abs(fd))
    err = np.max(np.abs(analytic[idx] - fd))
    if scale == 0.0:
        return float(err)
    return float(err / scale)


class Adam:
    """Adaptive-moment updates on a list of arrays, one learning rate per entry."""

    def __init__(self, shapes: Sequence[tuple], beta1: float = 0.9, beta2: float = 0.999, eps: float = 1e-8):
        self.m = [np.zeros(s) for s in shapes]
        self.v = [np.zeros(s) for s in shapes]
        self.beta1, self.beta2, self.eps = beta1, beta2, eps
        self.t = 0

    def step(self, params: list[np.ndarray], grads: list[np.ndarray], lrs: Sequence[float]) -> list[np.ndarray]:
        self.t += 1
        b1, b2 = self.beta1, self.beta2
        out = []
        for i, (p, g, lr) in enumerate(zip(params, grads, lrs)):
            self.m[i] = b1 * self.m[i] + (1 - b1) * g
            self.v[i] = b2 * self.v[i] + (1 - b2) * g * g
            m_hat = self.m[i] / (1 - b1**self.t)
            v_hat = self.v[i] / (1 - b2**self.t)
            out.append(p - lr * m_hat / (np.sqrt(v_hat) + self.eps))
        return out


@dataclass
class TrainState:
    pattern: SamplingPattern
    model: DenoiserModel
    rho: float = 0.0  # lambda = exp(rho)
    optimizer: Adam | None = None
    epoch: int = 0
    seed: int = 0

    @property
    def lam(self) -> float:
        return math.exp(self.rho)

    def __post_init__(self):
        if self.optimizer is None:
            shapes = [p.shape for p in self.model.parameters()] + [(), self.pattern.positions.shape]
            self.optimizer = Adam(shapes)


@dataclass
class LearningRates:
    weights: float = 1e-3
    lam: float = 1e-3
    pattern: float | None = None  # default 1e-4 * nominal PRI


@dataclass
class TrainResult:
    state: TrainState
    history: list[tuple[int, int, float]] = field(default_factory=list)

    def epoch_means(self) -> np.ndarray:
        by_epoch: dict[int, list[float]] = {}
        for e, _, loss in self.history:
            by_epoch.setdefault(e, []).append(loss)
        return np.array([np.mean(by_epoch[e]) for e in sorted(by_epoch)])


def _dump_state(state: TrainState, epoch: int, index: int, loss: float) -> str:
    return json.dumps(
        {
            "epoch": epoch,
            "sample": index,
            "loss": repr(loss),
            "lambda": state.lam,
            "pattern": state.pattern.positions.tolist(),
            "weight_norms": [float(np.linalg.norm(p)) for p in state.model.parameters()],
        }
    )


def train_joint(
    dataset: Sequence[tuple[SceneEchoSource, np.ndarray]],
    state: TrainState,
    filters: CsaFilters,
    prf: float,
    epochs: int,
    rates: LearningRates | None = None,
    config: ModlConfig | None = None,
    train_pattern: bool = True,
    train_weights: bool = True,
    train_lambda: bool = True,
    through_echo: bool = True,
    callback: Callable[[int, TrainState, float], None] | None = None,
) -> TrainResult:
    """Per-sample joint optimisation of pattern, weights and lambda.

    Each step regenerates the echo at the current pattern, runs the unrolled
    reconstruction, backpropagates, takes an Adam step and projects the
    pattern back onto its constraints.  Samples are visited in dataset
    order so runs are reproducible.
    """
    if not dataset:
        raise ValueError("dataset is empty")
    rates = rates or LearningRates()
    config = config or ModlConfig()
    lr_pattern = rates.pattern if rates.pattern is not None else 1e-4 / prf
    na = filters.shape[0]
    result = TrainResult(state)
    n_w = len(state.model.parameters())
    for _ in range(epochs):
        epoch = state.epoch
        epoch_losses = []
        for index, (source, target) in enumerate(dataset):
            op = CsaOperator(filters, NuftPlan(state.pattern.positions, na, prf))
            cfg = ModlConfig(config.unroll_count, config.cg_iterations, state.lam, config.cg_tol)
            try:
                loss, grads, _ = loss_and_grad(op, source, target, state.model, cfg, through_echo)
            except ArithmeticError as exc:
                raise TrainingError(f"{exc}; state: {_dump_state(state, epoch, index, math.nan)}") from exc
            if not (math.isfinite(loss) and grads.all_finite()):
                raise TrainingError(f"non-finite loss or gradient; state: {_dump_state(state, epoch, index, loss)}")
            result.history.append((epoch, index, loss))
            epoch_losses.append(loss)

            params = state.model.parameters() + [np.array(state.rho), state.pattern.positions]
            d_rho = grads.d_lambda * state.lam
            g = grads.d_weights.parameters() + [np.array(d_rho), grads.d_pattern]
            lrs = [rates.weights if train_weights else 0.0] * n_w + [
                rates.lam if train_lambda else 0.0,
                lr_pattern if train_pattern else 0.0,
            ]
            new = state.optimizer.step(params, g, lrs)
            state.model = state.model.with_parameters(new[:n_w])
            state.rho = float(new[n_w])
            if train_pattern:
                state.pattern = project_constraints(new[n_w + 1], state.pattern.aperture, state.pattern.min_spacing)
        state.epoch += 1
        mean_loss = float(np.mean(epoch_losses))
        log.debug("epoch %d mean loss %.6e lambda %.4g", epoch, mean_loss, state.lam)
        if callback is not None:
            callback(epoch, state, mean_loss)
    return result
