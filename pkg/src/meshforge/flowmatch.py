"""Flow-matching and VAE training math at desk scale.

Implements the conditional optimal-transport path x_t = (1-t) x0 + t x1
with constant target velocity x1 - x0, the velocity-regression loss, a
first-order Euler ODE sampler, the diagonal-Gaussian KL term, and a small
gradient-descent trainer over two closed-form model families (affine and
two-layer tanh) whose gradients are derived by hand and checked against
finite differences.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Optional, Sequence, Tuple

import numpy as np

from .rng import RngStream, STREAM_FLOW


class TrainingDiverged(RuntimeError):
    def __init__(self, step: int, loss: float):
        super().__init__(f"training diverged at step {step} (loss={loss})")
        self.step = step
        self.loss = loss


class GradientCheckFailed(RuntimeError):
    pass


@dataclass(frozen=True)
class FlowBatch:
    """Paired noise/data samples with times and optional conditions."""

    x0: np.ndarray            # (B, D)
    x1: np.ndarray            # (B, D)
    t: np.ndarray             # (B,)
    cond: Optional[np.ndarray] = None  # (B, C); None means C = 0

    def __post_init__(self):
        x0 = np.asarray(self.x0, dtype=np.float64)
        x1 = np.asarray(self.x1, dtype=np.float64)
        t = np.asarray(self.t, dtype=np.float64).reshape(-1)
        if x0.shape != x1.shape or x0.shape[0] != t.shape[0]:
            raise ValueError("batch dimensions disagree")
        if np.any(t < 0.0) or np.any(t > 1.0):
            raise ValueError("t must lie in [0, 1]")
        cond = self.cond
        cond = np.zeros((x0.shape[0], 0)) if cond is None else np.asarray(cond, dtype=np.float64)
        if cond.shape[0] != x0.shape[0]:
            raise ValueError("condition batch dimension disagrees")
        object.__setattr__(self, "x0", x0)
        object.__setattr__(self, "x1", x1)
        object.__setattr__(self, "t", t)
        object.__setattr__(self, "cond", cond)

    @property
    def size(self) -> int:
        return self.x0.shape[0]


@dataclass(frozen=True)
class GaussianLatentStats:
    """Diagonal Gaussian posterior summary: mean and log-variance."""

    mean: np.ndarray
    logvar: np.ndarray

    def __post_init__(self):
        mean = np.asarray(self.mean, dtype=np.float64).reshape(-1)
        logvar = np.asarray(self.logvar, dtype=np.float64).reshape(-1)
        if mean.shape != logvar.shape:
            raise ValueError("mean and logvar must have matching shapes")
        if not (np.all(np.isfinite(mean)) and np.all(np.isfinite(logvar))):
            raise ValueError("latent stats must be finite")
        object.__setattr__(self, "mean", mean)
        object.__setattr__(self, "logvar", logvar)


def interpolate_path(x0, x1, t):
    """x_t = (1 - t) * x0 + t * x1."""
    x0 = np.asarray(x0, dtype=np.float64)
    x1 = np.asarray(x1, dtype=np.float64)
    if x0.shape != x1.shape:
        raise ValueError("endpoint shapes disagree")
    t = np.asarray(t, dtype=np.float64)
    if t.ndim == 1:
        t = t[:, None]
    return (1.0 - t) * x0 + t * x1


def target_velocity(x0, x1):
    """Constant conditional-OT velocity x1 - x0."""
    x0 = np.asarray(x0, dtype=np.float64)
    x1 = np.asarray(x1, dtype=np.float64)
    if x0.shape != x1.shape:
        raise ValueError("endpoint shapes disagree")
    return x1 - x0


def _stack_inputs(x: np.ndarray, t: np.ndarray, cond: np.ndarray) -> np.ndarray:
    return np.concatenate([x, t[:, None], cond], axis=1)


class VelocityModel:
    """A differentiable map (x, t, cond) -> velocity with flat parameters."""

    dim: int
    cond_dim: int

    def get_params(self) -> np.ndarray:
        raise NotImplementedError

    def set_params(self, flat: np.ndarray) -> None:
        raise NotImplementedError

    def evaluate(self, x: np.ndarray, t: np.ndarray, cond: Optional[np.ndarray] = None
                 ) -> np.ndarray:
        raise NotImplementedError

    def loss_and_grad(self, batch: FlowBatch) -> Tuple[float, np.ndarray]:
        raise NotImplementedError


class CallableVelocity(VelocityModel):
    """Wrap an arbitrary (x, t, cond) -> velocity function; no parameters."""

    def __init__(self, fn: Callable, dim: int, cond_dim: int = 0):
        self.fn = fn
        self.dim = dim
        self.cond_dim = cond_dim

    def get_params(self) -> np.ndarray:
        return np.zeros(0)

    def set_params(self, flat: np.ndarray) -> None:
        if flat.size:
            raise ValueError("CallableVelocity has no parameters")

    def evaluate(self, x, t, cond=None):
        x = np.asarray(x, dtype=np.float64)
        t = np.asarray(t, dtype=np.float64).reshape(-1)
        cond = np.zeros((x.shape[0], 0)) if cond is None else np.asarray(cond)
        return np.asarray(self.fn(x, t, cond), dtype=np.float64)


class AffineVelocity(VelocityModel):
    """u = W [x; t; cond] + b."""

    def __init__(self, dim: int, cond_dim: int = 0, init: str = "zeros",
                 seed: int = 0):
        self.dim = dim
        self.cond_dim = cond_dim
        z = dim + 1 + cond_dim
        if init == "zeros":
            self.W = np.zeros((dim, z))
            self.b = np.zeros(dim)
        elif init == "random":
            gen = RngStream(seed, STREAM_FLOW).generator()
            self.W = gen.standard_normal((dim, z)) / np.sqrt(z)
            self.b = gen.standard_normal(dim) * 0.1
        else:
            raise ValueError(f"unknown init {init!r}")

    def get_params(self) -> np.ndarray:
        return np.concatenate([self.W.ravel(), self.b])

    def set_params(self, flat: np.ndarray) -> None:
        flat = np.asarray(flat, dtype=np.float64)
        nw = self.W.size
        self.W = flat[:nw].reshape(self.W.shape).copy()
        self.b = flat[nw:].copy()

    def evaluate(self, x, t, cond=None):
        x = np.asarray(x, dtype=np.float64)
        t = np.asarray(t, dtype=np.float64).reshape(-1)
        cond = np.zeros((x.shape[0], 0)) if cond is None else np.asarray(cond)
        return _stack_inputs(x, t, cond) @ self.W.T + self.b

    def loss_and_grad(self, batch: FlowBatch) -> Tuple[float, np.ndarray]:
        z = _stack_inputs(interpolate_path(batch.x0, batch.x1, batch.t),
                          batch.t, batch.cond)
        r = z @ self.W.T + self.b - target_velocity(batch.x0, batch.x1)
        loss = float(np.einsum("ij,ij->", r, r) / batch.size)
        g = 2.0 * r / batch.size
        return loss, np.concatenate([(g.T @ z).ravel(), g.sum(axis=0)])


class TanhMLPVelocity(VelocityModel):
    """u = W2 tanh(W1 [x; t; cond] + b1) + b2."""

    def __init__(self, dim: int, hidden: int = 32, cond_dim: int = 0, seed: int = 0):
        self.dim = dim
        self.hidden = hidden
        self.cond_dim = cond_dim
        z = dim + 1 + cond_dim
        gen = RngStream(seed, STREAM_FLOW).generator()
        self.W1 = gen.standard_normal((hidden, z)) / np.sqrt(z)
        self.b1 = np.zeros(hidden)
        self.W2 = gen.standard_normal((dim, hidden)) / np.sqrt(hidden)
        self.b2 = np.zeros(dim)

    def get_params(self) -> np.ndarray:
        return np.concatenate(
            [self.W1.ravel(), self.b1, self.W2.ravel(), self.b2])

    def set_params(self, flat: np.ndarray) -> None:
        flat = np.asarray(flat, dtype=np.float64)
        sizes = [self.W1.size, self.b1.size, self.W2.size, self.b2.size]
        parts = np.split(flat, np.cumsum(sizes)[:-1])
        self.W1 = parts[0].reshape(self.W1.shape).copy()
        self.b1 = parts[1].copy()
        self.W2 = parts[2].reshape(self.W2.shape).copy()
        self.b2 = parts[3].copy()

    def evaluate(self, x, t, cond=None):
        x = np.asarray(x, dtype=np.float64)
        t = np.asarray(t, dtype=np.float64).reshape(-1)
        cond = np.zeros((x.shape[0], 0)) if cond is None else np.asarray(cond)
        s = np.tanh(_stack_inputs(x, t, cond) @ self.W1.T + self.b1)
        return s @ self.W2.T + self.b2

    def loss_and_grad(self, batch: FlowBatch) -> Tuple[float, np.ndarray]:
        z = _stack_inputs(interpolate_path(batch.x0, batch.x1, batch.t),
                          batch.t, batch.cond)
        s = np.tanh(z @ self.W1.T + self.b1)
        r = s @ self.W2.T + self.b2 - target_velocity(batch.x0, batch.x1)
        loss = float(np.einsum("ij,ij->", r, r) / batch.size)
        g = 2.0 * r / batch.size
        dW2 = g.T @ s
        db2 = g.sum(axis=0)
        da = (g @ self.W2) * (1.0 - s * s)
        dW1 = da.T @ z
        db1 = da.sum(axis=0)
        return loss, np.concatenate([dW1.ravel(), db1, dW2.ravel(), db2])


def fm_loss(model: VelocityModel, batch: FlowBatch) -> float:
    """Mean squared velocity-regression error over the batch."""
    xt = interpolate_path(batch.x0, batch.x1, batch.t)
    u = model.evaluate(xt, batch.t, batch.cond)
    if not np.all(np.isfinite(u)):
        raise ValueError("model produced non-finite velocities")
    r = u - target_velocity(batch.x0, batch.x1)
    return float(np.einsum("ij,ij->", r, r) / batch.size)


def euler_sample(model: VelocityModel, x0: np.ndarray,
                 cond: Optional[np.ndarray] = None, steps: int = 100) -> np.ndarray:
    """Integrate dx/dt = u(x, t, cond) from t=0 to t=1 with forward Euler."""
    if steps < 1:
        raise ValueError("steps must be >= 1")
    x = np.asarray(x0, dtype=np.float64).copy()
    dt = 1.0 / steps
    times = np.empty(x.shape[0])
    for k in range(steps):
        times.fill(k * dt)
        x += dt * model.evaluate(x, times, cond)
        if not np.all(np.isfinite(x)):
            raise ValueError(f"non-finite state at integration step {k}")
    return x


def kl_diag_gaussian(stats: GaussianLatentStats) -> float:
    """KL(N(mean, diag(exp(logvar))) || N(0, I)) in closed form."""
    var = np.exp(stats.logvar)
    return float(0.5 * np.sum(stats.mean ** 2 + var - stats.logvar - 1.0))


def vae_loss(pred_sdf: np.ndarray, gt_sdf: np.ndarray,
             stats: GaussianLatentStats, gamma: float = 1e-3) -> float:
    """Reconstruction MSE plus gamma-weighted latent KL."""
    pred = np.asarray(pred_sdf, dtype=np.float64).reshape(-1)
    gt = np.asarray(gt_sdf, dtype=np.float64).reshape(-1)
    if pred.shape != gt.shape:
        raise ValueError("prediction/target lengths disagree")
    if gamma < 0.0:
        raise ValueError("gamma must be >= 0")
    return float(np.mean((pred - gt) ** 2) + gamma * kl_diag_gaussian(stats))


def check_gradients(model: VelocityModel, batch: FlowBatch,
                    eps: float = 1e-6) -> float:
    """Max relative error of analytic vs central-difference gradients."""
    base = model.get_params()
    _, analytic = model.loss_and_grad(batch)
    worst = 0.0
    for i in range(base.size):
        probe = base.copy()
        probe[i] = base[i] + eps
        model.set_params(probe)
        hi = fm_loss(model, batch)
        probe[i] = base[i] - eps
        model.set_params(probe)
        lo = fm_loss(model, batch)
        fd = (hi - lo) / (2.0 * eps)
        worst = max(worst, abs(analytic[i] - fd) / max(abs(analytic[i]), abs(fd), 1e-8))
    model.set_params(base)
    return worst


# Data samplers: callables (generator, n) -> (x0, x1, cond or None).

def gaussian_shift_sampler(shift: Sequence[float]) -> Callable:
    """Coupled pairs x1 = x0 + shift; transports N(0, I) to N(shift, I)."""
    shift = np.asarray(shift, dtype=np.float64)

    def sample(gen: np.random.Generator, n: int):
        x0 = gen.standard_normal((n, shift.shape[0]))
        return x0, x0 + shift, None

    return sample


def independent_gaussian_sampler(mean1: Sequence[float]) -> Callable:
    """Independent pairs x0 ~ N(0, I), x1 ~ N(mean1, I)."""
    mean1 = np.asarray(mean1, dtype=np.float64)

    def sample(gen: np.random.Generator, n: int):
        d = mean1.shape[0]
        return gen.standard_normal((n, d)), gen.standard_normal((n, d)) + mean1, None

    return sample


@dataclass
class TrainConfig:
    lr: float = 0.05
    steps: int = 500
    batch: int = 256
    seed: int = 0
    grad_check: bool = True
    grad_check_tol: float = 1e-4


@dataclass
class TrainResult:
    model: VelocityModel
    loss_trace: np.ndarray
    grad_check_error: Optional[float] = None


def train_toy(model: VelocityModel, sampler: Callable, config: TrainConfig) -> TrainResult:
    """Plain gradient descent on the velocity-regression loss.

    Verifies analytic gradients against central differences on the first
    batch before any update, records the pre-update loss each step, and
    raises TrainingDiverged when the loss becomes non-finite.
    """
    gen = RngStream(config.seed, STREAM_FLOW).generator()
    trace = np.empty(config.steps)
    check_err = None
    for step in range(config.steps):
        x0, x1, cond = sampler(gen, config.batch)
        t = gen.random(config.batch)
        batch = FlowBatch(x0, x1, t, cond)
        if step == 0 and config.grad_check and model.get_params().size:
            check_err = check_gradients(model, batch)
            if check_err >= config.grad_check_tol:
                raise GradientCheckFailed(
                    f"analytic gradient error {check_err:.3e} >= {config.grad_check_tol}")
        loss, grad = model.loss_and_grad(batch)
        if not np.isfinite(loss):
            raise TrainingDiverged(step, loss)
        trace[step] = loss
        if config.lr != 0.0:
            model.set_params(model.get_params() - config.lr * grad)
    return TrainResult(model, trace, check_err)
