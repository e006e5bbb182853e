"""One-hidden-layer parameter network trained on the ACCRUE loss.

The network maps standardized inputs to positive distribution parameters::

    theta = exp(clip(leaky_relu(W2 @ relu(W1 @ x + b1) + b2), -20, 20))

Output units follow the parameterisation used for data generation: the
Gaussian and two-piece Gaussian emit their scales directly, the asymmetric
Laplace emits ``(kappa, 1/lambda)``.  :func:`outputs_to_params` converts to
the storage order of :class:`~accrue.distributions.DistributionParams`.
"""
from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field

import numpy as np

from .distributions import DistributionFamily, DistributionParams, cdf_and_grad
from .scoring import _rs_sorted, crps_and_grad, rs_grad_sorted

log = logging.getLogger(__name__)

HIDDEN = 10
OUTPUT_CLAMP = 20.0


class TrainingError(RuntimeError):
    pass


@dataclass
class NetworkWeights:
    W1: np.ndarray
    b1: np.ndarray
    W2: np.ndarray
    b2: np.ndarray

    def __post_init__(self):
        self.W1 = np.asarray(self.W1, dtype=float)
        self.b1 = np.asarray(self.b1, dtype=float).ravel()
        self.W2 = np.asarray(self.W2, dtype=float)
        self.b2 = np.asarray(self.b2, dtype=float).ravel()
        h, d = self.W1.shape
        k = self.W2.shape[0]
        if self.b1.shape != (h,) or self.W2.shape != (k, h) or self.b2.shape != (k,):
            raise ValueError("inconsistent layer shapes")
        if k not in (1, 2):
            raise ValueError(f"network must have 1 or 2 outputs, got {k}")
        for name in ("W1", "b1", "W2", "b2"):
            if not np.all(np.isfinite(getattr(self, name))):
                raise ValueError(f"{name} contains non-finite entries")

    @property
    def d_in(self) -> int:
        return self.W1.shape[1]

    @property
    def n_out(self) -> int:
        return self.W2.shape[0]

    @property
    def hidden(self) -> int:
        return self.W1.shape[0]

    @classmethod
    def zeros(cls, d_in: int, n_out: int, hidden: int = HIDDEN) -> "NetworkWeights":
        return cls(
            np.zeros((hidden, d_in)), np.zeros(hidden), np.zeros((n_out, hidden)), np.zeros(n_out)
        )

    @classmethod
    def init(cls, d_in: int, n_out: int, rng: np.random.Generator, hidden: int = HIDDEN):
        """Fan-scaled uniform weights, zero biases."""
        lim1 = math.sqrt(6.0 / (d_in + hidden))
        lim2 = math.sqrt(6.0 / (hidden + n_out))
        W1 = rng.uniform(-lim1, lim1, size=(hidden, d_in))
        W2 = rng.uniform(-lim2, lim2, size=(n_out, hidden))
        return cls(W1, np.zeros(hidden), W2, np.zeros(n_out))

    def arrays(self) -> tuple[np.ndarray, ...]:
        return self.W1, self.b1, self.W2, self.b2

    def copy(self) -> "NetworkWeights":
        return NetworkWeights(*(a.copy() for a in self.arrays()))

    def flat(self) -> np.ndarray:
        return np.concatenate([a.ravel() for a in self.arrays()])

    def with_flat(self, v) -> "NetworkWeights":
        v = np.asarray(v, dtype=float)
        out, i = [], 0
        for a in self.arrays():
            out.append(v[i : i + a.size].reshape(a.shape))
            i += a.size
        return NetworkWeights(*out)


@dataclass
class TrainingConfig:
    learning_rate: float = 0.005
    batch_size: int = 100
    max_epochs: int = 1000
    patience: int = 10
    leaky_slope: float = 0.01
    adam_beta1: float = 0.9
    adam_beta2: float = 0.999
    adam_eps: float = 1e-8
    seed: int = 0

    def __post_init__(self):
        if not self.learning_rate > 0:
            raise ValueError("learning_rate must be positive")
        if self.batch_size < 2:
            raise ValueError("batch_size must be at least 2")
        if self.patience < 1:
            raise ValueError("patience must be at least 1")
        if self.max_epochs < 1:
            raise ValueError("max_epochs must be at least 1")


@dataclass
class Standardizer:
    mean: np.ndarray
    std: np.ndarray

    def __post_init__(self):
        self.mean = np.asarray(self.mean, dtype=float).ravel()
        self.std = np.maximum(np.asarray(self.std, dtype=float).ravel(), 1e-8)
        if self.mean.shape != self.std.shape:
            raise ValueError("mean and std must have the same length")

    @classmethod
    def fit(cls, x) -> "Standardizer":
        x = np.asarray(x, dtype=float)
        if x.ndim == 1:
            x = x[:, None]
        return cls(x.mean(axis=0), x.std(axis=0))

    @classmethod
    def identity(cls, d: int) -> "Standardizer":
        return cls(np.zeros(d), np.ones(d))

    def __call__(self, x) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        if x.shape[-1] != self.mean.shape[0]:
            raise ValueError(
                f"input has {x.shape[-1]} feature(s), model expects {self.mean.shape[0]}"
            )
        return (x - self.mean) / self.std


# --------------------------------------------------------------------------
# forward pass


def _as_batch(w: NetworkWeights, x) -> np.ndarray:
    x = np.asarray(x, dtype=float)
    if x.ndim == 1:
        x = x[None, :] if w.d_in > 1 or x.shape[0] == 1 else x[:, None]
    if x.ndim != 2 or x.shape[1] != w.d_in:
        raise ValueError(f"input dimension {x.shape[-1]} does not match network ({w.d_in})")
    return x


def _forward(w, x, slope):
    pre_h = x @ w.W1.T + w.b1
    h = np.maximum(pre_h, 0.0)
    a = h @ w.W2.T + w.b2
    leaky = np.where(a > 0, a, slope * a)
    c = np.clip(leaky, -OUTPUT_CLAMP, OUTPUT_CLAMP)
    out = np.exp(c)
    return pre_h, h, a, leaky, out


def outputs_to_params(family, out: np.ndarray) -> np.ndarray:
    """Network outputs -> parameter array in DistributionParams order."""
    family = DistributionFamily.parse(family)
    if family is DistributionFamily.ASYMMETRIC_LAPLACE:
        return np.stack([1.0 / out[:, 1], out[:, 0]], axis=1)
    return out


def params_to_outputs(family, theta: np.ndarray) -> np.ndarray:
    family = DistributionFamily.parse(family)
    if family is DistributionFamily.ASYMMETRIC_LAPLACE:
        return np.stack([theta[:, 1], 1.0 / theta[:, 0]], axis=1)
    return theta


def _check_family(family, w: NetworkWeights) -> DistributionFamily:
    family = DistributionFamily.parse(family)
    if not family.learnable:
        raise ValueError(f"{family.value} is not a learnable family")
    if family.arity != w.n_out:
        raise ValueError(f"{family.value} needs {family.arity} output(s), network has {w.n_out}")
    return family


def forward_array(w: NetworkWeights, x_std, family, leaky_slope: float = 0.01) -> np.ndarray:
    """Parameter array ``(n, arity)`` for a batch of standardized inputs."""
    family = _check_family(family, w)
    return outputs_to_params(family, _forward(w, _as_batch(w, x_std), leaky_slope)[-1])


def forward(w: NetworkWeights, x_std, family, leaky_slope: float = 0.01) -> DistributionParams:
    """Distribution parameters for one standardized input vector."""
    x = np.asarray(x_std, dtype=float).ravel()
    if x.shape[0] != w.d_in:
        raise ValueError(f"input dimension {x.shape[0]} does not match network ({w.d_in})")
    theta = forward_array(w, x[None, :], family, leaky_slope)[0]
    return DistributionParams(DistributionFamily.parse(family), tuple(theta))


# --------------------------------------------------------------------------
# loss and gradient


def _loss_terms(family, theta, eps):
    crps, dcrps = crps_and_grad(family, eps, theta)
    u, du = cdf_and_grad(family, eps, theta)
    order = np.argsort(u, kind="stable")
    return crps, dcrps, u, du, order


def _prepare(w, x_std, eps, family):
    family = _check_family(family, w)
    x = _as_batch(w, x_std)
    eps = np.asarray(eps, dtype=float).ravel()
    if eps.shape[0] != x.shape[0]:
        raise ValueError("inputs and errors differ in length")
    if eps.shape[0] < 2:
        raise ValueError("a batch needs at least two pairs")
    return family, x, eps


def accrue_batch_loss(w, x_std, eps, family, beta, leaky_slope: float = 0.01) -> float:
    """beta * mean CRPS + (1 - beta) * RS of the batch's PIT values."""
    family, x, eps = _prepare(w, x_std, eps, family)
    theta = outputs_to_params(family, _forward(w, x, leaky_slope)[-1])
    crps, _, u, _, order = _loss_terms(family, theta, eps)
    b = float(beta)
    return float(b * np.mean(crps) + (1.0 - b) * _rs_sorted(u[order]))


def loss_and_gradient(w, x_std, eps, family, beta, leaky_slope: float = 0.01):
    """ACCRUE loss and its gradient with the PIT sort order held fixed.

    The gradient is a ``(W1, b1, W2, b2)`` tuple of plain arrays.
    """
    family, x, eps = _prepare(w, x_std, eps, family)
    b = float(beta)
    n = eps.shape[0]
    pre_h, h, a, leaky, out = _forward(w, x, leaky_slope)
    theta = outputs_to_params(family, out)
    crps, dcrps, u, du, order = _loss_terms(family, theta, eps)
    u_sorted = u[order]
    loss = b * np.mean(crps) + (1.0 - b) * _rs_sorted(u_sorted)

    drs = np.empty(n)
    drs[order] = rs_grad_sorted(u_sorted)
    g_theta = (b / n) * dcrps + (1.0 - b) * drs[:, None] * du

    if family is DistributionFamily.ASYMMETRIC_LAPLACE:
        # outputs are (kappa, 1/lambda)
        lam = theta[:, 0]
        g_out = np.stack([g_theta[:, 1], -g_theta[:, 0] * lam * lam], axis=1)
    else:
        g_out = g_theta
    inside = np.abs(leaky) < OUTPUT_CLAMP
    g_a = g_out * out * np.where(a > 0, 1.0, leaky_slope) * inside
    g_W2 = g_a.T @ h
    g_b2 = g_a.sum(axis=0)
    g_pre = (g_a @ w.W2) * (pre_h > 0)
    g_W1 = g_pre.T @ x
    g_b1 = g_pre.sum(axis=0)
    return float(loss), (g_W1, g_b1, g_W2, g_b2)


def accrue_gradient(w, x_std, eps, family, beta, leaky_slope: float = 0.01) -> NetworkWeights:
    """Gradient of :func:`accrue_batch_loss` in the shape of the weights."""
    return NetworkWeights(*loss_and_gradient(w, x_std, eps, family, beta, leaky_slope)[1])


# --------------------------------------------------------------------------
# training


@dataclass
class TrainingResult:
    weights: NetworkWeights
    history: list[float] = field(default_factory=list)
    best_epoch: int = 0

    @property
    def best_loss(self) -> float:
        return self.history[self.best_epoch]


def _batches(n: int, size: int, rng: np.random.Generator):
    perm = rng.permutation(n)
    starts = list(range(0, n, size))
    if len(starts) > 1 and n - starts[-1] < 2:
        starts.pop()  # fold a single leftover row into the previous batch
    ends = starts[1:] + [n]
    return [perm[s:e] for s, e in zip(starts, ends)]


def train(x_train, eps_train, x_val, eps_val, family, beta, cfg: TrainingConfig,
          init: NetworkWeights | None = None) -> TrainingResult:
    """Adam on shuffled mini-batches with early stopping on validation ACCRUE.

    Inputs must already be standardized.  Returns the snapshot with the
    lowest validation loss together with the per-epoch validation history.
    """
    family = DistributionFamily.parse(family)
    if not family.learnable:
        raise ValueError(f"{family.value} is not a learnable family")
    x_train = np.asarray(x_train, dtype=float)
    x_val = np.asarray(x_val, dtype=float)
    x_train = x_train[:, None] if x_train.ndim == 1 else x_train
    x_val = x_val[:, None] if x_val.ndim == 1 else x_val
    eps_train = np.asarray(eps_train, dtype=float).ravel()
    eps_val = np.asarray(eps_val, dtype=float).ravel()
    if len(eps_train) < 2 or len(eps_val) < 2:
        raise ValueError("training and validation partitions need at least two pairs each")

    rng = np.random.default_rng(cfg.seed)
    w = init.copy() if init is not None else NetworkWeights.init(x_train.shape[1], family.arity, rng)
    params = list(w.arrays())
    m1 = [np.zeros_like(p) for p in params]
    m2 = [np.zeros_like(p) for p in params]
    b1, b2, lr, eps_adam = cfg.adam_beta1, cfg.adam_beta2, cfg.learning_rate, cfg.adam_eps
    step = 0

    history: list[float] = []
    best_w, best_loss, best_epoch, stale = w.copy(), math.inf, 0, 0
    for epoch in range(cfg.max_epochs):
        for idx in _batches(len(eps_train), cfg.batch_size, rng):
            loss, g = loss_and_gradient(w, x_train[idx], eps_train[idx], family, beta,
                                        cfg.leaky_slope)
            if not math.isfinite(loss):
                raise TrainingError(f"non-finite training loss at epoch {epoch + 1}")
            step += 1
            c1 = 1.0 - b1**step
            c2 = 1.0 - b2**step
            for p, gp, mm, vv in zip(params, g, m1, m2):
                mm *= b1
                mm += (1.0 - b1) * gp
                vv *= b2
                vv += (1.0 - b2) * gp * gp
                p -= lr * (mm / c1) / (np.sqrt(vv / c2) + eps_adam)
        val = accrue_batch_loss(w, x_val, eps_val, family, beta, cfg.leaky_slope)
        if not math.isfinite(val):
            raise TrainingError(f"non-finite validation loss at epoch {epoch + 1}")
        history.append(val)
        if val < best_loss - 1e-12:
            best_w, best_loss, best_epoch, stale = w.copy(), val, epoch, 0
        else:
            stale += 1
            if stale >= cfg.patience:
                break
    log.debug("trained %d epochs, best %.6g at epoch %d", len(history), best_loss, best_epoch + 1)
    return TrainingResult(best_w, history, best_epoch)
