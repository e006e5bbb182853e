"""Shared builders for the test suite."""
import numpy as np

import oracles as O
from accrue import neural as N
from accrue.distributions import DistributionFamily

ACCEPTANCE_LINES: list[str] = []

LEARNABLE = (
    DistributionFamily.GAUSSIAN,
    DistributionFamily.TWO_PIECE_GAUSSIAN,
    DistributionFamily.ASYMMETRIC_LAPLACE,
)


def gradient_case(seed: int, n: int = 8):
    """Random small network, batch and beta for finite-difference checks."""
    rng = np.random.default_rng(seed)
    family = LEARNABLE[seed % 3]
    d = int(rng.integers(1, 4))
    w = N.NetworkWeights.init(d, family.arity, rng)
    w = N.NetworkWeights(w.W1, rng.normal(size=w.hidden) * 0.3, w.W2,
                         rng.normal(size=family.arity) * 0.3)
    x = rng.normal(size=(n, d))
    eps = rng.normal(size=n)
    beta = float(rng.uniform(0.05, 0.95))
    return family, w, x, eps, beta


def gradient_relative_error(family, w, x, eps, beta) -> float:
    """Largest relative gap between the analytic gradient and central differences.

    Coordinates where both values are below 1e-10 in magnitude are skipped.
    """
    g = N.accrue_gradient(w, x, eps, family, beta).flat()
    fd = O.central_difference(
        lambda v: N.accrue_batch_loss(w.with_flat(v), x, eps, family, beta), w.flat(), h=1e-5
    )
    keep = (np.abs(g) >= 1e-10) | (np.abs(fd) >= 1e-10)
    if not keep.any():
        return 0.0
    return float(np.max(np.abs(g - fd)[keep] / np.maximum(np.abs(g), np.abs(fd))[keep]))
