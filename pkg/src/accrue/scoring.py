"""Closed-form CRPS, reliability scores and the ACCRUE combination.

The CRPS functions broadcast over numpy arrays.  ``*_crps_grad`` variants
return the score together with its partial derivatives with respect to the
distribution parameters; the training code relies on them.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np
from scipy import special

from .distributions import (
    PARAM_FLOOR,
    DistributionFamily,
    DistributionParams,
    _cdf,
    validate_theta,
)

_SQRT2 = math.sqrt(2.0)
_SQRTPI = math.sqrt(math.pi)
_SQRT2PI = math.sqrt(2.0 * math.pi)
BETA_GRID = tuple(round(0.1 * i, 1) for i in range(1, 10))


@dataclass(frozen=True)
class ScorePair:
    crps_mean: float
    rs: float

    def __post_init__(self):
        for name in ("crps_mean", "rs"):
            v = getattr(self, name)
            if not (math.isfinite(v) and v >= 0):
                raise ValueError(f"{name} must be finite and non-negative, got {v}")

    @property
    def distance(self) -> float:
        """Euclidean norm of (CRPS, RS), the grid-search criterion."""
        return math.hypot(self.crps_mean, self.rs)


@dataclass(frozen=True)
class BetaWeight:
    value: float

    def __post_init__(self):
        if not 0.0 < self.value < 1.0:
            raise ValueError(f"beta must lie in (0, 1), got {self.value}")

    def __float__(self):
        return float(self.value)


def _positive(name, *arrays):
    for a in arrays:
        a = np.asarray(a, dtype=float)
        if not np.all(np.isfinite(a)) or np.any(a < PARAM_FLOOR):
            raise ValueError(f"{name} must be finite and >= {PARAM_FLOOR}")


def _finite(eps):
    eps = np.asarray(eps, dtype=float)
    if not np.all(np.isfinite(eps)):
        raise ValueError("errors must be finite")
    return eps


def _std_normal_pdf(z):
    return np.exp(-0.5 * z * z) / _SQRT2PI


def _std_normal_cdf(z):
    return 0.5 * special.erfc(-z / _SQRT2)


def _scalar(out):
    return float(out) if np.ndim(out) == 0 else out


# --------------------------------------------------------------------------
# Gaussian


def _gaussian_crps_grad(eps, sigma):
    z = eps / sigma
    e = np.exp(-0.5 * z * z)
    crps = sigma * (z * special.erf(z / _SQRT2) + math.sqrt(2.0 / math.pi) * e - 1.0 / _SQRTPI)
    dsigma = math.sqrt(2.0 / math.pi) * e - 1.0 / _SQRTPI
    return crps, dsigma


def gaussian_crps(eps, sigma):
    """CRPS of N(0, sigma^2) against the observed error ``eps``."""
    _positive("sigma", sigma)
    crps, _ = _gaussian_crps_grad(_finite(eps), np.asarray(sigma, dtype=float))
    return _scalar(crps)


# --------------------------------------------------------------------------
# two-piece Gaussian


def _mirror(eps, s1, s2):
    """Reflect positive errors so only the left-branch formula is needed.

    Both two-piece CRPS forms satisfy ``crps(e; s1, s2) == crps(-e; s2, s1)``.
    Returns the reflected error, the scale on the error's side, the other
    scale and the reflection mask.
    """
    eps, s1, s2 = np.broadcast_arrays(eps, s1, s2)
    right = eps > 0
    return -np.abs(eps), np.where(right, s2, s1), np.where(right, s1, s2), right


def _tpg_crps_grad(eps, s1, s2):
    """Value and (d/dsigma1, d/dsigma2) of the two-piece Gaussian CRPS."""
    e, a, b, right = _mirror(eps, s1, s2)
    t = a + b
    t2 = t * t
    z = e / a
    cdf = _std_normal_cdf(z)
    h = z * cdf + _std_normal_pdf(z)  # dh/dz = cdf
    c = 2.0 / _SQRTPI
    num = _SQRT2 * b * (b * b - a * a) - (a**3 + b**3)
    crps = 4.0 * a * a / t * h - e + c * num / t2
    d_own = (
        (8.0 * a / t - 4.0 * a * a / t2) * h
        - 4.0 * e * cdf / t
        + c * ((-2.0 * _SQRT2 * a * b - 3.0 * a * a) / t2 - 2.0 * num / (t2 * t))
    )
    d_other = -4.0 * a * a / t2 * h + c * (
        (3.0 * _SQRT2 * b * b - _SQRT2 * a * a - 3.0 * b * b) / t2 - 2.0 * num / (t2 * t)
    )
    return crps, np.where(right, d_other, d_own), np.where(right, d_own, d_other)


def tpg_crps(eps, sigma1, sigma2):
    """CRPS of the two-piece Gaussian with left/right scales ``sigma1``/``sigma2``."""
    _positive("sigma1, sigma2", sigma1, sigma2)
    crps, _, _ = _tpg_crps_grad(
        _finite(eps), np.asarray(sigma1, dtype=float), np.asarray(sigma2, dtype=float)
    )
    return _scalar(crps)


# --------------------------------------------------------------------------
# asymmetric Laplace


def _two_exp_crps_grad(eps, s1, s2):
    """CRPS of back-to-back exponentials with left/right scales ``s1``/``s2``."""
    e, a, b, right = _mirror(eps, s1, s2)
    t = a + b
    t2 = t * t
    em1 = np.expm1(e / a)  # e <= 0, no overflow
    cubes = (a**3 + b**3) / (2.0 * t2)
    crps = -e + 2.0 * a * a / t * em1 + cubes
    d_own = (
        (4.0 * a / t - 2.0 * a * a / t2) * em1
        - 2.0 * e * (em1 + 1.0) / t
        + 1.5 * a * a / t2
        - 2.0 * cubes / t
    )
    d_other = -2.0 * a * a / t2 * em1 + 1.5 * b * b / t2 - 2.0 * cubes / t
    return crps, np.where(right, d_other, d_own), np.where(right, d_own, d_other)


def _al_crps_grad(eps, lam, kap):
    """Value and (d/dlam, d/dkappa) of the asymmetric Laplace CRPS.

    The left and right exponential scales are ``kappa/lam`` and ``1/(lam*kappa)``.
    """
    s1 = kap / lam
    s2 = 1.0 / (lam * kap)
    crps, g1, g2 = _two_exp_crps_grad(eps, s1, s2)
    dlam = -(g1 * s1 + g2 * s2) / lam
    dkap = (g1 * s1 - g2 * s2) / kap
    return crps, dlam, dkap


def al_crps(eps, lam, kappa):
    """CRPS of the asymmetric Laplace with scale ``lam`` and asymmetry ``kappa``."""
    _positive("lambda, kappa", lam, kappa)
    crps, _, _ = _al_crps_grad(
        _finite(eps), np.asarray(lam, dtype=float), np.asarray(kappa, dtype=float)
    )
    return _scalar(crps)


# --------------------------------------------------------------------------
# family dispatch


def crps_and_grad(family, eps, theta):
    """Per-pair CRPS ``(n,)`` and its parameter gradient ``(n, arity)``."""
    family = DistributionFamily.parse(family)
    if family is DistributionFamily.GAUSSIAN:
        crps, d = _gaussian_crps_grad(eps, theta[:, 0])
        return crps, d[:, None]
    if family is DistributionFamily.TWO_PIECE_GAUSSIAN:
        crps, d1, d2 = _tpg_crps_grad(eps, theta[:, 0], theta[:, 1])
    elif family is DistributionFamily.ASYMMETRIC_LAPLACE:
        crps, d1, d2 = _al_crps_grad(eps, theta[:, 0], theta[:, 1])
    else:
        raise ValueError(f"no closed-form CRPS for family {family.value}")
    return crps, np.stack([d1, d2], axis=1)


def crps_array(family, eps, theta) -> np.ndarray:
    family = DistributionFamily.parse(family)
    theta = validate_theta(family, theta)
    eps = np.broadcast_to(_finite(eps), (theta.shape[0],)).astype(float)
    return crps_and_grad(family, eps, theta)[0]


def _group_params(params: Sequence[DistributionParams]):
    """Map each family to (row indices, stacked parameter array)."""
    groups: dict[DistributionFamily, list[int]] = {}
    for i, d in enumerate(params):
        groups.setdefault(d.family, []).append(i)
    return {
        fam: (np.asarray(idx), np.array([params[i].params for i in idx], dtype=float))
        for fam, idx in groups.items()
    }


def _per_pair(func, errors, params):
    errors = _finite(errors).ravel()
    if len(errors) != len(params):
        raise ValueError(f"length mismatch: {len(errors)} errors, {len(params)} params")
    if len(errors) == 0:
        raise ValueError("need at least one pair")
    out = np.empty(len(errors))
    for fam, (idx, theta) in _group_params(params).items():
        out[idx] = func(fam, errors[idx], theta)
    return out


def mean_crps(errors, params: Sequence[DistributionParams]) -> float:
    """Average closed-form CRPS over observation/prediction pairs."""
    return float(np.mean(_per_pair(crps_array, errors, params)))


# --------------------------------------------------------------------------
# reliability


def _rs_sorted(u):
    n = u.shape[0]
    i = np.arange(1, n, dtype=float)
    return 1.0 / 3.0 - u[-1] + np.dot(u, u) / n + np.dot(i * i, np.diff(u)) / (n * n)


def rs_grad_sorted(u):
    """Derivative of the uniform reliability score w.r.t. each sorted PIT value."""
    n = u.shape[0]
    j = np.arange(1, n + 1, dtype=float)
    return 2.0 / n * (u - (2.0 * j - 1.0) / (2.0 * n))


def reliability_score_uniform(u_sorted) -> float:
    """Integrated squared gap between the uniform CDF and the empirical PIT CDF.

    Parameters
    ----------
    u_sorted : array_like
        PIT values in ascending order, each in [0, 1].
    """
    u = np.asarray(u_sorted, dtype=float).ravel()
    if u.size == 0:
        raise ValueError("need at least one PIT value")
    if not np.all(np.isfinite(u)) or u[0] < 0.0 or u[-1] > 1.0:
        raise ValueError("PIT values must lie in [0, 1]")
    if np.any(np.diff(u) < 0):
        raise ValueError("PIT values must be sorted ascending")
    return float(_rs_sorted(u))


def gaussian_rs(eta_sorted) -> float:
    """Reliability score of standardized errors ``eps / (sqrt(2) sigma)``.

    The expected CDF is ``(1 + erf(eta)) / 2``.
    """
    eta = _finite(eta_sorted).ravel()
    if eta.size == 0:
        raise ValueError("need at least one standardized error")
    if np.any(np.diff(eta) < 0):
        raise ValueError("standardized errors must be sorted ascending")
    n = eta.size
    i = np.arange(1, n + 1, dtype=float)
    terms = (
        eta / n * (special.erf(eta) + 1.0)
        - eta / (n * n) * (2.0 * i - 1.0)
        + np.exp(-eta * eta) / (_SQRTPI * n)
    )
    return float(np.sum(terms) - 1.0 / _SQRT2PI)


def pit_transform(errors, params: Sequence[DistributionParams], return_order: bool = False):
    """Map errors through their predictive CDFs and sort ascending.

    With ``return_order=True`` the stable sort permutation is returned too,
    so ``u_sorted == u_raw[order]``.
    """
    u = _per_pair(lambda fam, e, th: _cdf(fam, e, th), errors, params)
    order = np.argsort(u, kind="stable")
    return (u[order], order) if return_order else u[order]


def pit_array(family, eps, theta, return_order: bool = False):
    family = DistributionFamily.parse(family)
    theta = validate_theta(family, theta)
    eps = np.broadcast_to(_finite(eps), (theta.shape[0],)).astype(float)
    u = _cdf(family, eps, theta)
    order = np.argsort(u, kind="stable")
    return (u[order], order) if return_order else u[order]


# --------------------------------------------------------------------------
# ACCRUE


def accrue_loss(s: ScorePair, beta) -> float:
    b = float(beta)
    return b * s.crps_mean + (1.0 - b) * s.rs


def score_pair(family, eps, theta) -> ScorePair:
    """Mean CRPS and uniform reliability score for one family's predictions."""
    return ScorePair(
        float(np.mean(crps_array(family, eps, theta))),
        reliability_score_uniform(pit_array(family, eps, theta)),
    )


def gaussian_min_crps(errors) -> float:
    errors = _finite(errors).ravel()
    return math.sqrt(math.log(4.0)) / (2.0 * errors.size) * float(np.sum(errors))


def gaussian_min_rs(n: int) -> float:
    """Reliability score of ideally placed standardized errors for ``n`` pairs."""
    i = np.arange(1, n + 1, dtype=float)
    eta = special.erfinv((2.0 * i - 1.0) / n - 1.0)
    return float(np.sum(np.exp(-eta * eta)) / (_SQRTPI * n) - 1.0 / _SQRT2PI)


def beta_from_minima(crps_min: float, rs_min: float) -> BetaWeight:
    crps_min = max(crps_min, np.finfo(float).eps)
    rs_min = max(rs_min, 0.0)
    beta = rs_min / (crps_min + rs_min)
    return BetaWeight(min(max(beta, 0.01), 0.99))


def gaussian_beta_heuristic(errors) -> BetaWeight:
    """Closed-form accuracy/reliability weight for Gaussian uncertainty."""
    errors = _finite(errors).ravel()
    if errors.size < 2:
        raise ValueError("the Gaussian beta heuristic needs at least two errors")
    return beta_from_minima(gaussian_min_crps(errors), gaussian_min_rs(errors.size))
