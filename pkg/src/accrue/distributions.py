"""Error distribution families centred on a point prediction.

All densities and CDFs are written for the error ``eps = y - m`` so the mode
of every learnable family sits at zero.  Parameters are stored in a fixed
order per family:

==================  =====================
family              params
==================  =====================
gaussian            (sigma,)
tpg                 (sigma1, sigma2)
al                  (lam, kappa)
gamma               (alpha, rate)
==================  =====================

The scalar functions (:func:`pdf`, :func:`cdf`, ...) take a
:class:`DistributionParams`.  The ``*_array`` variants take a family and an
``(n, k)`` parameter array and are what the scoring and training code use.
"""
from __future__ import annotations

import enum
import math
from dataclasses import dataclass

import numpy as np
from scipy import special

PARAM_FLOOR = 1e-12
_SQRT2 = math.sqrt(2.0)
_SQRT2PI = math.sqrt(2.0 * math.pi)
_EXP_CLAMP = 700.0


class DistributionFamily(str, enum.Enum):
    GAUSSIAN = "gaussian"
    TWO_PIECE_GAUSSIAN = "tpg"
    ASYMMETRIC_LAPLACE = "al"
    GAMMA = "gamma"

    @property
    def arity(self) -> int:
        return 1 if self is DistributionFamily.GAUSSIAN else 2

    @property
    def learnable(self) -> bool:
        return self is not DistributionFamily.GAMMA

    @classmethod
    def parse(cls, value) -> "DistributionFamily":
        if isinstance(value, cls):
            return value
        key = str(value).strip().lower()
        aliases = {
            "gaussian": cls.GAUSSIAN,
            "normal": cls.GAUSSIAN,
            "tpg": cls.TWO_PIECE_GAUSSIAN,
            "twopiecegaussian": cls.TWO_PIECE_GAUSSIAN,
            "two_piece_gaussian": cls.TWO_PIECE_GAUSSIAN,
            "al": cls.ASYMMETRIC_LAPLACE,
            "asymmetriclaplace": cls.ASYMMETRIC_LAPLACE,
            "asymmetric_laplace": cls.ASYMMETRIC_LAPLACE,
            "gamma": cls.GAMMA,
        }
        try:
            return aliases[key]
        except KeyError:
            raise ValueError(f"unknown distribution family {value!r}") from None


Family = DistributionFamily


@dataclass(frozen=True)
class DistributionParams:
    """A family tag plus its strictly positive parameter vector."""

    family: DistributionFamily
    params: tuple[float, ...]

    def __post_init__(self):
        family = DistributionFamily.parse(self.family)
        object.__setattr__(self, "family", family)
        params = tuple(float(p) for p in self.params)
        object.__setattr__(self, "params", params)
        if len(params) != family.arity:
            raise ValueError(
                f"{family.value} takes {family.arity} parameter(s), got {len(params)}"
            )
        for p in params:
            if not math.isfinite(p) or p < PARAM_FLOOR:
                raise ValueError(f"parameters must be finite and >= {PARAM_FLOOR}: {params}")

    @classmethod
    def gaussian(cls, sigma: float) -> "DistributionParams":
        return cls(DistributionFamily.GAUSSIAN, (sigma,))

    @classmethod
    def two_piece_gaussian(cls, sigma1: float, sigma2: float) -> "DistributionParams":
        return cls(DistributionFamily.TWO_PIECE_GAUSSIAN, (sigma1, sigma2))

    @classmethod
    def asymmetric_laplace(cls, lam: float, kappa: float) -> "DistributionParams":
        return cls(DistributionFamily.ASYMMETRIC_LAPLACE, (lam, kappa))

    @classmethod
    def gamma(cls, alpha: float, rate: float) -> "DistributionParams":
        return cls(DistributionFamily.GAMMA, (alpha, rate))

    def as_array(self) -> np.ndarray:
        return np.asarray(self.params, dtype=float).reshape(1, -1)


def validate_theta(family: DistributionFamily, theta) -> np.ndarray:
    """Coerce ``theta`` to an ``(n, arity)`` float array and check positivity."""
    family = DistributionFamily.parse(family)
    theta = np.asarray(theta, dtype=float)
    if theta.ndim == 1:
        theta = theta.reshape(-1, family.arity) if family.arity > 1 else theta[:, None]
    if theta.ndim != 2 or theta.shape[1] != family.arity:
        raise ValueError(f"{family.value} parameters must have shape (n, {family.arity})")
    if not np.all(np.isfinite(theta)) or np.any(theta < PARAM_FLOOR):
        raise ValueError(f"parameters must be finite and >= {PARAM_FLOOR}")
    return theta


def _check_finite(eps):
    eps = np.asarray(eps, dtype=float)
    if not np.all(np.isfinite(eps)):
        raise ValueError("error values must be finite")
    return eps


def _clamped_exp(z):
    return np.exp(np.clip(z, -_EXP_CLAMP, _EXP_CLAMP))


# --------------------------------------------------------------------------
# vectorised kernels; no validation, callers guarantee shapes and positivity


def _pdf(family, eps, theta):
    if family is DistributionFamily.GAUSSIAN:
        s = theta[:, 0]
        return np.exp(-0.5 * (eps / s) ** 2) / (_SQRT2PI * s)
    if family is DistributionFamily.TWO_PIECE_GAUSSIAN:
        s1, s2 = theta[:, 0], theta[:, 1]
        scale = np.where(eps <= 0, s1, s2)
        return 2.0 / (_SQRT2PI * (s1 + s2)) * np.exp(-0.5 * (eps / scale) ** 2)
    if family is DistributionFamily.ASYMMETRIC_LAPLACE:
        lam, kap = theta[:, 0], theta[:, 1]
        norm = lam / (kap + 1.0 / kap)
        rate = np.where(eps <= 0, lam / kap, -lam * kap)
        return norm * _clamped_exp(rate * eps)
    alpha, rate = theta[:, 0], theta[:, 1]
    pos = np.where(eps > 0, eps, 1.0)
    logp = alpha * np.log(rate) - special.gammaln(alpha) + (alpha - 1) * np.log(pos) - rate * pos
    out = np.where(eps > 0, np.exp(logp), 0.0)
    # density at the boundary: infinite for alpha < 1, rate for alpha == 1
    at_zero = np.where(alpha < 1, np.inf, np.where(alpha == 1, rate, 0.0))
    return np.where(eps == 0, at_zero, out)


def _cdf(family, eps, theta):
    if family is DistributionFamily.GAUSSIAN:
        return 0.5 * special.erfc(-eps / (_SQRT2 * theta[:, 0]))
    if family is DistributionFamily.TWO_PIECE_GAUSSIAN:
        s1, s2 = theta[:, 0], theta[:, 1]
        tot = s1 + s2
        left = s1 / tot * special.erfc(-eps / (_SQRT2 * s1))
        right = 1.0 - s2 / tot * special.erfc(eps / (_SQRT2 * s2))
        return np.where(eps <= 0, left, right)
    if family is DistributionFamily.ASYMMETRIC_LAPLACE:
        lam, kap = theta[:, 0], theta[:, 1]
        k2 = kap * kap
        neg = np.minimum(eps, 0.0)
        pos = np.maximum(eps, 0.0)
        left = k2 / (1.0 + k2) * _clamped_exp(lam / kap * neg)
        right = 1.0 - _clamped_exp(-lam * kap * pos) / (1.0 + k2)
        return np.where(eps <= 0, left, right)
    alpha, rate = theta[:, 0], theta[:, 1]
    return special.gammainc(alpha, rate * np.maximum(eps, 0.0))


def _quantile(family, p, theta):
    if family is DistributionFamily.GAUSSIAN:
        return -_SQRT2 * theta[:, 0] * special.erfcinv(2.0 * p)
    if family is DistributionFamily.TWO_PIECE_GAUSSIAN:
        s1, s2 = theta[:, 0], theta[:, 1]
        tot = s1 + s2
        split = s1 / tot
        # clip keeps the unused branch inside erfcinv's domain
        left = -_SQRT2 * s1 * special.erfcinv(np.clip(p * tot / s1, 0.0, 2.0))
        right = _SQRT2 * s2 * special.erfcinv(np.clip((1.0 - p) * tot / s2, 0.0, 2.0))
        return np.where(p <= split, left, right)
    if family is DistributionFamily.ASYMMETRIC_LAPLACE:
        lam, kap = theta[:, 0], theta[:, 1]
        k2 = kap * kap
        split = k2 / (1.0 + k2)
        with np.errstate(divide="ignore", invalid="ignore"):
            left = kap / lam * np.log(p * (1.0 + k2) / k2)
            right = -np.log((1.0 - p) * (1.0 + k2)) / (lam * kap)
        return np.where(p <= split, left, right)
    alpha, rate = theta[:, 0], theta[:, 1]
    return special.gammaincinv(alpha, p) / rate


def cdf_and_grad(family, eps, theta):
    """CDF values and their derivatives with respect to each parameter.

    Returns ``(u, du)`` with ``u`` of shape ``(n,)`` and ``du`` of shape
    ``(n, arity)``.  Only the learnable families are supported.
    """
    family = DistributionFamily.parse(family)
    if family is DistributionFamily.GAUSSIAN:
        s = theta[:, 0]
        z = eps / s
        u = 0.5 * special.erfc(-z / _SQRT2)
        dens = np.exp(-0.5 * z * z) / (_SQRT2PI * s)
        return u, (-z * dens)[:, None]
    if family is DistributionFamily.TWO_PIECE_GAUSSIAN:
        s1, s2 = theta[:, 0], theta[:, 1]
        tot = s1 + s2
        left = eps <= 0
        scale = np.where(left, s1, s2)
        z = eps / scale
        g = np.exp(-0.5 * z * z) * (2.0 / _SQRT2PI)  # d erf(z/sqrt2) / dz
        erfc_l = special.erfc(-z / _SQRT2)  # 1 + erf(z/sqrt2)
        erfc_r = special.erfc(z / _SQRT2)  # 1 - erf(z/sqrt2)
        u = np.where(left, s1 / tot * erfc_l, 1.0 - s2 / tot * erfc_r)
        t2 = tot * tot
        d1 = np.where(left, s2 / t2 * erfc_l - s1 / tot * g * z / s1, s2 / t2 * erfc_r)
        d2 = np.where(left, -s1 / t2 * erfc_l, -s1 / t2 * erfc_r - s2 / tot * g * z / s2)
        return u, np.stack([d1, d2], axis=1)
    if family is DistributionFamily.ASYMMETRIC_LAPLACE:
        lam, kap = theta[:, 0], theta[:, 1]
        k2 = kap * kap
        a = 1.0 + k2
        left = eps <= 0
        neg = np.minimum(eps, 0.0)
        pos = np.maximum(eps, 0.0)
        el = _clamped_exp(lam / kap * neg)
        er = _clamped_exp(-lam * kap * pos)
        u = np.where(left, k2 / a * el, 1.0 - er / a)
        dlam = np.where(left, k2 / a * el * neg / kap, kap * pos * er / a)
        dkap = np.where(
            left,
            2.0 * kap / (a * a) * el - k2 / a * el * lam * neg / k2,
            2.0 * kap / (a * a) * er + lam * pos * er / a,
        )
        return u, np.stack([dlam, dkap], axis=1)
    raise ValueError(f"no gradient for family {family.value}")


# --------------------------------------------------------------------------
# array API


def pdf_array(family, eps, theta) -> np.ndarray:
    family = DistributionFamily.parse(family)
    theta = validate_theta(family, theta)
    eps = np.broadcast_to(_check_finite(eps), (theta.shape[0],)).astype(float)
    return _pdf(family, eps, theta)


def cdf_array(family, eps, theta) -> np.ndarray:
    family = DistributionFamily.parse(family)
    theta = validate_theta(family, theta)
    eps = np.broadcast_to(_check_finite(eps), (theta.shape[0],)).astype(float)
    return _cdf(family, eps, theta)


def quantile_array(family, p, theta) -> np.ndarray:
    family = DistributionFamily.parse(family)
    theta = validate_theta(family, theta)
    p = np.asarray(p, dtype=float)
    if np.any(~(p > 0) | ~(p < 1)):
        raise ValueError("probabilities must lie strictly inside (0, 1)")
    p = np.broadcast_to(p, (theta.shape[0],)).astype(float)
    return _quantile(family, p, theta)


def uniform_open(rng: np.random.Generator, size: int) -> np.ndarray:
    """Uniform draws on the open interval (0, 1)."""
    u = rng.random(size)
    # Generator.random is on [0, 1); push the excluded endpoint inward
    return np.where(u == 0.0, np.nextafter(0.0, 1.0), u)


def sample_array(family, theta, rng: np.random.Generator) -> np.ndarray:
    """One inverse-CDF draw per parameter row (gamma rows use ``rng.gamma``)."""
    family = DistributionFamily.parse(family)
    theta = validate_theta(family, theta)
    n = theta.shape[0]
    if family is DistributionFamily.GAMMA:
        return rng.gamma(theta[:, 0], 1.0 / theta[:, 1], size=n)
    return _quantile(family, uniform_open(rng, n), theta)


# --------------------------------------------------------------------------
# scalar API


def pdf(d: DistributionParams, eps: float) -> float:
    """Density of the error distribution at ``eps``."""
    if not math.isfinite(eps):
        raise ValueError("eps must be finite")
    return float(_pdf(d.family, np.array([float(eps)]), d.as_array())[0])


def cdf(d: DistributionParams, eps: float) -> float:
    if not math.isfinite(eps):
        raise ValueError("eps must be finite")
    return float(_cdf(d.family, np.array([float(eps)]), d.as_array())[0])


def quantile(d: DistributionParams, p: float) -> float:
    """Inverse CDF; closed form for every learnable family."""
    if not 0.0 < p < 1.0:
        raise ValueError(f"p must lie strictly inside (0, 1), got {p}")
    return float(_quantile(d.family, np.array([float(p)]), d.as_array())[0])


def sample(d: DistributionParams, rng: np.random.Generator) -> float:
    return float(sample_array(d.family, d.as_array(), rng)[0])


def gamma_sample(alpha: float, beta: float, rng: np.random.Generator) -> float:
    """Draw from Gamma(shape=alpha, rate=beta)."""
    if not (alpha > 0 and beta > 0):
        raise ValueError("gamma shape and rate must be positive")
    return float(rng.gamma(alpha, 1.0 / beta))

