"""Datasets, seeded splits and the synthetic calibration scenarios."""
from __future__ import annotations

import enum
import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .distributions import DistributionFamily, sample_array

SPLIT_NAMES = ("train", "validation", "test")
_UNASSIGNED = -1


def derive_seed(base: int, *keys) -> int:
    """Mix a base seed with integer or string keys into a new 63-bit seed."""
    words = [int(base) & 0xFFFFFFFFFFFFFFFF]
    for k in keys:
        if isinstance(k, str):
            words.extend(k.encode())
        else:
            words.append(int(k))
    state = np.random.SeedSequence(words).generate_state(2, dtype=np.uint32)
    return int((int(state[0]) << 31) ^ int(state[1]))


@dataclass(frozen=True)
class PairRecord:
    x: tuple[float, ...]
    m: float
    y: float

    @property
    def eps(self) -> float:
        return self.y - self.m


@dataclass
class Dataset:
    """Observation/prediction pairs held column-wise.

    ``split`` holds one code per row (0 train, 1 validation, 2 test,
    -1 unassigned) or is ``None`` for an unsplit dataset.
    """

    x: np.ndarray
    m: np.ndarray
    y: np.ndarray
    split: np.ndarray | None = None

    def __post_init__(self):
        x = np.asarray(self.x, dtype=float)
        self.x = x[:, None] if x.ndim == 1 else x
        self.m = np.asarray(self.m, dtype=float).ravel()
        self.y = np.asarray(self.y, dtype=float).ravel()
        n = self.x.shape[0]
        if self.x.ndim != 2 or self.m.shape != (n,) or self.y.shape != (n,):
            raise ValueError("x, m and y must describe the same number of rows")
        if self.split is not None:
            self.split = np.asarray(self.split, dtype=np.int8).ravel()
            if self.split.shape != (n,):
                raise ValueError("split labels must have one entry per row")

    @property
    def eps(self) -> np.ndarray:
        return self.y - self.m

    @property
    def d(self) -> int:
        return self.x.shape[1]

    def __len__(self) -> int:
        return self.x.shape[0]

    def __getitem__(self, i: int) -> PairRecord:
        return PairRecord(tuple(self.x[i]), float(self.m[i]), float(self.y[i]))

    def subset(self, idx) -> "Dataset":
        split = None if self.split is None else self.split[idx]
        return Dataset(self.x[idx], self.m[idx], self.y[idx], split)

    def partition(self, name: str) -> "Dataset":
        if self.split is None:
            raise ValueError("dataset has not been split")
        code = SPLIT_NAMES.index(name)
        return self.subset(np.flatnonzero(self.split == code))

    def sizes(self) -> dict[str, int]:
        if self.split is None:
            return {}
        return {name: int(np.sum(self.split == i)) for i, name in enumerate(SPLIT_NAMES)}


def split(dataset: Dataset, fractions: Sequence[float], seed: int) -> Dataset:
    """Randomly assign rows to train/validation[/test] partitions.

    Non-training sizes are ``floor(n * f)``; the remainder goes to training.
    """
    fractions = [float(f) for f in fractions]
    if len(fractions) not in (2, 3):
        raise ValueError("expected 2 (train, validation) or 3 (train, validation, test) fractions")
    if any(f <= 0 for f in fractions) or abs(sum(fractions) - 1.0) > 1e-9:
        raise ValueError("fractions must be positive and sum to 1")
    n = len(dataset)
    if n < len(fractions):
        raise ValueError(f"cannot split {n} rows into {len(fractions)} partitions")
    sizes = [max(1, math.floor(n * f + 1e-9)) for f in fractions[1:]]
    n_train = n - sum(sizes)
    if n_train < 1:
        raise ValueError(f"cannot split {n} rows into {len(fractions)} non-empty partitions")
    perm = np.random.default_rng(seed).permutation(n)
    labels = np.empty(n, dtype=np.int8)
    bounds = np.cumsum([0, n_train, *sizes])
    for code, (lo, hi) in enumerate(zip(bounds[:-1], bounds[1:])):
        labels[perm[lo:hi]] = code
    return Dataset(dataset.x, dataset.m, dataset.y, labels)


# --------------------------------------------------------------------------
# scenarios


class ParamFunction(str, enum.Enum):
    LIN1 = "Lin1"
    LIN2 = "Lin2"
    TRIG1 = "Trig1"
    TRIG2 = "Trig2"


def param_function(kind, x):
    """Evaluate one of the synthetic parameter functions on ``x`` in [0, 1]."""
    kind = ParamFunction(kind)
    xa = np.asarray(x, dtype=float)
    if np.any(~np.isfinite(xa)) or np.any(xa < 0.0) or np.any(xa > 1.0):
        raise ValueError("parameter functions are defined on [0, 1]")
    if kind is ParamFunction.LIN1:
        out = 0.5 * xa + 0.5
    elif kind is ParamFunction.LIN2:
        out = -2.0 * xa + 2.5
    elif kind is ParamFunction.TRIG1:
        out = np.exp(np.sin(2.0 * np.pi * xa)) / 3.0
    else:
        out = np.cos(2.0 * np.pi * xa) + 2.0
    return float(out) if out.ndim == 0 else out


@dataclass(frozen=True)
class ScenarioSpec:
    family: DistributionFamily
    fn1: ParamFunction
    fn2: ParamFunction


class Scenario(str, enum.Enum):
    A = "A"
    B = "B"
    C = "C"
    D = "D"
    E = "E"
    F = "F"
    GAMMA_MISSPEC = "GammaMisspec"

    @classmethod
    def parse(cls, value) -> "Scenario":
        if isinstance(value, cls):
            return value
        for s in cls:
            if s.value.lower() == str(value).strip().lower():
                return s
        raise ValueError(f"unknown scenario {value!r}")

    @property
    def spec(self) -> ScenarioSpec:
        return _SCENARIOS[self]

    @property
    def family(self) -> DistributionFamily:
        return self.spec.family


_TPG, _AL = DistributionFamily.TWO_PIECE_GAUSSIAN, DistributionFamily.ASYMMETRIC_LAPLACE
_L1, _L2, _T1, _T2 = ParamFunction
_SCENARIOS = {
    Scenario.A: ScenarioSpec(_TPG, _L1, _L2),
    Scenario.B: ScenarioSpec(_TPG, _T1, _T2),
    Scenario.C: ScenarioSpec(_TPG, _L1, _T2),
    Scenario.D: ScenarioSpec(_AL, _L1, _L2),
    Scenario.E: ScenarioSpec(_AL, _T1, _T2),
    Scenario.F: ScenarioSpec(_AL, _L1, _T2),
    Scenario.GAMMA_MISSPEC: ScenarioSpec(DistributionFamily.GAMMA, _T1, _T2),
}


def true_params(scenario, x) -> np.ndarray:
    """Generating parameters in DistributionParams order, shape ``(n, 2)``.

    Asymmetric Laplace scenarios read the two functions as ``(kappa, 1/lambda)``.
    """
    spec = Scenario.parse(scenario).spec
    x = np.atleast_1d(np.asarray(x, dtype=float))
    t1 = np.atleast_1d(param_function(spec.fn1, x))
    t2 = np.atleast_1d(param_function(spec.fn2, x))
    if spec.family is DistributionFamily.ASYMMETRIC_LAPLACE:
        return np.stack([1.0 / t2, t1], axis=1)
    return np.stack([t1, t2], axis=1)


def generate(scenario, n: int, seed: int) -> Dataset:
    """Draw ``n`` pairs with ``x ~ U[0, 1]``, ``m = 0`` and ``y = m + error``.

    Gamma rows are negated draws, so every error is non-positive.
    """
    scenario = Scenario.parse(scenario)
    if n < 1:
        raise ValueError("n must be at least 1")
    rng = np.random.default_rng(seed)
    x = rng.random(n)
    theta = true_params(scenario, x)
    noise = sample_array(scenario.family, theta, rng)
    if scenario is Scenario.GAMMA_MISSPEC:
        noise = -noise
    m = np.zeros(n)
    return Dataset(x[:, None], m, m + noise)


def weather_like(n: int = 3000, seed: int = 20220101) -> Dataset:
    """Three-input stand-in for a station forecast archive.

    Inputs mimic dew point (C), wind speed (m/s) and surface pressure (hPa).
    Forecast errors are two-piece Gaussian with scales that depend on all
    three inputs, giving a left tail that fattens in wind and dry air.
    """
    rng = np.random.default_rng(seed)
    dew = rng.normal(0.0, 8.0, n)
    wind = rng.gamma(2.0, 2.0, n)
    pres = rng.normal(835.0, 6.0, n)
    m = 10.0 + 0.8 * dew + rng.normal(0.0, 6.0, n)
    s1 = 0.6 + 0.08 * wind + 0.3 * np.exp(-((dew + 5.0) / 10.0) ** 2)
    s2 = 0.5 + 0.02 * np.abs(pres - 835.0) + 0.03 * wind
    eps = sample_array(DistributionFamily.TWO_PIECE_GAUSSIAN, np.stack([s1, s2], axis=1), rng)
    return Dataset(np.stack([dew, wind, pres], axis=1), m, m + eps)
