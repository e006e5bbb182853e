"""End-to-end calibration protocol.

Beta grid search, ensemble training, median-member and family selection,
interval prediction and evaluation.  Independent tasks (grid cells and
ensemble members) carry their own derived seeds, so results do not depend on
how many worker processes run them.
"""
from __future__ import annotations

import logging
import math
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace
from typing import Callable, Sequence, Union

import numpy as np

from . import neural
from .distributions import DistributionFamily, DistributionParams, quantile_array
from .neural import NetworkWeights, Standardizer, TrainingConfig
from .scoring import BETA_GRID, BetaWeight, ScorePair, score_pair
from .synthetic import Dataset, Scenario, derive_seed, generate, split

log = logging.getLogger(__name__)

BETA_SPLIT = (0.8, 0.2)
MEMBER_SPLIT = (0.64, 0.16, 0.20)
SELECTION_TEST_SIZE = 2000
INTERVAL_PROBS = (0.025, 0.25, 0.5, 0.75, 0.975)


@dataclass
class CalibrationModel:
    family: DistributionFamily
    beta_star: float
    weights: NetworkWeights
    standardizer: Standardizer
    seed: int
    test_loss: float
    leaky_slope: float = 0.01

    def __post_init__(self):
        self.family = DistributionFamily.parse(self.family)
        self.beta_star = float(BetaWeight(float(self.beta_star)))

    @property
    def d_in(self) -> int:
        return self.weights.d_in

    def params(self, x) -> np.ndarray:
        """Parameter array ``(n, arity)`` for raw (unstandardized) inputs."""
        x = np.asarray(x, dtype=float)
        if x.ndim == 1:
            x = x[None, :] if x.shape[0] == self.d_in else x[:, None]
        return neural.forward_array(
            self.weights, self.standardizer(x), self.family, self.leaky_slope
        )

    def distribution(self, x) -> DistributionParams:
        return DistributionParams(self.family, tuple(self.params(np.atleast_1d(x))[0]))


@dataclass(frozen=True)
class IntervalPrediction:
    x: tuple[float, ...]
    m: float
    median: float
    lo50: float
    hi50: float
    lo95: float
    hi95: float

    def __post_init__(self):
        if not self.lo95 <= self.lo50 <= self.median <= self.hi50 <= self.hi95:
            raise ValueError("interval bounds are out of order")


@dataclass(frozen=True)
class MetricsReport:
    n: int
    crps: float
    rs: float
    accrue: float
    mae: float
    coverage50: float
    coverage95: float
    beta: float

    def as_dict(self) -> dict[str, float]:
        return {
            "n": self.n,
            "crps": self.crps,
            "rs": self.rs,
            "accrue": self.accrue,
            "mae": self.mae,
            "coverage50": self.coverage50,
            "coverage95": self.coverage95,
            "beta": self.beta,
        }


# --------------------------------------------------------------------------
# task execution


def default_jobs() -> int:
    env = os.environ.get("ACCRUE_CALIB_THREADS")
    if env:
        return max(1, int(env))
    return os.cpu_count() or 1


def _run_tasks(fn: Callable, tasks: Sequence, jobs: int | None):
    jobs = default_jobs() if jobs is None else max(1, int(jobs))
    if jobs == 1 or len(tasks) <= 1:
        return [fn(t) for t in tasks]
    with ProcessPoolExecutor(max_workers=min(jobs, len(tasks))) as pool:
        return list(pool.map(fn, tasks))


# --------------------------------------------------------------------------
# training helpers


def _fit(data: Dataset, family, beta: float, cfg: TrainingConfig):
    """Train on the train/validation partitions of a split dataset."""
    tr, va = data.partition("train"), data.partition("validation")
    std = Standardizer.fit(tr.x)
    res = neural.train(std(tr.x), tr.eps, std(va.x), va.eps, family, beta, cfg)
    return res, std


def model_scores(model: CalibrationModel, data: Dataset) -> ScorePair:
    if len(data) == 0:
        raise ValueError("cannot score an empty partition")
    return score_pair(model.family, data.eps, model.params(data.x))


def model_loss(model: CalibrationModel, data: Dataset) -> float:
    s = model_scores(model, data)
    return model.beta_star * s.crps_mean + (1.0 - model.beta_star) * s.rs


# --------------------------------------------------------------------------
# beta search


@dataclass(frozen=True)
class BetaCell:
    beta: float
    crps: float
    rs: float
    train_crps: float
    train_rs: float
    epochs: int

    @property
    def distance(self) -> float:
        return math.hypot(self.crps, self.rs)


@dataclass
class BetaSearchResult:
    beta: BetaWeight
    cells: list[BetaCell] = field(default_factory=list)


def pick_beta(cells: Sequence[BetaCell]) -> BetaWeight:
    """Grid cell with the smallest (CRPS, RS) norm; ties go to the smaller beta."""
    best = None
    for cell in sorted(cells, key=lambda c: c.beta):
        if best is None or cell.distance < best.distance:
            best = cell
    if best is None:
        raise ValueError("no grid cells to choose from")
    return BetaWeight(best.beta)


def _beta_cell(task) -> BetaCell:
    data, family, beta, cfg = task
    try:
        res, std = _fit(data, family, beta, cfg)
    except Exception as exc:
        raise RuntimeError(f"beta search failed at beta={beta}: {exc}") from exc
    model = CalibrationModel(family, beta, res.weights, std, cfg.seed, math.nan)
    val = model_scores(model, data.partition("validation"))
    tr = model_scores(model, data.partition("train"))
    return BetaCell(beta, val.crps_mean, val.rs, tr.crps_mean, tr.rs, len(res.history))


def beta_search(dataset: Dataset, family, cfg: TrainingConfig | None = None,
                seed: int = 0, jobs: int | None = 1,
                grid: Sequence[float] = BETA_GRID) -> BetaSearchResult:
    """Grid search over beta on one 80/20 split of ``dataset``.

    Every grid cell sees the same split and the same initial weights, so
    the cells differ only in the loss weighting.
    """
    family = DistributionFamily.parse(family)
    cfg = cfg or TrainingConfig()
    data = split(dataset, BETA_SPLIT, derive_seed(seed, "beta-split"))
    cell_cfg = replace(cfg, seed=derive_seed(seed, "beta-init"))
    cells = _run_tasks(_beta_cell, [(data, family, b, cell_cfg) for b in grid], jobs)
    for c in cells:
        log.info("beta=%.1f  crps=%.6f  rs=%.6f  dist=%.6f", c.beta, c.crps, c.rs, c.distance)
    return BetaSearchResult(pick_beta(cells), cells)


# --------------------------------------------------------------------------
# ensemble


@dataclass(frozen=True)
class SyntheticSource:
    """Fresh data per member drawn from a scenario."""

    scenario: Scenario
    n: int = 10_000


Source = Union[SyntheticSource, Dataset]


def member_dataset(source: Source, member_seed: int) -> Dataset:
    """The split dataset a member with ``member_seed`` was trained on."""
    if isinstance(source, SyntheticSource):
        data = generate(source.scenario, source.n, derive_seed(member_seed, "data"))
    else:
        data = source
    return split(data, MEMBER_SPLIT, derive_seed(member_seed, "split"))


def _member(task) -> CalibrationModel:
    index, source, family, beta, cfg, member_seed = task
    try:
        data = member_dataset(source, member_seed)
        res, std = _fit(data, family, beta, replace(cfg, seed=derive_seed(member_seed, "init")))
        model = CalibrationModel(family, beta, res.weights, std, member_seed, math.nan,
                                 cfg.leaky_slope)
        model.test_loss = model_loss(model, data.partition("test"))
    except Exception as exc:
        raise RuntimeError(f"ensemble member {index} failed: {exc}") from exc
    log.info("member %d  epochs=%d  test_loss=%.6f", index, len(res.history), model.test_loss)
    return model


def member_seeds(seed: int, n_members: int) -> list[int]:
    return [derive_seed(seed, "member", i) for i in range(n_members)]


def train_ensemble(source: Source, family, beta, n_members: int = 100,
                   cfg: TrainingConfig | None = None, seed: int = 0,
                   jobs: int | None = 1) -> list[CalibrationModel]:
    """Train ``n_members`` independent networks at a fixed beta.

    Synthetic sources give each member a freshly generated dataset; a fixed
    dataset is re-split for each member instead.  Each model records its
    ACCRUE loss on its own test partition.
    """
    if n_members < 1:
        raise ValueError("n_members must be at least 1")
    family = DistributionFamily.parse(family)
    cfg = cfg or TrainingConfig()
    beta = float(beta)
    tasks = [
        (i, source, family, beta, cfg, s) for i, s in enumerate(member_seeds(seed, n_members))
    ]
    return _run_tasks(_member, tasks, jobs)


def select_median_member(models: Sequence[CalibrationModel],
                         test_data: Dataset | None = None) -> CalibrationModel:
    """Member with the (lower) median test loss.

    With ``test_data`` every member is rescored on that common set and the
    returned copy carries the common-set loss.
    """
    if not models:
        raise ValueError("no ensemble members to choose from")
    if test_data is not None:
        models = [replace(m, test_loss=model_loss(m, test_data)) for m in models]
    ranked = sorted(models, key=lambda m: m.test_loss)
    return ranked[math.ceil(len(ranked) / 2) - 1]


@dataclass(frozen=True)
class FamilySelection:
    model: CalibrationModel
    losses: dict
    tie: bool

    @property
    def family(self) -> DistributionFamily:
        return self.model.family


def select_family(first: CalibrationModel, second: CalibrationModel) -> FamilySelection:
    """Pick the two-piece Gaussian or asymmetric Laplace model by test loss.

    Equal losses go to the asymmetric Laplace (heavier tails).
    """
    by_family = {first.family: first, second.family: second}
    tpg = by_family.get(DistributionFamily.TWO_PIECE_GAUSSIAN)
    al = by_family.get(DistributionFamily.ASYMMETRIC_LAPLACE)
    if tpg is None or al is None:
        raise ValueError("family selection needs one tpg and one al model")
    losses = {"tpg": tpg.test_loss, "al": al.test_loss}
    tie = tpg.test_loss == al.test_loss
    chosen = tpg if tpg.test_loss < al.test_loss else al
    return FamilySelection(chosen, losses, tie)


# --------------------------------------------------------------------------
# prediction and evaluation


def interval_bounds(model: CalibrationModel, x, m) -> np.ndarray:
    """Columns ``(lo95, lo50, median, hi50, hi95)`` for each input row."""
    theta = model.params(x)
    m = np.broadcast_to(np.asarray(m, dtype=float), (theta.shape[0],))
    cols = [m + quantile_array(model.family, p, theta) for p in INTERVAL_PROBS]
    return np.stack(cols, axis=1)


def predict_intervals(model: CalibrationModel, x, m: float) -> IntervalPrediction:
    x = np.atleast_1d(np.asarray(x, dtype=float))
    if x.ndim != 1 or x.shape[0] != model.d_in:
        raise ValueError(f"input has {x.shape[-1]} feature(s), model expects {model.d_in}")
    lo95, lo50, med, hi50, hi95 = interval_bounds(model, x[None, :], m)[0]
    return IntervalPrediction(tuple(x), float(m), med, lo50, hi50, lo95, hi95)


def evaluate(model: CalibrationModel, data: Dataset) -> MetricsReport:
    if len(data) == 0:
        raise ValueError("cannot evaluate an empty partition")
    if data.d != model.d_in:
        raise ValueError(f"data has {data.d} input(s), model expects {model.d_in}")
    s = model_scores(model, data)
    b = model.beta_star
    bounds = interval_bounds(model, data.x, data.m)
    y = data.y
    cov50 = np.mean((y >= bounds[:, 1]) & (y <= bounds[:, 3]))
    cov95 = np.mean((y >= bounds[:, 0]) & (y <= bounds[:, 4]))
    return MetricsReport(
        n=len(data),
        crps=s.crps_mean,
        rs=s.rs,
        accrue=b * s.crps_mean + (1.0 - b) * s.rs,
        mae=float(np.mean(np.abs(data.eps))),
        coverage50=float(cov50),
        coverage95=float(cov95),
        beta=b,
    )


# --------------------------------------------------------------------------
# full protocol


@dataclass
class FamilyRun:
    family: DistributionFamily
    search: BetaSearchResult | None
    members: list[CalibrationModel]
    median: CalibrationModel


@dataclass
class CalibrationRun:
    runs: dict
    selected: CalibrationModel
    selection: FamilySelection | None
    test_data: Dataset

    @property
    def metrics(self) -> MetricsReport:
        return evaluate(self.selected, self.test_data)


def calibrate(source: Source, families: Sequence, seed: int = 0, n_members: int = 100,
              cfg: TrainingConfig | None = None, beta: float | None = None,
              jobs: int | None = 1) -> CalibrationRun:
    """Beta search, ensemble and median selection for each family.

    With two families (tpg and al) the lower median test loss wins.
    """
    cfg = cfg or TrainingConfig()
    families = [DistributionFamily.parse(f) for f in families]
    synthetic = isinstance(source, SyntheticSource)
    common_test = (
        generate(source.scenario, SELECTION_TEST_SIZE, derive_seed(seed, "selection-test"))
        if synthetic else None
    )
    search_data = (
        generate(source.scenario, source.n, derive_seed(seed, "beta-data")) if synthetic else source
    )
    runs = {}
    for fam in families:
        search = None
        if beta is None:
            search = beta_search(search_data, fam, cfg, seed=derive_seed(seed, "beta"),
                                 jobs=jobs)
            b = search.beta.value
        else:
            b = float(BetaWeight(float(beta)))
        members = train_ensemble(source, fam, b, n_members, cfg,
                                 seed=derive_seed(seed, "ensemble"), jobs=jobs)
        median = select_median_member(members, common_test)
        runs[fam] = FamilyRun(fam, search, members, median)

    selection = None
    if len(runs) == 2:
        a, b_ = (r.median for r in runs.values())
        selection = select_family(a, b_)
        selected = selection.model
    elif len(runs) == 1:
        selected = next(iter(runs.values())).median
    else:
        raise ValueError("calibrate takes one family, or tpg and al together")

    test_data = common_test if synthetic else member_dataset(source, selected.seed).partition("test")
    return CalibrationRun(runs, selected, selection, test_data)
