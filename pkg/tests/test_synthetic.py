import math

import numpy as np
import pytest
from scipy import optimize

import expected as X
from accrue.distributions import DistributionFamily, cdf_array, pdf_array, quantile_array
from accrue.synthetic import (
    Dataset,
    ParamFunction,
    PairRecord,
    Scenario,
    derive_seed,
    generate,
    param_function,
    split,
    true_params,
    weather_like,
)

TPG, AL = DistributionFamily.TWO_PIECE_GAUSSIAN, DistributionFamily.ASYMMETRIC_LAPLACE


def test_param_function_examples():
    assert param_function("Lin1", 0.0) == X.LIN1_AT0
    assert param_function("Lin2", 0.0) == X.LIN2_AT0
    assert param_function("Trig1", 0.0) == pytest.approx(X.TRIG1_AT0, abs=1e-16)
    assert param_function("Trig2", 0.0) == X.TRIG2_AT0
    assert param_function("Trig2", 0.5) == pytest.approx(X.TRIG2_AT_HALF, abs=1e-15)


@pytest.mark.parametrize("x", [-0.01, 1.01, math.nan])
def test_param_function_domain(x):
    with pytest.raises(ValueError):
        param_function(ParamFunction.LIN1, x)


def test_param_function_ranges():
    x = np.linspace(0, 1, 10001)
    ranges = {
        "Lin1": (0.5, 1.0),
        "Lin2": (0.5, 2.5),
        "Trig1": (math.exp(-1) / 3, math.e / 3),
        "Trig2": (1.0, 3.0),
    }
    for kind, (lo, hi) in ranges.items():
        v = param_function(kind, x)
        assert v.min() >= lo - 1e-12 and v.max() <= hi + 1e-12
        assert v.min() > 0


def test_scenario_table():
    table = {
        "A": (TPG, "Lin1", "Lin2"), "B": (TPG, "Trig1", "Trig2"), "C": (TPG, "Lin1", "Trig2"),
        "D": (AL, "Lin1", "Lin2"), "E": (AL, "Trig1", "Trig2"), "F": (AL, "Lin1", "Trig2"),
        "GammaMisspec": (DistributionFamily.GAMMA, "Trig1", "Trig2"),
    }
    for name, (fam, f1, f2) in table.items():
        spec = Scenario.parse(name).spec
        assert (spec.family, spec.fn1.value, spec.fn2.value) == (fam, f1, f2)
    with pytest.raises(ValueError):
        Scenario.parse("G")


def test_al_scenario_parameter_mapping():
    x = np.array([0.0, 0.3])
    theta = true_params("D", x)  # (lambda, kappa) with kappa = Lin1, 1/lambda = Lin2
    np.testing.assert_allclose(theta[:, 1], 0.5 * x + 0.5)
    np.testing.assert_allclose(1.0 / theta[:, 0], -2 * x + 2.5)


def test_pair_record_eps():
    r = PairRecord((0.2,), 1.5, 0.25)
    assert r.eps == 0.25 - 1.5


def test_generate_basic():
    d = generate("A", 1000, 7)
    assert len(d) == 1000 and d.d == 1
    assert np.all(d.m == 0)
    assert np.all((d.x >= 0) & (d.x <= 1))
    np.testing.assert_array_equal(d.eps, d.y - d.m)
    with pytest.raises(ValueError):
        generate("A", 0, 1)


def test_generate_pure():
    a, b = generate("E", 500, 3), generate("E", 500, 3)
    np.testing.assert_array_equal(a.x, b.x)
    np.testing.assert_array_equal(a.y, b.y)
    assert not np.array_equal(a.y, generate("E", 500, 4).y)


def test_gamma_misspec_nonpositive():
    assert np.all(generate("GammaMisspec", 20000, 1).eps <= 0)


def test_scenario_a_left_mass_near_zero():
    d = generate("A", 100_000, 11)
    sel = d.x[:, 0] <= 0.05
    s1, s2 = param_function("Lin1", 0.025), param_function("Lin2", 0.025)
    assert np.mean(d.eps[sel] <= 0) == pytest.approx(s1 / (s1 + s2), abs=0.01)
    assert s1 / (s1 + s2) == pytest.approx(0.1667, abs=0.01)


def test_scenario_d_left_mass_near_zero():
    d = generate("D", 100_000, 12)
    sel = d.x[:, 0] <= 0.05
    k = param_function("Lin1", 0.025)
    assert np.mean(d.eps[sel] <= 0) == pytest.approx(0.2, abs=0.01 + abs(k * k / (1 + k * k) - 0.2))


_HEAVY = pytest.mark.xfail(
    strict=True,
    reason="AL bins with scale up to ~25 put the quartile standard error far above 0.05",
)


@pytest.mark.parametrize(
    "scenario", ["A", "B", "C", "D", pytest.param("E", marks=_HEAVY), pytest.param("F", marks=_HEAVY)]
)
def test_binned_quartiles_absolute(scenario):
    # 10^6 draws: at 10^5 the quartile standard error in the widest TPG bins
    # is about 0.034, too close to the 0.05 tolerance
    d = generate(scenario, 1_000_000, 21)
    x = d.x[:, 0]
    fam = Scenario.parse(scenario).family
    edges = np.linspace(0, 1, 21)
    for lo, hi in zip(edges[:-1], edges[1:]):
        sel = (x >= lo) & (x < hi)
        theta = true_params(scenario, np.array([(lo + hi) / 2]))
        for p in (0.25, 0.75):
            ref = quantile_array(fam, p, theta)[0]
            assert np.quantile(d.eps[sel], p) == pytest.approx(ref, abs=0.05)


@pytest.mark.parametrize("scenario", list("ABCDEF"))
def test_binned_quartiles_within_sampling_error(scenario):
    d = generate(scenario, 100_000, 22)
    x = d.x[:, 0]
    fam = Scenario.parse(scenario).family
    edges = np.linspace(0, 1, 21)
    for lo, hi in zip(edges[:-1], edges[1:]):
        sel = (x >= lo) & (x < hi)
        xs = np.linspace(lo, hi, 401)
        theta = true_params(scenario, xs)
        for p in (0.25, 0.75):
            # quartile of the bin population (x uniform on the bin)
            q = optimize.brentq(lambda t: cdf_array(fam, np.full(xs.size, t), theta).mean() - p, -200, 200)
            dens = pdf_array(fam, np.full(xs.size, q), theta).mean()
            se = math.sqrt(p * (1 - p) / sel.sum()) / dens
            assert abs(np.quantile(d.eps[sel], p) - q) <= 4 * se


def test_split_sizes():
    d = generate("A", 10000, 0)
    s = split(d, (0.64, 0.16, 0.20), 5)
    sizes = s.sizes()
    assert (sizes["train"], sizes["validation"], sizes["test"]) == X.MEMBER_SPLIT_SIZES_10000
    s2 = split(generate("A", 10, 0), (0.8, 0.2), 1).sizes()
    assert (s2["train"], s2["validation"]) == (8, 2)


def test_split_deterministic_and_disjoint():
    d = generate("B", 777, 1)
    a, b = split(d, (0.64, 0.16, 0.2), 9), split(d, (0.64, 0.16, 0.2), 9)
    np.testing.assert_array_equal(a.split, b.split)
    assert sum(a.sizes().values()) == 777
    assert not np.array_equal(a.split, split(d, (0.64, 0.16, 0.2), 10).split)


def test_split_errors():
    d = generate("A", 2, 0)
    with pytest.raises(ValueError):
        split(d, (0.64, 0.16, 0.20), 0)
    with pytest.raises(ValueError):
        split(generate("A", 50, 0), (0.5, 0.4), 0)
    with pytest.raises(ValueError):
        split(generate("A", 50, 0), (1.2, -0.2), 0)
    with pytest.raises(ValueError):
        Dataset(np.zeros((3, 1)), np.zeros(3), np.zeros(3)).partition("train")


def test_dataset_shapes():
    with pytest.raises(ValueError):
        Dataset(np.zeros((3, 1)), np.zeros(2), np.zeros(3))
    d = Dataset(np.arange(3.0), np.zeros(3), np.ones(3))
    assert d.x.shape == (3, 1)
    assert d[1] == PairRecord((1.0,), 0.0, 1.0)


def test_derive_seed_mixing():
    seeds = {derive_seed(0, "member", i) for i in range(1000)}
    assert len(seeds) == 1000
    assert derive_seed(5, "a") == derive_seed(5, "a")
    assert derive_seed(5, "a") != derive_seed(6, "a")
    assert all(0 <= s < 2**63 for s in seeds)


def test_weather_like_dataset():
    d = weather_like()
    assert len(d) == 3000 and d.d == 3
    assert np.all(np.isfinite(d.x)) and np.all(np.isfinite(d.y))
