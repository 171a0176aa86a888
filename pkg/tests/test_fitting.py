import json
import math

import numpy as np
import pytest
from scipy import stats

from moescale.arch import PRESETS
from moescale.errors import DomainError
from moescale.fitting import (
    FAMILIES, Dataset1D, FitResult, bounded_rational_optimum, fit, fit_bounded_rational, fit_inv_linear,
    fit_linear_band, fit_power_law, fit_quadratic, fit_saturating_power, near_optimal_band,
    numeric_optimum, rank_stats, with_band,
)
from moescale.region import DEFAULT_N_GRID

from . import oracles


def sample(f, xs):
    return Dataset1D(tuple(xs), tuple(f(x) for x in xs))


def rel(a, b):
    return abs(a - b) / abs(b)


def test_power_law_exact():
    r = fit_power_law(sample(lambda x: 2 * x ** 0.5, (1, 4, 9)))
    assert abs(r.coefficients["multiplier"] - 2) <= 1e-12
    assert abs(r.coefficients["exponent"] - 0.5) <= 1e-12
    assert r.r_squared == pytest.approx(1.0)


def test_power_law_needs_positive():
    with pytest.raises(DomainError):
        fit_power_law(Dataset1D((1, 2), (1, -1)))
    with pytest.raises(DomainError, match="distinct"):
        fit_power_law(Dataset1D((1, 1), (1, 2)))


def test_saturating_power_recovery():
    xs = np.logspace(0, 3, 8)
    r = fit_saturating_power(sample(lambda x: 1.5 + 10 * x ** -0.3, xs))
    for k, v in {"E": 1.5, "A": 10.0, "B": -0.3}.items():
        assert rel(r.coefficients[k], v) <= 1e-8


def test_saturating_pinned_matches_power_law():
    data = sample(lambda x: 3 * x ** 0.7, np.logspace(0, 2, 6))
    pinned = fit_saturating_power(data, pin_e=True)
    plain = fit_power_law(data)
    assert pinned.coefficients["E"] == 0.0
    assert abs(pinned.coefficients["A"] - plain.coefficients["multiplier"]) <= 1e-9
    assert abs(pinned.coefficients["B"] - plain.coefficients["exponent"]) <= 1e-9


def test_saturating_constant_data():
    r = fit_saturating_power(Dataset1D((1, 2, 4, 8), (2.5,) * 4))
    assert r.coefficients["E"] == pytest.approx(2.5, abs=1e-9)
    assert abs(r.coefficients["A"]) <= 1e-9


def test_inv_linear_analytic_optimum():
    r = FitResult("inv-linear", {"a": 1.0, "b": 0.01, "c": 0.0}, 1.0, 16.0,
                  metadata={"domain": (6.0, None)})
    assert 6 + math.sqrt(1 / 0.01) == 16.0
    assert numeric_optimum(r, 6.5, 100) == pytest.approx(16.0, abs=1e-6)


def test_inv_linear_recovery():
    r = fit_inv_linear(sample(lambda x: 0.5 / (x - 6) + 0.02 * x + 1, range(7, 18)))
    for k, v in {"a": 0.5, "b": 0.02, "c": 1.0}.items():
        assert rel(r.coefficients[k], v) <= 1e-9
    assert abs(r.x_opt - 11.0) <= 1e-6
    assert abs(numeric_optimum(r, 6.01, 17) - r.x_opt) <= 1e-6


def test_inv_linear_domain():
    with pytest.raises(DomainError):
        fit_inv_linear(Dataset1D((5, 7, 8), (1, 2, 3)))


def test_bounded_rational_symmetry():
    assert bounded_rational_optimum(0.7, 0.7, 1, 9) == 5.0
    r = fit_bounded_rational(sample(lambda x: 1 / (x - 1) + 1 / (9 - x) + 4, (2, 3, 5, 7)), 1, 9)
    assert r.x_opt == pytest.approx(5.0, abs=1e-12)


def test_bounded_rational_recovery():
    c2 = 289 / 9
    r = fit_bounded_rational(sample(lambda x: 2 / (x - 1) + 5 / (c2 - x) + 0.9, DEFAULT_N_GRID), 1, c2)
    for k, v in {"a": 2.0, "b": 5.0, "c": 0.9}.items():
        assert rel(r.coefficients[k], v) <= 1e-8
    assert abs(numeric_optimum(r, 1.001, c2 - 0.001) - r.x_opt) <= 1e-6
    with pytest.raises(DomainError):
        fit_bounded_rational(sample(lambda x: x, (0.5, 2, 3)), 1, c2)


def test_quadratic_vertex_exact():
    r = fit_quadratic(sample(lambda x: (x - 3) ** 2 + 2, (1, 2, 3, 4, 5)))
    assert r.x_opt == pytest.approx(3.0, abs=1e-12)
    assert float(r.predict(r.x_opt)) == pytest.approx(2.0, abs=1e-12)


def test_quadratic_planted_sweep():
    r = fit_quadratic(sample(lambda d: 1e-8 * (d - 1000) ** 2 + 2.0, range(288, 2000, 56)))
    assert abs(r.x_opt - 1000) <= 1e-3
    for k, v in {"a": 1e-8, "b": -2e-5, "c": 2.01}.items():
        assert rel(r.coefficients[k], v) <= 1e-8
    assert abs(numeric_optimum(r, 288, 2000) - r.x_opt) <= 1e-6


def test_quadratic_downward_and_degenerate():
    down = fit_quadratic(sample(lambda x: -(x - 3) ** 2, (1, 2, 3, 4, 5)))
    assert down.x_opt is None and down.metadata["opens_downward"]
    with pytest.raises(DomainError):
        near_optimal_band(down)
    flat = fit_quadratic(sample(lambda x: 2 * x + 1, (1, 2, 3, 4)))
    assert flat.coefficients["a"] == 0.0 and flat.metadata["degenerate"]


def test_linear_band_collinear():
    r = fit_linear_band(sample(lambda x: 2 * x + 1, (0, 1, 2, 3)))
    assert r.coefficients["slope"] == 2.0
    assert r.coefficients["width"] == 0.0 and r.coefficients["intercept"] == 1.0


def test_linear_band_square():
    r = fit_linear_band(Dataset1D.from_points([(0, 0), (1, 1), (0, 1), (1, 2)]))
    c = r.coefficients
    assert (c["slope"], c["width"], c["intercept"]) == (1.0, 1.0, 0.5)


def test_linear_band_planted():
    rng = np.random.default_rng(7)
    xs = np.linspace(0, 10, 25)
    ys = 0.37 * xs - 1.25 + rng.uniform(-0.1, 0.1, xs.size)
    ys[0], ys[-1] = 0.37 * xs[0] - 1.25 + 0.1, 0.37 * xs[-1] - 1.25 + 0.1
    ys[12] = 0.37 * xs[12] - 1.25 - 0.1
    r = fit_linear_band(Dataset1D(tuple(xs), tuple(ys)))
    assert rel(r.coefficients["slope"], 0.37) <= 1e-8
    assert rel(r.coefficients["intercept"], -1.25) <= 1e-8
    assert rel(r.coefficients["width"], 0.2) <= 1e-8


def test_linear_band_is_minimal():
    rng = np.random.default_rng(3)
    pts = list(zip(rng.uniform(0, 5, 30), rng.normal(0, 1, 30)))
    r = fit_linear_band(Dataset1D.from_points(pts))
    assert oracles.band_width(pts, r.coefficients["slope"]) == pytest.approx(r.coefficients["width"])
    dense = min(oracles.band_width(pts, s) for s in np.linspace(-3, 3, 60001))
    assert r.coefficients["width"] <= dense + 1e-12


def test_linear_band_contains_learning_rates():
    pts = [(math.log10(p.compute), math.log10(p.lr)) for p in PRESETS.values()]
    r = fit_linear_band(Dataset1D.from_points(pts))
    c = r.coefficients
    for x, y in pts:
        assert c["lower"] - 1e-12 <= y - c["slope"] * x <= c["upper"] + 1e-12
    assert c["slope"] < 0


def test_quadratic_band_closed_form():
    r = fit_quadratic(sample(lambda d: 1e-8 * (d - 1000) ** 2 + 2.0, range(288, 2000, 56)))
    band = near_optimal_band(r, 1e-3)
    half = math.sqrt(0.001 * 2.0 / 1e-8)
    assert half == pytest.approx(447.2136, abs=1e-4)
    assert band.lower == pytest.approx(1000 - half, abs=1e-6)
    assert band.upper == pytest.approx(1000 + half, abs=1e-6)
    level = 1.001 * float(r.predict(r.x_opt))
    for e in (band.lower, band.upper):
        assert abs(float(r.predict(e)) - level) <= 1e-10


def test_inv_linear_band_level_equation():
    r = FitResult("inv-linear", {"a": 1.0, "b": 0.01, "c": 0.0}, 1.0, 16.0,
                  metadata={"domain": (6.0, None)})
    band = near_optimal_band(r, 1e-3)
    assert 6 < band.lower < 16 < band.upper
    assert not band.clipped_lower and not band.clipped_upper
    level = 1.001 * 0.26
    for e in (band.lower, band.upper):
        assert abs(float(r.predict(e)) - level) <= 1e-10


def test_band_degenerate_and_clipped():
    r = FitResult("inv-linear", {"a": 1.0, "b": 0.01, "c": 0.0}, 1.0, 16.0,
                  metadata={"domain": (6.0, None)})
    assert near_optimal_band(r, 0.0).as_tuple() == (16.0, 16.0, 16.0)
    clipped = near_optimal_band(r, 1e-3, domain=(15.9, 16.1))
    assert clipped.clipped_lower and clipped.clipped_upper
    assert (clipped.lower, clipped.upper) == (15.9, 16.1)
    banded = with_band(r, 1e-3)
    assert banded.band[1] == 16.0 and banded.metadata["band_clipped"] == [False, False]


@pytest.mark.parametrize("family,data,kw", [
    ("power-law", ((1, 2, 3), (2, 4, 6)), {}),
    ("saturating-power", ((1, 2, 4, 8), (3, 2, 1.5, 1.25)), {}),
    ("inv-linear", ((7, 9, 12, 17), (1, 0.8, 0.9, 1.1)), {}),
    ("bounded-rational", ((12, 16, 20, 26), (3, 2.9, 2.95, 3.1)), {"c1": 1, "c2": 289 / 9}),
    ("quadratic", ((1, 2, 3, 4), (4, 1, 0.5, 2)), {}),
    ("linear-band", ((0, 1, 1, 2), (0, 1, 2, 2)), {}),
])
def test_dispatch_and_json(family, data, kw):
    r = fit(family, Dataset1D(*data), **kw)
    assert r.family == family and family in FAMILIES
    back = FitResult.from_dict(json.loads(json.dumps(r.to_dict())))
    assert back == r
    assert np.all(back.predict(np.asarray(data[0], float)) == r.predict(np.asarray(data[0], float)))


def test_unknown_family():
    with pytest.raises(DomainError):
        fit("cubic", Dataset1D((1, 2), (1, 2)))


def test_dataset_csv_round_trip():
    d = Dataset1D((1.0, 2.0, 2.0), (0.1, 0.2 + 0.1, 0.3), (1.0, 2.0, 0.5))
    assert Dataset1D.from_csv(d.to_csv()) == d
    u = Dataset1D((1.0, 2.0), (3.0, 4.0))
    assert Dataset1D.from_csv(u.to_csv()) == u
    with pytest.raises(DomainError):
        Dataset1D((1.0,), (1.0, 2.0))
    with pytest.raises(DomainError):
        Dataset1D((1.0,), (float("nan"),))
    with pytest.raises(DomainError):
        Dataset1D((1.0,), (1.0,), (0.0,))


def test_weights_change_the_fit():
    x, y = (1, 2, 3, 4), (1, 2, 3, 10)
    flat = fit_quadratic(Dataset1D(x, y))
    heavy = fit_quadratic(Dataset1D(x, y, (1, 1, 1, 1e-6)))
    assert flat.coefficients != heavy.coefficients


def test_rank_stats_hand_anchor():
    r = rank_stats([1, 2, 3], [6, 4, 5])
    assert r.spearman_rho == -0.5 == float(oracles.hand_spearman([1, 2, 3], [6, 4, 5]))
    assert r.kendall_tau == -1 / 3 == float(oracles.hand_kendall([1, 2, 3], [6, 4, 5]))


def test_rank_stats_monotone_exact():
    up = rank_stats([1, 2, 3, 4], [1, 2, 3, 4])
    assert (up.pearson_r, up.spearman_rho, up.kendall_tau) == (1.0, 1.0, 1.0)
    x = [0.1 * k for k in range(1, 40)]
    down = rank_stats(x, [3 - 0.7 * v for v in x])
    assert (down.pearson_r, down.spearman_rho, down.kendall_tau) == (-1.0, -1.0, -1.0)
    mono = rank_stats([1, 2, 3, 4, 5], [1, 8, 27, 64, 125])
    assert mono.spearman_rho == 1.0 and mono.kendall_tau == 1.0 and mono.pearson_r < 1


def test_rank_stats_against_scipy():
    rng = np.random.default_rng(11)
    for n in (5, 12, 40):
        x = rng.normal(size=n)
        y = x + rng.normal(size=n)
        y[:3] = y[0]  # ties in y
        r = rank_stats(x, y)
        assert r.pearson_r == pytest.approx(stats.pearsonr(x, y)[0], abs=1e-12)
        assert r.p_pearson == pytest.approx(stats.pearsonr(x, y)[1], rel=1e-9)
        assert r.spearman_rho == pytest.approx(stats.spearmanr(x, y)[0], abs=1e-12)
        assert r.kendall_tau == pytest.approx(stats.kendalltau(x, y)[0], abs=1e-12)


def test_rank_stats_hand_oracles_tie_free():
    rng = np.random.default_rng(5)
    for _ in range(20):
        x = [float(v) for v in rng.permutation(9)]
        y = [float(v) for v in rng.permutation(9)]
        r = rank_stats(x, y)
        assert r.spearman_rho == pytest.approx(float(oracles.hand_spearman(x, y)), abs=1e-12)
        assert r.kendall_tau == pytest.approx(float(oracles.hand_kendall(x, y)), abs=1e-12)


def test_rank_stats_errors():
    with pytest.raises(DomainError, match="undefined"):
        rank_stats([1, 2, 3], [1, 1, 1])
    with pytest.raises(DomainError):
        rank_stats([1, 2], [1, 2])
    with pytest.raises(DomainError):
        rank_stats([1, 2, 3], [1, 2])
