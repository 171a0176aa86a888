import pytest

from moescale.errors import DomainError
from moescale.harness import (
    GRID_4X4, GRID_6X6, REPORT_SCHEMA, SCATTER_SCHEMA, SHIPPED_SEEDS, BaseShape,
    SyntheticLandscape, evaluate, find_flip, grid_intervals, hash_unit, landscape_family,
    lr_power_law, planted_lr_band, proxy_validation_report, two_phase_search,
)
from moescale.records import read_records, write_records
from moescale.solver import FeasibleInterval


@pytest.fixture(scope="module")
def iv6():
    return grid_intervals(None, *GRID_6X6)


@pytest.fixture(scope="module")
def iv4():
    return grid_intervals(None, *GRID_4X4)


def hull(lo, hi):
    full = tuple(range(lo, hi + 1, 8))
    return FeasibleInterval(lo, hi, full[(len(full) - 1) // 2], full)


def test_hash_unit_deterministic_and_bounded():
    vals = [hash_unit(s, (7.0, 12.0), d) for s in range(50) for d in (8, 16, 24)]
    assert all(-1 <= v <= 1 for v in vals)
    assert hash_unit(3, (7.0, 12.0), 8) == hash_unit(3, (7.0, 12.0), 8)
    assert len(set(vals)) == len(vals)
    assert min(vals) < -0.5 and max(vals) > 0.5


def test_two_cell_gap_ordering_without_noise():
    base = BaseShape()
    a, b = (8.0, 20.0), (9.0, 20.0)
    land = SyntheticLandscape({a: hull(400, 800), b: hull(400, 800)})
    lo, hi = sorted((a, b), key=base)
    for d in land.intervals[a].feasible_set:
        assert evaluate(land, lo, d) < evaluate(land, hi, d)


def test_evaluate_deterministic(iv6):
    land = SyntheticLandscape(iv6, perturb_amp=0.01, seed=4)
    cell = land.cells[5]
    d = land.intervals[cell].d_median
    assert evaluate(land, cell, d) == evaluate(land, cell, d)


def test_evaluate_domain(iv6):
    land = SyntheticLandscape(iv6)
    with pytest.raises(DomainError):
        evaluate(land, (99.0, 99.0), 512)
    cell = land.cells[0]
    with pytest.raises(DomainError):
        evaluate(land, cell, land.intervals[cell].d_max + 8)


def test_landscape_validation():
    with pytest.raises(DomainError):
        SyntheticLandscape({})
    with pytest.raises(DomainError):
        SyntheticLandscape({(8.0, 20.0): hull(400, 400)})
    with pytest.raises(DomainError):
        SyntheticLandscape({(8.0, 20.0): hull(400, 800)}, perturb_amp=-1)


@pytest.mark.parametrize("grid", ["4x4", "6x6"])
def test_zero_noise_regret_zero_every_seed(grid, iv4, iv6):
    fam = landscape_family(iv4 if grid == "4x4" else iv6, 0.0)
    for seed in SHIPPED_SEEDS:
        out = two_phase_search(fam(seed))
        assert out.regret == 0 and not out.cell_flip
        r = out.rank
        assert (r.pearson_r, r.spearman_rho, r.kendall_tau) == (1.0, 1.0, 1.0)


def test_small_noise_seed_seven(iv6):
    land = landscape_family(iv6, 0.1)(7)
    assert land.perturb_amp == pytest.approx(0.1 * land.min_gap)
    out = two_phase_search(land)
    assert out.regret == 0
    assert min(out.rank.pearson_r, out.rank.spearman_rho, out.rank.kendall_tau) >= 0.95


@pytest.mark.parametrize("grid", ["4x4", "6x6"])
def test_small_noise_report(grid, iv4, iv6):
    rep = proxy_validation_report(landscape_family(iv4 if grid == "4x4" else iv6, 0.1))
    assert len(rep.rows) == 20
    assert all(r["regret"] == 0 for r in rep.rows)
    assert rep.mean("pearson_r") >= 0.95 and rep.mean("spearman_rho") >= 0.95


def test_zero_noise_report_exact(iv4):
    rep = proxy_validation_report(landscape_family(iv4, 0.0), seeds=(1, 2, 3))
    for r in rep.rows:
        assert (r["pearson_r"], r["spearman_rho"], r["kendall_tau"]) == (1.0, 1.0, 1.0)
        assert r["slope"] == pytest.approx(1.0)


def test_report_round_trip(iv4):
    rep = proxy_validation_report(landscape_family(iv4, 0.1), seeds=(1, 2))
    text = rep.to_csv()
    assert write_records(REPORT_SCHEMA, read_records(REPORT_SCHEMA, text)) == text
    s = rep.scatter_csv()
    assert write_records(SCATTER_SCHEMA, read_records(SCATTER_SCHEMA, s)) == s
    assert len(rep.scatter) == 2 * 16


def test_report_needs_replicates(iv4):
    with pytest.raises(DomainError):
        proxy_validation_report(landscape_family(iv4), seeds=(1,))


def test_no_flip_below_half_min_gap(iv6):
    land = landscape_family(iv6, 0.0)(3)
    assert find_flip(land.with_amp(0.49 * land.min_gap)) is None


def test_flip_at_half_mean_gap(iv6):
    land = landscape_family(iv6, 0.0)(3)
    noisy = land.with_amp(0.5 * land.mean_gap)
    flip = find_flip(noisy)
    assert flip is not None
    lo, hi, k = flip
    q = noisy.quantum
    da = noisy.intervals[lo].d_median + k * q
    db = noisy.intervals[hi].d_median + k * q
    assert noisy.base(lo) < noisy.base(hi)
    assert evaluate(noisy, lo, da) > evaluate(noisy, hi, db)


def test_large_noise_records_flip(iv6):
    flips = 0
    for seed in SHIPPED_SEEDS:
        land = landscape_family(iv6, 0.0)(seed)
        out = two_phase_search(land.with_amp(20 * land.mean_gap))
        assert out.regret >= 0
        flips += out.cell_flip
    assert flips > 0


def test_search_on_sub_grid(iv6):
    land = SyntheticLandscape(iv6)
    sub = [c for c in land.cells if c[0] in (8.0, 9.0)]
    out = two_phase_search(land, grid=sub)
    assert out.phase1_pick in sub and out.regret == 0
    assert out.phase2_d == land.d_star(out.phase1_pick)
    with pytest.raises(DomainError):
        two_phase_search(land, grid=[])


def test_real_feasible_sets_have_holes():
    raw = grid_intervals(hull=False)
    assert any(len(iv) < (iv.d_max - iv.d_min) // 8 + 1 for iv in raw.values())


def test_lr_helpers():
    band = planted_lr_band()
    assert band.coefficients["slope"] < 0
    law = lr_power_law()
    assert -0.2 < law.coefficients["exponent"] < -0.1
