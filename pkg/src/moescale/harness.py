"""Synthetic loss landscapes for checking the median-proxy two-phase search.

A landscape assigns every (cell, d) a loss

    f(M/N_a) + g(N/N_a) + kappa * ((d - d*_cell) / q)**2 + amp * r(cell, d, seed)

with f inverse-linear, g bounded-rational, d*_cell one quantum above the
cell's median feasible d, and r a hash of (seed, cell, d) mapped to [-1, 1].
Because every cell sits the same distance from its own d* at its median,
amp = 0 gives a median-proxy ranking identical to the ranking of the true
per-cell minima.
"""

from __future__ import annotations

import hashlib
import math
import struct
from dataclasses import dataclass, field
from typing import Callable, Iterable, Sequence

import numpy as np

from .arch import PRESETS, ScalePreset
from .errors import DomainError
from .fitting import Dataset1D, FitResult, RankStats, fit_linear_band, fit_power_law, \
    fit_quadratic, rank_stats
from .records import write_records
from .region import DEFAULT_M_GRID, DEFAULT_N_GRID, generate_grid
from .solver import QUANTUM, FeasibleInterval

#: Seeds used by every shipped Monte-Carlo check.
SHIPPED_SEEDS = tuple(range(1, 21))

GRID_4X4 = ((8.0, 9.0, 11.0, 14.0), (16.0, 20.0, 22.0, 26.0))
GRID_6X6 = (DEFAULT_M_GRID, DEFAULT_N_GRID)

Cell = tuple[float, float]


def hash_unit(seed: int, cell: Cell, d: int) -> float:
    """Deterministic value in [-1, 1] from sha256 of ``"seed:m:n:d"``.

    The first 8 digest bytes are read as a big-endian uint64 and mapped
    linearly onto [-1, 1].
    """
    key = f"{seed}:{cell[0]!r}:{cell[1]!r}:{d}".encode()
    (u,) = struct.unpack(">Q", hashlib.sha256(key).digest()[:8])
    return 2.0 * u / (2**64 - 1) - 1.0


@dataclass(frozen=True)
class BaseShape:
    """Separable base loss f(m) + g(n) + c."""

    a_m: float = 0.4
    b_m: float = 0.02
    a_n: float = 2.0
    b_n: float = 0.5
    c: float = 2.0
    n_upper: float = 289 / 9

    def f(self, m: float) -> float:
        return self.a_m / (m - 6.0) + self.b_m * m

    def g(self, n: float) -> float:
        return self.a_n / (n - 1.0) + self.b_n / (self.n_upper - n)

    def __call__(self, cell: Cell) -> float:
        return self.f(cell[0]) + self.g(cell[1]) + self.c

    @classmethod
    def jittered(cls, seed: int, scale: float = 0.05) -> "BaseShape":
        """Coefficients perturbed multiplicatively by up to ``scale``, reproducibly per seed."""
        rng = np.random.default_rng(seed)
        j = 1 + scale * rng.uniform(-1, 1, size=4)
        base = cls()
        return cls(base.a_m * j[0], base.b_m * j[1], base.a_n * j[2], base.b_n * j[3], base.c)


def hull_intervals(intervals: dict[Cell, FeasibleInterval],
                   quantum: int = QUANTUM) -> dict[Cell, FeasibleInterval]:
    """Replace each feasible set by every quantum multiple between its ends."""
    out = {}
    for cell, iv in intervals.items():
        full = tuple(range(iv.d_min, iv.d_max + 1, quantum))
        out[cell] = FeasibleInterval(iv.d_min, iv.d_max, full[(len(full) - 1) // 2], full)
    return out


def grid_intervals(preset: ScalePreset | None = None, m_grid=DEFAULT_M_GRID,
                   n_grid=DEFAULT_N_GRID, *, hull: bool = True) -> dict[Cell, FeasibleInterval]:
    """Feasible-d intervals of a real experiment grid, keyed by (M/N_a, N/N_a)."""
    grid = generate_grid(preset or PRESETS["1e18"], m_grid, n_grid)
    ivs = {(p.m_over_na, p.n_over_na): p.interval for p in grid.points}
    return hull_intervals(ivs) if hull else ivs


@dataclass(frozen=True)
class SyntheticLandscape:
    intervals: dict
    base: BaseShape = field(default_factory=BaseShape)
    perturb_amp: float = 0.0
    d_curvature: float | None = None
    seed: int = 0
    quantum: int = QUANTUM
    offset_steps: int = 1

    def __post_init__(self):
        if not self.intervals:
            raise DomainError("landscape needs at least one cell")
        if self.perturb_amp < 0:
            raise DomainError("perturb_amp must be non-negative")
        targets = {}
        for cell, iv in self.intervals.items():
            d_star = iv.d_median + self.offset_steps * self.quantum
            if d_star not in iv.feasible_set:
                raise DomainError(f"cell {cell}: d* = {d_star} is not feasible; use hull intervals "
                                  "with at least 2 members")
            targets[cell] = d_star
        object.__setattr__(self, "_d_star", targets)
        if self.d_curvature is None:
            object.__setattr__(self, "d_curvature", max(self.min_gap, 1e-12))

    @property
    def cells(self) -> list[Cell]:
        return sorted(self.intervals)

    @property
    def min_gap(self) -> float:
        vals = sorted(self.base(c) for c in self.intervals)
        if len(vals) < 2:
            return math.inf
        return float(min(b - a for a, b in zip(vals, vals[1:])))

    @property
    def mean_gap(self) -> float:
        vals = sorted(self.base(c) for c in self.intervals)
        return (vals[-1] - vals[0]) / (len(vals) - 1)

    def d_star(self, cell: Cell) -> int:
        return self._d_star[cell]

    def with_amp(self, amp: float) -> "SyntheticLandscape":
        return SyntheticLandscape(self.intervals, self.base, amp, self.d_curvature, self.seed,
                                  self.quantum, self.offset_steps)


def evaluate(landscape: SyntheticLandscape, cell: Cell, d: int) -> float:
    if cell not in landscape.intervals:
        raise DomainError(f"cell {cell} is not in the landscape grid")
    if d not in landscape.intervals[cell].feasible_set:
        raise DomainError(f"d={d} is outside the feasible set of cell {cell}")
    steps = (d - landscape.d_star(cell)) / landscape.quantum
    loss = landscape.base(cell) + landscape.d_curvature * steps * steps
    if landscape.perturb_amp:
        loss += landscape.perturb_amp * hash_unit(landscape.seed, cell, d)
    return loss


@dataclass(frozen=True)
class SearchOutcome:
    phase1_pick: Cell
    phase2_fit: FitResult
    phase2_d: int
    brute_pick: tuple[Cell, int]
    proxy_losses: dict
    true_minima: dict
    rank: RankStats | None
    loss: float
    brute_loss: float

    @property
    def regret(self) -> float:
        return self.loss - self.brute_loss

    @property
    def cell_flip(self) -> bool:
        return self.phase1_pick != self.brute_pick[0]


def _snap(value: float, members: Sequence[int]) -> int:
    return min(members, key=lambda d: (abs(d - value), d))


def two_phase_search(landscape: SyntheticLandscape, grid: Iterable[Cell] | None = None,
                     d_intervals: dict | None = None) -> SearchOutcome:
    """Median-proxy cell search, then a quadratic d fit in the winning cell, plus the brute force."""
    d_intervals = d_intervals if d_intervals is not None else landscape.intervals
    cells = sorted(grid) if grid is not None else sorted(d_intervals)
    if not cells:
        raise DomainError("empty grid")
    proxy = {c: evaluate(landscape, c, d_intervals[c].d_median) for c in cells}
    pick = min(cells, key=lambda c: (proxy[c], c))

    members = d_intervals[pick].feasible_set
    sweep = Dataset1D(members, [evaluate(landscape, pick, d) for d in members])
    quad = fit_quadratic(sweep)
    if quad.x_opt is None:
        d2 = members[int(np.argmin(sweep.y))]
    else:
        d2 = _snap(quad.x_opt, members)

    true_min, best = {}, None
    for c in cells:
        for d in d_intervals[c].feasible_set:
            v = evaluate(landscape, c, d)
            if c not in true_min or v < true_min[c]:
                true_min[c] = v
            if best is None or v < best[0]:
                best = (v, c, d)
    xs = [proxy[c] for c in cells]
    ys = [true_min[c] for c in cells]
    stats = rank_stats(xs, ys) if len(cells) >= 3 else None
    return SearchOutcome(pick, quad, d2, (best[1], best[2]), proxy, true_min, stats,
                         evaluate(landscape, pick, d2), best[0])


REPORT_SCHEMA = (("seed", int), ("perturb_amp", float), ("pearson_r", float),
                 ("spearman_rho", float), ("kendall_tau", float), ("p_pearson", float),
                 ("p_spearman", float), ("p_kendall", float), ("slope", float),
                 ("intercept", float), ("regret", float), ("cell_flip", int))

SCATTER_SCHEMA = (("seed", int), ("m_over_na", float), ("n_over_na", float),
                  ("proxy_loss", float), ("true_min_loss", float))


@dataclass(frozen=True)
class ProxyReport:
    rows: tuple[dict, ...]
    scatter: tuple[dict, ...]

    def mean(self, key: str) -> float:
        return float(np.mean([r[key] for r in self.rows]))

    def to_csv(self, fh=None):
        return write_records(REPORT_SCHEMA, self.rows, fh)

    def scatter_csv(self, fh=None):
        return write_records(SCATTER_SCHEMA, self.scatter, fh)


def proxy_validation_report(family: Callable[[int], SyntheticLandscape],
                            seeds: Sequence[int] = SHIPPED_SEEDS) -> ProxyReport:
    """Per-seed agreement between median-proxy losses and true per-cell minima.

    ``family`` maps a seed to a landscape. Each row also carries the
    least-squares line of true minimum on proxy loss.
    """
    if len(seeds) < 2:
        raise DomainError("need at least 2 replicates")
    rows, scatter = [], []
    for seed in seeds:
        land = family(seed)
        out = two_phase_search(land)
        cells = sorted(out.proxy_losses)
        x = np.array([out.proxy_losses[c] for c in cells])
        y = np.array([out.true_minima[c] for c in cells])
        slope, intercept = np.polyfit(x, y, 1)
        st = out.rank
        rows.append({"seed": seed, "perturb_amp": land.perturb_amp,
                     "pearson_r": st.pearson_r, "spearman_rho": st.spearman_rho,
                     "kendall_tau": st.kendall_tau, "p_pearson": st.p_pearson,
                     "p_spearman": st.p_spearman, "p_kendall": st.p_kendall,
                     "slope": float(slope), "intercept": float(intercept),
                     "regret": out.regret, "cell_flip": int(out.cell_flip)})
        scatter += [{"seed": seed, "m_over_na": c[0], "n_over_na": c[1], "proxy_loss": a,
                     "true_min_loss": b} for c, a, b in zip(cells, x.tolist(), y.tolist())]
    return ProxyReport(tuple(rows), tuple(scatter))


def landscape_family(intervals: dict, amp_fraction: float = 0.0) -> Callable[[int], SyntheticLandscape]:
    """Seed -> landscape with jittered base shape and amplitude ``amp_fraction * min_gap``."""
    def make(seed: int) -> SyntheticLandscape:
        land = SyntheticLandscape(intervals, BaseShape.jittered(seed), 0.0, seed=seed)
        return land.with_amp(amp_fraction * land.min_gap)
    return make


def find_flip(landscape: SyntheticLandscape) -> tuple[Cell, Cell, int] | None:
    """A pair of cells and a step offset from each median where the loss order
    disagrees with the base order, or None."""
    cells = landscape.cells
    for i, a in enumerate(cells):
        for b in cells[i + 1:]:
            lo, hi = (a, b) if landscape.base(a) < landscape.base(b) else (b, a)
            ia, ib = landscape.intervals[lo], landscape.intervals[hi]
            for k in range(-len(ia.feasible_set), len(ia.feasible_set) + 1):
                da = ia.d_median + k * landscape.quantum
                db = ib.d_median + k * landscape.quantum
                if da in ia.feasible_set and db in ib.feasible_set:
                    if evaluate(landscape, lo, da) > evaluate(landscape, hi, db):
                        return lo, hi, k
    return None


# Planted runs for law fitting.

def widening_band_runs(scales: Sequence[float] = tuple(p.compute for p in PRESETS.values()), *,
                       d_coef: float = 9.5, d_exp: float = 0.1, loss0: float = 3.0,
                       curvature0: float = 2e-6, curvature_exp: float = -0.3,
                       points: int = 13, mna_coef: float = 58.9,
                       mna_exp: float = -0.0423):
    """Noise-free per-scale datasets with known optima and widening d bands.

    Hidden-size losses are parabolas around d_opt(C) = d_coef * C**d_exp
    whose curvature decays as C**curvature_exp, so the 0.1% band widens
    with C. M/N_a losses are inverse-linear with optimum
    mna_coef * C**mna_exp.
    """
    from .pipeline import ScaleRuns

    runs = []
    for c in scales:
        d_opt = d_coef * c ** d_exp
        curv = curvature0 * (c / scales[0]) ** curvature_exp
        l0 = loss0 * (c / scales[0]) ** -0.05
        ds = np.linspace(0.5 * d_opt, 1.5 * d_opt, points)
        hidden = Dataset1D(ds, l0 + curv * (ds - d_opt) ** 2)
        x_opt = mna_coef * c ** mna_exp
        b = 0.02
        a = b * (x_opt - 6.0) ** 2
        xs = np.array([7.0, 8.0, 9.0, 11.0, 14.0, 17.0])
        mna = Dataset1D(xs, a / (xs - 6.0) + b * xs + l0)
        runs.append(ScaleRuns(c, mna=mna, hidden=hidden))
    return runs


def planted_lr_band() -> FitResult:
    """Shared-slope band through the preset (log10 C, log10 lr) points."""
    pts = [(math.log10(p.compute), math.log10(p.lr)) for p in PRESETS.values()]
    return fit_linear_band(Dataset1D.from_points(pts))


def lr_power_law() -> FitResult:
    return fit_power_law(Dataset1D([p.compute for p in PRESETS.values()],
                                   [p.lr for p in PRESETS.values()]))
