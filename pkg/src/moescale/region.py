"""Feasible-region maps at fixed M, ratio-space experiment grids and d sweeps."""

from __future__ import annotations

import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field

import numpy as np

from .arch import ScalePreset
from .errors import DomainError, InfeasibleError
from .records import read_records, write_records
from .solver import (
    D_CAP,
    QUANTUM,
    FeasibleInterval,
    MacroTarget,
    StructuralSolution,
    candidate_ds,
    feasible_d_interval,
    feasible_mask,
    ratios_to_macro,
    solve_structure,
)

DEFAULT_M_GRID = (7.0, 8.0, 9.0, 11.0, 14.0, 17.0)
DEFAULT_N_GRID = (12.0, 16.0, 20.0, 22.0, 26.0, 30.0)
DEFAULT_RESOLUTION = (64, 64)
DEFAULT_M_MAX = 20.0


def _workers(workers: int | None) -> int:
    if workers is None:
        workers = int(os.environ.get("MOESCALE_WORKERS", "1"))
    return max(1, workers)


def _pmap(fn, items, workers: int | None):
    n = _workers(workers)
    if n == 1:
        return [fn(x) for x in items]
    with ThreadPoolExecutor(n) as pool:
        return list(pool.map(fn, items))


REGION_SCHEMA = (("m_over_na", float), ("n_over_na", float), ("active", float),
                 ("total", float), ("d_min", int), ("d_max", int), ("d_count", int))


@dataclass(frozen=True)
class RegionCell:
    """One ratio-space cell; ``d_min``/``d_max`` are 0 when nothing is feasible."""

    m_over_na: float
    n_over_na: float
    active: float
    total: float
    d_min: int
    d_max: int
    d_count: int

    def to_dict(self) -> dict:
        return asdict(self)


@dataclass(frozen=True)
class Resolution:
    """A uniform cell-centred grid over the box (6, m_max] x (1, (N_e+1)/(K+1))."""

    m_cells: int = DEFAULT_RESOLUTION[0]
    n_cells: int = DEFAULT_RESOLUTION[1]
    m_max: float = DEFAULT_M_MAX

    def axes(self, preset: ScalePreset) -> tuple[np.ndarray, np.ndarray]:
        if self.m_cells < 1 or self.n_cells < 1 or not self.m_max > 6:
            raise DomainError(f"bad resolution {self}")
        m = 6 + (np.arange(self.m_cells) + 0.5) * (self.m_max - 6) / self.m_cells
        n = 1 + (np.arange(self.n_cells) + 0.5) * (preset.max_n_over_na - 1) / self.n_cells
        return m, n


@dataclass(frozen=True)
class RegionMap:
    flops: float
    preset: ScalePreset
    resolution: Resolution
    cells: tuple[RegionCell, ...]

    @property
    def feasible_cells(self) -> list[RegionCell]:
        return [c for c in self.cells if c.d_count > 0]

    def to_csv(self, fh=None):
        return write_records(REGION_SCHEMA, (c.to_dict() for c in self.cells), fh)

    @staticmethod
    def cells_from_csv(source) -> tuple[RegionCell, ...]:
        return tuple(RegionCell(**r) for r in read_records(REGION_SCHEMA, source))

    def to_dict(self) -> dict:
        return {"flops": self.flops, "preset": self.preset.to_dict(),
                "resolution": asdict(self.resolution),
                "cells": [c.to_dict() for c in self.cells]}

    @classmethod
    def from_dict(cls, data: dict) -> "RegionMap":
        return cls(data["flops"], ScalePreset.from_dict(data["preset"]),
                   Resolution(**data["resolution"]),
                   tuple(RegionCell(**c) for c in data["cells"]))


def _cell(flops: float, preset: ScalePreset, m: float, n: float, ds: np.ndarray,
          quantum: int) -> RegionCell:
    target = ratios_to_macro(flops, m, n, preset)
    mask = feasible_mask(target, ds, quantum=quantum)
    hits = ds[mask]
    if hits.size == 0:
        return RegionCell(float(m), float(n), target.active, target.total, 0, 0, 0)
    return RegionCell(float(m), float(n), target.active, target.total,
                      int(hits[0]), int(hits[-1]), int(hits.size))


def map_region(flops: float, preset: ScalePreset, resolution: Resolution | None = None, *,
               quantum: int = QUANTUM, d_cap: int = D_CAP, workers: int | None = None) -> RegionMap:
    """Feasible hidden-size range for every cell of a ratio-space grid at fixed M.

    Cells are listed m-major. Infeasible cells are kept with ``d_count == 0``.
    """
    resolution = resolution or Resolution()
    m_axis, n_axis = resolution.axes(preset)
    ds = candidate_ds(quantum, d_cap)
    coords = [(float(m), float(n)) for m in m_axis for n in n_axis]
    cells = _pmap(lambda mn: _cell(flops, preset, mn[0], mn[1], ds, quantum), coords, workers)
    region = RegionMap(flops, preset, resolution, tuple(cells))
    if not region.feasible_cells:
        raise InfeasibleError("M", f"no feasible architecture anywhere in the ratio box at M={flops:.6g}")
    return region


GRID_SCHEMA = (
    ("scale", str), ("m_over_na", float), ("n_over_na", float),
    ("flops", float), ("active", float), ("total", float),
    ("d_min", int), ("d_median", int), ("d_max", int), ("d_count", int),
    ("hidden", int), ("dense_layers", int), ("moe_layers", int),
    ("dense_ffn", int), ("expert_ffn", int),
    ("achieved_flops", int), ("achieved_active", int), ("achieved_total", int),
    ("deviation_m", float), ("deviation_na", float), ("deviation_n", float),
    ("status", str),
)

SWEEP_SCHEMA = (
    ("hidden", int), ("dense_layers", int), ("moe_layers", int), ("dense_ffn", int),
    ("expert_ffn", int), ("flops", int), ("active", int), ("total", int),
    ("m_over_na", float), ("n_over_na", float),
    ("deviation_m", float), ("deviation_na", float), ("deviation_n", float),
)


def _solution_fields(sol: StructuralSolution) -> dict:
    cfg, a = sol.cfg, sol.achieved
    return {"hidden": cfg.hidden, "dense_layers": cfg.dense_layers,
            "moe_layers": cfg.moe_layers, "dense_ffn": cfg.dense_ffn,
            "expert_ffn": cfg.expert_ffn, "achieved_flops": a.flops,
            "achieved_active": a.active_params, "achieved_total": a.total_params,
            "deviation_m": sol.deviation_m, "deviation_na": sol.deviation_na,
            "deviation_n": sol.deviation_n}


@dataclass(frozen=True)
class GridPoint:
    m_over_na: float
    n_over_na: float
    target: MacroTarget
    interval: FeasibleInterval
    solution: StructuralSolution

    def to_record(self, scale: str) -> dict:
        t, iv = self.target, self.interval
        return {"scale": scale, "m_over_na": self.m_over_na, "n_over_na": self.n_over_na,
                "flops": t.flops, "active": t.active, "total": t.total,
                "d_min": iv.d_min, "d_median": iv.d_median, "d_max": iv.d_max,
                "d_count": len(iv), **_solution_fields(self.solution), "status": "ok"}

    def to_dict(self) -> dict:
        return {"m_over_na": self.m_over_na, "n_over_na": self.n_over_na,
                "target": self.target.to_dict(), "interval": self.interval.to_dict(),
                "solution": self.solution.to_dict()}

    @classmethod
    def from_dict(cls, data: dict) -> "GridPoint":
        return cls(data["m_over_na"], data["n_over_na"], MacroTarget.from_dict(data["target"]),
                   FeasibleInterval.from_dict(data["interval"]),
                   StructuralSolution.from_dict(data["solution"]))


@dataclass(frozen=True)
class ExperimentGrid:
    scale: ScalePreset
    points: tuple[GridPoint, ...]
    infeasible: tuple[tuple[float, float, str], ...] = field(default=())

    def __len__(self):
        return len(self.points)

    def point(self, m_over_na: float, n_over_na: float) -> GridPoint:
        for p in self.points:
            if p.m_over_na == m_over_na and p.n_over_na == n_over_na:
                return p
        raise KeyError((m_over_na, n_over_na))

    def records(self) -> list[dict]:
        """Feasible points first, then one ``status="infeasible: ..."`` row per dropped cell."""
        rows = [p.to_record(self.scale.name) for p in self.points]
        rows += [{"scale": self.scale.name, "m_over_na": m, "n_over_na": n,
                  "status": f"infeasible: {why}"} for m, n, why in self.infeasible]
        return rows

    def to_csv(self, fh=None):
        return write_records(GRID_SCHEMA, self.records(), fh)

    def to_dict(self) -> dict:
        return {"scale": self.scale.to_dict(), "points": [p.to_dict() for p in self.points],
                "infeasible": [list(x) for x in self.infeasible]}

    @classmethod
    def from_dict(cls, data: dict) -> "ExperimentGrid":
        return cls(ScalePreset.from_dict(data["scale"]),
                   tuple(GridPoint.from_dict(p) for p in data["points"]),
                   tuple((m, n, why) for m, n, why in data["infeasible"]))


def _grid_point(scale: ScalePreset, m: float, n: float, quantum: int, d_cap: int):
    try:
        target = ratios_to_macro(scale.flops_target, m, n, scale)
        interval = feasible_d_interval(target, quantum=quantum, d_cap=d_cap)
        sol = solve_structure(target, interval.d_median, quantum=quantum)
    except (DomainError, InfeasibleError) as exc:
        return (m, n, str(exc))
    return GridPoint(m, n, target, interval, sol)


def generate_grid(scale: ScalePreset, m_grid=DEFAULT_M_GRID, n_grid=DEFAULT_N_GRID, *,
                  quantum: int = QUANTUM, d_cap: int = D_CAP, workers: int | None = None) -> ExperimentGrid:
    """One target per (M/N_a, N/N_a) cell, each solved at its median feasible d."""
    cells = [(float(m), float(n)) for m in m_grid for n in n_grid]
    results = _pmap(lambda mn: _grid_point(scale, mn[0], mn[1], quantum, d_cap), cells, workers)
    points = tuple(r for r in results if isinstance(r, GridPoint))
    infeasible = tuple(r for r in results if not isinstance(r, GridPoint))
    return ExperimentGrid(scale, points, infeasible)


def sweep_d(target: MacroTarget, *, quantum: int = QUANTUM,
            d_cap: int = D_CAP) -> list[tuple[int, StructuralSolution]]:
    """Every feasible hidden size with its accepted solution, ascending in d."""
    interval = feasible_d_interval(target, quantum=quantum, d_cap=d_cap)
    return [(d, solve_structure(target, d, quantum=quantum)) for d in interval.feasible_set]


def sweep_records(sweep: list[tuple[int, StructuralSolution]]) -> list[dict]:
    rows = []
    for _, sol in sweep:
        f = _solution_fields(sol)
        rows.append({"hidden": f["hidden"], "dense_layers": f["dense_layers"],
                     "moe_layers": f["moe_layers"], "dense_ffn": f["dense_ffn"],
                     "expert_ffn": f["expert_ffn"], "flops": f["achieved_flops"],
                     "active": f["achieved_active"], "total": f["achieved_total"],
                     "m_over_na": sol.achieved.m_over_na, "n_over_na": sol.achieved.n_over_na,
                     "deviation_m": sol.deviation_m, "deviation_na": sol.deviation_na,
                     "deviation_n": sol.deviation_n})
    return rows


def nearest_cell(m_over_na: float, n_over_na: float, m_grid=DEFAULT_M_GRID,
                 n_grid=DEFAULT_N_GRID) -> tuple[tuple[float, float], bool]:
    """Closest grid cell in ratio space; the flag is False when the nearest is tied."""
    dist = sorted(((m_over_na - m) ** 2 + (n_over_na - n) ** 2, (m, n))
                  for m in m_grid for n in n_grid)
    unique = len(dist) == 1 or dist[1][0] - dist[0][0] > 1e-12
    return dist[0][1], unique
