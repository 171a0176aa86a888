"""Invert the accounting: macroscopic targets plus one free width -> integer architecture.

Given (M, N_a, N) and the hidden size d, the layer count follows from the
attention FLOPs alone, the MoE mass d_m * L_m from N - N_a, and the dense/MoE
split from N_a. Each real-valued unknown is then rounded in a fixed order
(L, then L_m, then d_m against the already-rounded values) and the exact
metrics are recomputed; a solution is accepted when M, N_a and N all land
within 5% of their targets.

The scalar path (:func:`solve_structure`) and the vectorised feasibility scan
(:func:`feasible_mask`) perform the same float operations in the same order,
so they agree bit for bit on which d values are accepted.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import brentq

from .arch import ArchConfig, ResourceMetrics, ScalePreset, compute_metrics, width_ratio
from .errors import DomainError, InfeasibleError, RoundingReject

QUANTUM = 8
D_CAP = 2**14
TOLERANCE = 0.05
ALLOWED_QUANTA = (8, 16, 32)


@dataclass(frozen=True)
class MacroTarget:
    """The (M, N_a, N) triad plus the preset supplying the fixed geometry.

    Only positivity is enforced here; M <= 6*N_a and N < N_a are reported by
    the solver as infeasibilities rather than rejected at construction.
    """

    flops: float
    active: float
    total: float
    preset: ScalePreset

    def __post_init__(self):
        for name in ("flops", "active", "total"):
            v = getattr(self, name)
            if not (isinstance(v, (int, float)) and math.isfinite(v) and v > 0):
                raise DomainError(f"{name} must be a positive finite number, got {v!r}")

    @property
    def m_over_na(self) -> float:
        return self.flops / self.active

    @property
    def n_over_na(self) -> float:
        return self.total / self.active

    @classmethod
    def from_metrics(cls, metrics: ResourceMetrics, preset: ScalePreset) -> "MacroTarget":
        return cls(metrics.flops, metrics.active_params, metrics.total_params, preset)

    def to_dict(self) -> dict:
        return {"flops": self.flops, "active": self.active, "total": self.total,
                "preset": self.preset.to_dict()}

    @classmethod
    def from_dict(cls, data: dict) -> "MacroTarget":
        return cls(data["flops"], data["active"], data["total"],
                   ScalePreset.from_dict(data["preset"]))


@dataclass(frozen=True)
class StructuralSolution:
    cfg: ArchConfig
    achieved: ResourceMetrics
    deviation_m: float
    deviation_na: float
    deviation_n: float
    rounding_trace: tuple[tuple[str, float, int], ...] = field(default=())
    tolerance: float = TOLERANCE

    @property
    def max_deviation(self) -> float:
        return max(self.deviation_m, self.deviation_na, self.deviation_n)

    @property
    def accepted(self) -> bool:
        return self.max_deviation <= self.tolerance

    def to_dict(self) -> dict:
        return {
            "cfg": self.cfg.to_dict(),
            "achieved": self.achieved.to_dict(),
            "deviation_m": self.deviation_m,
            "deviation_na": self.deviation_na,
            "deviation_n": self.deviation_n,
            "rounding_trace": [list(t) for t in self.rounding_trace],
            "tolerance": self.tolerance,
            "accepted": self.accepted,
        }

    @classmethod
    def from_dict(cls, data: dict) -> "StructuralSolution":
        return cls(
            cfg=ArchConfig.from_dict(data["cfg"]),
            achieved=ResourceMetrics.from_dict(data["achieved"]),
            deviation_m=data["deviation_m"],
            deviation_na=data["deviation_na"],
            deviation_n=data["deviation_n"],
            rounding_trace=tuple((f, v, r) for f, v, r in data["rounding_trace"]),
            tolerance=data.get("tolerance", TOLERANCE),
        )


@dataclass(frozen=True)
class FeasibleInterval:
    d_min: int
    d_max: int
    d_median: int
    feasible_set: tuple[int, ...]

    @property
    def width(self) -> int:
        return self.d_max - self.d_min

    def __len__(self):
        return len(self.feasible_set)

    def to_dict(self) -> dict:
        return {"d_min": self.d_min, "d_max": self.d_max, "d_median": self.d_median,
                "feasible_set": list(self.feasible_set)}

    @classmethod
    def from_dict(cls, data: dict) -> "FeasibleInterval":
        return cls(data["d_min"], data["d_max"], data["d_median"], tuple(data["feasible_set"]))


def hardware_round(value: float, quantum: int = QUANTUM) -> int:
    """Nearest multiple of ``quantum`` (ties up), never below one quantum."""
    if quantum not in ALLOWED_QUANTA:
        raise DomainError(f"quantum must be one of {ALLOWED_QUANTA}, got {quantum}")
    if not value > 0:
        raise RoundingReject(f"cannot round non-positive value {value} to a hardware multiple")
    return max(math.floor(value / quantum + 0.5), 1) * quantum


def ratios_to_macro(flops: float, m_over_na: float, n_over_na: float,
                    preset: ScalePreset) -> MacroTarget:
    """Map a point of the normalised (M, M/N_a, N/N_a) space back to a triad."""
    if not m_over_na > 6:
        raise DomainError(f"M/N_a must exceed 6, got {m_over_na}")
    upper = preset.max_n_over_na
    if not 1 < n_over_na < upper:
        raise DomainError(f"N/N_a must lie in the open interval (1, {upper:.6g}), got {n_over_na}")
    active = flops / m_over_na
    return MacroTarget(flops, active, n_over_na * active, preset)


def _attn_flops_per_layer(p: ScalePreset) -> int:
    return 6 * p.seq_len * p.n_heads * p.head_dim


def _layer_count(target: MacroTarget) -> tuple[float, int]:
    p = target.preset
    real = (target.flops - 6 * target.active) / _attn_flops_per_layer(p)
    if not real > 0:
        raise InfeasibleError("M", f"M={target.flops:.6g} leaves no FLOPs for attention "
                                   f"(needs M > 6*N_a = {6 * target.active:.6g})")
    return real, math.floor(real + 0.5)


def _relative(achieved: int, wanted: float) -> float:
    return abs(achieved - wanted) / wanted


def _check_d(d, quantum: int) -> int:
    if quantum not in ALLOWED_QUANTA:
        raise DomainError(f"quantum must be one of {ALLOWED_QUANTA}, got {quantum}")
    if isinstance(d, bool) or int(d) != d or d <= 0 or int(d) % quantum:
        raise DomainError(f"d must be a positive multiple of {quantum}, got {d}")
    return int(d)


def solve_structure(target: MacroTarget, d: int, *, quantum: int = QUANTUM,
                    tolerance: float = TOLERANCE, allow_no_dense: bool = False,
                    dense_mode: str = "gamma") -> StructuralSolution:
    """Solve for (L_d, L_m, d_m) at hidden size ``d``.

    ``dense_mode="gamma"`` ties the dense FFN width to ``preset.gamma * d``;
    ``"match-moe"`` sets it to the active MoE width ``(K+1) * d_m`` instead.

    Raises:
        InfeasibleError: kind ``"M"`` when M <= 6*N_a, kind ``"shape"`` when the
            rounded layer split or MoE mass is impossible.
        RoundingReject: the best rounding misses a target by more than
            ``tolerance``; the rejected solution rides along on the exception.
    """
    d = _check_d(d, quantum)
    if dense_mode not in ("gamma", "match-moe"):
        raise DomainError(f"unknown dense_mode {dense_mode!r}")
    p = target.preset
    min_dense = 0 if allow_no_dense else 1
    layers_real, layers = _layer_count(target)
    trace = [("layers", layers_real, layers)]
    if layers < 1 + min_dense:
        raise InfeasibleError("shape", f"only {layers} layer(s) fit the attention budget")

    moe_mass = (target.total - target.active) / (3 * d * (p.n_experts - p.top_k))
    if not moe_mass > 0:
        raise InfeasibleError("shape", "N <= N_a leaves no routed-expert parameters to place")

    attn = 2 * (p.n_heads + p.n_kv_heads) * p.head_dim * d
    if dense_mode == "gamma":
        dense_ffn = round(p.gamma * d)
        dense_per_layer = 3 * d * dense_ffn
        moe_real = ((attn + dense_per_layer) * layers + 3 * d * (p.top_k + 1) * moe_mass
                    - target.active) / dense_per_layer
        moe_layers = math.floor(moe_real + 0.5)
        trace.append(("moe_layers", moe_real, moe_layers))
        _check_split(layers, moe_layers, min_dense)
        expert_real = moe_mass / moe_layers
    else:
        expert_real = (target.active - attn * layers) / (3 * d * (p.top_k + 1)) / layers
        if not expert_real > 0:
            raise InfeasibleError("shape", "attention alone exceeds the active-parameter target")
        moe_real = moe_mass / expert_real
        moe_layers = math.floor(moe_real + 0.5)
        trace.append(("moe_layers", moe_real, moe_layers))
        _check_split(layers, moe_layers, min_dense)

    best = None
    for expert in _expert_candidates(expert_real, quantum):
        dff = dense_ffn if dense_mode == "gamma" else expert * (p.top_k + 1)
        cfg = ArchConfig.from_preset(p, d, layers - moe_layers, moe_layers, expert, dense_ffn=dff)
        sol = _evaluate(cfg, target, tolerance, trace + [("expert_ffn", expert_real, expert)])
        if best is None or sol.max_deviation < best.max_deviation:
            best = sol
    if not best.accepted:
        raise RoundingReject(
            f"d={d}: best rounding deviates {best.max_deviation:.2%} (> {tolerance:.0%})", best)
    return best


def _check_split(layers: int, moe_layers: int, min_dense: int) -> None:
    if moe_layers < 1:
        raise InfeasibleError("shape", f"MoE layer count rounds to {moe_layers}")
    if layers - moe_layers < min_dense:
        raise InfeasibleError("shape", f"dense layer count would be {layers - moe_layers}")


def _expert_candidates(expert_real: float, quantum: int) -> list[int]:
    # hardware_round first so it wins ties on deviation
    nearest = hardware_round(expert_real, quantum)
    lo = max(math.floor(expert_real / quantum), 1) * quantum
    other = lo + quantum if nearest == lo else lo
    return [nearest, other] if other >= quantum and other != nearest else [nearest]


def _evaluate(cfg: ArchConfig, target: MacroTarget, tolerance: float, trace) -> StructuralSolution:
    m = compute_metrics(cfg)
    return StructuralSolution(
        cfg=cfg,
        achieved=m,
        deviation_m=_relative(m.flops, target.flops),
        deviation_na=_relative(m.active_params, target.active),
        deviation_n=_relative(m.total_params, target.total),
        rounding_trace=tuple(trace),
        tolerance=tolerance,
    )


def try_solve(target: MacroTarget, d: int, **kw) -> StructuralSolution | None:
    """``solve_structure`` that returns None instead of raising an infeasibility."""
    try:
        return solve_structure(target, d, **kw)
    except InfeasibleError:
        return None


def candidate_ds(quantum: int = QUANTUM, d_cap: int = D_CAP) -> np.ndarray:
    if quantum not in ALLOWED_QUANTA:
        raise DomainError(f"quantum must be one of {ALLOWED_QUANTA}, got {quantum}")
    return np.arange(quantum, d_cap + 1, quantum, dtype=np.int64)


def feasible_mask(target: MacroTarget, ds: np.ndarray, *, quantum: int = QUANTUM,
                  tolerance: float = TOLERANCE, allow_no_dense: bool = False) -> np.ndarray:
    """Vectorised acceptance test of ``solve_structure`` (gamma mode) over many d.

    Mirrors the scalar arithmetic step for step; the test-suite checks the two
    against each other d by d.
    """
    p = target.preset
    ds = np.asarray(ds, dtype=np.int64)
    if ds.size == 0:
        return np.zeros(0, dtype=bool)
    if np.any(ds % quantum) or np.any(ds <= 0):
        raise DomainError(f"all d must be positive multiples of {quantum}")
    min_dense = 0 if allow_no_dense else 1
    try:
        _, layers = _layer_count(target)
    except InfeasibleError:
        return np.zeros(ds.shape, dtype=bool)
    if layers < 1 + min_dense or not target.total > target.active:
        return np.zeros(ds.shape, dtype=bool)

    n_inactive, k1 = p.n_experts - p.top_k, p.top_k + 1
    moe_mass = (target.total - target.active) / (3 * ds * n_inactive)
    attn = 2 * (p.n_heads + p.n_kv_heads) * p.head_dim * ds
    if float(p.gamma).is_integer():
        dense_ffn = ds * int(p.gamma)
    else:
        dense_ffn = np.array([round(p.gamma * int(d)) for d in ds], dtype=np.int64)
    dense_per_layer = 3 * ds * dense_ffn
    moe_real = ((attn + dense_per_layer) * layers + 3 * ds * k1 * moe_mass
                - target.active) / dense_per_layer
    moe_layers = np.floor(moe_real + 0.5).astype(np.int64)
    ok = (moe_mass > 0) & (moe_layers >= 1) & (layers - moe_layers >= min_dense)
    safe_moe = np.where(moe_layers >= 1, moe_layers, 1)
    expert_real = moe_mass / safe_moe

    nearest = np.maximum(np.floor(expert_real / quantum + 0.5), 1).astype(np.int64) * quantum
    lo = np.maximum(np.floor(expert_real / quantum), 1).astype(np.int64) * quantum
    other = np.where(nearest == lo, lo + quantum, lo)
    has_other = other != nearest

    dense_layers = layers - moe_layers
    attn_flops = _attn_flops_per_layer(p) * layers

    def max_dev(expert):
        active = attn * layers + dense_per_layer * dense_layers + moe_layers * k1 * 3 * ds * expert
        flops = 6 * active + attn_flops
        total = active + 3 * ds * expert * n_inactive * moe_layers
        dm = np.abs(flops - target.flops) / target.flops
        dna = np.abs(active - target.active) / target.active
        dn = np.abs(total - target.total) / target.total
        return np.maximum(np.maximum(dm, dna), dn)

    dev = max_dev(nearest)
    dev_other = np.where(has_other, max_dev(other), np.inf)
    best = np.where(dev_other < dev, dev_other, dev)
    return ok & (best <= tolerance)


def feasible_d_interval(target: MacroTarget, *, quantum: int = QUANTUM, d_cap: int = D_CAP,
                        tolerance: float = TOLERANCE, allow_no_dense: bool = False) -> FeasibleInterval:
    """Scan d over quantum multiples in [quantum, d_cap] and collect accepted values.

    The median is the lower median of the feasible set.
    """
    if target.total < target.active:
        raise InfeasibleError("target", "N < N_a")
    ds = candidate_ds(quantum, d_cap)
    mask = feasible_mask(target, ds, quantum=quantum, tolerance=tolerance,
                         allow_no_dense=allow_no_dense)
    feasible = tuple(int(d) for d in ds[mask])
    if not feasible:
        raise InfeasibleError("target", "no hidden size admits an accepted solution")
    return FeasibleInterval(feasible[0], feasible[-1], feasible[(len(feasible) - 1) // 2], feasible)


def solve_by_width_ratio(target: MacroTarget, rho: float, *, quantum: int = QUANTUM,
                         d_cap: int = D_CAP, tolerance: float = TOLERANCE) -> StructuralSolution:
    """Use (K+1)*d_m/d = rho as the free variable instead of d.

    With d_m = rho*d/(K+1) the active-parameter equation becomes a quadratic
    in d; its root is located by bracketed search on (0, d_cap] and the
    nearby quantum multiples are handed to :func:`solve_structure`. Among
    accepted candidates the one whose realised ratio is closest to rho wins.
    """
    if not rho > 0:
        raise DomainError(f"width ratio must be positive, got {rho}")
    p = target.preset
    _, layers = _layer_count(target)
    k1, n_inactive = p.top_k + 1, p.n_experts - p.top_k
    spread = target.total - target.active
    const = spread * k1 / n_inactive * (1 - p.gamma / rho) - target.active

    def residual(d):
        return (3 * p.gamma * layers * d * d
                + 2 * (p.n_heads + p.n_kv_heads) * p.head_dim * layers * d + const)

    lo, hi = 1e-9, float(d_cap)
    if not residual(lo) < 0 < residual(hi):
        raise InfeasibleError("ratio", f"no hidden size in (0, {d_cap}] realises ratio {rho}")
    d_real = brentq(residual, lo, hi, xtol=1e-12, rtol=4 * np.finfo(float).eps)
    if rho * d_real / k1 < quantum:
        raise InfeasibleError("ratio", f"ratio {rho} implies expert width below {quantum}")

    centre = hardware_round(d_real, quantum)
    best, best_key = None, None
    for d in (centre - quantum, centre, centre + quantum):
        if d < quantum:
            continue
        sol = try_solve(target, d, quantum=quantum, tolerance=tolerance)
        if sol is None:
            continue
        key = (abs(width_ratio(sol.cfg) - rho), sol.max_deviation, abs(d - d_real))
        if best_key is None or key < best_key:
            best, best_key = sol, key
    if best is None:
        raise InfeasibleError("ratio", f"no accepted solution near d={d_real:.1f} for ratio {rho}")
    return best
