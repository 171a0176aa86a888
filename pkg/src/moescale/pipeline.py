"""Compute budget in, complete architecture out.

The chain is: (M, D) from the compute-optimal laws, N_a from the optimal
compute density M/N_a(C), N from the manual N/N_a presets, the hidden size
from the d(C) band laws (or the median proxy when none is loaded), and
finally the structural solve. Every number in the report carries a
provenance tag.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from functools import lru_cache
from typing import Iterable, Mapping

import numpy as np

from .arch import PRESETS, ScalePreset
from .errors import DomainError, FitError, InfeasibleError, LawSetError, StageError
from .fitting import Dataset1D, FitResult, fit_bounded_rational, fit_inv_linear, fit_power_law, \
    fit_quadratic, near_optimal_band
from .solver import QUANTUM, StructuralSolution, feasible_d_interval, ratios_to_macro, \
    solve_structure

SCHEMA_VERSION = 1
PROVENANCES = ("paper-constant", "user-fitted", "solver-derived", "interpolated")
BAND_TOLERANCE = 1e-3

#: Compute range spanned by the published budgets.
PAPER_C_RANGE = (1e18, 3e20)

#: Manual N/N_a choices per budget.
PAPER_NNA_PRESETS = ((1e18, 19.0), (3e18, 20.0), (1e19, 21.0), (3e19, 21.0), (1e20, 22.0),
                     (3e20, 22.0))

#: Fitted N/N_a optima per budget, carried as published constants only.
PAPER_NNA_FITTED = (19.23, 19.33, 20.69, 20.78, 21.29, 22.07)


def _check_provenance(p: str) -> str:
    if p not in PROVENANCES:
        raise LawSetError(f"unknown provenance {p!r}; expected one of {', '.join(PROVENANCES)}")
    return p


@dataclass(frozen=True)
class PowerLaw:
    """y = multiplier * C**exponent, valid (unflagged) on ``c_range``."""

    multiplier: float
    exponent: float
    provenance: str
    c_range: tuple[float, float] | None = None
    note: str = ""

    def __post_init__(self):
        _check_provenance(self.provenance)
        if not (math.isfinite(self.multiplier) and math.isfinite(self.exponent)):
            raise LawSetError("power-law coefficients must be finite")

    def __call__(self, c: float) -> float:
        return self.multiplier * c ** self.exponent

    def extrapolates(self, c: float) -> bool:
        if self.c_range is None:
            return False
        lo, hi = self.c_range
        return not lo * (1 - 1e-9) <= c <= hi * (1 + 1e-9)

    @classmethod
    def from_fit(cls, result: FitResult, c_range, provenance: str = "user-fitted",
                 note: str = "") -> "PowerLaw":
        return cls(result.coefficients["multiplier"], result.coefficients["exponent"],
                   provenance, tuple(c_range), note)

    def to_dict(self) -> dict:
        return {"multiplier": self.multiplier, "exponent": self.exponent,
                "provenance": self.provenance,
                "c_range": None if self.c_range is None else list(self.c_range),
                "note": self.note}

    @classmethod
    def from_dict(cls, data: dict) -> "PowerLaw":
        rng = data.get("c_range")
        return cls(data["multiplier"], data["exponent"], data["provenance"],
                   None if rng is None else tuple(rng), data.get("note", ""))


@dataclass(frozen=True)
class PresetTable:
    """Point values at a few budgets, read between them linearly in log10 C."""

    points: tuple[tuple[float, float], ...]
    provenance: str
    note: str = ""

    def __post_init__(self):
        _check_provenance(self.provenance)
        pts = tuple(sorted((float(c), float(v)) for c, v in self.points))
        if not pts:
            raise LawSetError("preset table is empty")
        if any(c <= 0 for c, _ in pts) or len({c for c, _ in pts}) != len(pts):
            raise LawSetError("preset budgets must be positive and distinct")
        object.__setattr__(self, "points", pts)

    @property
    def c_range(self) -> tuple[float, float]:
        return self.points[0][0], self.points[-1][0]

    def lookup(self, c: float, mode: str = "interpolate") -> tuple[float, bool]:
        """(value, exact) where ``exact`` means C hit a preset budget."""
        for pc, v in self.points:
            if abs(pc - c) <= 1e-9 * c:
                return v, True
        logs = np.log10([pc for pc, _ in self.points])
        lc = math.log10(c)
        if mode == "nearest" or len(self.points) == 1 or not logs[0] < lc < logs[-1]:
            i = int(np.argmin(np.abs(logs - lc)))
            return self.points[i][1], False
        if mode != "interpolate":
            raise DomainError(f"unknown preset lookup mode {mode!r}")
        vals = [v for _, v in self.points]
        return float(np.interp(lc, logs, vals)), False

    def to_dict(self) -> dict:
        return {"points": [list(p) for p in self.points], "provenance": self.provenance,
                "note": self.note}

    @classmethod
    def from_dict(cls, data: dict) -> "PresetTable":
        return cls(tuple(tuple(p) for p in data["points"]), data["provenance"],
                   data.get("note", ""))


@dataclass(frozen=True)
class HiddenBand:
    """Power laws for the lower edge, optimum and upper edge of the near-optimal d band."""

    lower: PowerLaw
    opt: PowerLaw
    upper: PowerLaw
    tolerance: float = BAND_TOLERANCE

    def __call__(self, c: float) -> tuple[float, float, float]:
        return self.lower(c), self.opt(c), self.upper(c)

    def to_dict(self) -> dict:
        return {"lower": self.lower.to_dict(), "opt": self.opt.to_dict(),
                "upper": self.upper.to_dict(), "tolerance": self.tolerance}

    @classmethod
    def from_dict(cls, data: dict) -> "HiddenBand":
        return cls(PowerLaw.from_dict(data["lower"]), PowerLaw.from_dict(data["opt"]),
                   PowerLaw.from_dict(data["upper"]), data.get("tolerance", BAND_TOLERANCE))


@dataclass(frozen=True)
class LawSet:
    """Registry of the laws the pipeline consumes.

    ``tokens_of_c`` is D^opt(C) in tokens, ``flops_of_c`` is M^opt(C) in
    FLOPs/token, ``mna_of_c`` the optimal compute density and
    ``hidden_band`` the (d_l, d_opt, d_r) laws. The last two may be absent.
    """

    tokens_of_c: PowerLaw
    flops_of_c: PowerLaw
    nna_presets: PresetTable
    mna_of_c: PowerLaw | None = None
    hidden_band: HiddenBand | None = None

    def laws(self) -> dict:
        out = {"tokens_of_c": self.tokens_of_c, "flops_of_c": self.flops_of_c,
               "nna_presets": self.nna_presets}
        if self.mna_of_c is not None:
            out["mna_of_c"] = self.mna_of_c
        if self.hidden_band is not None:
            out.update(d_lower=self.hidden_band.lower, d_opt=self.hidden_band.opt,
                       d_upper=self.hidden_band.upper)
        return out

    def to_dict(self) -> dict:
        return {"schema_version": SCHEMA_VERSION,
                "tokens_of_c": self.tokens_of_c.to_dict(),
                "flops_of_c": self.flops_of_c.to_dict(),
                "mna_of_c": None if self.mna_of_c is None else self.mna_of_c.to_dict(),
                "nna_presets": self.nna_presets.to_dict(),
                "hidden_band": None if self.hidden_band is None else self.hidden_band.to_dict()}

    @classmethod
    def from_dict(cls, data: dict) -> "LawSet":
        version = data.get("schema_version")
        if version != SCHEMA_VERSION:
            raise LawSetError(f"unsupported law-set schema_version {version!r}; expected {SCHEMA_VERSION}")
        try:
            return cls(
                tokens_of_c=PowerLaw.from_dict(data["tokens_of_c"]),
                flops_of_c=PowerLaw.from_dict(data["flops_of_c"]),
                nna_presets=PresetTable.from_dict(data["nna_presets"]),
                mna_of_c=None if data.get("mna_of_c") is None else PowerLaw.from_dict(data["mna_of_c"]),
                hidden_band=None if data.get("hidden_band") is None
                else HiddenBand.from_dict(data["hidden_band"]),
            )
        except (KeyError, TypeError) as exc:
            raise LawSetError(f"malformed law set: {exc!r}") from None

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2)

    @classmethod
    def from_json(cls, text: str) -> "LawSet":
        try:
            data = json.loads(text)
        except json.JSONDecodeError as exc:
            raise LawSetError(f"law set is not valid JSON: {exc}") from None
        return cls.from_dict(data)


def paper_cmd_laws() -> tuple[PowerLaw, PowerLaw]:
    tokens = PowerLaw(22.8929, 0.4563, "paper-constant", PAPER_C_RANGE, "D_opt(C), tokens")
    flops = PowerLaw(0.04368, 0.5437, "paper-constant", PAPER_C_RANGE, "M_opt(C), FLOPs/token")
    return tokens, flops


@lru_cache(maxsize=1)
def corpus_mna_law() -> PowerLaw:
    """Power law through the compute densities of the shipped hidden-size sweeps."""
    from .tables import sweep_triads

    triads = sweep_triads()
    cs = [PRESETS[s].compute for s in triads]
    fit = fit_power_law(Dataset1D(cs, [t.m_over_na for t in triads.values()]))
    return PowerLaw.from_fit(fit, (min(cs), max(cs)), "user-fitted",
                             "fitted to the median M/N_a of the shipped d-sweep tables")


def default_lawset() -> LawSet:
    """Published (C, M, D) laws and N/N_a presets, plus the corpus-fitted M/N_a law.

    No hidden-size band is included; :func:`design` then falls back to the
    median proxy.
    """
    tokens, flops = paper_cmd_laws()
    return LawSet(tokens, flops,
                  PresetTable(PAPER_NNA_PRESETS, "paper-constant", "manual N/N_a per budget"),
                  corpus_mna_law(), None)


def optimal_cmd(compute: float, laws: LawSet) -> tuple[float, float]:
    """(M in FLOPs/token, D in tokens) at the given budget.

    Raises LawSetError when M*D strays more than 1% from C.
    """
    if not compute > 0:
        raise DomainError(f"compute must be positive, got {compute}")
    m, d = laws.flops_of_c(compute), laws.tokens_of_c(compute)
    ratio = m * d / compute
    if abs(ratio - 1) > 0.01:
        raise LawSetError(f"M*D/C = {ratio:.6f} at C={compute:.4g}; the (M, D) laws are inconsistent")
    return m, d


@dataclass(frozen=True)
class Quantity:
    value: float
    provenance: str
    note: str = ""

    def to_dict(self) -> dict:
        return {"value": self.value, "provenance": self.provenance, "note": self.note}

    @classmethod
    def from_dict(cls, data: dict) -> "Quantity":
        return cls(data["value"], data["provenance"], data.get("note", ""))


@dataclass(frozen=True)
class DesignReport:
    compute: float
    values: Mapping[str, Quantity]
    solution: StructuralSolution
    preset: str
    band_slack: float | None
    warnings: tuple[str, ...] = field(default=())

    def __getitem__(self, key: str) -> float:
        return self.values[key].value

    def to_dict(self) -> dict:
        return {"compute": self.compute, "preset": self.preset,
                "values": {k: q.to_dict() for k, q in self.values.items()},
                "solution": self.solution.to_dict(), "band_slack": self.band_slack,
                "warnings": list(self.warnings)}

    @classmethod
    def from_dict(cls, data: dict) -> "DesignReport":
        return cls(data["compute"], {k: Quantity.from_dict(q) for k, q in data["values"].items()},
                   StructuralSolution.from_dict(data["solution"]), data["preset"],
                   data["band_slack"], tuple(data["warnings"]))

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2)

    def to_text(self) -> str:
        cfg, sol = self.solution.cfg, self.solution
        lines = [f"compute budget C = {self.compute:.4g} FLOPs (geometry preset {self.preset})"]
        units = {"M": ("GFLOPs/token", 1e-9), "D": ("B tokens", 1e-9), "N_a": ("M params", 1e-6),
                 "N": ("M params", 1e-6)}
        for key, q in self.values.items():
            unit, scale = units.get(key, ("", 1.0))
            shown = f"{q.value * scale:.4f} {unit}".strip() if unit else f"{q.value:.6g}"
            lines.append(f"  {key:<10} {shown:<26} [{q.provenance}]")
        lines.append("architecture:")
        lines.append(f"  d={cfg.hidden}  L={cfg.layers} (dense {cfg.dense_layers}, MoE {cfg.moe_layers})"
                     f"  d_d={cfg.dense_ffn}  d_m={cfg.expert_ffn}")
        lines.append(f"  heads {cfg.n_heads}q/{cfg.n_kv_heads}kv x {cfg.head_dim}, experts "
                     f"{cfg.top_k}+1 of {cfg.n_experts}+1, S={cfg.seq_len}")
        lines.append(f"  deviations: M {sol.deviation_m:.3%}  N_a {sol.deviation_na:.3%}"
                     f"  N {sol.deviation_n:.3%}")
        if self.band_slack is not None:
            lines.append(f"  hidden size inside the {self.band_slack:.1%} near-optimal band")
        for w in self.warnings:
            lines.append(f"warning: {w}")
        return "\n".join(lines) + "\n"


def _loglog_interp(c: float, points: Iterable[tuple[float, float]]) -> float:
    """Piecewise power law through (C, value) points; end segments extend outward."""
    pts = sorted(points)
    lc = np.log10([p[0] for p in pts])
    lv = np.log10([p[1] for p in pts])
    x = math.log10(c)
    i = int(np.clip(np.searchsorted(lc, x) - 1, 0, len(pts) - 2))
    t = (x - lc[i]) / (lc[i + 1] - lc[i])
    return float(10 ** (lv[i] + t * (lv[i + 1] - lv[i])))


def training_hyperparams(compute: float) -> tuple[float, int, bool]:
    """(lr, batch, exact): exact preset values on a preset budget, else log-log interpolation."""
    for p in PRESETS.values():
        if abs(p.compute - compute) <= 1e-9 * compute:
            return p.lr, p.batch, True
    lr = _loglog_interp(compute, [(p.compute, p.lr) for p in PRESETS.values()])
    batch = _loglog_interp(compute, [(p.compute, p.batch) for p in PRESETS.values()])
    return lr, max(1, int(math.floor(batch + 0.5))), False


def _stage(name: str, fn, *args, **kw):
    try:
        return fn(*args, **kw)
    except (DomainError, InfeasibleError, LawSetError, FitError) as exc:
        raise StageError(name, exc) from exc


def _pick_hidden(interval, lo: float, opt: float, hi: float) -> tuple[int, bool]:
    """Feasible d closest to ``opt`` inside [lo, hi]; the flag is False when none lies inside."""
    inside = [d for d in interval.feasible_set if lo <= d <= hi]
    pool = inside or list(interval.feasible_set)
    return min(pool, key=lambda d: (abs(d - opt), d)), bool(inside)


def design(compute: float, laws: LawSet, preset: ScalePreset, *, nna_mode: str = "interpolate",
           quantum: int = QUANTUM) -> DesignReport:
    """Run the full chain for one budget; failures raise StageError naming the stage."""
    if not compute > 0:
        raise StageError("cmd", DomainError(f"compute must be positive, got {compute}"))
    warnings: list[str] = []
    for name, law in laws.laws().items():
        rng = law.c_range
        if rng is not None and not rng[0] * (1 - 1e-9) <= compute <= rng[1] * (1 + 1e-9):
            warnings.append(f"{name} extrapolated: C={compute:.4g} outside fitted range "
                            f"[{rng[0]:.4g}, {rng[1]:.4g}]")

    flops, tokens = _stage("cmd", optimal_cmd, compute, laws)
    product = flops * tokens / compute
    if abs(product - 1) > 0.005:
        warnings.append(f"M*D/C = {product:.5f}, outside the 0.5% rounding allowance")

    if laws.mna_of_c is None:
        raise StageError("mna", LawSetError("law set has no M/N_a(C) law; fit one first"))
    mna = laws.mna_of_c(compute)
    if laws.mna_of_c.provenance == "user-fitted":
        warnings.append("M/N_a(C) law is user-fitted, not a published constant")
    nna, exact = _stage("nna", laws.nna_presets.lookup, compute, nna_mode)
    nna_prov = laws.nna_presets.provenance if exact else "interpolated"
    if not exact:
        lo_c, hi_c = laws.nna_presets.c_range
        how = ("interpolated in log C between preset budgets"
               if nna_mode == "interpolate" and lo_c < compute < hi_c
               else "taken from the nearest preset budget")
        warnings.append(f"N/N_a = {nna:.4g} {how}")
    target = _stage("nna", ratios_to_macro, flops, mna, nna, preset)

    interval = _stage("hidden", feasible_d_interval, target, quantum=quantum)
    band_slack = None
    values = {
        "M": Quantity(flops, laws.flops_of_c.provenance, "FLOPs/token"),
        "D": Quantity(tokens, laws.tokens_of_c.provenance, "tokens"),
        "M/N_a": Quantity(mna, laws.mna_of_c.provenance),
        "N/N_a": Quantity(nna, nna_prov),
        "N_a": Quantity(target.active, laws.mna_of_c.provenance, "M / (M/N_a)"),
        "N": Quantity(target.total, nna_prov, "N_a * (N/N_a)"),
    }
    if laws.hidden_band is None:
        d = interval.d_median
        warnings.append("no d(C) law loaded; d is the median of the feasible interval "
                        "(d law must be user-fitted)")
        values["d"] = Quantity(d, "solver-derived", "median proxy")
    else:
        lo, opt, hi = laws.hidden_band(compute)
        d, inside = _pick_hidden(interval, lo, opt, hi)
        band_slack = laws.hidden_band.tolerance
        if not inside:
            band_slack = None
            warnings.append(f"no feasible d inside the band [{lo:.1f}, {hi:.1f}]; "
                            f"using nearest feasible d={d}")
        elif d != opt:
            warnings.append(f"d snapped from {opt:.1f} to feasible quantum multiple {d}")
        values["d_opt"] = Quantity(opt, laws.hidden_band.opt.provenance)
        values["d"] = Quantity(d, "solver-derived", "feasible d nearest d_opt")

    solution = _stage("solve", solve_structure, target, d, quantum=quantum)
    lr, batch, exact_hp = training_hyperparams(compute)
    hp_prov = "paper-constant" if exact_hp else "interpolated"
    values["lr"] = Quantity(lr, hp_prov)
    values["batch"] = Quantity(batch, hp_prov)
    if not exact_hp:
        warnings.append("lr and batch are log-log interpolated between preset budgets")
    return DesignReport(compute, values, solution, preset.name, band_slack, tuple(warnings))


@dataclass(frozen=True)
class ScaleRuns:
    """Loss-vs-axis datasets measured at one compute budget."""

    compute: float
    mna: Dataset1D | None = None
    nna: Dataset1D | None = None
    hidden: Dataset1D | None = None


@dataclass(frozen=True)
class LawSetFit:
    laws: LawSet
    per_scale: dict  # axis -> {compute: FitResult}


def fit_lawset(runs: Iterable[ScaleRuns], base: LawSet | None = None, *,
               tolerance: float = BAND_TOLERANCE, max_n_over_na: float = 289 / 9) -> LawSetFit:
    """Fit per-scale curves, extract optima and bands, then power laws across scales.

    M/N_a data gets the inverse-linear family, N/N_a the bounded-rational
    one on (1, max_n_over_na) and d the quadratic. Every axis that is
    present needs at least two budgets.
    """
    base = base or default_lawset()
    runs = sorted(runs, key=lambda r: r.compute)
    per_scale: dict[str, dict[float, FitResult]] = {"mna": {}, "nna": {}, "hidden": {}}
    failures = []
    fitters = {"mna": fit_inv_linear, "hidden": fit_quadratic,
               "nna": lambda d: fit_bounded_rational(d, 1.0, max_n_over_na)}
    for run in runs:
        for axis, fitter in fitters.items():
            data = getattr(run, axis)
            if data is None:
                continue
            try:
                res = fitter(data)
            except (DomainError, FitError) as exc:
                failures.append(f"{axis} at C={run.compute:.4g}: {exc}")
                continue
            if res.x_opt is None:
                failures.append(f"{axis} at C={run.compute:.4g}: fitted curve has no interior minimum")
                continue
            if axis == "hidden":
                band = near_optimal_band(res, tolerance, domain=(0.0, None))
                res = FitResult(res.family, res.coefficients, res.r_squared, res.x_opt,
                                band.as_tuple(), res.residuals, {**res.metadata,
                                                                 "band_tolerance": tolerance})
            per_scale[axis][run.compute] = res
    if failures:
        raise FitError("per-scale fits failed: " + "; ".join(failures), best=per_scale)
    if not any(per_scale.values()):
        raise LawSetError("no datasets supplied")
    for axis, fits in per_scale.items():
        if len(fits) == 1:
            raise LawSetError(f"{axis}: need at least 2 compute budgets to fit a law, got 1")

    def law(points, note):
        cs = [c for c, _ in points]
        if any(v <= 0 for _, v in points):
            raise FitError(f"{note}: non-positive optimum, cannot fit a power law")
        res = fit_power_law(Dataset1D(cs, [v for _, v in points]))
        return PowerLaw.from_fit(res, (min(cs), max(cs)), "user-fitted", note)

    mna = base.mna_of_c
    if per_scale["mna"]:
        mna = law([(c, f.x_opt) for c, f in per_scale["mna"].items()], "optimal M/N_a(C)")
    nna = base.nna_presets
    if per_scale["nna"]:
        nna = PresetTable(tuple((c, f.x_opt) for c, f in per_scale["nna"].items()), "user-fitted",
                          "bounded-rational optima per budget")
    band = base.hidden_band
    if per_scale["hidden"]:
        fits = per_scale["hidden"].items()
        band = HiddenBand(law([(c, f.band[0]) for c, f in fits], "d_l(C)"),
                          law([(c, f.x_opt) for c, f in fits], "d_opt(C)"),
                          law([(c, f.band[2]) for c, f in fits], "d_r(C)"), tolerance)
    laws = LawSet(base.tokens_of_c, base.flops_of_c, nna, mna, band)
    return LawSetFit(laws, per_scale)
