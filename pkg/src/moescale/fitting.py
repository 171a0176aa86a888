"""Curve families, optimum extraction, near-optimal bands and rank statistics.

Every fitter returns a :class:`FitResult`. The linear-in-parameter families
(power law in log space, inverse-linear, bounded-rational, quadratic) are
solved directly by least squares; the saturating power law uses variable
projection over its exponent followed by a bounded nonlinear polish.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from typing import Callable, Sequence

import numpy as np
from scipy import optimize, stats

from .errors import DomainError, FitError
from .records import read_records, write_records

FAMILIES = ("power-law", "saturating-power", "inv-linear", "bounded-rational",
            "quadratic", "linear-band")

#: Exponent seeds for the saturating power law's multi-start.
SATURATING_B_SEEDS = tuple(float(b) for b in np.round(np.linspace(-3.0, 3.0, 61), 10) if b != 0)
SATURATING_MAX_NFEV = 2000

INV_LINEAR_POLE = 6.0


@dataclass(frozen=True)
class Dataset1D:
    x: tuple[float, ...]
    y: tuple[float, ...]
    weights: tuple[float, ...] | None = None

    def __post_init__(self):
        x = tuple(float(v) for v in self.x)
        y = tuple(float(v) for v in self.y)
        object.__setattr__(self, "x", x)
        object.__setattr__(self, "y", y)
        if len(x) != len(y):
            raise DomainError(f"x and y lengths differ ({len(x)} vs {len(y)})")
        if not all(math.isfinite(v) for v in x + y):
            raise DomainError("dataset contains non-finite values")
        if self.weights is not None:
            w = tuple(float(v) for v in self.weights)
            if len(w) != len(x) or not all(math.isfinite(v) and v > 0 for v in w):
                raise DomainError("weights must be positive, finite and one per point")
            object.__setattr__(self, "weights", w)

    def __len__(self):
        return len(self.x)

    @classmethod
    def from_points(cls, points, weights=None) -> "Dataset1D":
        xs, ys = zip(*points) if points else ((), ())
        return cls(xs, ys, weights)

    def arrays(self) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        w = np.ones(len(self.x)) if self.weights is None else np.asarray(self.weights)
        return np.asarray(self.x), np.asarray(self.y), w

    def require(self, n: int, family: str) -> None:
        distinct = len(set(self.x))
        if distinct < n:
            raise DomainError(f"{family} fit needs at least {n} distinct x values, got {distinct}")

    def to_csv(self, fh=None):
        schema = _WEIGHTED if self.weights is not None else _UNWEIGHTED
        w = self.weights or (None,) * len(self.x)
        recs = ({"x": a, "y": b, "weight": c} for a, b, c in zip(self.x, self.y, w))
        return write_records(schema, recs, fh)

    @classmethod
    def from_csv(cls, source) -> "Dataset1D":
        text = source if isinstance(source, str) else source.read()
        first = text.split("\n", 1)[0].strip()
        schema = _WEIGHTED if first == "x,y,weight" else _UNWEIGHTED
        rows = read_records(schema, text)
        if any(v is None for r in rows for v in r.values()):
            raise DomainError("dataset CSV has empty cells")
        ws = tuple(r["weight"] for r in rows) if schema is _WEIGHTED else None
        return cls(tuple(r["x"] for r in rows), tuple(r["y"] for r in rows), ws)


_UNWEIGHTED = (("x", float), ("y", float))
_WEIGHTED = (("x", float), ("y", float), ("weight", float))


@dataclass(frozen=True)
class FitResult:
    """A fitted curve.

    ``band`` is ``(x_l, x_opt, x_r)`` once :func:`near_optimal_band` has been
    applied. ``metadata`` records the domain, multi-start seeds and any flags.
    """

    family: str
    coefficients: dict
    r_squared: float
    x_opt: float | None = None
    band: tuple[float, float, float] | None = None
    residuals: tuple[float, ...] = ()
    metadata: dict = field(default_factory=dict)

    def predict(self, x):
        return _curve(self.family, self.coefficients)(np.asarray(x, dtype=float))

    def __call__(self, x):
        return self.predict(x)

    @property
    def domain(self) -> tuple[float | None, float | None]:
        lo, hi = self.metadata.get("domain", (None, None))
        return lo, hi

    def to_dict(self) -> dict:
        return {"family": self.family, "coefficients": dict(self.coefficients),
                "r_squared": self.r_squared, "x_opt": self.x_opt,
                "band": None if self.band is None else list(self.band),
                "residuals": list(self.residuals), "metadata": self.metadata}

    @classmethod
    def from_dict(cls, data: dict) -> "FitResult":
        if data["family"] not in FAMILIES:
            raise DomainError(f"unknown fit family {data['family']!r}")
        meta = dict(data.get("metadata", {}))
        if "domain" in meta:
            meta["domain"] = tuple(meta["domain"])
        if "seeds" in meta:
            meta["seeds"] = tuple(meta["seeds"])
        return cls(data["family"], dict(data["coefficients"]), data["r_squared"],
                   data.get("x_opt"), None if data.get("band") is None else tuple(data["band"]),
                   tuple(data.get("residuals", ())), meta)


def _curve(family: str, c: dict) -> Callable[[np.ndarray], np.ndarray]:
    if family == "power-law":
        return lambda x: c["multiplier"] * np.power(x, c["exponent"])
    if family == "saturating-power":
        return lambda x: c["E"] + c["A"] * np.power(x, c["B"])
    if family == "inv-linear":
        return lambda x: c["a"] / (x - INV_LINEAR_POLE) + c["b"] * x + c["c"]
    if family == "bounded-rational":
        return lambda x: c["a"] / (x - c["c1"]) + c["b"] / (c["c2"] - x) + c["c"]
    if family == "quadratic":
        return lambda x: (c["a"] * x + c["b"]) * x + c["c"]
    if family == "linear-band":
        return lambda x: c["slope"] * x + c["intercept"]
    raise DomainError(f"unknown fit family {family!r}")


def _r_squared(y: np.ndarray, resid: np.ndarray, w: np.ndarray) -> float:
    mean = np.sum(w * y) / np.sum(w)
    sst = float(np.sum(w * (y - mean) ** 2))
    ssr = float(np.sum(w * resid ** 2))
    if sst == 0.0:
        scale = float(np.max(np.abs(y))) or 1.0
        return 1.0 if ssr <= len(y) * (1e-12 * scale) ** 2 else 0.0
    return 1.0 - ssr / sst


def _lstsq(basis: np.ndarray, y: np.ndarray, w: np.ndarray) -> np.ndarray:
    sw = np.sqrt(w)
    coef, *_ = np.linalg.lstsq(basis * sw[:, None], y * sw, rcond=None)
    return coef


def _finish(family: str, coeffs: dict, data: Dataset1D, x_opt, domain, **meta) -> FitResult:
    x, y, w = data.arrays()
    resid = y - _curve(family, coeffs)(x)
    return FitResult(family, coeffs, _r_squared(y, resid, w), x_opt, None,
                     tuple(float(r) for r in resid), {"domain": domain, **meta})


def fit_power_law(data: Dataset1D) -> FitResult:
    """y = multiplier * x**exponent by least squares on (log10 x, log10 y).

    ``r_squared`` and ``residuals`` are reported in log10 space.
    """
    data.require(2, "power-law")
    x, y, w = data.arrays()
    if np.any(x <= 0) or np.any(y <= 0):
        raise DomainError("power-law fit needs strictly positive x and y")
    lx, ly = np.log10(x), np.log10(y)
    a, b = _lstsq(np.column_stack([np.ones_like(lx), lx]), ly, w)
    resid = ly - (a + b * lx)
    coeffs = {"multiplier": float(10.0 ** a), "exponent": float(b), "log10_multiplier": float(a)}
    return FitResult("power-law", coeffs, _r_squared(ly, resid, w), None, None,
                     tuple(float(r) for r in resid), {"domain": (0.0, None), "space": "log10"})


def _projected(x: np.ndarray, y: np.ndarray, w: np.ndarray, b: float, pin_e: bool):
    """Best (E, A) for a fixed exponent with E >= 0, and the weighted SSE."""
    xb = np.power(x, b)
    if not pin_e:
        e, a = _lstsq(np.column_stack([np.ones_like(xb), xb]), y, w)
        if e >= 0:
            r = y - e - a * xb
            return float(e), float(a), float(np.sum(w * r * r))
    a = float(np.sum(w * xb * y) / np.sum(w * xb * xb))
    r = y - a * xb
    return 0.0, a, float(np.sum(w * r * r))


def fit_saturating_power(data: Dataset1D, init: dict | None = None, *,
                         pin_e: bool = False) -> FitResult:
    """y = E + A * x**B with E >= 0.

    For each seed exponent the optimal (E, A) is linear; the best seed is
    refined by a bounded scalar search over B and then all three
    coefficients are polished jointly. ``pin_e`` fixes E = 0.
    """
    data.require(2 if pin_e else 3, "saturating-power")
    x, y, w = data.arrays()
    if np.any(x <= 0):
        raise DomainError("saturating-power fit needs strictly positive x")
    seeds = list(SATURATING_B_SEEDS)
    if init is not None and "B" in init:
        seeds.insert(0, float(init["B"]))

    best = None
    for b in seeds:
        with np.errstate(all="ignore"):
            e, a, sse = _projected(x, y, w, b, pin_e)
        if math.isfinite(sse) and (best is None or sse < best[3]):
            best = (e, a, b, sse)
    if best is None:
        raise FitError("saturating-power: no seed exponent gave a finite fit")

    step = SATURATING_B_SEEDS[1] - SATURATING_B_SEEDS[0]
    lo, hi = best[2] - step, best[2] + step
    with np.errstate(all="ignore"):
        scalar = optimize.minimize_scalar(lambda b: _projected(x, y, w, b, pin_e)[2],
                                          bounds=(lo, hi), method="bounded",
                                          options={"xatol": 1e-14, "maxiter": 500})
    if scalar.success and math.isfinite(scalar.fun) and scalar.fun <= best[3]:
        e, a, sse = _projected(x, y, w, float(scalar.x), pin_e)
        best = (e, a, float(scalar.x), sse)

    sw = np.sqrt(w)
    if pin_e:
        fun = lambda p: sw * (p[0] * np.power(x, p[1]) - y)  # noqa: E731
        p0, lower, upper = [best[1], best[2]], [-np.inf, -np.inf], [np.inf, np.inf]
    else:
        fun = lambda p: sw * (p[0] + p[1] * np.power(x, p[2]) - y)  # noqa: E731
        p0 = [max(best[0], 0.0), best[1], best[2]]
        lower, upper = [0.0, -np.inf, -np.inf], [np.inf, np.inf, np.inf]
    with np.errstate(all="ignore"):
        polish = optimize.least_squares(fun, p0, bounds=(lower, upper), xtol=1e-15,
                                        ftol=1e-15, gtol=1e-15, max_nfev=SATURATING_MAX_NFEV)
    sse = float(np.sum(polish.fun ** 2)) if np.all(np.isfinite(polish.fun)) else math.inf
    if sse <= best[3]:
        params = polish.x if not pin_e else [0.0, *polish.x]
        e, a, b = (float(v) for v in params)
    else:
        e, a, b = best[0], best[1], best[2]
        sse = best[3]
    if not math.isfinite(sse):
        raise FitError("saturating-power: polish diverged", best={"E": e, "A": a, "B": b})
    return _finish("saturating-power", {"E": e, "A": a, "B": b}, data, None, (0.0, None),
                   seeds=tuple(seeds), pin_e=pin_e, polish_nfev=int(polish.nfev))


def inv_linear_optimum(a: float, b: float) -> float | None:
    if a > 0 and b > 0:
        return INV_LINEAR_POLE + math.sqrt(a / b)
    return None


def fit_inv_linear(data: Dataset1D) -> FitResult:
    """y = a/(x - 6) + b*x + c; the minimum sits at 6 + sqrt(a/b) when a, b > 0."""
    data.require(3, "inv-linear")
    x, y, w = data.arrays()
    if np.any(x <= INV_LINEAR_POLE):
        raise DomainError(f"inv-linear fit needs every x > {INV_LINEAR_POLE:g}")
    a, b, c = (float(v) for v in _lstsq(
        np.column_stack([1.0 / (x - INV_LINEAR_POLE), x, np.ones_like(x)]), y, w))
    x_opt = inv_linear_optimum(a, b)
    return _finish("inv-linear", {"a": a, "b": b, "c": c}, data, x_opt,
                   (INV_LINEAR_POLE, None), interior_optimum=x_opt is not None)


def bounded_rational_optimum(a: float, b: float, c1: float, c2: float) -> float | None:
    if a > 0 and b > 0:
        ra, rb = math.sqrt(a), math.sqrt(b)
        return (c1 * rb + c2 * ra) / (ra + rb)
    return None


def fit_bounded_rational(data: Dataset1D, c1: float, c2: float) -> FitResult:
    """y = a/(x - c1) + b/(c2 - x) + c on the open interval (c1, c2)."""
    data.require(3, "bounded-rational")
    if not c1 < c2:
        raise DomainError(f"need c1 < c2, got ({c1}, {c2})")
    x, y, w = data.arrays()
    if np.any(x <= c1) or np.any(x >= c2):
        raise DomainError(f"bounded-rational fit needs every x in ({c1:g}, {c2:g})")
    a, b, c = (float(v) for v in _lstsq(
        np.column_stack([1.0 / (x - c1), 1.0 / (c2 - x), np.ones_like(x)]), y, w))
    x_opt = bounded_rational_optimum(a, b, c1, c2)
    coeffs = {"a": a, "b": b, "c": c, "c1": float(c1), "c2": float(c2)}
    return _finish("bounded-rational", coeffs, data, x_opt, (float(c1), float(c2)),
                   interior_optimum=x_opt is not None)


def fit_quadratic(data: Dataset1D) -> FitResult:
    """Least-squares parabola y = a*x**2 + b*x + c.

    The fit runs on centred, scaled x for conditioning. Collinear data gets
    a = 0 exactly and a ``degenerate`` flag; a downward parabola has no
    ``x_opt`` and is flagged ``opens_downward``.
    """
    data.require(3, "quadratic")
    x, y, w = data.arrays()
    mu = float(np.sum(w * x) / np.sum(w))
    sigma = float(np.sqrt(np.sum(w * (x - mu) ** 2) / np.sum(w)))
    t = (x - mu) / sigma
    line = _lstsq(np.column_stack([t, np.ones_like(t)]), y, w)
    line_resid = y - (line[0] * t + line[1])
    scale = float(np.max(np.abs(y))) or 1.0
    if float(np.max(np.abs(line_resid))) <= 1e-12 * scale:
        p, q = float(line[0]), float(line[1])
        coeffs = {"a": 0.0, "b": p / sigma, "c": q - p * mu / sigma}
        return _finish("quadratic", coeffs, data, None, (None, None), degenerate=True)
    s, p, q = (float(v) for v in _lstsq(np.column_stack([t * t, t, np.ones_like(t)]), y, w))
    a = s / sigma ** 2
    b = p / sigma - 2 * s * mu / sigma ** 2
    c = q - p * mu / sigma + s * mu ** 2 / sigma ** 2
    vertex = mu - p * sigma / (2 * s) if s > 0 else None
    return _finish("quadratic", {"a": a, "b": b, "c": c}, data, vertex, (None, None),
                   degenerate=False, opens_downward=s < 0)


def fit_linear_band(data: Dataset1D) -> FitResult:
    """Two parallel lines enclosing every point, with the narrowest vertical gap.

    The width max(y - s*x) - min(y - s*x) is convex and piecewise linear in
    s with breakpoints at pairwise slopes, so the minimum is found exactly
    by evaluating every pairwise slope. When a range of slopes ties, its
    midpoint is taken. The mean line runs halfway between the two bounds.
    """
    data.require(2, "linear-band")
    x, y, _ = data.arrays()
    if len(np.unique(x)) < 2:
        raise DomainError("linear-band fit needs at least 2 distinct x")
    i, j = np.triu_indices(len(x), k=1)
    keep = x[i] != x[j]
    with np.errstate(all="ignore"):
        cands = np.unique((y[j][keep] - y[i][keep]) / (x[j][keep] - x[i][keep]))
    cands = cands[np.isfinite(cands)]
    if cands.size == 0:
        raise DomainError("linear-band fit: x values too close to give a finite slope")
    widths = np.empty(len(cands))
    for k in range(0, len(cands), 4096):
        r = y[None, :] - cands[k:k + 4096, None] * x[None, :]
        widths[k:k + 4096] = r.max(axis=1) - r.min(axis=1)
    with np.errstate(all="ignore"):
        ok = np.isfinite(widths)
    if not ok.any():
        raise DomainError("linear-band fit: no candidate slope gives a finite band")
    cands, widths = cands[ok], widths[ok]
    best = widths.min()
    ties = cands[widths <= best + 1e-12 * max(1.0, abs(best))]
    slope = float(ties[0] if len(ties) == 1 else 0.5 * (ties[0] + ties[-1]))
    r = y - slope * x
    upper, lower = float(r.max()), float(r.min())
    coeffs = {"slope": slope, "intercept": 0.5 * (upper + lower), "upper": upper,
              "lower": lower, "width": upper - lower}
    return _finish("linear-band", coeffs, data, None, (None, None))


def fit(family: str, data: Dataset1D, **kw) -> FitResult:
    """Dispatch by family name."""
    fitters = {"power-law": fit_power_law, "saturating-power": fit_saturating_power,
               "inv-linear": fit_inv_linear, "bounded-rational": fit_bounded_rational,
               "quadratic": fit_quadratic, "linear-band": fit_linear_band}
    if family not in fitters:
        raise DomainError(f"unknown fit family {family!r}; known: {', '.join(FAMILIES)}")
    return fitters[family](data, **kw)


@dataclass(frozen=True)
class Band:
    lower: float
    opt: float
    upper: float
    clipped_lower: bool = False
    clipped_upper: bool = False

    def as_tuple(self) -> tuple[float, float, float]:
        return self.lower, self.opt, self.upper

    @property
    def width(self) -> float:
        return self.upper - self.lower


#: How far the band search walks away from the optimum before clipping an
#: unbounded side, as a multiple of max(1, |x_opt|).
BAND_REACH = 1e6


def _band_edge(g, x0: float, sign: int, edge: float | None) -> tuple[float, bool]:
    """Walk from x0 towards ``edge`` until g turns positive, then solve g = 0.

    Returns (endpoint, clipped). Toward an open edge the probes approach it
    geometrically; toward an unbounded side they double out to BAND_REACH.
    """
    if edge is None:
        reach = BAND_REACH * max(1.0, abs(x0))
        base = max(1e-6, 1e-6 * abs(x0))
        probes = []
        while base < reach:
            probes.append(x0 + sign * base)
            base *= 2
        limit = x0 + sign * reach
    else:
        gap = abs(edge - x0)
        probes = [x0 + sign * gap * (1 - 2.0 ** -k) for k in range(1, 51)]
        limit = edge
    prev = x0
    for probe in probes:
        with np.errstate(all="ignore"):
            val = g(probe)
        if math.isfinite(val) and val > 0:
            a, b = sorted((prev, probe))
            root = optimize.brentq(g, a, b, xtol=1e-300, rtol=4 * np.finfo(float).eps, maxiter=500)
            return float(root), False
        prev = probe
    return float(limit), True


def _level(fit_: FitResult, tolerance: float) -> tuple[float, float]:
    f_opt = float(fit_.predict(fit_.x_opt))
    return f_opt, f_opt + tolerance * abs(f_opt)


def near_optimal_band(fit_: FitResult, tolerance: float = 1e-3,
                      domain: tuple[float | None, float | None] | None = None) -> Band:
    """Connected interval around x_opt where the curve stays within tolerance of its minimum.

    The level is f(x_opt) + tolerance*|f(x_opt)|, i.e. (1 + tolerance)*f(x_opt)
    for a positive minimum. Quadratic endpoints are closed form; other
    families are bracketed and solved with Brent's method. A side with no
    crossing inside ``domain`` (default: the fit's own domain) is clipped
    to the domain edge and flagged.
    """
    if fit_.x_opt is None:
        raise DomainError(f"{fit_.family} fit has no interior optimum; band undefined")
    if not tolerance >= 0:
        raise DomainError(f"tolerance must be non-negative, got {tolerance}")
    lo_dom, hi_dom = domain if domain is not None else fit_.domain
    x0 = float(fit_.x_opt)
    f_opt, level = _level(fit_, tolerance)
    if tolerance == 0 or level == f_opt:
        return Band(x0, x0, x0)

    if fit_.family == "quadratic":
        half = math.sqrt((level - f_opt) / fit_.coefficients["a"])
        lower, upper = x0 - half, x0 + half
        clip_l = lo_dom is not None and lower < lo_dom
        clip_u = hi_dom is not None and upper > hi_dom
        return Band(lo_dom if clip_l else lower, x0, hi_dom if clip_u else upper, clip_l, clip_u)

    g = lambda v: float(fit_.predict(v)) - level  # noqa: E731
    edges = [_band_edge(g, x0, -1, lo_dom), _band_edge(g, x0, 1, hi_dom)]
    (lower, clip_l), (upper, clip_u) = edges
    return Band(float(lower), x0, float(upper), clip_l, clip_u)


def with_band(fit_: FitResult, tolerance: float = 1e-3, domain=None) -> FitResult:
    """Copy of the fit with ``band`` filled in and the clip flags recorded."""
    band = near_optimal_band(fit_, tolerance, domain)
    meta = {**fit_.metadata, "band_tolerance": tolerance,
            "band_clipped": [band.clipped_lower, band.clipped_upper]}
    return replace(fit_, band=band.as_tuple(), metadata=meta)


def numeric_optimum(fit_: FitResult, lo: float, hi: float) -> float:
    """Minimiser of the fitted curve on [lo, hi], found without the closed forms.

    Bounded Brent locates the basin; the zero of a central-difference
    derivative then pins the minimiser below the sqrt(eps) limit of
    comparing function values.
    """
    f = lambda v: float(fit_.predict(v))  # noqa: E731
    res = optimize.minimize_scalar(f, bounds=(lo, hi), method="bounded",
                                   options={"xatol": 1e-12, "maxiter": 1000})
    x0 = float(res.x)
    h = 1e-4 * max(1.0, abs(x0))
    slope = lambda v: (f(v + h) - f(v - h)) / (2 * h)  # noqa: E731
    width = 1e-3 * max(1.0, abs(x0))
    a, b = max(lo + h, x0 - width), min(hi - h, x0 + width)
    if a < b and slope(a) < 0 < slope(b):
        return float(optimize.brentq(slope, a, b, xtol=1e-300, rtol=4 * np.finfo(float).eps))
    return x0


@dataclass(frozen=True)
class RankStats:
    """Pearson, Spearman and Kendall tau-b with two-sided p-values.

    Pearson and Spearman p-values use Student's t with n-2 degrees of
    freedom; Kendall uses the tie-corrected normal approximation.
    """

    pearson_r: float
    spearman_rho: float
    kendall_tau: float
    p_pearson: float
    p_spearman: float
    p_kendall: float
    n: int

    def to_dict(self) -> dict:
        return {k: getattr(self, k) for k in self.__dataclass_fields__}


def _pearson(x: np.ndarray, y: np.ndarray) -> float:
    dx, dy = x - x.mean(), y - y.mean()
    # scale first so tiny or huge inputs neither underflow nor overflow the sums
    dx, dy = dx / np.max(np.abs(dx)), dy / np.max(np.abs(dy))
    sxx, syy = float(dx @ dx), float(dy @ dy)
    r = float(dx @ dy) / math.sqrt(sxx * syy)
    # An exactly linear relation can land a few ulps short of 1 through rounding.
    if abs(r) >= 1.0 - 8 * np.finfo(float).eps:
        return math.copysign(1.0, r)
    return r


def _t_pvalue(r: float, n: int) -> float:
    if abs(r) >= 1.0:
        return 0.0
    t = r * math.sqrt((n - 2) / (1 - r * r))
    return float(2 * stats.t.sf(abs(t), n - 2))


def _tie_sums(v: np.ndarray) -> tuple[int, int, int]:
    _, counts = np.unique(v, return_counts=True)
    c = counts.astype(np.int64)
    return int(np.sum(c * (c - 1))), int(np.sum(c * (c - 1) * (2 * c + 5))), \
        int(np.sum(c * (c - 1) * (c - 2)))


def _kendall(x: np.ndarray, y: np.ndarray) -> tuple[float, float]:
    n = len(x)
    i, j = np.triu_indices(n, k=1)
    sx, sy = np.sign(x[j] - x[i]), np.sign(y[j] - y[i])
    s = int(np.sum(sx * sy))
    n0 = n * (n - 1) // 2
    tx2, tx5, tx3 = _tie_sums(x)
    ty2, ty5, ty3 = _tie_sums(y)
    denom = math.sqrt((n0 - tx2 // 2) * (n0 - ty2 // 2))
    tau = max(-1.0, min(1.0, s / denom))
    var = ((n * (n - 1) * (2 * n + 5) - tx5 - ty5) / 18
           + tx2 * ty2 / (2 * n * (n - 1))
           + (tx3 * ty3 / (9 * n * (n - 1) * (n - 2)) if n > 2 else 0.0))
    p = float(2 * stats.norm.sf(abs(s) / math.sqrt(var))) if var > 0 else 1.0
    return tau, p


def rank_stats(x: Sequence[float], y: Sequence[float]) -> RankStats:
    xa, ya = np.asarray(x, dtype=float), np.asarray(y, dtype=float)
    if xa.shape != ya.shape or xa.ndim != 1:
        raise DomainError("x and y must be 1-D sequences of equal length")
    n = len(xa)
    if n < 3:
        raise DomainError(f"rank statistics need at least 3 points, got {n}")
    if np.all(xa == xa[0]) or np.all(ya == ya[0]):
        raise DomainError("undefined correlation: zero variance in x or y")
    r = _pearson(xa, ya)
    rho = _pearson(stats.rankdata(xa), stats.rankdata(ya))
    tau, p_tau = _kendall(xa, ya)
    return RankStats(r, rho, tau, _t_pvalue(r, n), _t_pvalue(rho, n), p_tau, n)
