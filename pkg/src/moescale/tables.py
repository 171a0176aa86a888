"""Published configuration tables shipped as CSV fixtures, and the corpus checks run on them.

Each fixture holds one table: ``proxy_*`` are the median-proxy
validation runs, ``grid_<scale>`` the 6x6 ratio grids, ``mna_refine`` the
extra low-M/N_a runs and ``dsweep_<scale>`` the hidden-size sweeps.
"""

from __future__ import annotations

import csv
import statistics
from dataclasses import asdict, dataclass
from importlib import resources
from pathlib import Path

from .arch import ArchConfig, PRESETS, compute_metrics, get_preset
from .errors import InputError

SCALES = tuple(PRESETS)
COLUMNS = ("scale", "hidden", "dense_layers", "dense_ffn", "moe_layers", "expert_ffn", "layers")

#: Row count of every shipped table, checked on load.
EXPECTED_ROWS = {
    "proxy_1": 36, "proxy_2": 36, "proxy_3": 36, "proxy_4": 36,
    **{f"grid_{s}": 36 for s in SCALES},
    "mna_refine": 49,
    "dsweep_1e18": 54, "dsweep_3e18": 40, "dsweep_1e19": 40,
    "dsweep_3e19": 43, "dsweep_1e20": 42, "dsweep_3e20": 39,
}


@dataclass(frozen=True)
class CorpusRow:
    table: str
    index: int
    scale: str
    hidden: int
    dense_layers: int
    dense_ffn: int
    moe_layers: int
    expert_ffn: int
    layers: int

    def config(self) -> ArchConfig:
        return ArchConfig.from_preset(get_preset(self.scale), self.hidden, self.dense_layers,
                                      self.moe_layers, self.expert_ffn, dense_ffn=self.dense_ffn)


@dataclass(frozen=True)
class RowCheck:
    table: str
    index: int
    scale: str
    hidden: int
    flops: int
    flops_target: float
    deviation: float
    m_over_na: float
    n_over_na: float
    ok: bool

    def to_dict(self) -> dict:
        return asdict(self)


def default_dir() -> Path:
    return Path(str(resources.files("moescale") / "data"))


def read_table(path: Path) -> list[CorpusRow]:
    name = path.stem
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        if tuple(reader.fieldnames or ()) != COLUMNS:
            raise InputError(f"{path}: expected header {','.join(COLUMNS)}, got {reader.fieldnames}")
        rows = []
        for i, rec in enumerate(reader):
            try:
                vals = {k: int(rec[k]) for k in COLUMNS[1:]}
            except (TypeError, ValueError) as exc:
                raise InputError(f"{path}:{i + 2}: {exc}") from None
            if rec["scale"] not in PRESETS:
                raise InputError(f"{path}:{i + 2}: unknown scale {rec['scale']!r}")
            if vals["dense_layers"] + vals["moe_layers"] != vals["layers"]:
                raise InputError(f"{path}:{i + 2}: layers != dense_layers + moe_layers")
            rows.append(CorpusRow(name, i, rec["scale"], **vals))
    return rows


def load_tables(directory: str | Path | None = None, *,
                check_counts: bool = True) -> dict[str, list[CorpusRow]]:
    directory = Path(directory) if directory is not None else default_dir()
    paths = sorted(directory.glob("*.csv"))
    if not paths:
        raise InputError(f"no table CSVs found in {directory}")
    tables = {p.stem: read_table(p) for p in paths}
    if check_counts:
        for name, rows in tables.items():
            want = EXPECTED_ROWS.get(name)
            if want is not None and len(rows) != want:
                raise InputError(f"table {name} has {len(rows)} rows, expected {want}")
    return tables


def all_rows(tables: dict[str, list[CorpusRow]]) -> list[CorpusRow]:
    return [r for name in sorted(tables) for r in tables[name]]


def check_row(row: CorpusRow, tolerance: float = 0.05) -> RowCheck:
    m = compute_metrics(row.config())
    target = get_preset(row.scale).flops_target
    dev = abs(m.flops - target) / target
    return RowCheck(row.table, row.index, row.scale, row.hidden, m.flops, target, dev,
                    m.m_over_na, m.n_over_na, dev <= tolerance)


def validate_corpus(tables: dict[str, list[CorpusRow]], tolerance: float = 0.05) -> list[RowCheck]:
    """Evaluate every row with its scale's geometry against the scale's M target."""
    return [check_row(r, tolerance) for r in all_rows(tables)]


@dataclass(frozen=True)
class SweepTriad:
    """The (M/N_a, N/N_a) point a hidden-size sweep table was built around."""

    scale: str
    m_over_na: float
    n_over_na: float
    hidden: tuple[int, ...]


def sweep_triads(tables: dict[str, list[CorpusRow]] | None = None) -> dict[str, SweepTriad]:
    """Per-scale optimal triad recovered from the ``dsweep_*`` tables.

    Each sweep holds one (M, N_a, N) target realised at many hidden sizes,
    so the target ratios are taken as medians over the rows: M_target/N_a
    for the compute density and N/N_a for the expansion ratio.
    """
    tables = tables if tables is not None else load_tables()
    out = {}
    for scale in SCALES:
        rows = tables[f"dsweep_{scale}"]
        target = get_preset(scale).flops_target
        metrics = [compute_metrics(r.config()) for r in rows]
        mna = statistics.median(target / m.active_params for m in metrics)
        nna = statistics.median(m.n_over_na for m in metrics)
        out[scale] = SweepTriad(scale, mna, nna, tuple(sorted({r.hidden for r in rows})))
    return out


VALIDATE_SCHEMA = (("table", str), ("index", int), ("scale", str), ("hidden", int),
                   ("flops", int), ("flops_target", float), ("deviation", float),
                   ("m_over_na", float), ("n_over_na", float), ("ok", int))


def check_records(checks: list[RowCheck]) -> list[dict]:
    return [{**c.to_dict(), "ok": int(c.ok)} for c in checks]
