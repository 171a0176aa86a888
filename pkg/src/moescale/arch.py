"""Architecture description and exact per-token resource accounting.

All counts are Python integers, so two evaluations of the same config are
bit-identical and nothing overflows. Embedding parameters are excluded
throughout.
"""

from __future__ import annotations

import operator
from dataclasses import asdict, dataclass, fields

from .errors import DomainError

#: Shared-expert-inclusive sparsity used by every shipped preset.
N_EXPERTS = 288
TOP_K = 8
SEQ_LEN = 8192
GAMMA = 3.0


def _as_int(name: str, value) -> int:
    if isinstance(value, bool):
        raise DomainError(f"{name} must be an integer, got {value!r}")
    try:
        return operator.index(value)
    except TypeError:
        raise DomainError(f"{name} must be an integer, got {value!r}") from None


@dataclass(frozen=True)
class ArchConfig:
    """A fully specified MoE transformer.

    ``hidden`` is the residual width, ``dense_ffn`` / ``expert_ffn`` the
    intermediate widths of dense and expert FFNs. ``n_experts`` counts the
    routed experts; one shared expert is always active on top of ``top_k``.
    """

    hidden: int
    dense_layers: int
    moe_layers: int
    dense_ffn: int
    expert_ffn: int
    head_dim: int
    n_heads: int
    n_kv_heads: int
    seq_len: int = SEQ_LEN
    n_experts: int = N_EXPERTS
    top_k: int = TOP_K
    gamma: float = GAMMA

    def __post_init__(self):
        for f in fields(self):
            if f.name == "gamma":
                continue
            object.__setattr__(self, f.name, _as_int(f.name, getattr(self, f.name)))
        for name in ("hidden", "dense_ffn", "expert_ffn", "head_dim", "n_heads",
                     "n_kv_heads", "seq_len"):
            if getattr(self, name) <= 0:
                raise DomainError(f"{name} must be positive, got {getattr(self, name)}")
        if self.dense_layers < 0 or self.moe_layers < 0:
            raise DomainError("layer counts must be non-negative")
        if self.dense_layers + self.moe_layers < 1:
            raise DomainError("dense_layers + moe_layers must be at least 1")
        if self.n_heads % self.n_kv_heads:
            raise DomainError(
                f"n_heads ({self.n_heads}) must be a multiple of n_kv_heads ({self.n_kv_heads})")
        if not self.n_experts > self.top_k >= 1:
            raise DomainError(
                f"need n_experts > top_k >= 1, got n_experts={self.n_experts}, top_k={self.top_k}")
        if not self.gamma > 0:
            raise DomainError(f"gamma must be positive, got {self.gamma}")

    @property
    def layers(self) -> int:
        return self.dense_layers + self.moe_layers

    @classmethod
    def from_preset(cls, preset: "ScalePreset", hidden: int, dense_layers: int,
                    moe_layers: int, expert_ffn: int, dense_ffn: int | None = None) -> "ArchConfig":
        if dense_ffn is None:
            dense_ffn = round(preset.gamma * hidden)
        return cls(hidden=hidden, dense_layers=dense_layers, moe_layers=moe_layers,
                   dense_ffn=dense_ffn, expert_ffn=expert_ffn, head_dim=preset.head_dim,
                   n_heads=preset.n_heads, n_kv_heads=preset.n_kv_heads,
                   seq_len=preset.seq_len, n_experts=preset.n_experts,
                   top_k=preset.top_k, gamma=preset.gamma)

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, data: dict) -> "ArchConfig":
        return cls(**data)


@dataclass(frozen=True)
class ResourceMetrics:
    flops: int
    active_params: int
    total_params: int
    m_over_na: float
    n_over_na: float
    r_attn: float
    r_dense: float
    r_moe: float
    r_moe_active: float

    @property
    def triad(self) -> tuple[int, int, int]:
        return self.flops, self.active_params, self.total_params

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, data: dict) -> "ResourceMetrics":
        return cls(**data)


@dataclass(frozen=True)
class ScalePreset:
    """Per-compute-scale constants: FLOPs target, attention geometry, training setup."""

    name: str
    compute: float
    flops_target: float
    tokens: float
    head_dim: int
    n_heads: int
    n_kv_heads: int
    lr: float
    batch: int
    nna_preset: float
    seq_len: int = SEQ_LEN
    top_k: int = TOP_K
    n_experts: int = N_EXPERTS
    gamma: float = GAMMA

    @property
    def max_n_over_na(self) -> float:
        return (self.n_experts + 1) / (self.top_k + 1)

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, data: dict) -> "ScalePreset":
        return cls(**data)


# Compute in FLOPs, M in FLOPs/token, D in tokens.
PRESETS: dict[str, ScalePreset] = {
    p.name: p
    for p in (
        ScalePreset("1e18", 1e18, 0.2672e9, 3.7420e9, 64, 4, 2, 1.20e-3, 64, 19),
        ScalePreset("3e18", 3e18, 0.4856e9, 6.1775e9, 64, 8, 4, 1.00e-3, 80, 20),
        ScalePreset("1e19", 1e19, 0.9345e9, 10.7004e9, 64, 8, 4, 8.28e-4, 128, 21),
        ScalePreset("3e19", 3e19, 1.6983e9, 17.6649e9, 128, 8, 4, 6.95e-4, 160, 21),
        ScalePreset("1e20", 1e20, 3.2681e9, 30.5985e9, 128, 8, 4, 5.74e-4, 208, 22),
        ScalePreset("3e20", 3e20, 5.9390e9, 50.5138e9, 128, 16, 8, 4.82e-4, 288, 22),
    )
}


def get_preset(name: str) -> ScalePreset:
    """Look a preset up by name ("1e18") or by numeric compute value."""
    if name in PRESETS:
        return PRESETS[name]
    try:
        c = float(name)
    except ValueError:
        raise DomainError(f"unknown scale preset {name!r}; known: {', '.join(PRESETS)}") from None
    for p in PRESETS.values():
        if abs(p.compute - c) <= 1e-9 * c:
            return p
    raise DomainError(f"no preset for compute {name!r}; known: {', '.join(PRESETS)}")


def attention_params(cfg: ArchConfig) -> int:
    """Q/K/V/O projection parameters of one attention layer."""
    return 2 * cfg.hidden * cfg.head_dim * (cfg.n_heads + cfg.n_kv_heads)


def dense_ffn_params(cfg: ArchConfig) -> int:
    return 3 * cfg.hidden * cfg.dense_ffn


def expert_params(cfg: ArchConfig) -> int:
    """SwiGLU parameters of a single expert."""
    return 3 * cfg.hidden * cfg.expert_ffn


def count_active_params(cfg: ArchConfig) -> int:
    return (attention_params(cfg) * cfg.layers
            + dense_ffn_params(cfg) * cfg.dense_layers
            + cfg.moe_layers * (cfg.top_k + 1) * expert_params(cfg))


def attention_flops(cfg: ArchConfig) -> int:
    """Logit and value-mixing FLOPs per token, summed over layers."""
    return 6 * cfg.seq_len * cfg.n_heads * cfg.head_dim * cfg.layers


def flops_per_token(cfg: ArchConfig) -> int:
    return 6 * count_active_params(cfg) + attention_flops(cfg)


def total_params(cfg: ArchConfig) -> int:
    inactive = expert_params(cfg) * (cfg.n_experts - cfg.top_k) * cfg.moe_layers
    return count_active_params(cfg) + inactive


def width_ratio(cfg: ArchConfig) -> float:
    """Active MoE FFN width relative to the hidden size, (K+1)*d_m/d."""
    return (cfg.top_k + 1) * cfg.expert_ffn / cfg.hidden


def compute_metrics(cfg: ArchConfig) -> ResourceMetrics:
    active = count_active_params(cfg)
    m = 6 * active + attention_flops(cfg)
    n = total_params(cfg)
    attn = 6 * attention_params(cfg) * cfg.layers + attention_flops(cfg)
    dense = 6 * dense_ffn_params(cfg) * cfg.dense_layers
    moe_active = cfg.moe_layers * (cfg.top_k + 1) * expert_params(cfg)
    moe = 6 * moe_active
    assert attn + dense + moe == m
    return ResourceMetrics(
        flops=m,
        active_params=active,
        total_params=n,
        m_over_na=m / active,
        n_over_na=n / active,
        r_attn=attn / m,
        r_dense=dense / m,
        r_moe=moe / m,
        r_moe_active=moe_active / active,
    )


def ratios_from_shares(cfg: ArchConfig, metrics: ResourceMetrics | None = None) -> tuple[float, float]:
    """(M/N_a, N/N_a) rebuilt from the compute shares instead of from the counts.

    Uses only r_attn, r_moe_active and the geometry, so agreement with
    ``compute_metrics`` is a consistency check on the accounting.
    """
    if metrics is None:
        metrics = compute_metrics(cfg)
    widen = 1 + 2 * cfg.hidden * (1 + cfg.n_kv_heads / cfg.n_heads) / cfg.seq_len
    m_over_na = 6 / (1 - metrics.r_attn / widen)
    n_over_na = 1 + metrics.r_moe_active * ((cfg.n_experts + 1) / (cfg.top_k + 1) - 1)
    return m_over_na, n_over_na
