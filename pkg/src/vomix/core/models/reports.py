"""Pydantic schemas for cost reports, benchmark rows and self-test outcomes."""

from pydantic import BaseModel, Field, computed_field

MAC_CONVENTION = "one multiply-accumulate = one op"


class LayerFlops(BaseModel):
    """Op counts for one transformer layer (MAC convention)."""

    layer: int = Field(default=0, ge=0)
    n_in: int = Field(..., ge=0)
    n_out: int = Field(..., ge=0)
    ratio: float = Field(default=0.0, ge=0.0, lt=1.0)
    qkv: int = Field(default=0, ge=0)
    attention: int = Field(default=0, ge=0, description="q·k^T scores plus attention·v")
    proj: int = Field(default=0, ge=0)
    mlp: int = Field(default=0, ge=0)
    similarity: int = Field(default=0, ge=0)
    vote: int = Field(default=0, ge=0)
    query_mix: int = Field(default=0, ge=0)
    element_ops: int = Field(
        default=0,
        ge=0,
        description="Softmax, norm, GELU and mixture-softmax element ops (not in totals)",
    )

    @computed_field  # type: ignore[prop-decorator]
    @property
    def attn_ops(self) -> int:
        return self.qkv + self.attention + self.proj

    @computed_field  # type: ignore[prop-decorator]
    @property
    def mlp_ops(self) -> int:
        return self.mlp

    @computed_field  # type: ignore[prop-decorator]
    @property
    def overhead_ops(self) -> int:
        return self.similarity + self.vote + self.query_mix

    @computed_field  # type: ignore[prop-decorator]
    @property
    def total(self) -> int:
        return self.attn_ops + self.mlp_ops + self.overhead_ops


class FlopsReport(BaseModel):
    """Whole-model cost with the vanilla baseline for comparison."""

    model: str
    schedule: str
    vomix_enabled: bool
    convention: str = MAC_CONVENTION
    front_end: int = Field(..., ge=0, description="Patch projection")
    head: int = Field(..., ge=0, description="Classifier head")
    per_layer: list[LayerFlops]
    trajectory: list[int]
    baseline_total: int = Field(..., ge=0, description="Vanilla model, all-zero schedule")
    element_ops: int = Field(default=0, ge=0)

    @computed_field  # type: ignore[prop-decorator]
    @property
    def total(self) -> int:
        return self.front_end + self.head + sum(layer.total for layer in self.per_layer)

    @computed_field  # type: ignore[prop-decorator]
    @property
    def overhead_total(self) -> int:
        return sum(layer.overhead_ops for layer in self.per_layer)

    @computed_field  # type: ignore[prop-decorator]
    @property
    def reduction_pct(self) -> float:
        """Change versus the vanilla baseline, e.g. -25.1."""
        if self.baseline_total == 0:
            return 0.0
        return (self.total / self.baseline_total - 1.0) * 100.0

    @computed_field  # type: ignore[prop-decorator]
    @property
    def speedup_estimate(self) -> float:
        if self.total == 0:
            return 0.0
        return self.baseline_total / self.total

    @property
    def gflops(self) -> float:
        return self.total / 1e9


class BenchResult(BaseModel):
    """One timed configuration."""

    config_id: str
    schedule: str
    strategy: str
    batch: int = Field(..., ge=1)
    repeats: int = Field(..., ge=5)
    threads: int = Field(..., ge=1)
    seed: int
    tokens_in: int
    tokens_out: int
    median_s: float
    min_s: float
    max_s: float
    images_per_s: float
    tokens_per_s: float
    measured_macs: int
    predicted_macs: int
    measured_overhead_macs: int
    predicted_overhead_macs: int
    peak_memory_bytes: int

    @computed_field  # type: ignore[prop-decorator]
    @property
    def mac_ratio(self) -> float:
        """Measured over predicted multiply-accumulates."""
        if self.predicted_macs == 0:
            return 0.0
        return self.measured_macs / self.predicted_macs


class SuiteResult(BaseModel):
    """Outcome of one self-test suite."""

    name: str
    trials: int = Field(default=0, description="Comparisons made; skipped draws excluded")
    passed: int = 0
    skipped: int = Field(default=0, description="Draws too close to a tie to compare")
    failures: list[str] = Field(default_factory=list)

    @computed_field  # type: ignore[prop-decorator]
    @property
    def ok(self) -> bool:
        return not self.failures


class AblationRow(BaseModel):
    """One strategy combination of an ablation grid."""

    combo: str = Field(..., description="Strategy label, e.g. vote/top1/k/cosine/global/prop")
    is_default: bool
    checksum: str = Field(..., description="SHA-256 prefix of the final token matrix")
    op_count: int = Field(..., ge=0)
    overhead_ops: int = Field(..., ge=0)
    tokens_out: int = Field(..., ge=0)
