from pydantic import BaseModel, ConfigDict, Field, field_validator, model_validator
from typing import Optional

from enums import AuditGrouping, AuditTest, Connectivity, SimMode
from settings import EXTRACTOR_AUDIT_BLOCK_BITS, EXTRACTOR_WORKERS


class SimConfig(BaseModel):
    model_config = ConfigDict(extra="forbid")

    width: int = Field(640, ge=1, le=65535)
    height: int = Field(480, ge=1, le=65535)
    bit_depth: int = Field(8, ge=1, le=16)
    spot_count_mean: float = Field(50.0, ge=0)
    spot_sigma: float = Field(1.5, gt=0)
    intensity_min: int = Field(128, ge=0)
    intensity_max: int = Field(255, ge=0)
    background_noise_sigma: float = Field(0.0, ge=0)
    seed: int = Field(0, ge=0, lt=2**64)
    mode: SimMode = SimMode.SPECKLE
    urn_count: Optional[int] = Field(None, ge=1)  # N im Oracle-Modus, sonst width * height
    frame_count: int = Field(10, ge=0)

    @model_validator(mode="after")
    def check_intensity_range(self):
        top = (1 << self.bit_depth) - 1
        if not self.intensity_min <= self.intensity_max <= top:
            raise ValueError(f"intensity range must satisfy min <= max <= {top}")
        return self

    @property
    def oracle_urn_count(self) -> int:
        return self.urn_count if self.urn_count is not None else self.width * self.height


class RunConfig(BaseModel):
    model_config = ConfigDict(extra="forbid")

    frames: Optional[str] = None  # glob
    simulate: Optional[SimConfig] = None
    bit_depth: int = Field(8, ge=1, le=16)
    mask: str = "full"
    erode: int = Field(2, ge=0)
    levels: int = Field(8, ge=1)
    noise_floor: int = Field(1, ge=0)
    min_area: int = Field(2, ge=1)
    connectivity: int = Connectivity.EIGHT
    weighted_centroids: bool = False
    out: str = "bits.bin"
    report: str = "report.json"
    tests: list[AuditTest] = Field(default_factory=lambda: list(AuditTest))
    seed: Optional[int] = Field(None, ge=0, lt=2**64)
    workers: int = Field(default_factory=lambda: EXTRACTOR_WORKERS, ge=1)
    audit_block_bits: int = Field(default_factory=lambda: EXTRACTOR_AUDIT_BLOCK_BITS, ge=100)
    audit_grouping: AuditGrouping = AuditGrouping.BLOCKS
    spot_dump: Optional[str] = None
    save_frames: Optional[str] = None

    @field_validator("tests", mode="before")
    @classmethod
    def parse_tests(cls, value):
        if isinstance(value, str):
            return AuditTest.parse_list(value)
        return value

    @field_validator("connectivity")
    @classmethod
    def check_connectivity(cls, value):
        if value not in (Connectivity.FOUR, Connectivity.EIGHT):
            raise ValueError("connectivity must be 4 or 8")
        return value

    @model_validator(mode="after")
    def check_source(self):
        if (self.frames is None) == (self.simulate is None):
            raise ValueError("exactly one input source (frames or simulate) is required")
        if self.simulate is not None and self.seed is not None and self.simulate.seed != self.seed:
            self.simulate = self.simulate.model_copy(update={"seed": self.seed})
        return self

    @property
    def frame_depth(self) -> int:
        return self.simulate.bit_depth if self.simulate is not None else self.bit_depth


class TestResult(BaseModel):
    __test__ = False
    model_config = ConfigDict(extra="forbid")

    name: str
    statistic: float
    p_value: float = Field(ge=0.0, le=1.0)
    passed_99: bool
    passed_999: bool
    sample_size: int

    @classmethod
    def from_p_value(cls, name: str, statistic: float, p_value: float, sample_size: int) -> "TestResult":
        p_value = min(max(float(p_value), 0.0), 1.0)
        return cls(
            name=name,
            statistic=float(statistic),
            p_value=p_value,
            passed_99=p_value >= 0.01,
            passed_999=p_value >= 0.001,
            sample_size=sample_size,
        )


class FailureCount(BaseModel):
    model_config = ConfigDict(extra="forbid")

    test: str
    statistics: int
    failures_99: int
    expected_99: float
    within_band_99: bool
    failures_999: int
    expected_999: float
    within_band_999: bool
    ks_p_value: float


class MinEntropyReport(BaseModel):
    model_config = ConfigDict(extra="forbid")

    sample_bytes: int
    empirical: Optional[float]
    expected: Optional[float]
    expected_sigma: Optional[float]
    compatible: Optional[bool]


class FrameRecord(BaseModel):
    model_config = ConfigDict(extra="forbid")

    frame_index: int
    n_f: int
    urn_count: int
    spot_count: int
    bits_emitted: int
    duplicate_collapses: int


class AggregateStats(BaseModel):
    model_config = ConfigDict(extra="forbid")

    frame_count: int
    total_bits: int
    bytes_written: int
    withheld_bits: int
    withheld: str
    mean_bits_per_frame: float
    mean_occupancy: float
    eta: float
    h2: float


class AuditReport(BaseModel):
    model_config = ConfigDict(extra="forbid")

    version: str
    config: RunConfig
    frames: list[FrameRecord]
    aggregate: AggregateStats
    tests: list[TestResult]
    skipped_tests: list[str]
    failure_counts: list[FailureCount]
    min_entropy: MinEntropyReport
    warnings: list[str]


class RankRequest(BaseModel):
    model_config = ConfigDict(populate_by_name=True)

    urn_count: int = Field(..., ge=0, alias="N")
    occupied: list[int]


class RankResponse(BaseModel):
    index: str
    total: str
    predecessors: str
    bits: str
    bit_length: int


class EfficiencyResponse(BaseModel):
    urn_count: int
    count: int
    expected_length: float
    eta: float
    h2: float
    gap: float


class MinEntropyResponse(BaseModel):
    sample_bytes: int
    mean_max: float
    sigma_max: float
    h_min: float
    sigma: float


class AuditResponse(BaseModel):
    bits: int
    tests: list[TestResult]
    skipped_tests: list[str]
    min_entropy: MinEntropyReport
