from typing import Any, Dict, List, Literal, Optional

from pydantic import BaseModel, Field, model_validator

METRICS_SCHEMA_VERSION = 1

METRICS_COLUMNS = [
    "t",
    "scheme",
    "inst_delay_s",
    "cum_delay_s",
    "global_reward",
    "hit_local",
    "hit_neighbor",
    "hit_cloud",
    "seed",
]
SUMMARY_COLUMNS = ["scheme", "S", "T", "seed", "mean_delay_s", "tail_mean_delay_s"]
STUDY_COLUMNS = [
    "label",
    "cooperative",
    "consistent",
    "seed",
    "mean_delay_s",
    "tail_mean_delay_s",
]


class MetricsRow(BaseModel):
    """One recorded slot of one scheme."""

    t: int = Field(ge=1)
    scheme: str
    inst_delay_s: float = Field(gt=0)
    cum_delay_s: float = Field(gt=0)
    global_reward: float
    hit_local: float = Field(ge=0, le=1 + 1e-9)
    hit_neighbor: float = Field(ge=0, le=1 + 1e-9)
    hit_cloud: float = Field(ge=0, le=1 + 1e-9)
    seed: int

    @model_validator(mode="after")
    def check_tiers(self) -> "MetricsRow":
        total = self.hit_local + self.hit_neighbor + self.hit_cloud
        if abs(total - 1.0) > 1e-9:
            raise ValueError(f"tier fractions sum to {total}, expected 1")
        return self


class SummaryRow(BaseModel):
    """Time-averaged objective of one scheme over a run."""

    scheme: str
    S: int
    T: int
    seed: int
    mean_delay_s: float
    tail_mean_delay_s: float


class StudyRow(BaseModel):
    label: str
    cooperative: bool
    consistent: bool
    seed: int
    mean_delay_s: float
    tail_mean_delay_s: float


class CheckResult(BaseModel):
    name: str
    status: Literal["pass", "warn", "fail"]
    detail: str


class ValidationReport(BaseModel):
    """Outcome of the pre-flight checks on a config."""

    checks: List[CheckResult] = []
    config: Optional[Dict[str, Any]] = None

    @property
    def ok(self) -> bool:
        return all(c.status != "fail" for c in self.checks)

    def render(self) -> str:
        lines = [f"[{c.status.upper():4}] {c.name}: {c.detail}" for c in self.checks]
        lines.append("RESULT: " + ("OK" if self.ok else "FAILED"))
        if self.config is not None:
            lines.append("resolved config:")
            lines.extend(f"  {k}: {v}" for k, v in sorted(self.config.items()))
        return "\n".join(lines)
