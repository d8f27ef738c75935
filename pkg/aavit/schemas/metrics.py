import math
from typing import Dict, List, Optional

from pydantic import BaseModel, ConfigDict, Field, field_validator

from aavit.schemas.data import Label


class ScoreRecord(BaseModel):
    model_config = ConfigDict(frozen=True)

    id: str = Field(..., description="Sample id (frame path or video id)")
    score: float = Field(..., description="Liveness score in [0, 1]; higher means more likely real")
    label: Label = Field(..., description="Ground truth")

    @field_validator("score")
    @classmethod
    def check_finite(cls, value: float) -> float:
        if not math.isfinite(value):
            raise ValueError("score must be finite")
        return value


class DetPoint(BaseModel):
    threshold: float = Field(..., description="Decision threshold alpha")
    far: float = Field(..., description="Attacks judged real / attacks")
    mdr: float = Field(..., description="Reals judged attack / reals")


class ErrorCounts(BaseModel):
    n_real: int = Field(..., description="N_R, real-access samples")
    n_attack: int = Field(..., description="N_S, spoofed samples")
    n_attack_judged_real: int = Field(..., description="N_SJR at the EER threshold")
    n_real_judged_attack: int = Field(..., description="N_RJS at the EER threshold")


class EvalReport(BaseModel):
    eer: float = Field(..., description="Equal error rate as a fraction")
    threshold: float = Field(..., description="Threshold alpha* selected by the EER sweep")
    hter: float = Field(..., description="HTER at alpha*")
    det: List[DetPoint] = Field(default_factory=list, description="DET curve samples")
    counts: ErrorCounts = Field(..., description="Class sizes and error counts at alpha*")
    attack_breakdown: Dict[str, float] = Field(
        default_factory=dict, description="EER of real access against each attack family alone"
    )


class EvalSummary(BaseModel):
    """Reports of every scored split plus the cross-split HTER."""

    granularity: str = Field(default="frame", description="Scoring unit: frame or video")
    splits: Dict[str, EvalReport] = Field(default_factory=dict, description="Report per split name")
    test_hter_at_dev_threshold: Optional[float] = Field(
        None, description="Test HTER at the development EER threshold"
    )
