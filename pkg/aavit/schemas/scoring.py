from typing import List, Literal

from pydantic import BaseModel, Field


class ScoreResponse(BaseModel):
    id: str = Field(..., description="Uploaded file name")
    score: float = Field(..., description="Probability of the real-access class")
    probabilities: List[float] = Field(..., description="Class probabilities; index 0 is real access")
    decision: Literal["real", "attack"] = Field(..., description="Real iff score >= threshold")
    threshold: float = Field(..., description="Decision threshold in use")


class HealthResponse(BaseModel):
    status: str = Field(default="healthy", description="Service status")
