# Schemas package
from aavit.schemas.data import AttackType, Label, ManifestEntry, SampleManifest, Split
from aavit.schemas.metrics import DetPoint, ErrorCounts, EvalReport, EvalSummary, ScoreRecord
from aavit.schemas.model import HeadKind, ModelConfig
from aavit.schemas.train import RunConfig, RunSpec, TrainConfig

__all__ = [
    "AttackType", "Label", "ManifestEntry", "SampleManifest", "Split",
    "DetPoint", "ErrorCounts", "EvalReport", "EvalSummary", "ScoreRecord",
    "HeadKind", "ModelConfig",
    "RunConfig", "RunSpec", "TrainConfig",
]
