import json
from pathlib import Path
from typing import Any, Dict, List, Literal, Optional, Tuple

from pydantic import BaseModel, ConfigDict, Field, ValidationError, field_validator

from aavit.errors import ConfigError
from aavit.schemas.model import ModelConfig


class TrainConfig(BaseModel):
    model_config = ConfigDict(frozen=True, extra="forbid")

    lr: float = Field(default=1e-3, ge=0.0, description="Adam step size (0 freezes the model)")
    betas: Tuple[float, float] = Field(default=(0.9, 0.999), description="Adam moment decay rates")
    eps: float = Field(default=1e-8, gt=0.0, description="Adam denominator guard")
    batch_size: int = Field(default=8, gt=0, description="Samples per optimisation step")
    epochs: int = Field(default=1, gt=0, description="Passes over the train split")
    max_steps: Optional[int] = Field(default=None, gt=0, description="Stop after this many steps")
    seed: int = Field(default=0, ge=0, lt=2 ** 64, description="Seed of the batch order")
    checkpoint_every: int = Field(default=100, ge=0, description="Periodic checkpoint interval in steps; 0 disables")
    select: Literal["last", "best-dev"] = Field(default="last", description="Which parameters become the final checkpoint")
    log_every: int = Field(default=10, gt=0, description="Steps between loss log lines")
    workers: int = Field(default=1, gt=0, description="Threads used to load and score frames")

    @field_validator("betas")
    @classmethod
    def check_betas(cls, value: Tuple[float, float]) -> Tuple[float, float]:
        if not all(0.0 < beta < 1.0 for beta in value):
            raise ValueError(f"betas must lie in (0, 1), got {value}")
        return value


class RunConfig(BaseModel):
    model_config = ConfigDict(frozen=True, extra="forbid")

    model: ModelConfig = Field(default_factory=ModelConfig, description="Architecture hyperparameters")
    train: TrainConfig = Field(default_factory=TrainConfig, description="Optimisation hyperparameters")

    @classmethod
    def from_dict(cls, data: Dict[str, Any]) -> "RunConfig":
        try:
            return cls.model_validate(data)
        except ValidationError as exc:
            raise ConfigError(f"invalid run config: {exc}") from exc

    @classmethod
    def from_file(cls, path: Path) -> "RunConfig":
        path = Path(path)
        if not path.is_file():
            raise ConfigError(f"config file not found: {path}")
        try:
            data = json.loads(path.read_text(encoding="utf-8"))
        except json.JSONDecodeError as exc:
            raise ConfigError(f"{path}: not valid JSON: {exc}") from exc
        return cls.from_dict(data)

    def with_overrides(self, overrides: List[str], seed: Optional[int] = None) -> "RunConfig":
        """Apply ``key.path=value`` assignments; values parse as JSON when they can."""
        data = self.model_dump(mode="json")
        for assignment in overrides:
            key, sep, raw = assignment.partition("=")
            if not sep or not key:
                raise ConfigError(f"override must look like key=value, got {assignment!r}")
            *parents, leaf = key.strip().split(".")
            node = data
            for part in parents:
                if not isinstance(node.get(part), dict):
                    raise ConfigError(f"unknown config section in override {key!r}")
                node = node[part]
            if leaf not in node:
                raise ConfigError(f"unknown config key in override {key!r}")
            node[leaf] = _parse_scalar(raw)
        if seed is not None:
            data["model"]["seed"] = seed
            data["train"]["seed"] = seed
        return RunConfig.from_dict(data)


def _parse_scalar(raw: str) -> Any:
    try:
        return json.loads(raw)
    except json.JSONDecodeError:
        return raw


class RunSpec(BaseModel):
    command: Literal["synth", "train", "eval", "report", "ablate", "serve"] = Field(..., description="Subcommand")
    config_path: Optional[Path] = Field(None, description="JSON RunConfig file")
    manifest_path: Optional[Path] = Field(None, description="Manifest CSV")
    out_dir: Path = Field(default=Path("runs"), description="Directory receiving artifacts")
    overrides: List[str] = Field(default_factory=list, description="Dotted key=value overrides")
    seed: Optional[int] = Field(None, description="Seed applied to model init and batch order")
    checkpoint_path: Optional[Path] = Field(None, description="Checkpoint to evaluate or serve")
    granularity: Literal["frame", "video"] = Field(default="frame", description="Scoring unit for reports")
    scores_path: Optional[Path] = Field(None, description="Test score CSV for the report command")
    dev_scores_path: Optional[Path] = Field(None, description="Development score CSV for the report command")
    det_points: int = Field(default=50, ge=2, description="Thresholds sampled for the DET curve")
    parallel: bool = Field(default=False, description="Run ablation variants in separate processes")
    per_class: Optional[int] = Field(None, gt=0, description="Synthetic frames per class and split (default 32/16/16)")
    image_size: Optional[int] = Field(None, ge=8, description="Synthetic frame side (default: the model image size)")
    frames_per_video: int = Field(default=1, gt=0, description="Synthetic frames sharing one video id")

    def run_config(self) -> RunConfig:
        base = RunConfig.from_file(self.config_path) if self.config_path else RunConfig()
        return base.with_overrides(self.overrides, seed=self.seed)
