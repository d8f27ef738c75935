from collections import Counter, defaultdict
from enum import Enum
from pathlib import Path
from typing import Dict, Iterable, List, Tuple

from pydantic import BaseModel, ConfigDict, Field, model_validator

from aavit.errors import EmptySplitError, ManifestValidationError, UnknownSampleError


class Label(str, Enum):
    REAL = "real"
    ATTACK = "attack"

    @property
    def class_index(self) -> int:
        """Class 0 is real access; its probability is the liveness score."""
        return 0 if self is Label.REAL else 1


class AttackType(str, Enum):
    NONE = "none"
    PRINT = "print"
    PHONE = "phone"
    TABLE = "table"


class Split(str, Enum):
    TRAIN = "train"
    DEV = "dev"
    TEST = "test"


class ManifestEntry(BaseModel):
    model_config = ConfigDict(frozen=True, extra="forbid")

    path: str = Field(..., min_length=1, description="Image path relative to the manifest file")
    label: Label = Field(..., description="Ground truth: real access or attack")
    attack_type: AttackType = Field(..., description="Presentation attack family, none for real access")
    split: Split = Field(..., description="Protocol subset")
    video_id: str = Field(..., min_length=1, description="Source video; never shared between splits")

    @model_validator(mode="after")
    def check_label(self) -> "ManifestEntry":
        if (self.label is Label.REAL) != (self.attack_type is AttackType.NONE):
            raise ValueError(f"label {self.label.value} does not fit attack_type {self.attack_type.value}")
        return self

    @property
    def sample_id(self) -> str:
        return self.path


class SampleManifest(BaseModel):
    """Validated, immutable dataset index. Build it with ``SampleManifest.build``."""

    model_config = ConfigDict(frozen=True)

    root: Path = Field(..., description="Directory the entry paths are relative to")
    entries: Tuple[ManifestEntry, ...] = Field(..., description="Samples in file order")

    @classmethod
    def build(cls, root: Path, entries: Iterable[ManifestEntry]) -> "SampleManifest":
        entries = tuple(entries)
        if not entries:
            raise ManifestValidationError("empty manifest")

        duplicates = sorted(path for path, n in Counter(e.path for e in entries).items() if n > 1)
        if duplicates:
            raise ManifestValidationError("duplicate paths", duplicates)

        splits_of_video: Dict[str, set] = defaultdict(set)
        for entry in entries:
            splits_of_video[entry.video_id].add(entry.split.value)
        leaking = sorted(
            f"{video} ({'/'.join(sorted(splits))})"
            for video, splits in splits_of_video.items()
            if len(splits) > 1
        )
        if leaking:
            raise ManifestValidationError("video_id appears in more than one split", leaking)

        return cls(root=Path(root), entries=entries)

    def __len__(self) -> int:
        return len(self.entries)

    def split(self, split: Split) -> List[ManifestEntry]:
        split = Split(split)
        return [e for e in self.entries if e.split is split]

    def has_split(self, split: Split) -> bool:
        split = Split(split)
        return any(e.split is split for e in self.entries)

    def require_split(self, split: Split) -> List[ManifestEntry]:
        entries = self.split(split)
        if not entries:
            raise EmptySplitError(f"split '{Split(split).value}' is empty")
        return entries

    def resolve(self, entry: ManifestEntry) -> Path:
        return self.root / entry.path

    def entry(self, sample_id: str) -> ManifestEntry:
        for candidate in self.entries:
            if candidate.sample_id == sample_id:
                return candidate
        raise UnknownSampleError(f"unknown sample id: {sample_id}")

    def video_index(self) -> Dict[str, str]:
        return {e.sample_id: e.video_id for e in self.entries}

    def counts(self) -> Dict[Tuple[AttackType, Split], int]:
        return dict(Counter((e.attack_type, e.split) for e in self.entries))
