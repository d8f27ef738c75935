"""Manifests, the synthetic real/attack corpus, and seeded batching."""
import csv
import hashlib
import io
import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from pathlib import Path
from typing import Iterator, List, Mapping, Optional, Sequence, Union

import numpy as np
from pydantic import ValidationError

from aavit.errors import DataError, DimensionError, ManifestValidationError, ParameterError
from aavit.imaging import load_image, write_ppm
from aavit.rng import SplitMix64
from aavit.schemas.data import AttackType, Label, ManifestEntry, SampleManifest, Split
from aavit.tensor import Precision, Tensor

logger = logging.getLogger(__name__)

MANIFEST_FIELDS = ("path", "label", "attack_type", "split", "video_id")
MANIFEST_NAME = "manifest.csv"

SUMMARY_ROWS = (
    ("Real-access", AttackType.NONE),
    ("Print-attack", AttackType.PRINT),
    ("Phone-attack", AttackType.PHONE),
    ("Table-attack", AttackType.TABLE),
)
SUMMARY_COLUMNS = (("Training (#)", Split.TRAIN), ("Development (#)", Split.DEV), ("Test (#)", Split.TEST))

# synthetic corpus appearance
FIELD_AMPLITUDE = 0.08
NOISE_STD = 0.02
ARTIFACT_AMPLITUDE = 0.12
ATTACK_CYCLE = (AttackType.PRINT, AttackType.PHONE, AttackType.TABLE)


def build_manifest(root_dir: Optional[Path], schema_file: Path) -> SampleManifest:
    """Parse and validate a manifest CSV; paths resolve against ``root_dir``
    (default: the directory holding ``schema_file``)."""
    schema_file = Path(schema_file)
    root = Path(root_dir) if root_dir is not None else schema_file.parent
    try:
        text = schema_file.read_text(encoding="utf-8")
    except FileNotFoundError as exc:
        raise DataError(f"manifest not found: {schema_file}") from exc

    reader = csv.DictReader(io.StringIO(text))
    if reader.fieldnames is None:
        raise ManifestValidationError("empty manifest")
    if tuple(name.strip() for name in reader.fieldnames) != MANIFEST_FIELDS:
        raise ManifestValidationError(
            f"manifest header must be {','.join(MANIFEST_FIELDS)}", [",".join(reader.fieldnames)]
        )

    entries, offenders = [], []
    for line_no, row in enumerate(reader, start=2):
        try:
            entries.append(ManifestEntry(**{k.strip(): (v or "").strip() for k, v in row.items() if k}))
        except ValidationError as exc:
            problems = "; ".join(err["msg"] for err in exc.errors())
            offenders.append(f"line {line_no} ({row.get('path')}): {problems}")
    if offenders:
        raise ManifestValidationError("invalid manifest rows", offenders)

    manifest = SampleManifest.build(root, entries)
    logger.info("loaded manifest %s with %d samples", schema_file, len(manifest))
    return manifest


def read_manifest(path: Path) -> SampleManifest:
    return build_manifest(None, path)


def write_manifest(manifest: SampleManifest, path: Path) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    buffer = io.StringIO()
    writer = csv.writer(buffer, lineterminator="\n")
    writer.writerow(MANIFEST_FIELDS)
    for e in manifest.entries:
        writer.writerow([e.path, e.label.value, e.attack_type.value, e.split.value, e.video_id])
    path.write_text(buffer.getvalue(), encoding="utf-8")
    return path


def format_summary(manifest: SampleManifest) -> str:
    """Sample counts per type and split, one row per attack family plus Total."""
    counts = manifest.counts()
    header = ["Type"] + [title for title, _ in SUMMARY_COLUMNS]
    rows = [
        [title] + [str(counts.get((kind, split), 0)) for _, split in SUMMARY_COLUMNS]
        for title, kind in SUMMARY_ROWS
    ]
    rows.append(["Total"] + [str(len(manifest.split(split))) for _, split in SUMMARY_COLUMNS])
    widths = [max(len(r[i]) for r in [header] + rows) for i in range(len(header))]
    return "\n".join(
        "  ".join(cell.ljust(width) for cell, width in zip(row, widths)).rstrip()
        for row in [header] + rows
    )


def _smooth_field(rng: SplitMix64, size: int) -> np.ndarray:
    """Low-frequency colour field: base colour plus two slow cosines per channel."""
    ys, xs = np.mgrid[0:size, 0:size] / size
    base = 0.3 + 0.4 * rng.uniform(3)
    field = np.empty((size, size, 3))
    for c in range(3):
        freqs = np.floor(rng.uniform((2, 2)) * 3)  # 0..2 cycles per image
        phases = 2.0 * np.pi * rng.uniform(2)
        waves = sum(
            np.cos(2.0 * np.pi * (freqs[k, 0] * xs + freqs[k, 1] * ys) + phases[k]) for k in range(2)
        )
        field[:, :, c] = base[c] + 0.5 * FIELD_AMPLITUDE * waves
    return field


def grid_artifact(attack_type: AttackType, size: int) -> np.ndarray:
    """Zero-mean period-2 pattern standing in for print dots and screen moire."""
    ys, xs = np.mgrid[0:size, 0:size]
    if attack_type is AttackType.PRINT:
        pattern = (xs + ys) % 2
    elif attack_type is AttackType.PHONE:
        pattern = xs % 2
    elif attack_type is AttackType.TABLE:
        pattern = ys % 2
    else:
        return np.zeros((size, size, 1))
    return (ARTIFACT_AMPLITUDE * (2.0 * pattern - 1.0))[:, :, None]


def synth_frame(seed: int, video_key: str, frame: int, attack_type: AttackType, size: int) -> np.ndarray:
    field = _smooth_field(SplitMix64.for_stream(seed, f"synth/{video_key}"), size)
    noise = SplitMix64.for_stream(seed, f"synth/{video_key}/frame{frame}").normal((size, size, 3), NOISE_STD)
    pixels = field + noise + grid_artifact(attack_type, size)
    return np.round(np.clip(pixels, 0.0, 1.0) * 255.0).astype(np.uint8)


def synth_corpus(
    out_dir: Path,
    n_per_class_per_split: Union[int, Mapping[Union[str, Split], int]],
    image_size: int,
    seed: int,
    frames_per_video: int = 1,
) -> SampleManifest:
    """
    Write a deterministic corpus of PPM frames plus ``manifest.csv``.

    Real frames are a smooth colour field with mild noise; attack frames are
    the same kind of field overlaid with a high-frequency grid (print: checker,
    phone: vertical stripes, table: horizontal stripes). ``n_per_class_per_split``
    counts frames per class and split.
    """
    if image_size < 8:
        raise ParameterError(f"image_size must be at least 8, got {image_size}")
    if frames_per_video < 1:
        raise ParameterError(f"frames_per_video must be positive, got {frames_per_video}")
    if isinstance(n_per_class_per_split, int):
        counts = {split: n_per_class_per_split for split in Split}
    else:
        counts = {Split(k): int(v) for k, v in n_per_class_per_split.items()}

    out_dir = Path(out_dir)
    entries: List[ManifestEntry] = []
    try:
        for split, count in counts.items():
            for label in Label:
                for k in range(count):
                    video = k // frames_per_video
                    frame = k % frames_per_video
                    attack = AttackType.NONE if label is Label.REAL else ATTACK_CYCLE[video % len(ATTACK_CYCLE)]
                    video_id = f"{split.value}-{label.value}-{video:04d}"
                    rel = f"{split.value}/{label.value}/{video_id}-f{frame:02d}.ppm"
                    write_ppm(out_dir / rel, synth_frame(seed, video_id, frame, attack, image_size))
                    entries.append(
                        ManifestEntry(path=rel, label=label, attack_type=attack, split=split, video_id=video_id)
                    )
        manifest = SampleManifest.build(out_dir, entries)
        write_manifest(manifest, out_dir / MANIFEST_NAME)
    except OSError as exc:
        raise DataError(f"cannot write corpus under {out_dir}: {exc}") from exc
    logger.info("synthesised %d frames (%dx%d) under %s", len(entries), image_size, image_size, out_dir)
    return manifest


@dataclass
class Batch:
    images: Tensor
    labels: List[int]
    ids: List[str]

    def __len__(self) -> int:
        return len(self.ids)


def epoch_order(manifest: SampleManifest, split: Split, seed: int, epoch: int) -> List[ManifestEntry]:
    entries = manifest.require_split(split)
    permutation = SplitMix64.for_stream(seed, f"epoch/{epoch}").permutation(len(entries))
    return [entries[i] for i in permutation]


def permutation_hash(entries: Sequence[ManifestEntry]) -> str:
    digest = hashlib.sha256("\n".join(e.sample_id for e in entries).encode("utf-8"))
    return digest.hexdigest()[:16]


def load_images(
    manifest: SampleManifest,
    entries: Sequence[ManifestEntry],
    workers: int = 1,
    precision: Precision = Precision.STANDARD,
) -> List[Tensor]:
    """Load frames, possibly on several threads, returned in ``entries`` order."""
    paths = [manifest.resolve(e) for e in entries]
    if workers > 1 and len(paths) > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            return list(pool.map(lambda p: load_image(p, precision), paths))
    return [load_image(p, precision) for p in paths]


def batch_iter(
    manifest: SampleManifest,
    split: Split,
    batch_size: int,
    seed: int,
    epoch: int = 0,
    workers: int = 1,
    precision: Precision = Precision.STANDARD,
) -> Iterator[Batch]:
    """Seeded epoch order, consecutive batches, last partial batch kept."""
    if batch_size < 1:
        raise ParameterError(f"batch_size must be positive, got {batch_size}")
    order = epoch_order(manifest, split, seed, epoch)
    for start in range(0, len(order), batch_size):
        chunk = order[start:start + batch_size]
        images = load_images(manifest, chunk, workers, precision)
        shapes = {img.shape for img in images}
        if len(shapes) > 1:
            raise DimensionError(f"batch mixes image extents {sorted(shapes)}")
        yield Batch(
            images=Tensor(np.stack([img.data for img in images]), precision=precision),
            labels=[e.label.class_index for e in chunk],
            ids=[e.sample_id for e in chunk],
        )
