"""
Biometric error rates for presentation attack detection.

Decision rule: a sample is judged real iff ``score >= alpha``.

    FAR(alpha)  = N_SJR / N_S   attacks judged real over all attacks
    MDR(alpha)  = N_RJS / N_R   reals judged attack over all reals
    HTER(alpha) = (FAR(alpha) + MDR(alpha)) / 2

On a finite score set FAR and MDR rarely cross exactly, so the EER is the
HTER at the swept threshold minimising |FAR - MDR| (ties: smaller
FAR + MDR, then smaller alpha). The comparisons use integer cross products
of the counts, so the selection is exact.

Naming note: FAR here counts accepted attacks and MDR counts rejected
genuine faces. Some texts swap the "false acceptance"/"false rejection"
aliases; the formulas above are what this module computes.
"""
import csv
import io
import json
import logging
import math
from collections import OrderedDict
from pathlib import Path
from typing import Dict, List, Mapping, Optional, Sequence, Tuple

import numpy as np
from pydantic import ValidationError

from aavit.errors import DataError, ParameterError, UndefinedMetricError, UnknownSampleError
from aavit.schemas.data import AttackType, Label, SampleManifest
from aavit.schemas.metrics import DetPoint, ErrorCounts, EvalReport, EvalSummary, ScoreRecord

logger = logging.getLogger(__name__)

SCORE_FIELDS = ("id", "score", "label")
# distance of the top sweep threshold above the highest score
TOP_MARGIN = 1e-6


class _Scores:
    """Sorted real / attack scores with exact counting at any threshold."""

    def __init__(self, records: Sequence[ScoreRecord]):
        self.real = np.sort(np.array([r.score for r in records if r.label is Label.REAL], dtype=np.float64))
        self.attack = np.sort(np.array([r.score for r in records if r.label is Label.ATTACK], dtype=np.float64))

    def require_attack(self) -> None:
        if self.attack.size == 0:
            raise UndefinedMetricError("FAR is undefined without attack samples")

    def require_real(self) -> None:
        if self.real.size == 0:
            raise UndefinedMetricError("MDR is undefined without real samples")

    def attacks_judged_real(self, alphas: np.ndarray) -> np.ndarray:
        return self.attack.size - np.searchsorted(self.attack, alphas, side="left")

    def reals_judged_attack(self, alphas: np.ndarray) -> np.ndarray:
        return np.searchsorted(self.real, alphas, side="left")


def far(records: Sequence[ScoreRecord], alpha: float) -> float:
    scores = _Scores(records)
    scores.require_attack()
    return int(scores.attacks_judged_real(np.array([alpha]))[0]) / scores.attack.size


def mdr(records: Sequence[ScoreRecord], alpha: float) -> float:
    scores = _Scores(records)
    scores.require_real()
    return int(scores.reals_judged_attack(np.array([alpha]))[0]) / scores.real.size


def hter(records: Sequence[ScoreRecord], alpha: float) -> float:
    return (far(records, alpha) + mdr(records, alpha)) / 2


def candidate_thresholds(records: Sequence[ScoreRecord]) -> np.ndarray:
    """Distinct scores, midpoints between neighbours, and both extremes."""
    distinct = np.unique(np.array([r.score for r in records], dtype=np.float64))
    midpoints = (distinct[:-1] + distinct[1:]) / 2
    low = min(0.0, float(distinct[0]))
    high = max(1.0, float(distinct[-1])) + TOP_MARGIN
    return np.unique(np.concatenate([distinct, midpoints, [low, high]]))


def _sweep(records: Sequence[ScoreRecord]) -> Tuple[float, int, int, _Scores]:
    scores = _Scores(records)
    scores.require_real()
    scores.require_attack()
    alphas = candidate_thresholds(records)
    n_real, n_attack = scores.real.size, scores.attack.size
    sjr = scores.attacks_judged_real(alphas).astype(np.int64)
    rjs = scores.reals_judged_attack(alphas).astype(np.int64)
    # FAR - MDR = (sjr * N_R - rjs * N_S) / (N_S * N_R)
    gap = np.abs(sjr * n_real - rjs * n_attack)
    total = sjr * n_real + rjs * n_attack
    best = np.lexsort((alphas, total, gap))[0]
    return float(alphas[best]), int(sjr[best]), int(rjs[best]), scores


def eer(records: Sequence[ScoreRecord]) -> Tuple[float, float]:
    """(EER, alpha*) from the exhaustive threshold sweep."""
    alpha, sjr, rjs, scores = _sweep(records)
    value = (sjr / scores.attack.size + rjs / scores.real.size) / 2
    return value, alpha


def det_curve(records: Sequence[ScoreRecord], n_points: int) -> List[DetPoint]:
    """FAR/MDR at ``n_points`` evenly spaced thresholds over [min score, max score]."""
    if n_points < 2:
        raise ParameterError(f"a DET curve needs at least 2 points, got {n_points}")
    scores = _Scores(records)
    scores.require_real()
    scores.require_attack()
    all_scores = np.concatenate([scores.real, scores.attack])
    alphas = np.linspace(all_scores.min(), all_scores.max(), n_points)
    sjr = scores.attacks_judged_real(alphas)
    rjs = scores.reals_judged_attack(alphas)
    return [
        DetPoint(threshold=float(a), far=int(s) / scores.attack.size, mdr=int(r) / scores.real.size)
        for a, s, r in zip(alphas, sjr, rjs)
    ]


def aggregate_by_video(records: Sequence[ScoreRecord], manifest: SampleManifest) -> List[ScoreRecord]:
    """One record per video: mean frame score, majority label, first-seen order."""
    video_of = manifest.video_index()
    groups: "OrderedDict[str, List[ScoreRecord]]" = OrderedDict()
    for record in records:
        if record.id not in video_of:
            raise UnknownSampleError(f"unknown sample id: {record.id}")
        groups.setdefault(video_of[record.id], []).append(record)

    videos = []
    for video_id, frames in groups.items():
        n_real = sum(1 for f in frames if f.label is Label.REAL)
        label = Label.REAL if n_real * 2 >= len(frames) else Label.ATTACK
        score = math.fsum(f.score for f in frames) / len(frames)
        videos.append(ScoreRecord(id=video_id, score=score, label=label))
    return videos


def per_attack_breakdown(records: Sequence[ScoreRecord], manifest: SampleManifest) -> Dict[str, float]:
    """EER of the real class against each attack family present."""
    kind_of = {}
    for entry in manifest.entries:
        kind_of[entry.sample_id] = entry.attack_type
        kind_of.setdefault(entry.video_id, entry.attack_type)
    reals = [r for r in records if r.label is Label.REAL]
    breakdown = {}
    for kind in (AttackType.PRINT, AttackType.PHONE, AttackType.TABLE):
        attacks = [r for r in records if r.label is Label.ATTACK and kind_of.get(r.id) is kind]
        if reals and attacks:
            breakdown[kind.value] = eer(reals + attacks)[0]
    return breakdown


def build_report(
    records: Sequence[ScoreRecord],
    n_points: int = 50,
    manifest: Optional[SampleManifest] = None,
) -> EvalReport:
    alpha, sjr, rjs, scores = _sweep(records)
    value = (sjr / scores.attack.size + rjs / scores.real.size) / 2
    return EvalReport(
        eer=value,
        threshold=alpha,
        hter=hter(records, alpha),
        det=det_curve(records, n_points),
        counts=ErrorCounts(
            n_real=int(scores.real.size),
            n_attack=int(scores.attack.size),
            n_attack_judged_real=sjr,
            n_real_judged_attack=rjs,
        ),
        attack_breakdown=per_attack_breakdown(records, manifest) if manifest is not None else {},
    )


def summarize(
    reports: Mapping[str, Sequence[ScoreRecord]],
    n_points: int = 50,
    manifest: Optional[SampleManifest] = None,
    granularity: str = "frame",
) -> EvalSummary:
    """Report every split; with dev and test both present, add the test HTER at the dev threshold."""
    summary = EvalSummary(granularity=granularity)
    for split, records in reports.items():
        summary.splits[split] = build_report(records, n_points, manifest)
        logger.info("%s EER %.2f%% at threshold %.6f", split, 100 * summary.splits[split].eer,
                    summary.splits[split].threshold)
    if "dev" in summary.splits and "test" in reports:
        summary.test_hter_at_dev_threshold = hter(reports["test"], summary.splits["dev"].threshold)
    return summary


def percent(value: float) -> str:
    return f"{100 * value:.2f}"


def format_eval_table(summary: EvalSummary, feature: str = "Raw RGB", model: str = "AAViT") -> str:
    """EER (%) table with Development and/or Test columns."""
    columns = [(title, key) for title, key in (("Development", "dev"), ("Test", "test")) if key in summary.splits]
    header = ["Feature", "Model"] + [title for title, _ in columns]
    row = [feature, model] + [percent(summary.splits[key].eer) for _, key in columns]
    widths = [max(len(a), len(b)) for a, b in zip(header, row)]
    lines = [
        "EER (%)",
        "  ".join(h.ljust(w) for h, w in zip(header, widths)).rstrip(),
        "  ".join(c.ljust(w) for c, w in zip(row, widths)).rstrip(),
    ]
    if len(columns) == 2:
        lines.append(f"Development / Test: {row[2]} / {row[3]}")
    if summary.test_hter_at_dev_threshold is not None:
        lines.append(f"Test HTER at development threshold: {percent(summary.test_hter_at_dev_threshold)}")
    for key in ("dev", "test"):
        breakdown = summary.splits[key].attack_breakdown if key in summary.splits else {}
        if breakdown:
            parts = ", ".join(f"{kind} {percent(v)}" for kind, v in breakdown.items())
            lines.append(f"{key} EER per attack type: {parts}")
    return "\n".join(lines)


def summary_json(summary: EvalSummary) -> str:
    return json.dumps(summary.model_dump(mode="json"), indent=2, sort_keys=True) + "\n"


def write_scores(path: Path, records: Sequence[ScoreRecord]) -> Path:
    """``id,score,label`` CSV; scores use the shortest round-tripping decimal."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    buffer = io.StringIO()
    writer = csv.writer(buffer, lineterminator="\n")
    writer.writerow(SCORE_FIELDS)
    for r in records:
        writer.writerow([r.id, repr(float(r.score)), r.label.value])
    path.write_text(buffer.getvalue(), encoding="utf-8")
    return path


def read_scores(path: Path) -> List[ScoreRecord]:
    path = Path(path)
    try:
        text = path.read_text(encoding="utf-8")
    except FileNotFoundError as exc:
        raise DataError(f"score file not found: {path}") from exc
    reader = csv.DictReader(io.StringIO(text))
    if tuple(reader.fieldnames or ()) != SCORE_FIELDS:
        raise DataError(f"{path}: header must be {','.join(SCORE_FIELDS)}")
    records = []
    for line_no, row in enumerate(reader, start=2):
        try:
            records.append(ScoreRecord(id=row["id"], score=float(row["score"]), label=row["label"]))
        except (ValueError, ValidationError) as exc:
            raise DataError(f"{path}:{line_no}: bad score row: {exc}") from exc
    return records
