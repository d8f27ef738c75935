"""Command-line interface: synth, train, eval, report, ablate and serve.

Every command writes its artifacts under ``--out``. Errors are reported on
standard error and mapped to exit codes: 2 configuration, 3 data, 4 numeric.
"""
import argparse
import json
import logging
import sys
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path
from typing import Dict, List, Optional, Sequence, Tuple

from pydantic import ValidationError

from aavit import __version__
from aavit.config import settings
from aavit.dataset import MANIFEST_NAME, format_summary, read_manifest, synth_corpus
from aavit.errors import AAViTError, ConfigError, DataError
from aavit.logging_config import configure_logging
from aavit.metrics import (
    aggregate_by_video,
    format_eval_table,
    percent,
    read_scores,
    summarize,
    summary_json,
    write_scores,
)
from aavit.models.checkpoint import FORMAT_VERSION
from aavit.models.vit import AAViT
from aavit.schemas.data import SampleManifest, Split
from aavit.schemas.metrics import ScoreRecord
from aavit.schemas.model import HeadKind
from aavit.schemas.train import RunConfig, RunSpec
from aavit.trainer import FINAL_CHECKPOINT, evaluate, train

logger = logging.getLogger(__name__)

RUN_METADATA = "run.json"
REPORT_JSON = "report.json"
REPORT_TEXT = "report.txt"
ABLATION_JSON = "ablation.json"
ABLATION_TEXT = "ablation.txt"
# rows of the ablation table, in order
ABLATION_VARIANTS = (HeadKind.AAMLP, HeadKind.AAMLP_NO_ATTENTION, HeadKind.BASELINE_VIT)
# desk corpus frames per class: train / dev / test
DEFAULT_SYNTH_COUNTS = {Split.TRAIN: 32, Split.DEV: 16, Split.TEST: 16}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="aavit", description=__doc__,
                                     formatter_class=argparse.RawDescriptionHelpFormatter)
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    commands = parser.add_subparsers(dest="command", required=True)

    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", dest="config_path", type=Path, help="JSON run config (model + train sections)")
    common.add_argument("--manifest", dest="manifest_path", type=Path, help="Manifest CSV")
    common.add_argument("--out", dest="out_dir", type=Path, default=Path("runs"), help="Output directory")
    common.add_argument("--seed", type=int, help="Seed for parameter init and batch order")
    common.add_argument("--set", dest="overrides", action="append", default=[], metavar="KEY=VALUE",
                        help="Dotted config override, e.g. train.lr=0.003 (repeatable)")

    synth = commands.add_parser("synth", parents=[common], help="Write a synthetic real/attack corpus")
    synth.add_argument("--per-class", dest="per_class", type=int, help="Frames per class and split")
    synth.add_argument("--image-size", dest="image_size", type=int, help="Frame side in pixels")
    synth.add_argument("--frames-per-video", dest="frames_per_video", type=int, default=1)

    commands.add_parser("train", parents=[common], help="Train a model on the train split")

    for name, help_text in (("eval", "Score dev/test with a checkpoint and report EER"),
                            ("report", "Report EER/HTER/DET from score files")):
        sub = commands.add_parser(name, parents=[common], help=help_text)
        sub.add_argument("--checkpoint", dest="checkpoint_path", type=Path, help="Checkpoint file")
        sub.add_argument("--granularity", choices=("frame", "video"), default="frame")
        sub.add_argument("--det-points", dest="det_points", type=int, default=50)
        if name == "report":
            sub.add_argument("--scores", dest="scores_path", type=Path, required=True, help="Test score CSV")
            sub.add_argument("--dev-scores", dest="dev_scores_path", type=Path, help="Development score CSV")

    ablate = commands.add_parser("ablate", parents=[common], help="Train and compare the three head variants")
    ablate.add_argument("--parallel", action="store_true", help="Train the variants in separate processes")
    ablate.add_argument("--per-class", dest="per_class", type=int, help="Synthetic frames per class and split")

    serve = commands.add_parser("serve", parents=[common], help="Serve liveness scores over HTTP")
    serve.add_argument("--checkpoint", dest="checkpoint_path", type=Path, help="Checkpoint file")
    return parser


def spec_from_args(args: argparse.Namespace) -> RunSpec:
    fields = {k: v for k, v in vars(args).items() if v is not None}
    try:
        return RunSpec(**fields)
    except ValidationError as exc:
        raise ConfigError(f"invalid arguments: {exc}") from exc


def _require_manifest(spec: RunSpec) -> SampleManifest:
    if spec.manifest_path is None:
        raise ConfigError(f"{spec.command} needs --manifest")
    return read_manifest(spec.manifest_path)


def _write_json(path: Path, payload: dict) -> Path:
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(payload, indent=2, sort_keys=True) + "\n", encoding="utf-8")
    return path


def run_synth(spec: RunSpec) -> int:
    run_config = spec.run_config()
    counts = spec.per_class if spec.per_class is not None else DEFAULT_SYNTH_COUNTS
    manifest = synth_corpus(
        spec.out_dir, counts, spec.image_size or run_config.model.image_size,
        run_config.model.seed, spec.frames_per_video,
    )
    print(format_summary(manifest))
    return 0


def run_train(spec: RunSpec) -> int:
    run_config = spec.run_config()
    manifest = _require_manifest(spec)
    model = AAViT(run_config.model)
    result = train(model, manifest, run_config.train, spec.out_dir)
    _write_json(spec.out_dir / RUN_METADATA, {
        "command": "train",
        "version": __version__,
        "config": run_config.model_dump(mode="json"),
        "seed": run_config.train.seed,
        "manifest": str(spec.manifest_path),
        "formats": {"checkpoint": FORMAT_VERSION, "scores": "csv:id,score,label"},
        "permutation_hashes": result.permutation_hashes,
        "steps": len(result.history),
        "checkpoint": FINAL_CHECKPOINT,
    })
    print(f"final loss {result.losses[-1]:.6f}; checkpoint {result.checkpoint}")
    return 0


def _granular(records: List[ScoreRecord], manifest: SampleManifest, granularity: str) -> List[ScoreRecord]:
    return aggregate_by_video(records, manifest) if granularity == "video" else records


def _write_report(spec: RunSpec, records: Dict[str, List[ScoreRecord]],
                  manifest: Optional[SampleManifest], model_name: str) -> None:
    summary = summarize(records, spec.det_points, manifest, spec.granularity)
    (spec.out_dir / REPORT_JSON).parent.mkdir(parents=True, exist_ok=True)
    (spec.out_dir / REPORT_JSON).write_text(summary_json(summary), encoding="utf-8")
    table = format_eval_table(summary, model=model_name)
    (spec.out_dir / REPORT_TEXT).write_text(table + "\n", encoding="utf-8")
    print(table)


def run_eval(spec: RunSpec) -> int:
    manifest = _require_manifest(spec)
    checkpoint = spec.checkpoint_path or spec.out_dir / FINAL_CHECKPOINT
    expected = spec.run_config().model if spec.config_path else None
    splits = [s for s in (Split.DEV, Split.TEST) if manifest.has_split(s)] or [Split.TEST]

    records = {}
    for split in splits:
        frames = evaluate(checkpoint, manifest, split, expected=expected, workers=settings.score_workers)
        records[split.value] = _granular(frames, manifest, spec.granularity)
        write_scores(spec.out_dir / f"scores_{split.value}.csv", records[split.value])
    _write_report(spec, records, manifest, expected.head_kind.display_name if expected else "AAViT")
    return 0


def run_report(spec: RunSpec) -> int:
    records = {}
    if spec.dev_scores_path is not None:
        records["dev"] = read_scores(spec.dev_scores_path)
    records["test"] = read_scores(spec.scores_path)
    manifest = read_manifest(spec.manifest_path) if spec.manifest_path else None
    if spec.granularity == "video":
        if manifest is None:
            raise ConfigError("video granularity needs --manifest")
        records = {k: aggregate_by_video(v, manifest) for k, v in records.items()}
    _write_report(spec, records, manifest, "AAViT")
    return 0


def variant_config(base: RunConfig, head_kind: HeadKind) -> RunConfig:
    """``base`` with only the head kind changed."""
    data = base.model_dump(mode="json")
    data["model"]["head_kind"] = head_kind.value
    return RunConfig.from_dict(data)


def _train_variant(job: Tuple[RunConfig, Path, Path]) -> Tuple[float, List[str]]:
    run_config, manifest_path, out_dir = job
    manifest = read_manifest(manifest_path)
    result = train(AAViT(run_config.model), manifest, run_config.train, out_dir)
    test = evaluate(result.checkpoint, manifest, Split.TEST, out_dir / "scores_test.csv",
                    workers=run_config.train.workers)
    summary = summarize({"test": test}, manifest=manifest)
    return summary.splits["test"].eer, result.permutation_hashes


def format_ablation_table(rows: Sequence[Tuple[str, float]], feature: str = "Raw RGB") -> str:
    header = ["Feature", "Model", "Test EER (%)"]
    body = [[feature, name, percent(value)] for name, value in rows]
    widths = [max(len(r[i]) for r in [header] + body) for i in range(len(header))]
    return "\n".join(
        "  ".join(cell.ljust(width) for cell, width in zip(row, widths)).rstrip()
        for row in [header] + body
    )


def run_ablation(spec: RunSpec) -> int:
    base = spec.run_config()
    manifest_path = spec.manifest_path
    if manifest_path is None:
        corpus = spec.out_dir / "corpus"
        synth_corpus(corpus, spec.per_class or DEFAULT_SYNTH_COUNTS, base.model.image_size, base.model.seed)
        manifest_path = corpus / MANIFEST_NAME

    jobs = [(variant_config(base, kind), manifest_path, spec.out_dir / kind.value) for kind in ABLATION_VARIANTS]
    if spec.parallel:
        with ProcessPoolExecutor(max_workers=len(jobs)) as pool:
            outcomes = list(pool.map(_train_variant, jobs))
    else:
        outcomes = [_train_variant(job) for job in jobs]

    hashes = {kind.display_name: h for kind, (_, h) in zip(ABLATION_VARIANTS, outcomes)}
    for name, order in hashes.items():
        logger.info("%s batch order hashes %s", name, ",".join(order))
    if len({tuple(h) for h in hashes.values()}) != 1:
        raise DataError("ablation variants saw different batch orders")

    rows = [(kind.display_name, value) for kind, (value, _) in zip(ABLATION_VARIANTS, outcomes)]
    table = format_ablation_table(rows)
    (spec.out_dir / ABLATION_TEXT).write_text(table + "\n", encoding="utf-8")
    _write_json(spec.out_dir / ABLATION_JSON, {
        "config": base.model_dump(mode="json"),
        "manifest": str(manifest_path),
        "rows": [{"model": name, "test_eer": value} for name, value in rows],
        "permutation_hashes": outcomes[0][1],
    })
    print(table)
    return 0


def run_serve(spec: RunSpec) -> int:
    import uvicorn

    if spec.checkpoint_path is not None:
        settings.checkpoint_path = str(spec.checkpoint_path)
    from main import app

    uvicorn.run(app, host=settings.host, port=settings.port, log_level=settings.log_level.lower())
    return 0


COMMANDS = {
    "synth": run_synth,
    "train": run_train,
    "eval": run_eval,
    "report": run_report,
    "ablate": run_ablation,
    "serve": run_serve,
}


def main(argv: Optional[Sequence[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    configure_logging(settings.log_level)
    try:
        spec = spec_from_args(args)
        return COMMANDS[spec.command](spec)
    except AAViTError as exc:
        print(f"aavit {args.command}: error: {exc}", file=sys.stderr)
        return exc.exit_code
    except OSError as exc:
        print(f"aavit {args.command}: error: {exc}", file=sys.stderr)
        return DataError.exit_code
