"""Cross-entropy training with Adam, checkpointing, and split scoring."""
import csv
import io
import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Dict, List, Mapping, Optional

import numpy as np

from aavit.dataset import batch_iter, epoch_order, load_images, permutation_hash
from aavit.errors import DimensionError, NumericError, ParameterError
from aavit.metrics import eer, write_scores
from aavit.models.checkpoint import load_checkpoint, save_checkpoint
from aavit.models.vit import AAViT, ModelParams
from aavit.schemas.data import SampleManifest, Split
from aavit.schemas.metrics import ScoreRecord
from aavit.schemas.model import ModelConfig
from aavit.schemas.train import TrainConfig
from aavit.tensor import Tensor, add, log_softmax, pick, scale

logger = logging.getLogger(__name__)

FINAL_CHECKPOINT = "model.aavt"
LOSS_HISTORY = "loss.csv"


def cross_entropy(logits: Tensor, true_class: int) -> Tensor:
    """
    -log p[true] where p = softmax(logits), evaluated as a stable log-softmax.

    Takes the logits behind the probabilities so the gradient is exactly
    p - onehot(true).
    """
    if not 0 <= true_class < logits.shape[-1]:
        raise ParameterError(f"true class {true_class} out of range for {logits.shape[-1]} classes")
    loss = scale(pick(log_softmax(logits), true_class), -1.0)
    loss.data = np.asarray(loss.data + 0.0, dtype=loss.dtype)  # a saturated class gives -0.0
    return loss


def probability_loss(probabilities: np.ndarray, true_class: int) -> float:
    """Cross-entropy of an already normalised probability vector, for reporting."""
    probabilities = np.asarray(probabilities, dtype=np.float64)
    if not 0 <= true_class < probabilities.shape[-1]:
        raise ParameterError(f"true class {true_class} out of range for {probabilities.shape[-1]} classes")
    return float(-np.log(max(probabilities[true_class], np.finfo(np.float64).tiny)))


@dataclass
class OptimizerState:
    first_moment: Dict[str, np.ndarray]
    second_moment: Dict[str, np.ndarray]
    step: int = 0

    @classmethod
    def for_params(cls, params: ModelParams) -> "OptimizerState":
        return cls(
            first_moment={name: np.zeros_like(t.data) for name, t in params.items()},
            second_moment={name: np.zeros_like(t.data) for name, t in params.items()},
        )


def adam_step(
    params: ModelParams,
    grads: Optional[Mapping[str, np.ndarray]],
    state: OptimizerState,
    config: TrainConfig,
) -> OptimizerState:
    """
    One bias-corrected Adam update, in place:

        m = b1 m + (1 - b1) g            v = b2 v + (1 - b2) g^2
        m_hat = m / (1 - b1^t)           v_hat = v / (1 - b2^t)
        theta -= lr * m_hat / (sqrt(v_hat) + eps)

    ``grads`` defaults to the ``grad`` buffers left by ``backward()``;
    a missing gradient counts as zero.
    """
    beta1, beta2 = config.betas
    state.step += 1
    t = state.step
    for name, tensor in params.items():
        grad = grads.get(name) if grads is not None else tensor.grad
        if grad is None:
            grad = np.zeros_like(tensor.data)
        if grad.shape != tensor.shape:
            raise DimensionError(f"gradient for {name} has shape {list(grad.shape)}, expected {list(tensor.shape)}")
        if not np.isfinite(grad).all():
            raise NumericError(f"non-finite gradient for {name}", step=t)
        m = state.first_moment[name] = beta1 * state.first_moment[name] + (1 - beta1) * grad
        v = state.second_moment[name] = beta2 * state.second_moment[name] + (1 - beta2) * grad * grad
        m_hat = m / (1 - beta1 ** t)
        v_hat = v / (1 - beta2 ** t)
        tensor.data -= (config.lr * m_hat / (np.sqrt(v_hat) + config.eps)).astype(tensor.dtype)
    return state


class Adam:
    def __init__(self, params: ModelParams, config: TrainConfig):
        self.params = params
        self.config = config
        self.state = OptimizerState.for_params(params)

    def step(self) -> None:
        adam_step(self.params, None, self.state, self.config)

    def zero_grad(self) -> None:
        self.params.zero_grad()


def batch_loss(model: AAViT, images: Tensor, labels: List[int]) -> Tensor:
    """Mean cross-entropy over the batch, one image at a time."""
    total = None
    for i, label in enumerate(labels):
        loss = cross_entropy(model.logits(Tensor(images.data[i], precision=images.precision)), label)
        total = loss if total is None else add(total, loss)
    return scale(total, 1.0 / len(labels))


@dataclass
class LossRecord:
    step: int
    loss: float
    dev_eer: Optional[float] = None


@dataclass
class TrainResult:
    checkpoint: Path
    history: List[LossRecord]
    permutation_hashes: List[str] = field(default_factory=list)
    checkpoints: List[Path] = field(default_factory=list)

    @property
    def losses(self) -> List[float]:
        return [record.loss for record in self.history]


def write_loss_history(path: Path, history: List[LossRecord]) -> Path:
    buffer = io.StringIO()
    writer = csv.writer(buffer, lineterminator="\n")
    writer.writerow(["step", "loss", "dev_eer"])
    for r in history:
        writer.writerow([r.step, repr(r.loss), "" if r.dev_eer is None else repr(r.dev_eer)])
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(buffer.getvalue(), encoding="utf-8")
    return path


def score_split(model: AAViT, manifest: SampleManifest, split: Split, workers: int = 1) -> List[ScoreRecord]:
    """Liveness score of every sample of ``split``, in manifest order."""
    entries = manifest.require_split(split)
    scorer = model.frozen()
    images = load_images(manifest, entries, workers, scorer.config.precision)
    if workers > 1 and len(images) > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            scores = list(pool.map(scorer.score, images))
    else:
        scores = [scorer.score(image) for image in images]
    return [ScoreRecord(id=e.sample_id, score=s, label=e.label) for e, s in zip(entries, scores)]


def train(model: AAViT, manifest: SampleManifest, train_cfg: TrainConfig, out_dir: Path) -> TrainResult:
    """
    Train ``model`` in place on the train split.

    Writes periodic checkpoints under ``out_dir/checkpoints``, the final
    checkpoint ``out_dir/model.aavt`` and ``out_dir/loss.csv``. When a dev
    split exists it is scored after every epoch and its EER logged.
    """
    out_dir = Path(out_dir)
    manifest.require_split(Split.TRAIN)
    has_dev = manifest.has_split(Split.DEV)
    optimizer = Adam(model.params, train_cfg)
    result = TrainResult(checkpoint=out_dir / FINAL_CHECKPOINT, history=[])
    best_eer, best_arrays = None, None
    step = 0

    logger.info(
        "training %s (%d parameters) on %d samples",
        model.config.head_kind.display_name, model.params.count(), len(manifest.split(Split.TRAIN)),
    )
    for epoch in range(train_cfg.epochs):
        order_hash = permutation_hash(epoch_order(manifest, Split.TRAIN, train_cfg.seed, epoch))
        result.permutation_hashes.append(order_hash)
        logger.info("epoch %d batch order %s", epoch, order_hash)

        for batch in batch_iter(
            manifest, Split.TRAIN, train_cfg.batch_size, train_cfg.seed, epoch,
            train_cfg.workers, model.config.precision,
        ):
            step += 1
            optimizer.zero_grad()
            try:
                loss = batch_loss(model, batch.images, batch.labels)
            except NumericError as exc:
                raise NumericError(f"non-finite loss: {exc}", step=step) from exc
            loss.backward()
            optimizer.step()
            result.history.append(LossRecord(step=step, loss=loss.item()))
            if step % train_cfg.log_every == 0:
                logger.info("step %d loss %.6f", step, loss.item())
            if train_cfg.checkpoint_every and step % train_cfg.checkpoint_every == 0:
                result.checkpoints.append(
                    save_checkpoint(out_dir / "checkpoints" / f"step_{step:06d}.aavt", model.config, model.params)
                )
            if train_cfg.max_steps and step >= train_cfg.max_steps:
                break

        if has_dev and result.history:
            dev_eer, _ = eer(score_split(model, manifest, Split.DEV, train_cfg.workers))
            result.history[-1].dev_eer = dev_eer
            logger.info("epoch %d dev EER %.2f%%", epoch, 100 * dev_eer)
            if best_eer is None or dev_eer < best_eer:
                best_eer, best_arrays = dev_eer, model.params.arrays()
        if train_cfg.max_steps and step >= train_cfg.max_steps:
            break

    final_params = model.params
    if train_cfg.select == "best-dev" and best_arrays is not None:
        logger.info("selecting best development checkpoint (EER %.2f%%)", 100 * best_eer)
        final_params = ModelParams.from_arrays(model.config, best_arrays)
    save_checkpoint(result.checkpoint, model.config, final_params)
    write_loss_history(out_dir / LOSS_HISTORY, result.history)
    return result


def evaluate(
    checkpoint: Path,
    manifest: SampleManifest,
    split: Split,
    out_path: Optional[Path] = None,
    expected: Optional[ModelConfig] = None,
    workers: int = 1,
) -> List[ScoreRecord]:
    """Score ``split`` with a saved model; optionally write the score CSV."""
    config, params = load_checkpoint(checkpoint, expected)
    records = score_split(AAViT(config, params), manifest, split, workers)
    if out_path is not None:
        write_scores(out_path, records)
    return records
