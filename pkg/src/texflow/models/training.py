# Copyright (c) 2025 CoReason, Inc.
#
# This software is proprietary and dual-licensed.
# Licensed under the Prosperity Public License 3.0 (the "License").
# A copy of the license is available at https://prosperitylicense.com/versions/3.0.0
# For details, see the LICENSE file.
# Commercial use beyond a 30-day trial requires a separate license.
#
# Source Code: https://github.com/CoReason-AI/texflow

import csv
import io
import time
from collections.abc import Sequence
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from texflow.dataset import Dataset, Sample, denormalize, reassemble
from texflow.exceptions import ConfigurationError, DivergenceError
from texflow.models.unet import UNet, save_model
from texflow.nn.ops import mse_loss
from texflow.nn.optim import AdamState, adam_step
from texflow.nn.tensor import Array, Tape
from texflow.schemas import EpochRecord, NormalizationStats, TrainConfig, TrainReport
from texflow.utils.io import write_text
from texflow.utils.logger import logger

"""
Mini-batch training, loss evaluation and inference.
"""

LOSS_COLUMNS = ("epoch", "train_loss", "val_loss", "train_loss_u", "train_loss_v", "val_loss_u", "val_loss_v")
BEST_CHECKPOINT = "best.txfw"


@dataclass
class FieldChunk:
    """
    Denormalized prediction over one contiguous x-span of a snapshot.

    Attributes:
        run_id, t: Source snapshot.
        x0, x1 (int): Column span.
        indices (list[int]): Dataset indices of the patches, in x order.
        pred, true (NDArray): (2, H, x1 - x0) predicted and reference (u, v).
    """

    run_id: str
    t: int
    x0: int
    x1: int
    indices: list[int]
    pred: Array
    true: Array


def stack(samples: Sequence[Sample]) -> tuple[Array, Array]:
    """Batches samples into (N, C_in, H, W) inputs and (N, 2, H, W) targets."""
    return np.stack([s.input for s in samples]), np.stack([s.target for s in samples])


def evaluate_loss(model: UNet, samples: Sequence[Sample], batch_size: int = 32) -> tuple[float, float, float]:
    """
    Evaluation-mode MSE, jointly and per target channel.

    Returns:
        tuple[float, float, float]: (joint, u, v) losses; all NaN for an empty sample list.
    """
    if not samples:
        return float("nan"), float("nan"), float("nan")
    sums = np.zeros(model.cfg.out_channels)
    count = 0
    for start in range(0, len(samples), batch_size):
        inputs, targets = stack(samples[start : start + batch_size])
        pred = model.forward(Tape(enabled=False), inputs).data.astype(np.float64)
        sums += ((pred - targets) ** 2).sum(axis=(0, 2, 3))
        count += targets.shape[0] * targets.shape[2] * targets.shape[3]
    per_channel = sums / count
    return float(per_channel.mean()), float(per_channel[0]), float(per_channel[-1])


def _write_losses(path: Path, epochs: Sequence[EpochRecord]) -> None:
    buffer = io.StringIO()
    writer = csv.writer(buffer, lineterminator="\n")
    writer.writerow(LOSS_COLUMNS)
    for record in epochs:
        writer.writerow([getattr(record, column) for column in LOSS_COLUMNS])
    write_text(path, buffer.getvalue())


def train(model: UNet, dataset: Dataset, tcfg: TrainConfig, out_dir: str | Path | None = None) -> TrainReport:
    """
    Trains `model` with Adam on shuffled mini-batches of the training split.

    The train loss of an epoch is the mean of its batch losses, measured in training mode before each
    update; set `eval_train_loss` to re-measure it in evaluation mode after the epoch instead. The
    validation loss is always measured in evaluation mode. Without validation samples, selection
    falls back to an evaluation-mode train loss.

    The parameters of the epoch with the lowest validation loss are restored into `model` when training
    ends. With an output directory they are also kept as `best.txfw` (plus `epoch_XXXX.txfw` every
    `checkpoint_every` epochs), together with `losses.csv` and `train_report.json`.

    Args:
        model (UNet): Model to train.
        dataset (Dataset): Normalized dataset.
        tcfg (TrainConfig): Batch size, learning rate, epochs, shuffle seed and checkpoint cadence.
        out_dir (str | Path | None): Directory for checkpoints and reports.

    Returns:
        TrainReport: Per-epoch losses and the best epoch.

    Raises:
        ConfigurationError: If the training split is empty or the dataset does not fit the model.
        DivergenceError: If a batch loss is not finite; the error names the epoch-local batch index.
    """
    train_samples = dataset.split("train")
    val_samples = dataset.split("val")
    if not train_samples:
        raise ConfigurationError("Training needs a non-empty training split")
    if dataset.in_channels != model.cfg.in_channels:
        raise ConfigurationError(
            f"Dataset has {dataset.in_channels} input channels, model expects {model.cfg.in_channels}"
        )
    if not val_samples:
        logger.warning("Validation split is empty; best-epoch selection uses the train loss")
    root = Path(out_dir) if out_dir is not None else None
    rng = np.random.default_rng(tcfg.shuffle_seed)
    state = AdamState(lr=tcfg.learning_rate)
    report = TrainReport(model=model.cfg, train=tcfg)
    best_state: dict[str, Array] | None = None
    started = time.perf_counter()
    with logger.contextualize(stage="train", model=model.label):
        for epoch in range(1, tcfg.epochs + 1):
            order = rng.permutation(len(train_samples))
            sums = np.zeros(model.cfg.out_channels)
            count = 0
            for batch, start in enumerate(range(0, len(order), tcfg.batch_size)):
                inputs, targets = stack([train_samples[i] for i in order[start : start + tcfg.batch_size]])
                tape = Tape()
                pred = model.forward(tape, inputs, training=True)
                loss = mse_loss(tape, pred, targets.astype(model.dtype))
                if not np.isfinite(loss.data):
                    raise DivergenceError(f"Non-finite loss {loss.item()} in epoch {epoch}, batch {batch}", batch=batch)
                sums += ((pred.data.astype(np.float64) - targets) ** 2).sum(axis=(0, 2, 3))
                count += targets.shape[0] * targets.shape[2] * targets.shape[3]
                tape.backward(loss)
                adam_step(model.params, state)
            if tcfg.eval_train_loss or not val_samples:
                train_loss, train_u, train_v = evaluate_loss(model, train_samples, tcfg.batch_size)
            else:
                per_channel = sums / count
                train_loss, train_u, train_v = float(per_channel.mean()), float(per_channel[0]), float(per_channel[-1])
            if val_samples:
                val_loss, val_u, val_v = evaluate_loss(model, val_samples, tcfg.batch_size)
            else:
                val_loss, val_u, val_v = train_loss, train_u, train_v
            record = EpochRecord(
                epoch=epoch,
                train_loss=train_loss,
                val_loss=val_loss,
                train_loss_u=train_u,
                train_loss_v=train_v,
                val_loss_u=val_u,
                val_loss_v=val_v,
            )
            report.epochs.append(record)
            if not np.isfinite(val_loss):
                raise DivergenceError(f"Non-finite validation loss in epoch {epoch}")
            if val_loss < report.best_val_loss:
                report.best_epoch, report.best_val_loss = epoch, val_loss
                best_state = model.params.state()
                if root is not None:
                    path = save_model(model, root / BEST_CHECKPOINT, dataset.stats, epoch, val_loss)
                    report.best_checkpoint = str(path)
            if root is not None and epoch % tcfg.checkpoint_every == 0:
                save_model(model, root / f"epoch_{epoch:04d}.txfw", dataset.stats, epoch, val_loss)
            logger.info(
                f"Epoch {epoch}/{tcfg.epochs}: train {train_loss:.6g} "
                f"(u {train_u:.6g}, v {train_v:.6g}), val {val_loss:.6g}"
            )
    if best_state is not None:
        model.params.load_state(best_state)
    report.wall_clock_seconds = time.perf_counter() - started
    if root is not None:
        _write_losses(root / "losses.csv", report.epochs)
        write_text(root / "train_report.json", report.model_dump_json(indent=2))
    logger.info(f"Training finished: restored best epoch {report.best_epoch}, val loss {report.best_val_loss:.6g}")
    return report


def check_stats(expected: NormalizationStats | None, actual: NormalizationStats) -> None:
    """
    Raises:
        ConfigurationError: If a model's training statistics differ from the dataset's.
    """
    if expected is not None and expected != actual:
        raise ConfigurationError("The dataset was normalized with different statistics than the model was trained on")


def predict(model: UNet, samples: Sequence[Sample], batch_size: int = 32) -> Array:
    """Normalized (N, 2, H, W) predictions in evaluation mode."""
    if not samples:
        raise ConfigurationError("Nothing to predict")
    inputs, _ = stack(samples)
    return model.predict(inputs, batch_size)


def predict_field(
    model: UNet, samples: Sequence[Sample], stats: NormalizationStats, batch_size: int = 32
) -> tuple[Array, Array]:
    """
    Denormalized predictions and targets in lattice units.

    Returns:
        tuple[NDArray, NDArray]: Predicted and true (N, 2, H, W) fields.
    """
    pred = predict(model, samples, batch_size)
    _, targets = stack(samples)
    return denormalize(pred, stats, "target", axis=1), denormalize(targets, stats, "target", axis=1)


def predict_full_fields(
    model: UNet, dataset: Dataset, indices: Sequence[int], batch_size: int = 32
) -> list[FieldChunk]:
    """
    Reassembles per-range predictions into contiguous full-height fields.

    Samples are grouped by (run, t); each group is cut into runs of adjacent x-ranges.

    Args:
        model (UNet): Trained model.
        dataset (Dataset): Dataset holding the samples.
        indices (Sequence[int]): Sample indices to predict.
        batch_size (int): Inference batch size.

    Returns:
        list[FieldChunk]: One chunk per contiguous x-span, in (run, t, x0) order.
    """
    groups: dict[tuple[str, int], list[int]] = {}
    for index in indices:
        source = dataset.samples[index].source
        groups.setdefault((source.run_id, source.t), []).append(index)
    chunks = []
    for (run_id, t), members in groups.items():
        members.sort(key=lambda i: dataset.samples[i].source.x0)
        spans: list[list[int]] = []
        for i in members:
            if spans and dataset.samples[spans[-1][-1]].source.x1 == dataset.samples[i].source.x0:
                spans[-1].append(i)
            else:
                spans.append([i])
        for span in spans:
            samples = [dataset.samples[i] for i in span]
            ranges = [(s.source.x0, s.source.x1) for s in samples]
            pred, true = predict_field(model, samples, dataset.stats, batch_size)
            chunks.append(
                FieldChunk(
                    run_id=run_id,
                    t=t,
                    x0=ranges[0][0],
                    x1=ranges[-1][1],
                    indices=span,
                    pred=reassemble(list(pred), ranges),
                    true=reassemble(list(true), ranges),
                )
            )
    return sorted(chunks, key=lambda c: (c.run_id, c.t, c.x0))
