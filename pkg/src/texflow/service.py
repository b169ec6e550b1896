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
import hashlib
import io
import json
from collections.abc import Sequence
from pathlib import Path
from typing import Any

import numpy as np
from pydantic import BaseModel

from texflow import __version__
from texflow.config import RunConfig
from texflow.dataset import (
    Dataset,
    Split,
    build_dataset,
    default_ranges,
    denormalize,
    normalize,
    raw_channels,
    read_dataset,
    reassemble,
    segment,
    write_dataset,
)
from texflow.exceptions import ConfigurationError, TexflowError
from texflow.lbm.simulator import poiseuille_validation, run
from texflow.lbm.snapshots import MANIFEST_NAME, FlowSnapshot, read_snapshot, write_fields
from texflow.metrics import COMPARISON_COLUMNS, compare_models, compute_report, error_map
from texflow.models.training import check_stats, predict_field, predict_full_fields, stack, train
from texflow.models.training import predict as predict_normalized
from texflow.models.unet import UNet, build_model, load_model
from texflow.render import render_file
from texflow.schemas import MetricsReport, NormalizationStats, RunManifest, TrainReport
from texflow.utils.io import read_bytes, write_text
from texflow.utils.logger import logger

"""
Pipeline stages behind the command-line interface.
Each stage reads artifacts from disk, runs one module, and writes a self-describing output directory.
"""

POISEUILLE_TAUS = (0.6, 0.8, 1.0)
POISEUILLE_TOLERANCE = 0.02
DATASET_FILES = ("manifest.json", "stats.json", "samples.bin")


class PoiseuilleCheck(BaseModel):
    tau: float
    relative_l2: float
    passed: bool


def _csv(rows: Sequence[Sequence[Any]], header: Sequence[str]) -> str:
    buffer = io.StringIO()
    writer = csv.writer(buffer, lineterminator="\n")
    writer.writerow(header)
    writer.writerows(rows)
    return buffer.getvalue()


class Pipeline:
    """
    Runs the pipeline stages for one resolved run configuration.

    Used as a context manager so every log record of a command carries the preset and seed.
    """

    def __init__(self, config: RunConfig) -> None:
        """
        Initialize the Pipeline.

        Args:
            config (RunConfig): The fully resolved configuration.
        """
        self.config = config
        self._context = logger.contextualize(preset=config.preset, seed=config.seed)

    def __enter__(self) -> "Pipeline":
        self._context.__enter__()
        return self

    def __exit__(self, exc_type: Any, exc_val: Any, exc_tb: Any) -> None:
        self._context.__exit__(exc_type, exc_val, exc_tb)

    def echo_config(self, out_dir: str | Path) -> Path:
        """Writes the resolved configuration as `config.json`."""
        return write_text(Path(out_dir) / "config.json", self.config.model_dump_json(indent=2))

    def record_inputs(self, out_dir: str | Path, inputs: Sequence[str | Path]) -> Path:
        """
        Writes `inputs.json`: the package version and the SHA-256 of every input artifact.

        Together with `config.json` this pins down what produced the directory.
        """
        digests = {str(path): hashlib.sha256(read_bytes(path)).hexdigest() for path in inputs}
        payload = {"texflow_version": __version__, "inputs": digests}
        return write_text(Path(out_dir) / "inputs.json", json.dumps(payload, indent=2) + "\n")

    def simulate(self, out_dir: str | Path, validate: bool = False) -> RunManifest:
        """
        Runs the configured simulation into `out_dir`, optionally preceded by the Poiseuille check.

        Raises:
            TexflowError: If the Poiseuille check exceeds 2% relative L2 error for any tau.
            DivergenceError: If the run diverges (the manifest is still written).
        """
        root = Path(out_dir)
        self.echo_config(root)
        if validate:
            self.validate_poiseuille(root)
        with logger.contextualize(stage="simulate", run_id=root.name):
            return run(self.config.simulation, root)

    def validate_poiseuille(self, out_dir: str | Path) -> list[PoiseuilleCheck]:
        checks = []
        with logger.contextualize(stage="validate"):
            for tau in POISEUILLE_TAUS:
                error = poiseuille_validation(tau)
                checks.append(PoiseuilleCheck(tau=tau, relative_l2=error, passed=error < POISEUILLE_TOLERANCE))
        payload = "[\n" + ",\n".join(c.model_dump_json() for c in checks) + "\n]\n"
        write_text(Path(out_dir) / "poiseuille.json", payload)
        failed = [c for c in checks if not c.passed]
        if failed:
            raise TexflowError(f"Poiseuille validation failed: {[(c.tau, round(c.relative_l2, 5)) for c in failed]}")
        return checks

    def build_dataset(self, run_dirs: Sequence[str | Path], out_dir: str | Path) -> Dataset:
        root = Path(out_dir)
        with logger.contextualize(stage="dataset"):
            dataset = build_dataset(run_dirs, self.config.dataset, self.config.seed)
            write_dataset(root, dataset)
        self.echo_config(root)
        manifests = [Path(d) if Path(d).is_file() else Path(d) / MANIFEST_NAME for d in run_dirs]
        self.record_inputs(root, manifests)
        return dataset

    def train(self, dataset_dir: str | Path, out_dir: str | Path, attention: bool | None = None) -> TrainReport:
        """
        Trains a U-Net on a dataset directory.

        Args:
            dataset_dir (str | Path): Output of `build_dataset`.
            out_dir (str | Path): Directory for checkpoints, `losses.csv` and `train_report.json`.
            attention (bool | None): Overrides `unet.attention` when given.

        Returns:
            TrainReport: The training history.
        """
        dataset = read_dataset(dataset_dir)
        updates: dict[str, Any] = {"in_channels": dataset.in_channels}
        if attention is not None:
            updates["attention"] = attention
        cfg = self.config.unet.model_copy(update=updates)
        root = Path(out_dir)
        self.echo_config(root)
        model = build_model(cfg)
        self.record_inputs(root, [Path(dataset_dir) / name for name in DATASET_FILES])
        return train(model, dataset, self.config.train, root)

    def predict(
        self, checkpoint: str | Path, source: str | Path, out_dir: str | Path, split: Split = "test"
    ) -> list[Path]:
        """
        Predicts velocity fields and writes them as field files.

        A dataset directory yields one file per (run, t) of the chosen split with predicted, true and
        absolute-error planes; a snapshot file yields a full-width prediction next to the simulated fields.

        Returns:
            list[Path]: Written field files.
        """
        model, meta = load_model(checkpoint)
        if meta.stats is None:
            raise ConfigurationError(f"Checkpoint {checkpoint} carries no normalization statistics")
        root = Path(out_dir)
        source_path = Path(source)
        with logger.contextualize(stage="predict", model=model.label):
            if source_path.is_dir():
                return self._predict_dataset(model, meta.stats, read_dataset(source_path), root, split)
            return [self._predict_snapshot(model, meta.stats, read_snapshot(source_path), root)]

    def _predict_dataset(
        self, model: UNet, stats: NormalizationStats, dataset: Dataset, root: Path, split: Split
    ) -> list[Path]:
        check_stats(stats, dataset.stats)
        indices = dataset.indices(split)
        if not indices:
            raise ConfigurationError(f"The {split} split is empty")
        written = []
        for chunk in predict_full_fields(model, dataset, indices):
            pred, true = chunk.pred, chunk.true
            mask = None
            if dataset.masks:
                mask = np.concatenate([dataset.masks[i] for i in chunk.indices], axis=1)
            planes = {"U": pred[0], "V": pred[1], "U_true": true[0], "V_true": true[1]}
            planes["U_error"] = error_map(true[0], pred[0], mask)
            planes["V_error"] = error_map(true[1], pred[1], mask)
            if mask is not None:
                planes["mask"] = mask.astype(np.float32)
            name = f"pred_{chunk.run_id}_{chunk.t:07d}_x{chunk.x0:05d}.txfs"
            written.append(write_fields(root / name, chunk.t, planes))
        logger.info(f"Wrote {len(written)} predicted field file(s) to {root}")
        return written

    def _predict_snapshot(self, model: UNet, stats: NormalizationStats, snap: FlowSnapshot, root: Path) -> Path:
        width = snap.shape[1]
        policy = self.config.dataset
        ranges = policy.ranges or default_ranges(width, policy.window, policy.n_windows)
        include_mask = model.cfg.in_channels == 5
        patches = segment(snap, ranges, policy.allow_overlap)
        inputs = np.stack([normalize(raw_channels(p, include_mask)[0], stats, "input") for p in patches])
        pred = denormalize(model.predict(inputs), stats, "target", axis=1)
        ordered = sorted(range(len(patches)), key=lambda i: patches[i].x0)
        full = reassemble([pred[i] for i in ordered], [(patches[i].x0, patches[i].x1) for i in ordered])
        x0, x1 = patches[ordered[0]].x0, patches[ordered[-1]].x1
        mask = snap.mask[:, x0:x1]
        planes = {
            "U": full[0],
            "V": full[1],
            "U_true": snap.U[:, x0:x1],
            "V_true": snap.V[:, x0:x1],
            "U_error": error_map(snap.U[:, x0:x1], full[0], mask),
            "V_error": error_map(snap.V[:, x0:x1], full[1], mask),
            "mask": mask.astype(np.float32),
        }
        path = write_fields(root / f"pred_{snap.t:07d}.txfs", snap.t, planes)
        logger.info(f"Wrote prediction for t={snap.t} to {path}")
        return path

    def evaluate(
        self,
        checkpoints: Sequence[str | Path],
        dataset_dir: str | Path,
        out_dir: str | Path,
        split: Split = "test",
        normalized: bool = False,
    ) -> list[MetricsReport]:
        """
        Scores checkpoints on a dataset split, excluding solid nodes.

        Writes `metrics.json` (one report per checkpoint), `metrics.csv` and `comparison.csv`
        (model, MAE, MSE, RMSE, R2 on pooled velocity).

        Args:
            normalized (bool): Score in the dataset's normalized target units instead of lattice units.

        Returns:
            list[MetricsReport]: One report per checkpoint, in argument order.
        """
        dataset = read_dataset(dataset_dir)
        indices = dataset.indices(split)
        if not indices:
            raise ConfigurationError(f"The {split} split is empty")
        samples = [dataset.samples[i] for i in indices]
        masks = np.stack([dataset.masks[i] for i in indices]) if dataset.masks else None
        reports = []
        with logger.contextualize(stage="evaluate"):
            for checkpoint in checkpoints:
                model, meta = load_model(checkpoint)
                check_stats(meta.stats, dataset.stats)
                if normalized:
                    pred, true = predict_normalized(model, samples), stack(samples)[1]
                else:
                    pred, true = predict_field(model, samples, dataset.stats)
                report = compute_report(model.label, true, pred, masks, denormalized=not normalized)
                logger.info(
                    f"{model.label} ({checkpoint}): R2 u={report.channels['u'].r2:.4f} "
                    f"v={report.channels['v'].r2:.4f}, error {report.relative_error_percent:.2f}%"
                )
                reports.append(report)
        root = Path(out_dir)
        payload = "[\n" + ",\n".join(r.model_dump_json(indent=2) for r in reports) + "\n]\n"
        write_text(root / "metrics.json", payload)
        rows = []
        for label_row, report in zip(compare_models(reports), reports, strict=True):
            for channel, m in report.channels.items():
                rows.append([label_row[0], channel, m.mae, m.mse, m.rmse, m.r2, m.relative_l2])
        write_text(root / "metrics.csv", _csv(rows, ["model", "channel", "mae", "mse", "rmse", "r2", "relative_l2"]))
        write_text(root / "comparison.csv", _csv(compare_models(reports), COMPARISON_COLUMNS))
        return reports

    def render(self, files: Sequence[str | Path], out_dir: str | Path) -> list[Path]:
        written: list[Path] = []
        with logger.contextualize(stage="render"):
            for path in files:
                written.extend(
                    render_file(path, out_dir, self.config.render.x_over_l, self.config.render.scale)
                )
        return written
