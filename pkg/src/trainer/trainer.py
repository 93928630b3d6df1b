from __future__ import annotations

import json
import logging
import os
from dataclasses import dataclass, field
from typing import Any, Dict, List, Optional, Sequence

import numpy as np

from src.autodiff import ops
from src.autodiff.checkpoint import save_checkpoint
from src.autodiff.optim import AdamW
from src.autodiff.tensor import backward
from src.core.config import RunConfig, apply_overrides, load_run_config
from src.core.errors import ConfigError, DataError, NumericError
from src.core.logging_utils import JsonLineWriter
from src.data.annotations import load_annotations
from src.data.dataset import Clip, load_dataset, prepare_training_clip
from src.evaluator.evaluator import evaluate_model
from src.loss.losses import total_loss
from src.loss.targets import assign_level_targets
from src.model.fusion import FusionNetwork

log = logging.getLogger("trainer")

LOG_NAME = "train_log.jsonl"
NAN_DUMP_NAME = "nan_dump.json"


@dataclass
class TrainResult:
    output_dir: str
    history: List[Dict[str, Any]] = field(default_factory=list)
    best_map: float = -1.0
    best_epoch: int = 0


def load_config(path: str, env_path: Optional[str] = None) -> RunConfig:
    return load_run_config(path, env_path)


def clip_loss(model: FusionNetwork, clip: Clip, cfg: RunConfig):
    outputs = model(clip.visual, clip.audio, clip.visual_valid, clip.audio_valid)
    targets = assign_level_targets(
        clip.actions,
        [o.length for o in outputs],
        clip.visual_stride,
        cfg.model.regression_ranges,
        grid_offset=cfg.eval.grid_offset,
        level_valid=[o.valid for o in outputs],
    )
    return total_loss(outputs, targets)


def _dump_nan(output_dir: str, epoch: int, video_ids: Sequence[str], exc: Exception) -> str:
    path = os.path.join(output_dir, NAN_DUMP_NAME)
    with open(path, "w", encoding="utf-8") as f:
        json.dump({"epoch": epoch, "video_ids": list(video_ids), "error": str(exc)}, f, indent=2, sort_keys=True)
    return path


def train_epoch(
    model: FusionNetwork,
    optimizer: AdamW,
    clips: Sequence[Clip],
    cfg: RunConfig,
    rng: np.random.Generator,
    epoch: int,
) -> Dict[str, Any]:
    tc = cfg.train
    order = rng.permutation(len(clips))
    totals = {"loss": 0.0, "loss_cls": 0.0, "loss_reg": 0.0, "n_pos": 0}
    for first in range(0, len(order), tc.batch_size):
        batch = [clips[i] for i in order[first : first + tc.batch_size]]
        optimizer.zero_grad()
        try:
            for clip in batch:
                prepared = prepare_training_clip(clip, tc.max_clip_len, tc.pad_clips, rng)
                result = clip_loss(model, prepared, cfg)
                backward(ops.scale(result.total, 1.0 / len(batch)))
                record = result.record()
                for key in ("loss", "loss_cls", "loss_reg"):
                    totals[key] += record[key]
                totals["n_pos"] += record["n_pos"]
            optimizer.clip_grad_norm(tc.clip_grad_norm)
            optimizer.step()
        except NumericError as exc:
            ids = [c.video_id for c in batch]
            path = _dump_nan(cfg.paths.output_dir, epoch, ids, exc)
            raise NumericError(f"Non-finite value in epoch {epoch}, batch {ids}: {exc} (dump: {path})") from exc
    n = max(1, len(clips))
    return {
        "epoch": epoch,
        "loss": totals["loss"] / n,
        "loss_cls": totals["loss_cls"] / n,
        "loss_reg": totals["loss_reg"] / n,
        "n_pos": totals["n_pos"],
    }


def train(
    cfg: RunConfig,
    clips: Sequence[Clip],
    val_clips: Sequence[Clip],
    labels: Optional[Sequence[str]] = None,
) -> TrainResult:
    """Seeded AdamW loop with per-clip gradient accumulation over each batch.

    Writes ``train_log.jsonl``, ``last.mrck`` every epoch, ``best.mrck`` on
    validation improvement and ``epoch_XXXX.mrck`` every ``keep_every`` epochs.
    """
    if not clips:
        raise DataError("No training clips")
    out_dir = cfg.paths.output_dir
    os.makedirs(out_dir, exist_ok=True)
    tc = cfg.train
    rng = np.random.default_rng(tc.seed)
    model = FusionNetwork(cfg.model, seed=tc.seed)
    optimizer = AdamW(model.parameters(), lr=tc.lr, weight_decay=tc.weight_decay)
    config_dict = cfg.model.to_dict()
    result = TrainResult(output_dir=out_dir)
    log.info(
        "Training %s model (%d parameters) on %d clips for %d epochs",
        cfg.model.fusion_mode,
        model.num_parameters(),
        len(clips),
        tc.epochs,
    )
    with JsonLineWriter(os.path.join(out_dir, LOG_NAME), log) as writer:
        for epoch in range(1, tc.epochs + 1):
            record = train_epoch(model, optimizer, clips, cfg, rng, epoch)
            save_checkpoint(os.path.join(out_dir, "last.mrck"), model, config_dict)
            if tc.keep_every and epoch % tc.keep_every == 0:
                save_checkpoint(os.path.join(out_dir, f"epoch_{epoch:04d}.mrck"), model, config_dict)
            if epoch % tc.val_every == 0 or epoch == tc.epochs:
                report = evaluate_model(model, val_clips or clips, cfg.eval, labels)
                record["val_mAP"] = report.average_mAP
                if report.average_mAP > result.best_map:
                    result.best_map = report.average_mAP
                    result.best_epoch = epoch
                    save_checkpoint(os.path.join(out_dir, "best.mrck"), model, config_dict)
            writer.write(record)
            result.history.append(record)
    log.info("Best validation mAP %.4f at epoch %d", result.best_map, result.best_epoch)
    return result


def run(
    config_path: str,
    env_path: Optional[str] = None,
    *,
    seed: Optional[int] = None,
    epochs: Optional[int] = None,
    fusion_mode: Optional[str] = None,
    residual: Optional[bool] = None,
    output_dir: Optional[str] = None,
) -> TrainResult:
    cfg = apply_overrides(
        load_config(config_path, env_path),
        seed=seed,
        epochs=epochs,
        fusion_mode=fusion_mode,
        residual=residual,
        output_dir=output_dir,
    )
    cfg.validate_paths()
    annotations = load_annotations(cfg.paths.annotations)
    if annotations.num_classes != cfg.model.num_classes:
        raise ConfigError(
            f"{cfg.paths.annotations} has {annotations.num_classes} labels, model expects {cfg.model.num_classes}"
        )
    clips = load_dataset(annotations, cfg.paths.features_root, subset="training")
    val_clips = load_dataset(annotations, cfg.paths.features_root, subset="validation")
    if not val_clips:
        log.warning("No validation videos; selecting the best checkpoint on the training split")
    return train(cfg, clips, val_clips, annotations.labels)
