from __future__ import annotations

import json
import logging
import os
from dataclasses import dataclass
from typing import Any, Dict, List, Mapping, Optional, Sequence, Tuple

import numpy as np

from src.autodiff.checkpoint import load_checkpoint
from src.autodiff.tensor import no_grad
from src.core.config import EvalConfig, RunConfig, apply_overrides, load_run_config
from src.core.errors import ContractError, DataError
from src.core.types import ActionInstance, Detection
from src.data.annotations import load_annotations
from src.data.dataset import Clip, load_dataset
from src.data.predictions import load_predictions
from src.evaluation.decode import decode_segments
from src.evaluation.metrics import EvalReport, evaluate
from src.evaluation.nms import soft_nms
from src.model.fusion import FusionNetwork, LevelOutput

log = logging.getLogger("evaluator")

REPORT_NAME = "eval_report.json"
ZERO_AUDIO_REPORT_NAME = "eval_report_zero_audio.json"
ABLATION_NAME = "audio_ablation.json"


@dataclass(frozen=True)
class ClipPrediction:
    video_id: str
    detections: List[Detection]
    outputs: List[LevelOutput]


def load_config(path: str, env_path: Optional[str] = None) -> RunConfig:
    return load_run_config(path, env_path)


def predict_clip(model: FusionNetwork, clip: Clip, cfg: EvalConfig, zero_audio: bool = False) -> ClipPrediction:
    """Forward, decode and Soft-NMS one clip; times are video-absolute."""
    if zero_audio:
        clip = clip.with_zero_audio()
    with no_grad():
        outputs = model(clip.visual, clip.audio, clip.visual_valid, clip.audio_valid)
    dets = decode_segments(
        outputs,
        clip.visual_stride,
        score_threshold=cfg.score_threshold,
        pre_nms_topk=cfg.pre_nms_topk,
        duration=clip.duration,
        grid_offset=cfg.grid_offset,
        video_id=clip.video_id,
        time_offset=clip.offset,
    )
    dets = soft_nms(dets, sigma=cfg.nms_sigma, min_score=cfg.nms_min_score, max_keep=cfg.max_keep)
    return ClipPrediction(clip.video_id, dets, outputs)


def ground_truth(clips: Sequence[Clip]) -> Dict[str, List[ActionInstance]]:
    return {c.video_id: [ActionInstance(a.start + c.offset, a.end + c.offset, a.label) for a in c.actions] for c in clips}


def evaluate_model(
    model: FusionNetwork,
    clips: Sequence[Clip],
    cfg: EvalConfig,
    labels: Optional[Sequence[str]] = None,
    zero_audio: bool = False,
) -> EvalReport:
    dets: List[Detection] = []
    for clip in clips:
        dets.extend(predict_clip(model, clip, cfg, zero_audio).detections)
    return evaluate(dets, ground_truth(clips), cfg.thresholds, labels)


def gate_stats(outputs: Sequence[LevelOutput]) -> List[Dict[str, float]]:
    stats = []
    for out in outputs:
        if out.gate is None:
            continue
        g = out.gate.data[: out.valid].astype(np.float64)
        stats.append({"level": out.level, "mean_g": float(g.mean()), "std_g": float(g.std())})
    return stats


def load_model(cfg: RunConfig, checkpoint: str) -> FusionNetwork:
    model = FusionNetwork(cfg.model, seed=cfg.train.seed)
    load_checkpoint(checkpoint, model, cfg.model.to_dict())
    log.info("Loaded %s (%s, %d parameters)", checkpoint, cfg.model.fusion_mode, model.num_parameters())
    return model


def write_report(report: EvalReport, output_dir: str, name: str = REPORT_NAME) -> str:
    os.makedirs(output_dir, exist_ok=True)
    path = os.path.join(output_dir, name)
    with open(path, "w", encoding="utf-8") as f:
        json.dump(report.to_dict(), f, indent=2, sort_keys=True)
    return path


def run(
    config_path: str,
    env_path: Optional[str] = None,
    *,
    checkpoint: Optional[str] = None,
    split: Optional[str] = "validation",
    predictions_file: Optional[str] = None,
    zero_audio: bool = False,
    thresholds: Optional[Tuple[float, ...]] = None,
    output_dir: Optional[str] = None,
    fusion_mode: Optional[str] = None,
    residual: Optional[bool] = None,
    seed: Optional[int] = None,
) -> Tuple[EvalReport, str]:
    cfg = apply_overrides(
        load_config(config_path, env_path),
        seed=seed,
        fusion_mode=fusion_mode,
        residual=residual,
        thresholds=thresholds,
        output_dir=output_dir,
    )
    cfg.validate_paths()
    annotations = load_annotations(cfg.paths.annotations)
    videos = annotations.subset(split)
    if not videos:
        raise DataError(f"No videos in split {split!r} of {cfg.paths.annotations}")
    if predictions_file is not None:
        dets = load_predictions(predictions_file, annotations.labels)
        gt = {v.video_id: list(v.actions) for v in videos}
        # detections for known videos outside the split are skipped; unknown ids still fail
        known = annotations.by_id()
        dets = [d for d in dets if d.video_id in gt or d.video_id not in known]
        report = evaluate(dets, gt, cfg.eval.thresholds, annotations.labels)
    else:
        if checkpoint is None:
            checkpoint = os.path.join(cfg.paths.output_dir, "best.mrck")
        model = load_model(cfg, checkpoint)
        clips = load_dataset(annotations, cfg.paths.features_root, subset=split)
        report = evaluate_model(model, clips, cfg.eval, annotations.labels, zero_audio=zero_audio)
    name = ZERO_AUDIO_REPORT_NAME if zero_audio else REPORT_NAME
    path = write_report(report, cfg.paths.output_dir, name)
    if zero_audio and os.path.exists(os.path.join(cfg.paths.output_dir, REPORT_NAME)):
        compare_ablation(cfg.paths.output_dir)
    log.info("Average mAP %.4f over %d videos (split=%s); report at %s", report.average_mAP, len(videos), split or "all", path)
    return report, path


def ablation_drop(full: Mapping[str, Any], zero: Mapping[str, Any], threshold: float = 0.5) -> Dict[str, Optional[float]]:
    """Relative per-class AP loss when audio is zeroed: (AP_full - AP_zero) / AP_full.

    Both arguments are ``EvalReport.to_dict()`` payloads. Classes with zero AP
    in the full report map to None.
    """
    key = f"{threshold:g}"
    try:
        full_ap, zero_ap = full["per_class_ap"][key], zero["per_class_ap"][key]
    except KeyError:
        raise ContractError(f"Both reports need per-class AP at tIoU {key}") from None
    if set(full_ap) != set(zero_ap):
        raise ContractError("Reports cover different classes")
    drops: Dict[str, Optional[float]] = {}
    for label, ap in full_ap.items():
        drops[label] = None if ap <= 0 else (ap - zero_ap[label]) / ap
    return drops


def compare_ablation(output_dir: str, threshold: float = 0.5) -> Optional[str]:
    """Read both reports under ``output_dir``, log the per-class drop and write it next to them."""
    reports = []
    for name in (REPORT_NAME, ZERO_AUDIO_REPORT_NAME):
        with open(os.path.join(output_dir, name), encoding="utf-8") as f:
            reports.append(json.load(f))
    key = f"{threshold:g}"
    if any(key not in r.get("per_class_ap", {}) for r in reports):
        log.warning("Skipping audio ablation: tIoU %s not in both reports", key)
        return None
    drops = ablation_drop(reports[0], reports[1], threshold)
    for label, drop in drops.items():
        if drop is None:
            log.info("AP@%s drop without audio, %s: n/a (zero AP with audio)", key, label)
        else:
            log.info("AP@%s drop without audio, %s: %.1f%%", key, label, 100.0 * drop)
    path = os.path.join(output_dir, ABLATION_NAME)
    with open(path, "w", encoding="utf-8") as f:
        json.dump({"threshold": threshold, "relative_drop": drops}, f, indent=2, sort_keys=True)
    return path
