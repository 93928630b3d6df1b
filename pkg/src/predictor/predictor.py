from __future__ import annotations

import logging
import os
from typing import Any, Dict, Optional

from src.core.config import RunConfig, apply_overrides, load_run_config
from src.core.errors import DataError
from src.data.annotations import AnnotationSet, load_annotations
from src.data.dataset import load_dataset
from src.data.predictions import save_predictions
from src.evaluator.evaluator import gate_stats, load_model, predict_clip

log = logging.getLogger("predictor")


def load_config(path: str, env_path: Optional[str] = None) -> RunConfig:
    return load_run_config(path, env_path)


def run(
    config_path: str,
    video_id: str,
    env_path: Optional[str] = None,
    *,
    checkpoint: Optional[str] = None,
    output_path: Optional[str] = None,
    zero_audio: bool = False,
    fusion_mode: Optional[str] = None,
    residual: Optional[bool] = None,
    seed: Optional[int] = None,
) -> Dict[str, Any]:
    """Detections for one video, best first, plus per-level gate statistics."""
    cfg = apply_overrides(
        load_config(config_path, env_path), seed=seed, fusion_mode=fusion_mode, residual=residual
    )
    cfg.validate_paths()
    annotations = load_annotations(cfg.paths.annotations)
    video = annotations.by_id().get(video_id)
    if video is None:
        raise DataError(f"Unknown video id: {video_id}")
    single = AnnotationSet(videos=[video], labels=annotations.labels, meta=annotations.meta)
    (clip,) = load_dataset(single, cfg.paths.features_root)
    model = load_model(cfg, checkpoint or os.path.join(cfg.paths.output_dir, "best.mrck"))
    prediction = predict_clip(model, clip, cfg.eval, zero_audio=zero_audio)
    stats = gate_stats(prediction.outputs)
    for s in stats:
        log.info("level %d gate mean %.4f std %.4f", s["level"], s["mean_g"], s["std_g"])
    path = output_path or os.path.join(cfg.paths.output_dir, f"predictions_{video_id}.json")
    save_predictions(path, prediction.detections, extra={"video_id": video_id, "gate_stats": stats})
    log.info("Wrote %d detections for %s to %s", len(prediction.detections), video_id, path)
    return {
        "video_id": video_id,
        "detections": [d.to_dict() for d in prediction.detections],
        "gate_stats": stats,
        "path": path,
    }
