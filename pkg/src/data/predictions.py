from __future__ import annotations

import json
import os
from typing import Any, Dict, List, Optional, Sequence

from src.core.errors import DataError, ValidationError
from src.core.types import Detection

FIELDS = ("video_id", "t_start", "t_end", "label", "score")


def parse_predictions(raw: Any, labels: Optional[Sequence[str]] = None) -> List[Detection]:
    """Accept a bare array of detection records or ``{"detections": [...]}``.

    Labels may be class indices or, when ``labels`` is given, class names.
    """
    if isinstance(raw, dict):
        raw = raw.get("detections")
    if not isinstance(raw, list):
        raise ValidationError("Predictions must be a JSON array of detections")
    index = {name: i for i, name in enumerate(labels or [])}
    dets: List[Detection] = []
    for i, rec in enumerate(raw):
        missing = [f for f in FIELDS if f not in rec]
        if missing:
            raise ValidationError(f"predictions[{i}]: missing {', '.join(missing)}")
        label = rec["label"]
        if isinstance(label, str):
            if label not in index:
                raise ValidationError(f"predictions[{i}]: unknown label {label!r}")
            label = index[label]
        dets.append(
            Detection(
                float(rec["t_start"]),
                float(rec["t_end"]),
                int(label),
                float(rec["score"]),
                str(rec["video_id"]),
            )
        )
    return dets


def load_predictions(path: str, labels: Optional[Sequence[str]] = None) -> List[Detection]:
    try:
        with open(path, "r", encoding="utf-8") as f:
            raw = json.load(f)
    except FileNotFoundError as exc:
        raise DataError(f"Predictions file not found: {path}") from exc
    except json.JSONDecodeError as exc:
        raise DataError(f"{path}: invalid JSON ({exc})") from exc
    return parse_predictions(raw, labels)


def save_predictions(path: str, dets: Sequence[Detection], extra: Optional[Dict[str, Any]] = None) -> None:
    """Write ``{"detections": [...], **extra}``, or a bare array when ``extra`` is empty."""
    records = [d.to_dict() for d in dets]
    payload: Any = {"detections": records, **extra} if extra else records
    os.makedirs(os.path.dirname(os.path.abspath(path)), exist_ok=True)
    with open(path, "w", encoding="utf-8") as f:
        json.dump(payload, f, indent=2, sort_keys=True)
