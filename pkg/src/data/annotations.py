from __future__ import annotations

import json
from dataclasses import dataclass, field
from typing import Any, Dict, List, Optional

from src.core.errors import DataError, ValidationError
from src.core.types import ActionInstance


@dataclass(frozen=True)
class VideoAnnotation:
    video_id: str
    duration: float
    actions: List[ActionInstance]
    subset: str = "training"


@dataclass(frozen=True)
class AnnotationSet:
    videos: List[VideoAnnotation]
    labels: List[str]
    meta: Dict[str, Any] = field(default_factory=dict)

    @property
    def num_classes(self) -> int:
        return len(self.labels)

    def by_id(self) -> Dict[str, VideoAnnotation]:
        return {v.video_id: v for v in self.videos}

    def subset(self, name: Optional[str]) -> List[VideoAnnotation]:
        if name is None:
            return list(self.videos)
        return [v for v in self.videos if v.subset == name]

    def to_dict(self) -> Dict[str, Any]:
        data: Dict[str, Any] = {
            "labels": list(self.labels),
            "videos": [
                {
                    "id": v.video_id,
                    "duration_s": v.duration,
                    "subset": v.subset,
                    "actions": [
                        {"start_s": a.start, "end_s": a.end, "label": self.labels[a.label]}
                        for a in v.actions
                    ],
                }
                for v in self.videos
            ],
        }
        if self.meta:
            data["meta"] = self.meta
        return data


def parse_annotations(raw: Dict[str, Any]) -> AnnotationSet:
    labels = raw.get("labels")
    if not isinstance(labels, list) or not labels:
        raise ValidationError("Annotations need a non-empty 'labels' list")
    index = {name: i for i, name in enumerate(labels)}
    videos: List[VideoAnnotation] = []
    for vi, video in enumerate(raw.get("videos", [])):
        vid = video.get("id")
        if not vid:
            raise ValidationError(f"videos[{vi}]: missing id")
        duration = float(video.get("duration_s", 0.0))
        if duration <= 0:
            raise ValidationError(f"{vid}: duration_s must be positive")
        actions: List[ActionInstance] = []
        for ai, act in enumerate(video.get("actions", [])):
            where = f"{vid}.actions[{ai}]"
            label = act.get("label")
            if label not in index:
                raise ValidationError(f"{where}: label {label!r} not in labels")
            start, end = float(act["start_s"]), float(act["end_s"])
            if not 0.0 <= start < end <= duration:
                raise ValidationError(
                    f"{where}: need 0 <= start < end <= duration, got "
                    f"start={start}, end={end}, duration={duration}"
                )
            actions.append(ActionInstance(start, end, index[label]))
        videos.append(
            VideoAnnotation(vid, duration, actions, subset=video.get("subset", "training"))
        )
    return AnnotationSet(videos=videos, labels=list(labels), meta=raw.get("meta") or {})


def load_annotations(path: str) -> AnnotationSet:
    try:
        with open(path, "r", encoding="utf-8") as f:
            raw = json.load(f)
    except FileNotFoundError as exc:
        raise DataError(f"Annotation file not found: {path}") from exc
    except json.JSONDecodeError as exc:
        raise DataError(f"{path}: invalid JSON ({exc})") from exc
    return parse_annotations(raw)


def save_annotations(path: str, annotations: AnnotationSet) -> None:
    with open(path, "w", encoding="utf-8") as f:
        json.dump(annotations.to_dict(), f, indent=2, sort_keys=True)
