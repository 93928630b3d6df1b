from __future__ import annotations

from dataclasses import asdict, dataclass
from typing import Any, Dict

from .errors import ValidationError


@dataclass(frozen=True)
class ActionInstance:
    start: float
    end: float
    label: int

    def __post_init__(self) -> None:
        if not self.start < self.end:
            raise ValidationError(
                f"Action start must precede end: start={self.start}, end={self.end}"
            )
        if self.label < 0:
            raise ValidationError(f"Action label must be non-negative, got {self.label}")

    @property
    def length(self) -> float:
        return self.end - self.start


@dataclass(frozen=True)
class Detection:
    start: float
    end: float
    label: int
    score: float
    video_id: str = ""

    def __post_init__(self) -> None:
        if not self.start < self.end:
            raise ValidationError(
                f"Detection start must precede end: start={self.start}, end={self.end}"
            )
        if not self.score > 0.0:
            raise ValidationError(f"Detection score must be positive, got {self.score}")

    def with_score(self, score: float) -> "Detection":
        return Detection(self.start, self.end, self.label, score, self.video_id)

    def sort_key(self) -> tuple:
        # score descending, then (start, end, label) for reproducible ordering
        return (-self.score, self.start, self.end, self.label, self.video_id)

    def to_dict(self) -> Dict[str, Any]:
        data = asdict(self)
        return {
            "video_id": data["video_id"],
            "t_start": data["start"],
            "t_end": data["end"],
            "label": data["label"],
            "score": data["score"],
        }


def segment_iou(a_start: float, a_end: float, b_start: float, b_end: float) -> float:
    inter = max(0.0, min(a_end, b_end) - max(a_start, b_start))
    union = (a_end - a_start) + (b_end - b_start) - inter
    if union <= 0.0:
        return 0.0
    return inter / union
