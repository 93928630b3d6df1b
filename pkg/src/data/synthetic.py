from __future__ import annotations

import logging
import os
from dataclasses import dataclass, field
from typing import Any, Dict, List, Tuple

import numpy as np

from src.core.errors import ConfigError, ValidationError
from src.core.types import ActionInstance

from .annotations import AnnotationSet, VideoAnnotation, save_annotations
from .feature_file import write_feature_file

log = logging.getLogger("data.synthetic")

COUPLINGS = ("visual_only", "audio_only", "both")


@dataclass(frozen=True)
class SyntheticClass:
    name: str
    modality_coupling: str

    def __post_init__(self) -> None:
        if self.modality_coupling not in COUPLINGS:
            raise ConfigError(
                f"Class {self.name}: modality_coupling must be one of {COUPLINGS}"
            )

    @property
    def imprints_visual(self) -> bool:
        return self.modality_coupling in ("visual_only", "both")

    @property
    def imprints_audio(self) -> bool:
        return self.modality_coupling in ("audio_only", "both")


DEFAULT_CLASSES: Tuple[SyntheticClass, ...] = (
    SyntheticClass("take", "visual_only"),
    SyntheticClass("open", "visual_only"),
    SyntheticClass("chop", "audio_only"),
    SyntheticClass("wash", "both"),
)


@dataclass(frozen=True)
class SyntheticSpec:
    num_videos: int = 40
    num_val_videos: int = 8
    duration_range: Tuple[float, float] = (50.0, 70.0)
    d_visual: int = 128
    d_audio: int = 128
    visual_stride: float = 0.5
    audio_stride: float = 0.96
    classes: Tuple[SyntheticClass, ...] = DEFAULT_CLASSES
    actions_per_video: Tuple[int, int] = (2, 5)
    action_length_range: Tuple[float, float] = (2.0, 10.0)
    noise_level: float = 0.5
    pattern_scale: float = 1.0
    seed: int = 0
    gate_diagnostics: bool = True

    def __post_init__(self) -> None:
        lo, hi = self.duration_range
        if not 0 < lo <= hi:
            raise ConfigError(f"Invalid duration_range {self.duration_range}")
        a_lo, a_hi = self.action_length_range
        if not 0 < a_lo <= a_hi <= lo:
            raise ConfigError(f"Invalid action_length_range {self.action_length_range}")
        if not self.classes:
            raise ConfigError("Synthetic spec needs at least one class")
        if self.gate_diagnostics:
            couplings = {c.modality_coupling for c in self.classes}
            if not {"audio_only", "visual_only"} <= couplings:
                raise ConfigError(
                    "gate diagnostics need at least one audio_only and one visual_only class"
                )

    @classmethod
    def from_dict(cls, raw: Dict[str, Any]) -> "SyntheticSpec":
        raw = dict(raw)
        if "classes" in raw:
            raw["classes"] = tuple(
                SyntheticClass(c["name"], c["modality_coupling"]) for c in raw["classes"]
            )
        for key in ("duration_range", "actions_per_video", "action_length_range"):
            if key in raw:
                raw[key] = tuple(raw[key])
        try:
            return cls(**raw)
        except TypeError as exc:
            raise ConfigError(f"Invalid synthetic spec: {exc}") from exc


@dataclass
class _Patterns:
    visual: List[np.ndarray] = field(default_factory=list)
    audio: List[np.ndarray] = field(default_factory=list)


def _class_patterns(spec: SyntheticSpec) -> _Patterns:
    patterns = _Patterns()
    for k in range(len(spec.classes)):
        patterns.visual.append(
            np.random.default_rng([spec.seed, k, 0]).standard_normal(spec.d_visual) * spec.pattern_scale
        )
        patterns.audio.append(
            np.random.default_rng([spec.seed, k, 1]).standard_normal(spec.d_audio) * spec.pattern_scale
        )
    return patterns


def _frames_inside(num_frames: int, stride: float, start: float, end: float) -> np.ndarray:
    centres = (np.arange(num_frames) + 0.5) * stride
    return (centres >= start) & (centres < end)


def _sample_video(
    spec: SyntheticSpec, patterns: _Patterns, rng: np.random.Generator
) -> Tuple[float, np.ndarray, np.ndarray, List[ActionInstance]]:
    duration = float(rng.uniform(*spec.duration_range))
    t_visual = int(duration // spec.visual_stride)
    t_audio = int(duration // spec.audio_stride)
    visual = rng.normal(0.0, spec.noise_level, size=(t_visual, spec.d_visual))
    audio = rng.normal(0.0, spec.noise_level, size=(t_audio, spec.d_audio))
    count = int(rng.integers(spec.actions_per_video[0], spec.actions_per_video[1] + 1))
    actions: List[ActionInstance] = []
    for _ in range(count):
        label = int(rng.integers(0, len(spec.classes)))
        length = float(rng.uniform(*spec.action_length_range))
        start = float(rng.uniform(0.0, duration - length))
        end = start + length
        if not end > start:
            raise ValidationError("Synthetic action has zero length")
        actions.append(ActionInstance(round(start, 4), round(end, 4), label))
        cls = spec.classes[label]
        if cls.imprints_visual:
            visual[_frames_inside(t_visual, spec.visual_stride, start, end)] += patterns.visual[label]
        if cls.imprints_audio:
            audio[_frames_inside(t_audio, spec.audio_stride, start, end)] += patterns.audio[label]
    actions.sort(key=lambda a: (a.start, a.end, a.label))
    return duration, visual.astype(np.float32), audio.astype(np.float32), actions


def generate_synthetic(spec: SyntheticSpec, root: str) -> Tuple[str, AnnotationSet]:
    """Write ``<root>/visual``, ``<root>/audio`` and ``<root>/annotations.json``."""
    patterns = _class_patterns(spec)
    seeds = np.random.SeedSequence(spec.seed).spawn(spec.num_videos + spec.num_val_videos)
    videos: List[VideoAnnotation] = []
    for i, seed in enumerate(seeds):
        subset = "training" if i < spec.num_videos else "validation"
        video_id = f"synth_{i:04d}"
        duration, visual, audio, actions = _sample_video(spec, patterns, np.random.default_rng(seed))
        write_feature_file(os.path.join(root, "visual", f"{video_id}.mrff"), visual, spec.visual_stride)
        write_feature_file(os.path.join(root, "audio", f"{video_id}.mrff"), audio, spec.audio_stride)
        videos.append(VideoAnnotation(video_id, round(duration, 4), actions, subset=subset))
    annotations = AnnotationSet(
        videos=videos,
        labels=[c.name for c in spec.classes],
        meta={"modality_coupling": {c.name: c.modality_coupling for c in spec.classes}},
    )
    save_annotations(os.path.join(root, "annotations.json"), annotations)
    log.info(
        "Generated %d training + %d validation videos in %s",
        spec.num_videos,
        spec.num_val_videos,
        root,
    )
    return root, annotations
