from __future__ import annotations

import logging
import math
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, replace
from typing import List, Optional

import numpy as np

from src.core.config import worker_threads
from src.core.errors import DataError
from src.core.types import ActionInstance

from .annotations import AnnotationSet, VideoAnnotation
from .feature_file import read_feature_file

log = logging.getLogger("data.dataset")


@dataclass(frozen=True)
class Clip:
    """One training/eval unit: channel-major features plus clip-relative actions.

    ``visual_valid`` / ``audio_valid`` count the leading real positions; any
    tail beyond them is padding.
    """

    video_id: str
    visual: np.ndarray  # [D_v, T]
    audio: np.ndarray  # [D_a, A]
    actions: List[ActionInstance]
    visual_stride: float
    audio_stride: float
    duration: float
    visual_valid: int
    audio_valid: int
    offset: float = 0.0

    @property
    def length(self) -> int:
        return int(self.visual.shape[1])

    def visual_mask(self) -> np.ndarray:
        return np.arange(self.visual.shape[1]) < self.visual_valid

    def with_zero_audio(self) -> "Clip":
        return replace(self, audio=np.zeros_like(self.audio))


def feature_paths(features_root: str, video_id: str) -> tuple[str, str]:
    return (
        os.path.join(features_root, "visual", f"{video_id}.mrff"),
        os.path.join(features_root, "audio", f"{video_id}.mrff"),
    )


def _load_video(features_root: str, video: VideoAnnotation) -> Clip:
    visual_path, audio_path = feature_paths(features_root, video.video_id)
    visual, v_stride = read_feature_file(visual_path)
    audio, a_stride = read_feature_file(audio_path)
    if visual.shape[1] == 0 or audio.shape[1] == 0:
        raise DataError(f"{video.video_id}: empty sequence")
    return Clip(
        video_id=video.video_id,
        visual=visual,
        audio=audio,
        actions=list(video.actions),
        visual_stride=v_stride,
        audio_stride=a_stride,
        duration=video.duration,
        visual_valid=visual.shape[1],
        audio_valid=audio.shape[1],
    )


def load_dataset(
    annotations: AnnotationSet,
    features_root: str,
    subset: Optional[str] = None,
) -> List[Clip]:
    videos = annotations.subset(subset)
    missing = [
        v.video_id
        for v in videos
        if not all(os.path.exists(p) for p in feature_paths(features_root, v.video_id))
    ]
    if missing:
        raise DataError(f"Missing feature files for videos: {', '.join(missing)}")
    with ThreadPoolExecutor(max_workers=worker_threads()) as pool:
        clips = list(pool.map(lambda v: _load_video(features_root, v), videos))
    log.info("Loaded %d videos (subset=%s) from %s", len(clips), subset or "all", features_root)
    return clips


def crop_clip(clip: Clip, max_len: int, start: int) -> Clip:
    """Keep visual positions [start, start + max_len) and the audio covering them.

    Actions are shifted to the crop, clipped to its bounds, and dropped when
    nothing of them remains.
    """
    if clip.visual_valid <= max_len:
        return clip
    start = int(min(max(start, 0), clip.visual_valid - max_len))
    t0 = start * clip.visual_stride
    t1 = (start + max_len) * clip.visual_stride
    a_centres = (np.arange(clip.audio_valid) + 0.5) * clip.audio_stride
    a_keep = np.nonzero((a_centres >= t0) & (a_centres < t1))[0]
    if a_keep.size == 0:
        nearest = int(np.clip(np.floor(t0 / clip.audio_stride), 0, clip.audio_valid - 1))
        a_keep = np.array([nearest])
    a_lo, a_hi = int(a_keep[0]), int(a_keep[-1]) + 1
    actions = []
    for act in clip.actions:
        s, e = max(act.start, t0), min(act.end, t1)
        if e > s:
            actions.append(ActionInstance(s - t0, e - t0, act.label))
    return replace(
        clip,
        visual=clip.visual[:, start : start + max_len],
        audio=clip.audio[:, a_lo:a_hi],
        actions=actions,
        duration=t1 - t0,
        visual_valid=max_len,
        audio_valid=a_hi - a_lo,
        offset=clip.offset + t0,
    )


def pad_clip(clip: Clip, length: int) -> Clip:
    """Zero-pad the visual tail to ``length`` and the audio tail proportionally."""
    t = clip.visual.shape[1]
    if t >= length:
        return clip
    a = clip.audio.shape[1]
    a_len = max(a, int(math.ceil(a * length / t)))
    return replace(
        clip,
        visual=np.pad(clip.visual, ((0, 0), (0, length - t))),
        audio=np.pad(clip.audio, ((0, 0), (0, a_len - a))),
    )


def prepare_training_clip(
    clip: Clip, max_len: int, pad: bool, rng: np.random.Generator
) -> Clip:
    if clip.visual_valid > max_len:
        start = int(rng.integers(0, clip.visual_valid - max_len + 1))
        clip = crop_clip(clip, max_len, start)
    if pad:
        clip = pad_clip(clip, max_len)
    return clip
