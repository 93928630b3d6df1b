from __future__ import annotations

from typing import List, Optional, Sequence

import numpy as np

from src.autodiff.ops import stable_sigmoid
from src.core.errors import ContractError
from src.core.types import Detection
from src.model.fusion import LevelOutput


def decode_segments(
    outputs: Sequence[LevelOutput],
    stride_seconds: float,
    score_threshold: float = 0.001,
    pre_nms_topk: int = 2000,
    duration: Optional[float] = None,
    grid_offset: float = 0.5,
    video_id: str = "",
    time_offset: float = 0.0,
) -> List[Detection]:
    """Turn head outputs into scored segments, best first.

    Instant (l, t) sits at (t + grid_offset) * 2^l * stride; distances are
    scaled by the level stride. Segments are clamped to [0, duration],
    degenerate ones dropped, then shifted by ``time_offset``.
    """
    if not 0.0 <= score_threshold < 1.0:
        raise ContractError(f"score_threshold must lie in [0, 1), got {score_threshold}")
    starts, ends, labels, scores = [], [], [], []
    for out in outputs:
        level_stride = (2**out.level) * stride_seconds
        valid = out.valid
        centres = (np.arange(valid) + grid_offset) * level_stride
        seg_start = centres - out.d_start.data[:valid].astype(np.float64) * level_stride
        seg_end = centres + out.d_end.data[:valid].astype(np.float64) * level_stride
        prob = stable_sigmoid(out.cls_logits.data[:, :valid].astype(np.float64))  # [C, T]
        cls_idx, t_idx = np.nonzero(prob > score_threshold)
        starts.append(seg_start[t_idx])
        ends.append(seg_end[t_idx])
        labels.append(cls_idx)
        scores.append(prob[cls_idx, t_idx])
    if not starts:
        return []
    start = np.concatenate(starts)
    end = np.concatenate(ends)
    label = np.concatenate(labels)
    score = np.concatenate(scores)
    start = np.maximum(start, 0.0)
    if duration is not None:
        end = np.minimum(end, duration)
    keep = (end > start) & (score > 0.0)
    start, end, label, score = start[keep], end[keep], label[keep], score[keep]
    order = np.lexsort((label, end, start, -score))[:pre_nms_topk]
    return [
        Detection(
            float(start[i] + time_offset),
            float(end[i] + time_offset),
            int(label[i]),
            float(score[i]),
            video_id,
        )
        for i in order
    ]
