from __future__ import annotations

from collections import defaultdict
from typing import Dict, List, Sequence

import numpy as np

from src.core.errors import ConfigError
from src.core.types import Detection


def _pairwise_iou(start: np.ndarray, end: np.ndarray, s: float, e: float) -> np.ndarray:
    inter = np.clip(np.minimum(end, e) - np.maximum(start, s), 0.0, None)
    union = (end - start) + (e - s) - inter
    return np.where(union > 0, inter / np.maximum(union, 1e-12), 0.0)


def _soft_nms_class(dets: List[Detection], sigma: float, min_score: float, max_keep: int) -> List[Detection]:
    dets = sorted(dets, key=Detection.sort_key)
    start = np.array([d.start for d in dets])
    end = np.array([d.end for d in dets])
    score = np.array([d.score for d in dets])
    alive = np.ones(len(dets), dtype=bool)
    kept: List[Detection] = []
    while alive.any() and len(kept) < max_keep:
        candidates = np.nonzero(alive)[0]
        # first max in sorted order keeps ties on (start, end) deterministic
        best = int(candidates[np.argmax(score[candidates])])
        if score[best] < min_score or score[best] <= 0.0:
            break
        kept.append(dets[best].with_score(float(score[best])))
        alive[best] = False
        rest = np.nonzero(alive)[0]
        if rest.size:
            iou = _pairwise_iou(start[rest], end[rest], start[best], end[best])
            score[rest] = score[rest] * np.exp(-(iou * iou) / sigma)
    return kept


def soft_nms(
    dets: Sequence[Detection],
    sigma: float = 0.5,
    min_score: float = 0.001,
    max_keep: int = 200,
) -> List[Detection]:
    """Gaussian Soft-NMS within each class, then a best-first cap of ``max_keep``."""
    if sigma <= 0:
        raise ConfigError(f"soft-NMS sigma must be positive, got {sigma}")
    if max_keep < 1:
        raise ConfigError(f"max_keep must be >= 1, got {max_keep}")
    by_class: Dict[int, List[Detection]] = defaultdict(list)
    for d in dets:
        by_class[d.label].append(d)
    kept: List[Detection] = []
    for label in sorted(by_class):
        kept.extend(_soft_nms_class(by_class[label], sigma, min_score, max_keep))
    kept.sort(key=Detection.sort_key)
    return kept[:max_keep]
