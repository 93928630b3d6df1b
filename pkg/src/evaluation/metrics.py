from __future__ import annotations

import logging
from collections import defaultdict
from dataclasses import dataclass
from typing import Any, Dict, List, Mapping, Optional, Sequence, Tuple

import numpy as np

from src.core.config import DEFAULT_THRESHOLDS
from src.core.errors import ContractError, DataError
from src.core.types import ActionInstance, Detection, segment_iou

log = logging.getLogger("evaluation")


def ap_from_pr(precision: np.ndarray, recall: np.ndarray) -> float:
    """Area under the interpolated (monotone non-increasing) PR envelope."""
    mprec = np.hstack([[0.0], precision, [0.0]])
    mrec = np.hstack([[0.0], recall, [1.0]])
    for i in range(len(mprec) - 1)[::-1]:
        mprec[i] = max(mprec[i], mprec[i + 1])
    idx = np.where(mrec[1:] != mrec[:-1])[0] + 1
    return float(np.sum((mrec[idx] - mrec[idx - 1]) * mprec[idx]))


def average_precision(
    dets: Sequence[Detection],
    gt: Mapping[str, Sequence[ActionInstance]],
    label: int,
    threshold: float,
) -> Optional[float]:
    """AP of one class at one tIoU; None when the class has no ground truth.

    Detections are visited best first; each takes the unmatched ground truth
    in its video with the highest tIoU, if that tIoU reaches ``threshold``.
    """
    gt_by_video = {vid: [g for g in items if g.label == label] for vid, items in gt.items()}
    num_gt = sum(len(v) for v in gt_by_video.values())
    if num_gt == 0:
        return None
    ordered = sorted((d for d in dets if d.label == label), key=Detection.sort_key)
    if not ordered:
        return 0.0
    used = {vid: np.zeros(len(items), dtype=bool) for vid, items in gt_by_video.items()}
    tp = np.zeros(len(ordered))
    for i, det in enumerate(ordered):
        candidates = gt_by_video.get(det.video_id, [])
        best_iou, best_j = -1.0, -1
        for j, g in enumerate(candidates):
            if used[det.video_id][j]:
                continue
            iou = segment_iou(det.start, det.end, g.start, g.end)
            if iou > best_iou:
                best_iou, best_j = iou, j
        if best_j >= 0 and best_iou >= threshold:
            used[det.video_id][best_j] = True
            tp[i] = 1.0
    tp_cum = np.cumsum(tp)
    fp_cum = np.cumsum(1.0 - tp)
    recall = tp_cum / num_gt
    precision = tp_cum / (tp_cum + fp_cum)
    return ap_from_pr(precision, recall)


@dataclass(frozen=True)
class EvalReport:
    thresholds: Tuple[float, ...]
    labels: Tuple[str, ...]
    per_class_ap: Dict[float, Dict[int, float]]  # threshold -> class -> AP, classes with GT only
    mAP: Dict[float, float]

    @property
    def average_mAP(self) -> float:
        return float(np.mean([self.mAP[t] for t in self.thresholds]))

    def ap_at(self, threshold: float, label: int) -> Optional[float]:
        return self.per_class_ap.get(threshold, {}).get(label)

    def to_dict(self) -> Dict[str, Any]:
        return {
            "thresholds": list(self.thresholds),
            "mAP": {f"{t:g}": self.mAP[t] for t in self.thresholds},
            "average_mAP": self.average_mAP,
            "per_class_ap": {
                f"{t:g}": {self.labels[c]: ap for c, ap in sorted(self.per_class_ap[t].items())}
                for t in self.thresholds
            },
        }

    def format_table(self) -> str:
        """tIoU columns then Avg, values in percent."""
        name_width = max([len("tIoU"), len("mAP")] + [len(n) for n in self.labels])
        header = "tIoU".ljust(name_width) + "".join(f"{t:>8g}" for t in self.thresholds) + f"{'Avg':>8}"
        lines = [header, "-" * len(header)]
        row = "mAP".ljust(name_width) + "".join(f"{100 * self.mAP[t]:8.2f}" for t in self.thresholds)
        lines.append(row + f"{100 * self.average_mAP:8.2f}")
        classes = sorted({c for per in self.per_class_ap.values() for c in per})
        for c in classes:
            aps = [self.per_class_ap[t].get(c, 0.0) for t in self.thresholds]
            lines.append(
                self.labels[c].ljust(name_width)
                + "".join(f"{100 * ap:8.2f}" for ap in aps)
                + f"{100 * float(np.mean(aps)):8.2f}"
            )
        return "\n".join(lines)


def _group_detections(dets: Any) -> List[Detection]:
    if isinstance(dets, Mapping):
        flat: List[Detection] = []
        for vid, items in dets.items():
            for d in items:
                if d.video_id and d.video_id != vid:
                    raise ContractError(f"detection for {d.video_id} listed under {vid}")
                flat.append(d if d.video_id else Detection(d.start, d.end, d.label, d.score, vid))
        return flat
    return list(dets)


def evaluate(
    dets: Any,
    gt: Mapping[str, Sequence[ActionInstance]],
    thresholds: Sequence[float] = DEFAULT_THRESHOLDS,
    labels: Optional[Sequence[str]] = None,
) -> EvalReport:
    """mAP at each tIoU threshold over classes that have ground truth.

    ``dets`` is a flat list of detections carrying ``video_id`` or a mapping
    of video id to detections.
    """
    flat = _group_detections(dets)
    unknown = sorted({d.video_id for d in flat} - set(gt))
    if unknown:
        raise DataError(f"Detections reference unknown video ids: {', '.join(unknown)}")
    max_label = max(
        [g.label for items in gt.values() for g in items] + [d.label for d in flat] + [-1]
    )
    if labels is None:
        labels = [str(i) for i in range(max_label + 1)]
    elif max_label >= len(labels):
        raise ContractError(f"label index {max_label} outside {len(labels)} labels")
    by_label: Dict[int, List[Detection]] = defaultdict(list)
    for d in flat:
        by_label[d.label].append(d)
    per_class: Dict[float, Dict[int, float]] = {}
    m_ap: Dict[float, float] = {}
    for t in thresholds:
        per_class[t] = {}
        for c in range(len(labels)):
            ap = average_precision(by_label.get(c, []), gt, c, t)
            if ap is not None:
                per_class[t][c] = ap
        if per_class[t]:
            m_ap[t] = float(np.mean(list(per_class[t].values())))
        else:
            log.warning("No class has ground truth; mAP at %.2f reported as 0", t)
            m_ap[t] = 0.0
    return EvalReport(tuple(thresholds), tuple(labels), per_class, m_ap)
