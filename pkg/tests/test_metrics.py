import logging

import numpy as np
import pytest

from src.core.config import DEFAULT_THRESHOLDS
from src.core.errors import ContractError, DataError
from src.core.types import ActionInstance, Detection
from src.evaluation.metrics import ap_from_pr, average_precision, evaluate

TWO_GT = {"v": [ActionInstance(0.0, 10.0, 0), ActionInstance(20.0, 30.0, 0)]}


def test_tp_fp_tp_interpolated_ap():
    dets = [
        Detection(0.0, 10.0, 0, 0.9, "v"),
        Detection(40.0, 50.0, 0, 0.8, "v"),
        Detection(20.0, 30.0, 0, 0.7, "v"),
    ]
    assert average_precision(dets, TWO_GT, 0, 0.5) == pytest.approx((1.0 + 2.0 / 3.0) / 2.0)
    assert average_precision(dets, TWO_GT, 0, 0.5) == pytest.approx(0.8333, abs=1e-4)


def test_envelope_is_monotone():
    precision = np.array([1.0, 0.5, 2.0 / 3.0])
    recall = np.array([0.5, 0.5, 1.0])
    assert ap_from_pr(precision, recall) == pytest.approx(5.0 / 6.0)


def test_duplicate_detection_counts_as_false_positive():
    gt = {"v": [ActionInstance(0.0, 10.0, 0)]}
    dets = [Detection(0.0, 10.0, 0, 0.9, "v"), Detection(0.0, 10.0, 0, 0.8, "v")]
    assert average_precision(dets, gt, 0, 0.5) == pytest.approx(1.0)
    late = [Detection(0.0, 10.0, 0, 0.9, "v"), Detection(0.0, 9.0, 0, 0.95, "v")]
    # the looser segment ranks first, misses the threshold and counts as a false positive
    assert average_precision(late, gt, 0, 0.95) == pytest.approx(0.5)


def test_perfect_predictions_score_one_everywhere():
    gt = {
        "a": [ActionInstance(1.0, 4.0, 0), ActionInstance(6.0, 9.0, 1)],
        "b": [ActionInstance(0.5, 2.0, 2)],
    }
    dets = [Detection(g.start, g.end, g.label, 1.0, vid) for vid, items in gt.items() for g in items]
    report = evaluate(dets, gt)
    assert report.thresholds == DEFAULT_THRESHOLDS
    assert all(report.mAP[t] == 1.0 for t in report.thresholds)
    assert report.average_mAP == 1.0


def test_classes_without_ground_truth_are_excluded():
    gt = {"v": [ActionInstance(0.0, 10.0, 0)]}
    dets = [Detection(0.0, 10.0, 0, 0.9, "v"), Detection(3.0, 4.0, 1, 0.9, "v")]
    report = evaluate(dets, gt, thresholds=(0.5,), labels=["a", "b"])
    assert report.per_class_ap[0.5] == {0: 1.0}
    assert report.ap_at(0.5, 1) is None
    assert report.mAP[0.5] == 1.0


def test_no_ground_truth_reports_zero(caplog):
    with caplog.at_level(logging.WARNING, logger="evaluation"):
        report = evaluate([], {"v": []}, thresholds=(0.5,))
    assert report.mAP[0.5] == 0.0
    assert "No class has ground truth" in caplog.text


def test_mapping_input_fills_video_ids():
    gt = {"v": [ActionInstance(0.0, 10.0, 0)]}
    report = evaluate({"v": [Detection(0.0, 10.0, 0, 0.5)]}, gt, thresholds=(0.5,))
    assert report.mAP[0.5] == 1.0
    with pytest.raises(ContractError):
        evaluate({"v": [Detection(0.0, 10.0, 0, 0.5, "w")]}, gt)


def test_unknown_video_is_a_data_error():
    with pytest.raises(DataError, match="ghost"):
        evaluate([Detection(0.0, 1.0, 0, 0.5, "ghost")], TWO_GT)


def test_label_names_must_cover_indices():
    with pytest.raises(ContractError):
        evaluate([], {"v": [ActionInstance(0.0, 1.0, 3)]}, labels=["a"])


def test_report_table_and_dict():
    report = evaluate(
        [Detection(0.0, 10.0, 0, 0.9, "v")], TWO_GT, thresholds=(0.1, 0.3, 0.5), labels=["chop"]
    )
    lines = report.format_table().splitlines()
    assert lines[0].split() == ["tIoU", "0.1", "0.3", "0.5", "Avg"]
    assert lines[2].split()[0] == "mAP"
    assert lines[3].split() == ["chop", "50.00", "50.00", "50.00", "50.00"]
    data = report.to_dict()
    assert data["mAP"] == {"0.1": 0.5, "0.3": 0.5, "0.5": 0.5}
    assert data["per_class_ap"]["0.5"] == {"chop": 0.5}
    assert data["average_mAP"] == pytest.approx(0.5)


def _iou(a, b):
    inter = max(0.0, min(a[1], b[1]) - max(a[0], b[0]))
    return inter / ((a[1] - a[0]) + (b[1] - b[0]) - inter)


def _brute_force_map(dets, gt, threshold, num_classes):
    aps = []
    for c in range(num_classes):
        truth = [(vid, (g.start, g.end)) for vid, items in gt.items() for g in items if g.label == c]
        if not truth:
            continue
        ranked = sorted(
            [d for d in dets if d.label == c], key=lambda d: (-d.score, d.start, d.end, d.video_id)
        )
        taken = [False] * len(truth)
        hits = []
        for d in ranked:
            best, best_iou = None, -1.0
            for j, (vid, seg) in enumerate(truth):
                if vid != d.video_id or taken[j]:
                    continue
                iou = _iou((d.start, d.end), seg)
                if iou > best_iou:
                    best, best_iou = j, iou
            hit = best is not None and best_iou >= threshold
            if hit:
                taken[best] = True
            hits.append(hit)
        precisions = []
        tp = 0
        for k, hit in enumerate(hits, start=1):
            tp += hit
            precisions.append(tp / k)
        ap = 0.0
        for k, hit in enumerate(hits):
            if hit:
                ap += max(precisions[k:]) / len(truth)
        aps.append(ap)
    return sum(aps) / len(aps) if aps else 0.0


def _random_segment(rng):
    start = float(rng.uniform(0.0, 20.0))
    return start, start + float(rng.uniform(0.5, 8.0))


def _random_case(rng):
    """Up to 5 GT and 8 detections over one or two videos, half of them jittered GT copies."""
    videos = ["a", "b"][: int(rng.integers(1, 3))]
    gt = {vid: [] for vid in videos}
    for _ in range(int(rng.integers(0, 6))):
        vid = videos[int(rng.integers(len(videos)))]
        gt[vid].append(ActionInstance(*_random_segment(rng), int(rng.integers(3))))
    dets = []
    for _ in range(int(rng.integers(0, 9))):
        vid = videos[int(rng.integers(len(videos)))]
        if gt[vid] and rng.random() < 0.5:
            g = gt[vid][int(rng.integers(len(gt[vid])))]
            jitter = rng.uniform(-1.0, 1.0, size=2)
            start, end = g.start + jitter[0], g.end + jitter[1]
            if end <= start:
                start, end = g.start, g.end
            label = g.label
        else:
            (start, end), label = _random_segment(rng), int(rng.integers(3))
        dets.append(Detection(float(start), float(end), label, float(rng.uniform(0.01, 1.0)), vid))
    return dets, gt


def test_matches_brute_force_on_random_instances():
    rng = np.random.default_rng(2024)
    for _ in range(1000):
        dets, gt = _random_case(rng)
        thresholds = (0.1, 0.3, 0.5, 0.7)
        report = evaluate(dets, gt, thresholds=thresholds, labels=["x", "y", "z"])
        for t in thresholds:
            assert report.mAP[t] == pytest.approx(_brute_force_map(dets, gt, t, 3), abs=1e-9)


def test_map_never_rises_with_a_stricter_threshold():
    rng = np.random.default_rng(7)
    thresholds = (0.1, 0.2, 0.3, 0.4, 0.5)
    for _ in range(3000):
        dets, gt = _random_case(rng)
        report = evaluate(dets, gt, thresholds=thresholds, labels=["x", "y", "z"])
        values = [report.mAP[t] for t in thresholds]
        assert all(loose >= strict - 1e-12 for loose, strict in zip(values, values[1:])), values
