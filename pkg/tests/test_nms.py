import math

import pytest

from src.core.errors import ConfigError
from src.core.types import Detection
from src.evaluation.nms import soft_nms


def test_single_detection_is_unchanged():
    det = Detection(1.0, 4.0, 0, 0.7, "v")
    assert soft_nms([det]) == [det]


def test_identical_segments_decay():
    kept = soft_nms([Detection(0.0, 5.0, 0, 0.9), Detection(0.0, 5.0, 0, 0.8)])
    assert [d.score for d in kept] == pytest.approx([0.9, 0.8 * math.exp(-2.0)])
    assert kept[1].score == pytest.approx(0.1083, abs=1e-4)


def test_disjoint_segments_keep_their_scores():
    dets = [Detection(0.0, 2.0, 0, 0.9), Detection(5.0, 7.0, 0, 0.6)]
    assert soft_nms(dets) == dets


def test_classes_are_suppressed_independently():
    dets = [Detection(0.0, 5.0, 0, 0.9), Detection(0.0, 5.0, 1, 0.8)]
    assert [d.score for d in soft_nms(dets)] == [0.9, 0.8]


def test_partial_overlap_uses_gaussian_of_iou():
    # IoU of [0, 4] and [2, 6] is 1/3
    kept = soft_nms([Detection(0.0, 4.0, 0, 0.9), Detection(2.0, 6.0, 0, 0.5)], sigma=0.5)
    assert kept[1].score == pytest.approx(0.5 * math.exp(-(1.0 / 9.0) / 0.5))


def test_decay_reorders_survivors():
    dets = [
        Detection(0.0, 5.0, 0, 0.9),
        Detection(0.0, 5.0, 0, 0.8),
        Detection(10.0, 12.0, 0, 0.5),
    ]
    kept = soft_nms(dets)
    assert [d.start for d in kept] == [0.0, 10.0, 0.0]


def test_min_score_and_max_keep():
    dets = [Detection(0.0, 5.0, 0, 0.9), Detection(0.0, 5.0, 0, 0.8), Detection(9.0, 10.0, 1, 0.3)]
    assert len(soft_nms(dets, min_score=0.2)) == 2
    capped = soft_nms(dets, max_keep=1)
    assert capped == [Detection(0.0, 5.0, 0, 0.9)]


def test_invalid_parameters():
    with pytest.raises(ConfigError):
        soft_nms([], sigma=0.0)
    with pytest.raises(ConfigError):
        soft_nms([], max_keep=0)
    assert soft_nms([]) == []
