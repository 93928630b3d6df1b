import os

import numpy as np
import pytest

from src.core.errors import DataError
from src.core.types import ActionInstance
from src.data.annotations import AnnotationSet, VideoAnnotation
from src.data.dataset import Clip, crop_clip, load_dataset, pad_clip, prepare_training_clip
from src.data.feature_file import write_feature_file


def _write_video(root, video_id, t, a, d_v=4, d_a=3):
    rng = np.random.default_rng(len(video_id) + t)
    visual = rng.standard_normal((t, d_v)).astype(np.float32)
    audio = rng.standard_normal((a, d_a)).astype(np.float32)
    write_feature_file(os.path.join(root, "visual", f"{video_id}.mrff"), visual, 0.5)
    write_feature_file(os.path.join(root, "audio", f"{video_id}.mrff"), audio, 0.96)
    return visual, audio


def _annotations(*videos):
    return AnnotationSet(videos=list(videos), labels=["a", "b"])


def test_load_keeps_mismatched_lengths(tmp_path):
    visual, audio = _write_video(tmp_path, "v1", 256, 60)
    ann = _annotations(VideoAnnotation("v1", 128.0, [ActionInstance(1.0, 5.0, 0)]))
    (clip,) = load_dataset(ann, str(tmp_path))
    assert clip.visual.shape == (4, 256)
    assert clip.audio.shape == (3, 60)
    assert np.array_equal(clip.visual, visual.T)
    assert np.array_equal(clip.audio, audio.T)
    assert clip.visual_stride == 0.5
    assert clip.visual_valid == 256 and clip.audio_valid == 60


def test_missing_files_are_listed(tmp_path):
    _write_video(tmp_path, "v1", 8, 4)
    ann = _annotations(
        VideoAnnotation("v1", 4.0, []),
        VideoAnnotation("v2", 4.0, []),
        VideoAnnotation("v3", 4.0, []),
    )
    with pytest.raises(DataError) as info:
        load_dataset(ann, str(tmp_path))
    assert "v2, v3" in str(info.value)


def test_empty_sequence_rejected(tmp_path):
    write_feature_file(os.path.join(tmp_path, "visual", "v1.mrff"), np.zeros((0, 4)), 0.5)
    write_feature_file(os.path.join(tmp_path, "audio", "v1.mrff"), np.zeros((3, 3)), 0.96)
    with pytest.raises(DataError) as info:
        load_dataset(_annotations(VideoAnnotation("v1", 4.0, [])), str(tmp_path))
    assert "empty sequence" in str(info.value)


def _clip(t=256, a=134, actions=()):
    return Clip(
        video_id="v",
        visual=np.arange(4 * t, dtype=np.float32).reshape(4, t),
        audio=np.ones((3, a), dtype=np.float32),
        actions=list(actions),
        visual_stride=0.5,
        audio_stride=0.96,
        duration=t * 0.5,
        visual_valid=t,
        audio_valid=a,
    )


def test_crop_drops_and_clips_actions():
    clip = _clip(
        actions=[
            ActionInstance(2.0, 8.0, 0),  # outside the crop
            ActionInstance(18.0, 22.0, 1),  # straddles the start
            ActionInstance(40.0, 50.0, 0),  # inside
            ActionInstance(80.0, 90.0, 1),  # straddles the end
        ]
    )
    cropped = crop_clip(clip, 128, 40)  # visual [40, 168) = [20 s, 84 s)
    assert cropped.visual.shape == (4, 128)
    assert np.array_equal(cropped.visual, clip.visual[:, 40:168])
    assert cropped.offset == 20.0
    assert [(a.start, a.end, a.label) for a in cropped.actions] == [
        (0.0, 2.0, 1),
        (20.0, 30.0, 0),
        (60.0, 64.0, 1),
    ]
    centres = (np.arange(cropped.audio_valid) + 0.5) * 0.96
    assert cropped.audio.shape[1] == cropped.audio_valid
    assert 60 <= cropped.audio_valid <= 68
    assert centres[-1] < 64.0 + 0.96


def test_crop_leaves_short_clips_alone():
    clip = _clip(t=100, a=52)
    assert crop_clip(clip, 128, 0) is clip


def test_pad_marks_tail_invalid():
    padded = pad_clip(_clip(t=100, a=52), 128)
    assert padded.visual.shape == (4, 128)
    assert padded.visual_valid == 100
    assert padded.visual_mask().sum() == 100
    assert padded.audio.shape[1] >= 52
    assert padded.audio_valid == 52
    assert np.all(padded.visual[:, 100:] == 0)


def test_prepare_training_clip_is_seeded():
    clip = _clip(actions=[ActionInstance(40.0, 50.0, 0)])
    a = prepare_training_clip(clip, 128, False, np.random.default_rng(5))
    b = prepare_training_clip(clip, 128, False, np.random.default_rng(5))
    assert a.offset == b.offset
    assert a.visual.shape == (4, 128)


def test_zero_audio_keeps_shape():
    clip = _clip(t=16, a=8).with_zero_audio()
    assert clip.audio.shape == (3, 8)
    assert not clip.audio.any()


def test_empty_action_list_is_a_valid_clip(tmp_path):
    _write_video(tmp_path, "v1", 16, 8)
    (clip,) = load_dataset(_annotations(VideoAnnotation("v1", 8.0, [])), str(tmp_path))
    assert clip.actions == []
