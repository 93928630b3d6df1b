import math
import os

import numpy as np
import pytest

from src.audio.frontend import (
    EMBEDDING_DIM,
    NUM_MEL_BANDS,
    PATCH_FRAMES,
    FrozenPatchEncoder,
    LogMelPatch,
    Waveform,
    extract_embeddings,
    frame_patches,
    hz_to_mel,
    log_mel,
    log_stabilize,
    mel_filterbank,
    mel_weight_matrix,
    num_stft_frames,
    periodic_hann,
    resample_to_16k,
    stft_magnitude,
)
from src.audio.wav import read_wav, write_wav
from src.core.errors import ContractError, DataError, ShapeError


def _sine(freq, seconds, rate=16000, amplitude=1.0):
    t = np.arange(int(seconds * rate)) / rate
    return Waveform(amplitude * np.sin(2 * np.pi * freq * t), rate)


def test_resample_identity_and_length():
    w = _sine(440, 0.5)
    assert np.array_equal(resample_to_16k(w).samples, w.samples)
    w32 = _sine(440, 0.5, rate=32000)
    assert abs(len(resample_to_16k(w32).samples) - len(w32.samples) // 2) <= 1
    const = resample_to_16k(Waveform(np.full(300, 0.25), 44100))
    assert np.allclose(const.samples, 0.25)
    assert len(resample_to_16k(Waveform(np.zeros(0), 8000)).samples) == 0


def test_hann_endpoints():
    w = periodic_hann()
    assert w[0] == 0.0
    assert w[200] == pytest.approx(1.0)


def test_stft_frame_count_and_zero_signal():
    assert num_stft_frames(399) == 0
    assert stft_magnitude(Waveform(np.zeros(399), 16000)).shape == (0, 257)
    spec = stft_magnitude(Waveform(np.zeros(16000), 16000))
    assert spec.shape == (1 + (16000 - 400) // 160, 257)
    assert np.all(spec == 0.0)


def test_sine_peaks_at_bin_32():
    spec = stft_magnitude(_sine(1000, 1.0))
    assert np.all(np.argmax(spec, axis=1) == 32)


def test_mel_scale_span_and_filters():
    assert hz_to_mel(125.0) == pytest.approx(185.2, abs=0.1)
    assert hz_to_mel(7500.0) == pytest.approx(2773.3, abs=0.1)
    weights = mel_weight_matrix()
    assert weights.shape == (257, NUM_MEL_BANDS)
    assert np.all(weights >= 0)
    for band in range(NUM_MEL_BANDS):
        col = weights[:, band]
        peak = int(np.argmax(col))
        assert col.max() > 0
        assert np.all(np.diff(col[: peak + 1]) >= 0)
        assert np.all(np.diff(col[peak:]) <= 0)
    assert np.all(mel_filterbank(np.zeros((3, 257))) == 0.0)
    with pytest.raises(ShapeError):
        mel_filterbank(np.zeros((3, 256)))


def test_log_stabilize():
    assert log_stabilize(np.array([0.0]))[0] == pytest.approx(math.log(0.01), abs=1e-12)
    assert np.allclose(log_stabilize(np.array([0.99, math.e - 0.01])), [0.0, 1.0])
    with pytest.raises(ContractError):
        log_stabilize(np.array([-1e-3]))


def test_zero_signal_log_mel_is_floor():
    values = log_mel(Waveform(np.zeros(32000), 16000))
    assert np.all(np.abs(values - math.log(0.01)) <= 1e-12)


def test_frame_patches_drops_remainder():
    assert len(frame_patches(np.zeros((96, 64)))) == 1
    assert len(frame_patches(np.zeros((95, 64)))) == 0
    patches = frame_patches(np.zeros((200, 64)))
    assert [p.start_time for p in patches] == [0.0, pytest.approx(0.96)]


def test_embedding_count_formula():
    encoder = FrozenPatchEncoder(7)
    for n in (0, 399, 15760, 15761, 16000, 31520, 160000):
        expected = (1 + (n - 400) // 160) // 96 if n >= 400 else 0
        emb = extract_embeddings(Waveform(np.zeros(n), 16000), encoder).embeddings
        assert emb.shape == (expected, EMBEDDING_DIM)


def test_ten_seconds_give_ten_embeddings():
    emb = extract_embeddings(_sine(440, 10.0), FrozenPatchEncoder())
    assert emb.embeddings.shape == (10, 128)


def test_encoder_is_deterministic_and_sensitive():
    rng = np.random.default_rng(0)
    patch = LogMelPatch(rng.standard_normal((PATCH_FRAMES, NUM_MEL_BANDS)), 0.0)
    changed = patch.values.copy()
    changed[10, 5] += 1.0
    a = FrozenPatchEncoder().encode_patches([patch]).embeddings
    b = FrozenPatchEncoder().encode_patches([patch]).embeddings
    c = FrozenPatchEncoder().encode_patches([LogMelPatch(changed, 0.0)]).embeddings
    assert np.array_equal(a, b)
    assert not np.array_equal(a, c)
    with pytest.raises(ShapeError):
        FrozenPatchEncoder().encode_patches([LogMelPatch(np.zeros((95, 64)), 0.0)])


def test_scaling_never_decreases_mel_energy():
    w = _sine(700, 1.0, amplitude=0.3)
    base = mel_filterbank(stft_magnitude(w))
    louder = mel_filterbank(stft_magnitude(Waveform(w.samples * 2.0, 16000)))
    assert np.all(louder >= base)


def test_wav_roundtrip_and_errors(tmp_path):
    path = os.path.join(tmp_path, "tone.wav")
    write_wav(path, _sine(440, 0.25, amplitude=0.5))
    w = read_wav(path)
    assert w.sample_rate == 16000
    assert len(w.samples) == 4000
    assert np.max(np.abs(w.samples)) == pytest.approx(0.5, abs=5e-3)
    bogus = os.path.join(tmp_path, "bogus.wav")
    with open(bogus, "wb") as f:
        f.write(b"not audio at all")
    with pytest.raises(DataError):
        read_wav(bogus)
