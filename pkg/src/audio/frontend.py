"""Log-mel audio features and the frozen patch encoder.

Pipeline: resample to 16 kHz mono, 25 ms / 10 ms periodic-Hann STFT
magnitudes (512-point FFT), 64 mel bands over 125-7500 Hz, log(x + 0.01),
non-overlapping 96-frame patches (0.96 s), then a frozen seeded map to 128-D.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass
from typing import List, Sequence

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from src.core.errors import ContractError, ShapeError

log = logging.getLogger("audio.frontend")

SAMPLE_RATE = 16000
WINDOW_SAMPLES = 400  # 25 ms
HOP_SAMPLES = 160  # 10 ms
FFT_SIZE = 512
NUM_BINS = FFT_SIZE // 2 + 1
NUM_MEL_BANDS = 64
MEL_LOW_HZ = 125.0
MEL_HIGH_HZ = 7500.0
LOG_OFFSET = 0.01
PATCH_FRAMES = 96
PATCH_SECONDS = PATCH_FRAMES * HOP_SAMPLES / SAMPLE_RATE  # 0.96
EMBEDDING_DIM = 128
HIDDEN_DIM = 128
DEFAULT_ENCODER_SEED = 20230817


@dataclass(frozen=True)
class Waveform:
    samples: np.ndarray
    sample_rate: int

    def __post_init__(self) -> None:
        if self.sample_rate <= 0:
            raise ContractError(f"Sample rate must be positive, got {self.sample_rate}")
        if np.ndim(self.samples) != 1:
            raise ShapeError(f"Waveform must be mono (1-D), got shape {np.shape(self.samples)}")

    @property
    def duration(self) -> float:
        return len(self.samples) / self.sample_rate


@dataclass(frozen=True)
class LogMelPatch:
    values: np.ndarray  # [96, 64]
    start_time: float


@dataclass(frozen=True)
class AudioEmbeddingSequence:
    embeddings: np.ndarray  # [T_audio, 128]
    hop: float = PATCH_SECONDS

    def __len__(self) -> int:
        return int(self.embeddings.shape[0])


def resample_to_16k(w: Waveform) -> Waveform:
    if w.sample_rate == SAMPLE_RATE:
        return Waveform(np.array(w.samples, copy=True), SAMPLE_RATE)
    n_in = len(w.samples)
    if n_in == 0:
        return Waveform(np.zeros(0), SAMPLE_RATE)
    n_out = int(np.floor(n_in * SAMPLE_RATE / w.sample_rate))
    src_t = np.arange(n_in) / w.sample_rate
    dst_t = np.arange(n_out) / SAMPLE_RATE
    return Waveform(np.interp(dst_t, src_t, w.samples), SAMPLE_RATE)


def periodic_hann(n: int = WINDOW_SAMPLES) -> np.ndarray:
    return 0.5 - 0.5 * np.cos(2.0 * np.pi * np.arange(n) / n)


def num_stft_frames(num_samples: int) -> int:
    if num_samples < WINDOW_SAMPLES:
        return 0
    return 1 + (num_samples - WINDOW_SAMPLES) // HOP_SAMPLES


def stft_magnitude(w: Waveform) -> np.ndarray:
    """Magnitude spectrogram [num_frames, 257]."""
    if w.sample_rate != SAMPLE_RATE:
        raise ContractError(f"stft_magnitude expects {SAMPLE_RATE} Hz audio, got {w.sample_rate}")
    samples = np.asarray(w.samples, dtype=np.float64)
    n_frames = num_stft_frames(len(samples))
    if n_frames == 0:
        return np.zeros((0, NUM_BINS))
    frames = sliding_window_view(samples, WINDOW_SAMPLES)[::HOP_SAMPLES][:n_frames]
    return np.abs(np.fft.rfft(frames * periodic_hann(), n=FFT_SIZE, axis=1))


def hz_to_mel(f):
    return 2595.0 * np.log10(1.0 + np.asarray(f, dtype=np.float64) / 700.0)


def mel_weight_matrix(
    num_bands: int = NUM_MEL_BANDS,
    low_hz: float = MEL_LOW_HZ,
    high_hz: float = MEL_HIGH_HZ,
) -> np.ndarray:
    """Triangular filters [257, num_bands]; edges are the neighbours' centres."""
    bin_mel = hz_to_mel(np.linspace(0.0, SAMPLE_RATE / 2.0, NUM_BINS))
    edges = np.linspace(hz_to_mel(low_hz), hz_to_mel(high_hz), num_bands + 2)
    weights = np.zeros((NUM_BINS, num_bands))
    for i in range(num_bands):
        lower, center, upper = edges[i : i + 3]
        rising = (bin_mel - lower) / (center - lower)
        falling = (upper - bin_mel) / (upper - center)
        weights[:, i] = np.maximum(0.0, np.minimum(rising, falling))
    weights[0, :] = 0.0  # DC bin
    return weights


_MEL_WEIGHTS = mel_weight_matrix()


def mel_filterbank(spec: np.ndarray) -> np.ndarray:
    if spec.ndim != 2 or spec.shape[1] != NUM_BINS:
        raise ShapeError(f"mel_filterbank expects [F, {NUM_BINS}], got {spec.shape}")
    return spec @ _MEL_WEIGHTS


def log_stabilize(mel: np.ndarray) -> np.ndarray:
    mel = np.asarray(mel, dtype=np.float64)
    if np.any(mel < 0):
        raise ContractError("log_stabilize: mel energies must be non-negative")
    return np.log(mel + LOG_OFFSET)


def frame_patches(logmel: np.ndarray) -> List[LogMelPatch]:
    count = logmel.shape[0] // PATCH_FRAMES
    return [
        LogMelPatch(
            values=logmel[i * PATCH_FRAMES : (i + 1) * PATCH_FRAMES],
            start_time=i * PATCH_SECONDS,
        )
        for i in range(count)
    ]


class FrozenPatchEncoder:
    """Fixed seeded stand-in for a pretrained patch encoder (never trained).

    flatten(96x64) -> linear 6144->128 -> relu -> linear 128->128, weights
    uniform(+-1/sqrt(fan_in)) from ``seed``, biases zero.
    """

    def __init__(self, seed: int = DEFAULT_ENCODER_SEED) -> None:
        self.seed = seed
        rng = np.random.default_rng(seed)
        fan_in = PATCH_FRAMES * NUM_MEL_BANDS
        self.w1 = rng.uniform(-1.0, 1.0, size=(fan_in, HIDDEN_DIM)) / np.sqrt(fan_in)
        self.w2 = rng.uniform(-1.0, 1.0, size=(HIDDEN_DIM, EMBEDDING_DIM)) / np.sqrt(HIDDEN_DIM)

    def encode_patches(self, patches: Sequence[LogMelPatch]) -> AudioEmbeddingSequence:
        for p in patches:
            if p.values.shape != (PATCH_FRAMES, NUM_MEL_BANDS):
                raise ShapeError(
                    f"Patch must be {PATCH_FRAMES}x{NUM_MEL_BANDS}, got {p.values.shape}"
                )
        if not patches:
            return AudioEmbeddingSequence(np.zeros((0, EMBEDDING_DIM)))
        flat = np.stack([p.values.reshape(-1) for p in patches])
        hidden = np.maximum(flat @ self.w1, 0.0)
        return AudioEmbeddingSequence(hidden @ self.w2)


def encode_patches(
    patches: Sequence[LogMelPatch], seed: int = DEFAULT_ENCODER_SEED
) -> AudioEmbeddingSequence:
    return FrozenPatchEncoder(seed).encode_patches(patches)


def log_mel(w: Waveform) -> np.ndarray:
    resampled = resample_to_16k(w)
    return log_stabilize(mel_filterbank(stft_magnitude(resampled)))


def extract_embeddings(w: Waveform, encoder: FrozenPatchEncoder) -> AudioEmbeddingSequence:
    patches = frame_patches(log_mel(w))
    log.debug("%.2fs of audio -> %d patches", w.duration, len(patches))
    return encoder.encode_patches(patches)
