from __future__ import annotations

import logging

import numpy as np
import soundfile as sf

from src.core.errors import DataError

from .frontend import Waveform

log = logging.getLogger("audio.wav")

SUPPORTED_SUBTYPES = ("PCM_16",)


def read_wav(path: str) -> Waveform:
    """Decode a 16-bit PCM WAV file; stereo is averaged to mono."""
    try:
        info = sf.info(path)
    except RuntimeError as exc:
        raise DataError(f"Unreadable WAV file {path}: {exc}") from exc
    if info.format != "WAV" or info.subtype not in SUPPORTED_SUBTYPES:
        raise DataError(
            f"{path}: unsupported audio format {info.format}/{info.subtype} (need WAV/PCM_16)"
        )
    if info.channels not in (1, 2):
        raise DataError(f"{path}: expected mono or stereo audio, got {info.channels} channels")
    samples, rate = sf.read(path, dtype="float64", always_2d=True)
    mono = samples.mean(axis=1) if samples.shape[1] > 1 else samples[:, 0]
    log.debug("Read %s: %d samples @ %d Hz, %d channel(s)", path, len(mono), rate, info.channels)
    return Waveform(samples=mono, sample_rate=int(rate))


def write_wav(path: str, waveform: Waveform) -> None:
    sf.write(path, np.clip(waveform.samples, -1.0, 1.0), waveform.sample_rate, subtype="PCM_16")
