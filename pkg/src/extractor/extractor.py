from __future__ import annotations

import glob
import logging
import os
from dataclasses import dataclass, field, replace
from typing import Dict, List, Optional

from src.audio.frontend import DEFAULT_ENCODER_SEED, PATCH_SECONDS, FrozenPatchEncoder, extract_embeddings
from src.audio.wav import read_wav
from src.core.config import load_env, load_yaml
from src.core.errors import DataError, MravffError
from src.data.feature_file import write_feature_file

log = logging.getLogger("extractor")


@dataclass(frozen=True)
class ExtractorConfig:
    encoder_seed: int = DEFAULT_ENCODER_SEED


@dataclass
class ExtractResult:
    written: List[str] = field(default_factory=list)
    failed: Dict[str, str] = field(default_factory=dict)

    @property
    def ok(self) -> bool:
        return not self.failed


def load_config(path: Optional[str], env_path: Optional[str] = None) -> ExtractorConfig:
    load_env(env_path)
    if path is None:
        return ExtractorConfig()
    raw = load_yaml(path).get("extractor", {}) or {}
    return ExtractorConfig(encoder_seed=int(raw.get("encoder_seed", DEFAULT_ENCODER_SEED)))


def extract_file(in_path: str, out_path: str, encoder: FrozenPatchEncoder) -> int:
    """WAV -> MRFF of [N, 128] embeddings at a 0.96 s stride; returns N."""
    embeddings = extract_embeddings(read_wav(in_path), encoder)
    write_feature_file(out_path, embeddings.embeddings, PATCH_SECONDS)
    log.info("%s -> %s (%d embeddings)", in_path, out_path, embeddings.embeddings.shape[0])
    return int(embeddings.embeddings.shape[0])


def run(
    input_path: str,
    output_path: str,
    config_path: Optional[str] = None,
    env_path: Optional[str] = None,
    *,
    seed: Optional[int] = None,
) -> ExtractResult:
    """Extract one file, or every ``*.wav`` in a directory into ``<output>/<basename>.mrff``."""
    cfg = load_config(config_path, env_path)
    if seed is not None:
        cfg = replace(cfg, encoder_seed=seed)
    encoder = FrozenPatchEncoder(cfg.encoder_seed)
    if os.path.isdir(input_path):
        pairs = [
            (p, os.path.join(output_path, os.path.splitext(os.path.basename(p))[0] + ".mrff"))
            for p in sorted(glob.glob(os.path.join(input_path, "*.wav")))
        ]
        if not pairs:
            raise DataError(f"No .wav files in {input_path}")
        os.makedirs(output_path, exist_ok=True)
    elif os.path.exists(input_path):
        pairs = [(input_path, output_path)]
    else:
        raise DataError(f"Input not found: {input_path}")
    result = ExtractResult()
    for src, dst in pairs:
        try:
            extract_file(src, dst, encoder)
            result.written.append(dst)
        except MravffError as exc:
            log.error("Failed to extract %s: %s", src, exc)
            result.failed[src] = str(exc)
    return result
