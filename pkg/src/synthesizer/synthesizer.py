from __future__ import annotations

import logging
from dataclasses import replace
from typing import Optional

from src.core.config import load_env, load_yaml
from src.data.annotations import AnnotationSet
from src.data.synthetic import SyntheticSpec, generate_synthetic

log = logging.getLogger("synthesizer")


def load_config(path: Optional[str], env_path: Optional[str] = None) -> SyntheticSpec:
    load_env(env_path)
    if path is None:
        return SyntheticSpec()
    return SyntheticSpec.from_dict(load_yaml(path).get("synth", {}) or {})


def run(
    output_root: str,
    config_path: Optional[str] = None,
    env_path: Optional[str] = None,
    *,
    seed: Optional[int] = None,
) -> AnnotationSet:
    spec = load_config(config_path, env_path)
    if seed is not None:
        spec = replace(spec, seed=seed)
    log.info("Synthesizing %d videos, seed %d, noise %.2f", spec.num_videos + spec.num_val_videos, spec.seed, spec.noise_level)
    _, annotations = generate_synthetic(spec, output_root)
    return annotations
