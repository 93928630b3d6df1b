from __future__ import annotations

import math
import os
from dataclasses import asdict, dataclass, replace
from typing import Any, Dict, Optional, Sequence, Tuple

import yaml
from dotenv import load_dotenv

from .errors import ConfigError

FUSION_MODES = ("gated_xattn", "concat_baseline", "channel_pool_baseline", "visual_only")
FUSION_MODE_ALIASES = {
    "gated": "gated_xattn",
    "concat": "concat_baseline",
    "pool": "channel_pool_baseline",
    "visual": "visual_only",
}
DEFAULT_REGRESSION_RANGES: Tuple[Tuple[float, float], ...] = (
    (0.0, 4.0),
    (4.0, 8.0),
    (8.0, 16.0),
    (16.0, 32.0),
    (32.0, 64.0),
    (64.0, math.inf),
)
DEFAULT_THRESHOLDS: Tuple[float, ...] = (0.1, 0.2, 0.3, 0.4, 0.5)


def load_env(env_path: str | None = None) -> None:
    load_dotenv(dotenv_path=env_path, override=False)


def load_yaml(path: str) -> Dict[str, Any]:
    try:
        with open(path, "r", encoding="utf-8") as f:
            return yaml.safe_load(f) or {}
    except FileNotFoundError as exc:
        raise ConfigError(f"Config file not found: {path}") from exc


def worker_threads() -> int:
    raw = os.getenv("MRAVFF_THREADS", "1")
    try:
        return max(1, int(raw))
    except ValueError as exc:
        raise ConfigError(f"MRAVFF_THREADS must be an integer, got {raw!r}") from exc


def resolve_fusion_mode(name: str) -> str:
    mode = FUSION_MODE_ALIASES.get(name, name)
    if mode not in FUSION_MODES:
        choices = ", ".join(sorted(FUSION_MODE_ALIASES) + list(FUSION_MODES))
        raise ConfigError(f"Unknown fusion mode: {name} (choose from {choices})")
    return mode


def parse_thresholds(text: str) -> Tuple[float, ...]:
    """Parse ``start:stop:step`` (inclusive) or a comma-separated list."""
    text = text.strip()
    try:
        if ":" in text:
            start, stop, step = (float(x) for x in text.split(":"))
            if step <= 0 or stop < start:
                raise ConfigError(f"Invalid threshold range: {text}")
            count = int(round((stop - start) / step)) + 1
            values = tuple(round(start + i * step, 10) for i in range(count))
        else:
            values = tuple(float(x) for x in text.split(",") if x.strip())
    except ValueError as exc:
        raise ConfigError(f"Invalid thresholds: {text}") from exc
    if not values or any(not 0.0 < v <= 1.0 for v in values):
        raise ConfigError(f"Thresholds must lie in (0, 1]: {text}")
    return values


def _parse_ranges(raw: Optional[Sequence[Sequence[Any]]]) -> Tuple[Tuple[float, float], ...]:
    if raw is None:
        return DEFAULT_REGRESSION_RANGES
    ranges = []
    for pair in raw:
        lo, hi = pair
        ranges.append((float(lo), math.inf if hi is None else float(hi)))
    return tuple(ranges)


@dataclass(frozen=True)
class ModelConfig:
    num_classes: int
    d_model: int = 128
    num_levels: int = 6
    num_heads: int = 4
    d_visual_in: int = 2304
    d_audio_in: int = 128
    fusion_mode: str = "gated_xattn"
    regression_ranges: Tuple[Tuple[float, float], ...] = DEFAULT_REGRESSION_RANGES
    residual: bool = True
    head_layers: int = 3
    cls_prior_prob: float = 0.01

    def __post_init__(self) -> None:
        if self.num_classes < 1:
            raise ConfigError("num_classes must be >= 1")
        if self.num_levels < 1:
            raise ConfigError("num_levels must be >= 1")
        if self.num_heads < 1 or self.d_model % self.num_heads != 0:
            raise ConfigError(
                f"d_model ({self.d_model}) must be divisible by num_heads ({self.num_heads})"
            )
        if self.fusion_mode not in FUSION_MODES:
            raise ConfigError(f"Unknown fusion mode: {self.fusion_mode}")
        if not 0.0 < self.cls_prior_prob < 1.0:
            raise ConfigError("cls_prior_prob must lie in (0, 1)")
        ranges = self.regression_ranges
        if len(ranges) != self.num_levels:
            raise ConfigError(
                f"Expected {self.num_levels} regression ranges, got {len(ranges)}"
            )
        if ranges[0][0] != 0.0 or not math.isinf(ranges[-1][1]):
            raise ConfigError("Regression ranges must cover [0, inf)")
        for (_, hi), (lo, _) in zip(ranges[:-1], ranges[1:]):
            if hi != lo:
                raise ConfigError("Regression ranges must be contiguous")

    def to_dict(self) -> Dict[str, Any]:
        data = asdict(self)
        data["regression_ranges"] = [
            [lo, None if math.isinf(hi) else hi] for lo, hi in self.regression_ranges
        ]
        return data

    @classmethod
    def from_dict(cls, raw: Dict[str, Any]) -> "ModelConfig":
        raw = dict(raw)
        if "fusion_mode" in raw:
            raw["fusion_mode"] = resolve_fusion_mode(raw["fusion_mode"])
        raw["regression_ranges"] = _parse_ranges(raw.get("regression_ranges"))
        known = set(cls.__dataclass_fields__)
        unknown = set(raw) - known
        if unknown:
            raise ConfigError(f"Unknown model config keys: {sorted(unknown)}")
        try:
            return cls(**raw)
        except TypeError as exc:
            raise ConfigError(f"Invalid model config: {exc}") from exc

    def with_overrides(self, **changes: Any) -> "ModelConfig":
        changes = {k: v for k, v in changes.items() if v is not None}
        return replace(self, **changes)


@dataclass(frozen=True)
class TrainConfig:
    seed: int
    epochs: int = 200
    batch_size: int = 4
    lr: float = 1e-3
    weight_decay: float = 1e-4
    max_clip_len: int = 256
    pad_clips: bool = False
    clip_grad_norm: float = 1.0
    val_every: int = 10
    keep_every: int = 0

    def __post_init__(self) -> None:
        if self.epochs < 1 or self.batch_size < 1:
            raise ConfigError("epochs and batch_size must be >= 1")
        if self.lr <= 0 or self.weight_decay < 0:
            raise ConfigError(f"Invalid optimiser settings: lr={self.lr}, weight_decay={self.weight_decay}")
        if self.max_clip_len < 1:
            raise ConfigError("max_clip_len must be >= 1")
        if self.val_every < 1 or self.keep_every < 0:
            raise ConfigError("val_every must be >= 1 and keep_every >= 0")


@dataclass(frozen=True)
class EvalConfig:
    thresholds: Tuple[float, ...] = DEFAULT_THRESHOLDS
    score_threshold: float = 0.001
    pre_nms_topk: int = 2000
    nms_sigma: float = 0.5
    nms_min_score: float = 0.001
    max_keep: int = 200
    grid_offset: float = 0.5

    def __post_init__(self) -> None:
        if not self.thresholds or any(not 0.0 < t <= 1.0 for t in self.thresholds):
            raise ConfigError(f"Thresholds must lie in (0, 1]: {self.thresholds}")
        if not 0.0 <= self.score_threshold < 1.0:
            raise ConfigError("score_threshold must lie in [0, 1)")
        if self.nms_sigma <= 0 or self.max_keep < 1 or self.pre_nms_topk < 1:
            raise ConfigError("nms_sigma must be positive; max_keep and pre_nms_topk >= 1")


@dataclass(frozen=True)
class PathsConfig:
    features_root: str
    annotations: str
    output_dir: str = "output/run"


@dataclass(frozen=True)
class RunConfig:
    model: ModelConfig
    train: TrainConfig
    eval: EvalConfig
    paths: PathsConfig

    def validate_paths(self) -> None:
        for label, path in (
            ("paths.features_root", self.paths.features_root),
            ("paths.annotations", self.paths.annotations),
        ):
            if not os.path.exists(path):
                raise ConfigError(f"{label} does not exist: {path}")


def load_run_config(path: str, env_path: Optional[str] = None) -> RunConfig:
    load_env(env_path)
    raw = load_yaml(path)
    if "model" not in raw or "paths" not in raw:
        raise ConfigError(f"{path}: run config needs 'model' and 'paths' sections")
    train_raw = dict(raw.get("train") or {})
    if "seed" not in train_raw:
        raise ConfigError(f"{path}: train.seed is mandatory")
    eval_raw = dict(raw.get("eval") or {})
    if isinstance(eval_raw.get("thresholds"), str):
        eval_raw["thresholds"] = parse_thresholds(eval_raw["thresholds"])
    elif eval_raw.get("thresholds") is not None:
        eval_raw["thresholds"] = tuple(float(x) for x in eval_raw["thresholds"])
    try:
        return RunConfig(
            model=ModelConfig.from_dict(raw["model"]),
            train=TrainConfig(**train_raw),
            eval=EvalConfig(**eval_raw),
            paths=PathsConfig(**raw["paths"]),
        )
    except TypeError as exc:
        raise ConfigError(f"{path}: {exc}") from exc


def apply_overrides(
    config: RunConfig,
    *,
    seed: Optional[int] = None,
    epochs: Optional[int] = None,
    fusion_mode: Optional[str] = None,
    residual: Optional[bool] = None,
    thresholds: Optional[Tuple[float, ...]] = None,
    output_dir: Optional[str] = None,
) -> RunConfig:
    """Command-line values win over the config file; ``None`` keeps the file value."""
    model = config.model.with_overrides(
        fusion_mode=resolve_fusion_mode(fusion_mode) if fusion_mode else None,
        residual=residual,
    )
    train = replace(
        config.train,
        **{k: v for k, v in (("seed", seed), ("epochs", epochs)) if v is not None},
    )
    evaluation = config.eval if thresholds is None else replace(config.eval, thresholds=thresholds)
    paths = config.paths if output_dir is None else replace(config.paths, output_dir=output_dir)
    return RunConfig(model=model, train=train, eval=evaluation, paths=paths)
