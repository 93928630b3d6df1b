from __future__ import annotations

import logging
import math
from dataclasses import dataclass
from typing import List, Optional, Tuple, Union

import numpy as np

from src.autodiff import ops
from src.autodiff.nn import ChannelLayerNorm, Conv1d, Module
from src.autodiff.tensor import Tensor, as_tensor
from src.core.config import ModelConfig
from src.core.errors import ConfigError, ShapeError

log = logging.getLogger("model")

ArrayLike = Union[np.ndarray, Tensor]


@dataclass(frozen=True)
class PyramidFeatures:
    visual: List[Tensor]  # [d_model, T_l]
    audio: List[Tensor]  # [d_model, A_l]
    visual_valid: List[int]
    audio_valid: List[int]

    @property
    def num_levels(self) -> int:
        return len(self.visual)


@dataclass(frozen=True)
class LevelOutput:
    level: int
    cls_logits: Tensor  # [C, T_l]
    d_start: Tensor  # [T_l], level-grid units
    d_end: Tensor  # [T_l]
    gate: Optional[Tensor]  # [T_l]; None outside gated mode
    valid: int

    @property
    def length(self) -> int:
        return int(self.cls_logits.shape[1])


def resample_matrix(n_src: int, n_dst: int, src_valid: Optional[int] = None, dst_valid: Optional[int] = None) -> np.ndarray:
    """[n_src, n_dst] linear-interpolation matrix; ``x @ M`` resamples time.

    Only the valid prefixes are mapped onto each other; padded columns are zero.
    """
    src_valid = n_src if src_valid is None else src_valid
    dst_valid = n_dst if dst_valid is None else dst_valid
    m = np.zeros((n_src, n_dst))
    if src_valid == dst_valid:
        m[np.arange(src_valid), np.arange(dst_valid)] = 1.0
        return m
    pos = (np.arange(dst_valid) + 0.5) * src_valid / dst_valid - 0.5
    pos = np.clip(pos, 0.0, src_valid - 1)
    lo = np.floor(pos).astype(int)
    hi = np.minimum(lo + 1, src_valid - 1)
    frac = pos - lo
    cols = np.arange(dst_valid)
    np.add.at(m, (lo, cols), 1.0 - frac)
    np.add.at(m, (hi, cols), frac)
    return m


def resample_time(x: Tensor, length: int, src_valid: int, dst_valid: int) -> Tensor:
    if x.shape[1] == length and src_valid == dst_valid:
        return x
    return ops.matmul(x, Tensor(resample_matrix(x.shape[1], length, src_valid, dst_valid)))


def mask_time(x: Tensor, valid: int) -> Tensor:
    """Zero positions ``>= valid`` along the time axis of a [C, T] map."""
    if valid >= x.shape[1]:
        return x
    keep = (np.arange(x.shape[1]) < valid).astype(np.float64)
    return ops.multiply(x, Tensor(np.broadcast_to(keep, x.shape)))


class ProjectionBlock(Module):
    def __init__(self, rng: np.random.Generator, c_in: int, c_out: int) -> None:
        self.conv = Conv1d(rng, c_in, c_out, kernel=3)
        self.norm = ChannelLayerNorm(c_out)

    def __call__(self, x: Tensor, valid: int) -> Tensor:
        return mask_time(ops.relu(self.norm(self.conv(x))), valid)


def build_pyramid(
    x0: Tensor,
    a0: Optional[Tensor],
    num_levels: int,
    visual_valid: Optional[int] = None,
    audio_valid: Optional[int] = None,
) -> PyramidFeatures:
    t0 = x0.shape[1]
    if t0 < 2 ** (num_levels - 1):
        feasible = int(math.floor(math.log2(t0))) + 1 if t0 >= 1 else 0
        raise ConfigError(
            f"Sequence of length {t0} is too short for {num_levels} pyramid levels "
            f"(max feasible L = {feasible})"
        )
    v_valid = t0 if visual_valid is None else visual_valid
    visual, audio = [x0], []
    v_lens, a_lens = [v_valid], []
    if a0 is not None:
        a_valid = a0.shape[1] if audio_valid is None else audio_valid
        audio.append(a0)
        a_lens.append(a_valid)
    for _ in range(1, num_levels):
        v_valid = (v_valid + 1) // 2
        visual.append(mask_time(ops.maxpool1d(visual[-1], 3, 2, 1), v_valid))
        v_lens.append(v_valid)
        if audio:
            a_valid = max(1, (a_lens[-1] + 1) // 2)
            audio.append(mask_time(ops.maxpool1d(audio[-1], 3, 2, 1), a_valid))
            a_lens.append(a_valid)
    return PyramidFeatures(visual, audio, v_lens, a_lens)


class CrossAttention(Module):
    """Multi-head scaled dot-product attention, queries from one modality and
    keys/values from the other. No positional encoding."""

    def __init__(self, rng: np.random.Generator, d_model: int, num_heads: int) -> None:
        if d_model % num_heads != 0:
            raise ConfigError(f"d_model ({d_model}) must be divisible by num_heads ({num_heads})")
        self.num_heads = num_heads
        self.head_dim = d_model // num_heads
        self.q_proj = Conv1d(rng, d_model, d_model)
        self.k_proj = Conv1d(rng, d_model, d_model)
        self.v_proj = Conv1d(rng, d_model, d_model)
        self.out_proj = Conv1d(rng, d_model, d_model)
        self.last_weights: Optional[np.ndarray] = None

    def _heads(self, x: Tensor) -> Tensor:
        # [d, T] -> [H, T, head_dim]
        return ops.transpose_last2(ops.reshape(x, (self.num_heads, self.head_dim, x.shape[1])))

    def __call__(self, query: Tensor, context: Tensor, key_valid: Optional[int] = None) -> Tensor:
        if query.shape[0] != context.shape[0]:
            raise ShapeError(f"cross_attention: query {query.shape} and context {context.shape} differ in channels")
        t_q, t_k = query.shape[1], context.shape[1]
        q = self._heads(self.q_proj(query))
        k = self._heads(self.k_proj(context))
        v = self._heads(self.v_proj(context))
        scores = ops.scale(ops.matmul(q, ops.transpose_last2(k)), 1.0 / math.sqrt(self.head_dim))
        key_mask = None
        if key_valid is not None and key_valid < t_k:
            key_mask = np.arange(t_k) < key_valid
        weights = ops.softmax_lastdim(scores, key_mask)
        self.last_weights = weights.numpy()
        out = ops.matmul(weights, v)  # [H, T_q, head_dim]
        out = ops.reshape(ops.transpose_last2(out), (self.num_heads * self.head_dim, t_q))
        return self.out_proj(out)


class Gate(Module):
    """Per-instant scalar g = sigmoid(w . x_t + b)."""

    def __init__(self, rng: np.random.Generator, d_model: int) -> None:
        self.fc = Conv1d(rng, d_model, 1)

    def __call__(self, x: Tensor) -> Tensor:
        return ops.sigmoid(self.fc(x))  # [1, T]


def gated_fuse(
    x: Tensor,
    p_x: Tensor,
    p_a: Tensor,
    g: Tensor,
    fuse: Conv1d,
    residual: bool = True,
) -> Tensor:
    """F = x + conv_k1([g * P_x ; (1 - g) * P_a]); ``g`` is [1, T] or [T]."""
    if not (x.shape == p_x.shape == p_a.shape):
        raise ShapeError(f"gated_fuse: shapes {x.shape}, {p_x.shape}, {p_a.shape} differ")
    if g.ndim == 1:
        g = ops.reshape(g, (1, g.shape[0]))
    g = ops.expand(g, x.shape)
    fused = fuse(ops.concat([ops.multiply(g, p_x), ops.multiply(ops.sub(1.0, g), p_a)], axis=0))
    return ops.add(x, fused) if residual else fused


class GatedFusionLevel(Module):
    def __init__(self, rng: np.random.Generator, d_model: int, num_heads: int, residual: bool) -> None:
        self.visual_to_audio = CrossAttention(rng, d_model, num_heads)
        self.audio_to_visual = CrossAttention(rng, d_model, num_heads)
        self.gate = Gate(rng, d_model)
        self.fuse = Conv1d(rng, 2 * d_model, d_model)
        self.residual = residual

    def __call__(self, x: Tensor, a: Tensor, x_valid: int, a_valid: int) -> Tuple[Tensor, Tensor]:
        p_x = self.visual_to_audio(x, a, a_valid)
        p_a = self.audio_to_visual(a, x, x_valid)
        p_a = resample_time(p_a, x.shape[1], a_valid, x_valid)
        g = self.gate(x)
        fused = gated_fuse(x, p_x, p_a, g, self.fuse, self.residual)
        return mask_time(fused, x_valid), g


class ConcatFusion(Module):
    def __init__(self, rng: np.random.Generator, d_model: int, residual: bool) -> None:
        self.fuse = Conv1d(rng, 2 * d_model, d_model)
        self.residual = residual

    def __call__(self, x: Tensor, a: Tensor, x_valid: int, a_valid: int) -> Tuple[Tensor, None]:
        a_t = resample_time(a, x.shape[1], a_valid, x_valid)
        fused = self.fuse(ops.concat([x, a_t], axis=0))
        if self.residual:
            fused = ops.add(x, fused)
        return mask_time(fused, x_valid), None


class PoolFusion(Module):
    def __call__(self, x: Tensor, a: Tensor, x_valid: int, a_valid: int) -> Tuple[Tensor, None]:
        a_t = resample_time(a, x.shape[1], a_valid, x_valid)
        return mask_time(ops.maximum(x, a_t), x_valid), None


class HeadTower(Module):
    def __init__(self, rng: np.random.Generator, d_model: int, layers: int) -> None:
        self.convs = [Conv1d(rng, d_model, d_model, kernel=3) for _ in range(layers)]
        self.norms = [ChannelLayerNorm(d_model) for _ in range(layers)]

    def __call__(self, x: Tensor, valid: int) -> Tensor:
        for conv, norm in zip(self.convs, self.norms):
            x = mask_time(ops.relu(norm(conv(x))), valid)
        return x


class ClsHead(Module):
    def __init__(self, rng: np.random.Generator, d_model: int, num_classes: int, layers: int, prior_prob: float) -> None:
        self.tower = HeadTower(rng, d_model, layers)
        self.out = Conv1d(rng, d_model, num_classes, kernel=3)
        self.out.bias.data = np.full(num_classes, -math.log((1.0 - prior_prob) / prior_prob))

    def __call__(self, x: Tensor, valid: int) -> Tensor:
        return self.out(self.tower(x, valid))


class RegHead(Module):
    def __init__(self, rng: np.random.Generator, d_model: int, layers: int) -> None:
        self.tower = HeadTower(rng, d_model, layers)
        self.out = Conv1d(rng, d_model, 2, kernel=3)

    def __call__(self, x: Tensor, valid: int) -> Tuple[Tensor, Tensor]:
        offsets = ops.softplus(self.out(self.tower(x, valid)))
        return ops.slice(offsets, 0), ops.slice(offsets, 1)


class FusionNetwork(Module):
    """Projection, audio-visual pyramid, per-level fusion and shared heads.

    The input projections are drawn from the seeded generator before any
    mode-specific block, so equal seeds give equal projections in every
    fusion mode.
    """

    def __init__(self, config: ModelConfig, seed: int = 0) -> None:
        rng = np.random.default_rng(seed)
        self.config = config
        d = config.d_model
        self.visual_proj = ProjectionBlock(rng, config.d_visual_in, d)
        self.audio_proj = (
            None if config.fusion_mode == "visual_only" else ProjectionBlock(rng, config.d_audio_in, d)
        )
        if config.fusion_mode == "gated_xattn":
            self.fusion = [
                GatedFusionLevel(rng, d, config.num_heads, config.residual)
                for _ in range(config.num_levels)
            ]
        elif config.fusion_mode == "concat_baseline":
            self.fusion = [ConcatFusion(rng, d, config.residual) for _ in range(config.num_levels)]
        elif config.fusion_mode == "channel_pool_baseline":
            self.fusion = [PoolFusion() for _ in range(config.num_levels)]
        else:
            self.fusion = []
        self.cls_head = ClsHead(rng, d, config.num_classes, config.head_layers, config.cls_prior_prob)
        self.reg_head = RegHead(rng, d, config.head_layers)
        self.name_parameters()
        log.debug("Built %s network with %d parameters", config.fusion_mode, self.num_parameters())

    def project_inputs(
        self,
        visual: ArrayLike,
        audio: ArrayLike,
        visual_valid: Optional[int] = None,
        audio_valid: Optional[int] = None,
    ) -> Tuple[Tensor, Optional[Tensor]]:
        visual, audio = as_tensor(visual), as_tensor(audio)
        cfg = self.config
        if visual.ndim != 2 or visual.shape[0] != cfg.d_visual_in:
            raise ShapeError(f"visual input must be [{cfg.d_visual_in}, T], got {visual.shape}")
        if audio.ndim != 2 or audio.shape[0] != cfg.d_audio_in:
            raise ShapeError(f"audio input must be [{cfg.d_audio_in}, A], got {audio.shape}")
        if visual.shape[1] < 1 or audio.shape[1] < 1:
            raise ShapeError(f"empty input sequence: visual {visual.shape}, audio {audio.shape}")
        v_valid = visual.shape[1] if visual_valid is None else visual_valid
        a_valid = audio.shape[1] if audio_valid is None else audio_valid
        x0 = self.visual_proj(mask_time(visual, v_valid), v_valid)
        if self.audio_proj is None:
            return x0, None
        return x0, self.audio_proj(mask_time(audio, a_valid), a_valid)

    def __call__(self, *args, **kwargs) -> List[LevelOutput]:
        return self.forward(*args, **kwargs)

    def forward(
        self,
        visual: ArrayLike,
        audio: ArrayLike,
        visual_valid: Optional[int] = None,
        audio_valid: Optional[int] = None,
    ) -> List[LevelOutput]:
        visual, audio = as_tensor(visual), as_tensor(audio)
        v_valid = visual.shape[1] if visual_valid is None else visual_valid
        a_valid = audio.shape[1] if audio_valid is None else audio_valid
        x0, a0 = self.project_inputs(visual, audio, v_valid, a_valid)
        pyramid = build_pyramid(x0, a0, self.config.num_levels, v_valid, a_valid)
        outputs: List[LevelOutput] = []
        for level in range(pyramid.num_levels):
            x = pyramid.visual[level]
            valid = pyramid.visual_valid[level]
            gate: Optional[Tensor] = None
            if self.fusion:
                x, gate = self.fusion[level](x, pyramid.audio[level], valid, pyramid.audio_valid[level])
            d_start, d_end = self.reg_head(x, valid)
            outputs.append(
                LevelOutput(
                    level=level,
                    cls_logits=self.cls_head(x, valid),
                    d_start=d_start,
                    d_end=d_end,
                    gate=None if gate is None else ops.reshape(gate, (gate.shape[1],)),
                    valid=valid,
                )
            )
        return outputs
