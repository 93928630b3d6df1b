from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Any, Dict, List, Optional, Sequence, Union

import numpy as np

from src.autodiff import ops
from src.autodiff.tensor import Tensor
from src.core.errors import ConfigError, ContractError
from src.model.fusion import LevelOutput

from .targets import InstantTarget, LevelTargets

FOCAL_ALPHA = 0.25
FOCAL_GAMMA = 2.0

log = logging.getLogger("loss")


def _check_focal_params(alpha: float, gamma: float) -> None:
    if not 0.0 < alpha < 1.0:
        raise ConfigError(f"focal alpha must lie in (0, 1), got {alpha}")
    if gamma < 0.0:
        raise ConfigError(f"focal gamma must be non-negative, got {gamma}")


def sigmoid_focal_loss(
    logits: Tensor,
    targets: np.ndarray,
    alpha: float = FOCAL_ALPHA,
    gamma: float = FOCAL_GAMMA,
) -> Tensor:
    """Elementwise multi-binary focal loss for 0/1 ``targets`` of the logits' shape.

    Written as alpha_t * sigmoid(-z)^gamma * softplus(-z) with z = x * (2y - 1),
    which stays finite for saturated logits.
    """
    _check_focal_params(alpha, gamma)
    y = np.asarray(targets, dtype=np.float64)
    if y.shape != logits.shape:
        raise ContractError(f"focal targets {y.shape} do not match logits {logits.shape}")
    z = ops.multiply(logits, Tensor(2.0 * y - 1.0))
    alpha_t = Tensor(alpha * y + (1.0 - alpha) * (1.0 - y))
    ce = ops.softplus(ops.neg(z))
    if gamma == 0.0:
        return ops.multiply(alpha_t, ce)
    modulator = ops.power(ops.sigmoid(ops.neg(z)), gamma)
    return ops.multiply(alpha_t, ops.multiply(modulator, ce))


def focal_loss(
    logits: Tensor,
    target_class: Optional[int],
    alpha: float = FOCAL_ALPHA,
    gamma: float = FOCAL_GAMMA,
) -> Tensor:
    """Focal loss of one instant's [C] logits, summed over classes; ``None`` is background."""
    y = np.zeros(logits.shape)
    if target_class is not None:
        if not 0 <= target_class < logits.shape[-1]:
            raise ContractError(f"class {target_class} outside [0, {logits.shape[-1]})")
        y[..., target_class] = 1.0
    return ops.sum(sigmoid_focal_loss(logits, y, alpha, gamma))


def giou_loss_segments(
    pred_start: Tensor,
    pred_end: Tensor,
    target_start: np.ndarray,
    target_end: np.ndarray,
) -> Tensor:
    """Elementwise 1 - GIoU of predicted against fixed target segments."""
    ts = Tensor(np.broadcast_to(np.asarray(target_start, dtype=np.float64), pred_start.shape))
    te = Tensor(np.broadcast_to(np.asarray(target_end, dtype=np.float64), pred_end.shape))
    if np.any(te.data - ts.data <= 0):
        raise ContractError("target segments must have positive length")
    zero = Tensor(np.zeros(pred_start.shape))
    inter = ops.maximum(ops.sub(ops.minimum(pred_end, te), ops.maximum(pred_start, ts)), zero)
    pred_len = ops.maximum(ops.sub(pred_end, pred_start), zero)
    union = ops.sub(ops.add(pred_len, ops.sub(te, ts)), inter)
    hull = ops.sub(ops.maximum(pred_end, te), ops.minimum(pred_start, ts))
    iou = ops.divide(inter, union)
    giou = ops.sub(iou, ops.divide(ops.sub(hull, union), hull))
    return ops.sub(1.0, giou)


def iou_loss_1d(
    pred_d_start: Tensor,
    pred_d_end: Tensor,
    target_d_start: np.ndarray,
    target_d_end: np.ndarray,
) -> Tensor:
    """GIoU loss of distance pairs, both segments placed around a shared instant at 0."""
    t_s = np.asarray(target_d_start, dtype=np.float64)
    t_e = np.asarray(target_d_end, dtype=np.float64)
    if np.any(t_s < 0) or np.any(t_e < 0) or np.any(pred_d_start.data < 0) or np.any(pred_d_end.data < 0):
        raise ContractError("iou_loss_1d distances must be non-negative")
    return giou_loss_segments(ops.neg(pred_d_start), pred_d_end, -t_s, t_e)


def distance_iou(pred_s: np.ndarray, pred_e: np.ndarray, tgt_s: np.ndarray, tgt_e: np.ndarray) -> np.ndarray:
    """Plain IoU of distance pairs around a shared instant, numpy only."""
    inter = np.minimum(pred_s, tgt_s) + np.minimum(pred_e, tgt_e)
    union = pred_s + pred_e + tgt_s + tgt_e - inter
    return np.clip(inter / np.maximum(union, 1e-12), 0.0, 1.0)


@dataclass
class LossOutput:
    total: Tensor
    loss_cls: float
    loss_reg: float
    n_pos: int
    n_neg: int
    per_level: List[Dict[str, Any]] = field(default_factory=list)

    def record(self) -> Dict[str, Any]:
        return {
            "loss": self.total.item(),
            "loss_cls": self.loss_cls,
            "loss_reg": self.loss_reg,
            "n_pos": self.n_pos,
        }


def _as_level_targets(
    outputs: Sequence[LevelOutput],
    targets: Sequence[Union[LevelTargets, InstantTarget]],
) -> List[LevelTargets]:
    if targets and all(isinstance(t, InstantTarget) for t in targets):
        return [LevelTargets.from_instants(o.level, o.length, targets) for o in outputs]
    return list(targets)


def total_loss(
    outputs: Sequence[LevelOutput],
    targets: Sequence[Union[LevelTargets, InstantTarget]],
    alpha: float = FOCAL_ALPHA,
    gamma: float = FOCAL_GAMMA,
) -> LossOutput:
    """Quality-weighted objective summed over levels in order.

    Positives contribute sigma_iou * FL + GIoU loss over max(1, N_pos);
    negatives contribute FL over max(1, N_neg). sigma_iou is a constant.
    """
    levels = _as_level_targets(outputs, targets)
    if len(levels) != len(outputs):
        raise ContractError(f"{len(outputs)} level outputs but {len(levels)} target levels")
    for out, tgt in zip(outputs, levels):
        if out.length != tgt.length or out.level != tgt.level:
            raise ContractError(
                f"level {out.level}: output length {out.length} vs target length {tgt.length}"
            )
    n_pos = int(sum(int(t.positive.sum()) for t in levels))
    n_neg = int(sum(int(t.negative.sum()) for t in levels))
    pos_norm = 1.0 / max(1, n_pos)
    neg_norm = 1.0 / max(1, n_neg)

    cls_terms: List[Tensor] = []
    reg_terms: List[Tensor] = []
    per_level: List[Dict[str, Any]] = []
    for out, tgt in zip(outputs, levels):
        pos = tgt.positive
        num_classes = out.cls_logits.shape[0]
        onehot = np.zeros((num_classes, tgt.length))
        onehot[tgt.labels[pos], np.nonzero(pos)[0]] = 1.0
        fl = ops.sum(sigmoid_focal_loss(out.cls_logits, onehot, alpha, gamma), axis=0)  # [T]

        sigma = np.zeros(tgt.length)
        if pos.any():
            sigma[pos] = distance_iou(
                out.d_start.data[pos], out.d_end.data[pos], tgt.d_start[pos], tgt.d_end[pos]
            )
        weights = np.where(pos, sigma * pos_norm, 0.0) + np.where(tgt.negative, neg_norm, 0.0)
        cls_term = ops.sum(ops.multiply(fl, Tensor(weights)))
        cls_terms.append(cls_term)

        level_record: Dict[str, Any] = {"level": tgt.level, "loss_cls": cls_term.item(), "n_pos": int(pos.sum())}
        if pos.any():
            # background instants get a unit dummy target and zero weight
            t_s = np.where(pos, tgt.d_start, 1.0)
            t_e = np.where(pos, tgt.d_end, 1.0)
            reg = iou_loss_1d(out.d_start, out.d_end, t_s, t_e)
            reg_term = ops.sum(ops.multiply(reg, Tensor(np.where(pos, pos_norm, 0.0))))
            reg_terms.append(reg_term)
            level_record["loss_reg"] = reg_term.item()
        else:
            level_record["loss_reg"] = 0.0
        per_level.append(level_record)

    cls_total = cls_terms[0]
    for term in cls_terms[1:]:
        cls_total = ops.add(cls_total, term)
    total = cls_total
    for term in reg_terms:
        total = ops.add(total, term)
    loss_reg = float(sum(r.item() for r in reg_terms))
    for record in per_level:
        log.debug("level loss %s", record)
    return LossOutput(
        total=total,
        loss_cls=cls_total.item(),
        loss_reg=loss_reg,
        n_pos=n_pos,
        n_neg=n_neg,
        per_level=per_level,
    )
