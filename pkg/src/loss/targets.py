from __future__ import annotations

from dataclasses import dataclass
from typing import List, Optional, Sequence, Tuple

import numpy as np

from src.core.errors import ContractError, ValidationError
from src.core.types import ActionInstance

CENTER_RADIUS = 1.5
BACKGROUND = -1


@dataclass(frozen=True)
class InstantTarget:
    level: int
    index: int
    is_positive: bool
    label: Optional[int]  # None for background
    d_start: float
    d_end: float
    matched: Optional[ActionInstance] = None

    def __post_init__(self) -> None:
        if self.is_positive and (self.label is None or self.d_start + self.d_end <= 0):
            raise ValidationError(
                f"positive instant ({self.level}, {self.index}) needs a class and a non-empty segment"
            )


@dataclass(frozen=True)
class LevelTargets:
    """Per-level target arrays; ``labels`` is -1 for background and ``valid``
    is False for padded instants, which are neither positive nor negative."""

    level: int
    labels: np.ndarray  # [T_l] int
    d_start: np.ndarray  # [T_l] level-grid units
    d_end: np.ndarray
    matched: np.ndarray  # [T_l] index into the instance list, -1 if none
    valid: np.ndarray  # [T_l] bool

    @property
    def length(self) -> int:
        return int(self.labels.shape[0])

    @property
    def positive(self) -> np.ndarray:
        return self.labels >= 0

    @property
    def negative(self) -> np.ndarray:
        return self.valid & (self.labels < 0)

    def instants(self, instances: Sequence[ActionInstance]) -> List[InstantTarget]:
        out: List[InstantTarget] = []
        for t in range(self.length):
            if not self.valid[t]:
                continue
            pos = bool(self.labels[t] >= 0)
            out.append(
                InstantTarget(
                    level=self.level,
                    index=t,
                    is_positive=pos,
                    label=int(self.labels[t]) if pos else None,
                    d_start=float(self.d_start[t]),
                    d_end=float(self.d_end[t]),
                    matched=instances[self.matched[t]] if pos else None,
                )
            )
        return out

    @classmethod
    def from_instants(cls, level: int, length: int, instants: Sequence[InstantTarget]) -> "LevelTargets":
        labels = np.full(length, BACKGROUND, dtype=np.int64)
        d_start = np.zeros(length)
        d_end = np.zeros(length)
        valid = np.zeros(length, dtype=bool)
        for it in instants:
            if it.level != level:
                continue
            if not 0 <= it.index < length:
                raise ContractError(f"instant index {it.index} outside level {level} of length {length}")
            valid[it.index] = True
            if it.is_positive:
                labels[it.index] = it.label
                d_start[it.index] = it.d_start
                d_end[it.index] = it.d_end
        return cls(level, labels, d_start, d_end, np.where(labels >= 0, 0, -1), valid)


def grid_times(length: int, level: int, stride_seconds: float, grid_offset: float = 0.5) -> np.ndarray:
    return (np.arange(length) + grid_offset) * (2**level) * stride_seconds


def assign_level_targets(
    instances: Sequence[ActionInstance],
    level_lengths: Sequence[int],
    stride_seconds: float,
    regression_ranges: Sequence[Tuple[float, float]],
    grid_offset: float = 0.5,
    level_valid: Optional[Sequence[int]] = None,
    radius: float = CENTER_RADIUS,
) -> List[LevelTargets]:
    """Center-sampling assignment with per-level regression ranges.

    Ranges are tested in base-grid units; stored distances are in level units.
    When several instances claim an instant, the shortest wins, then the
    earliest start.
    """
    if len(regression_ranges) != len(level_lengths):
        raise ContractError(
            f"{len(level_lengths)} levels but {len(regression_ranges)} regression ranges"
        )
    for inst in instances:
        if not inst.start < inst.end:
            raise ValidationError(f"instance start {inst.start} must precede end {inst.end}")
    order = sorted(range(len(instances)), key=lambda i: (instances[i].length, instances[i].start, i))
    result: List[LevelTargets] = []
    for level, length in enumerate(level_lengths):
        level_stride = (2**level) * stride_seconds
        times = grid_times(length, level, stride_seconds, grid_offset)
        valid_len = length if level_valid is None else level_valid[level]
        valid = np.arange(length) < valid_len
        labels = np.full(length, BACKGROUND, dtype=np.int64)
        d_start = np.zeros(length)
        d_end = np.zeros(length)
        matched = np.full(length, -1, dtype=np.int64)
        r_min, r_max = regression_ranges[level]
        for i in order:
            inst = instances[i]
            centre = 0.5 * (inst.start + inst.end)
            t_min = max(centre - radius * level_stride, inst.start)
            t_max = min(centre + radius * level_stride, inst.end)
            left = times - inst.start
            right = inst.end - times
            reach = np.maximum(left, right) / stride_seconds
            hit = (
                valid
                & (labels == BACKGROUND)
                & (times - t_min > 0)
                & (t_max - times > 0)
                & (reach >= r_min)
                & (reach < r_max)
            )
            labels[hit] = inst.label
            d_start[hit] = left[hit] / level_stride
            d_end[hit] = right[hit] / level_stride
            matched[hit] = i
        result.append(LevelTargets(level, labels, d_start, d_end, matched, valid))
    return result


def assign_targets(
    instances: Sequence[ActionInstance],
    level_lengths: Sequence[int],
    stride_seconds: float,
    regression_ranges: Sequence[Tuple[float, float]],
    grid_offset: float = 0.5,
    level_valid: Optional[Sequence[int]] = None,
) -> List[InstantTarget]:
    levels = assign_level_targets(
        instances, level_lengths, stride_seconds, regression_ranges, grid_offset, level_valid
    )
    return [it for lt in levels for it in lt.instants(instances)]
