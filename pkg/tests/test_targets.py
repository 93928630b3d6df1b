import math

import numpy as np
import pytest

from src.core.errors import ContractError, ValidationError
from src.core.types import ActionInstance
from src.loss.targets import LevelTargets, assign_level_targets, assign_targets, grid_times

THREE_LEVELS = ((0.0, 4.0), (4.0, 8.0), (8.0, math.inf))
ONE_LEVEL = ((0.0, math.inf),)


def test_grid_times():
    assert grid_times(4, 1, 1.0).tolist() == [1.0, 3.0, 5.0, 7.0]
    assert grid_times(3, 0, 0.5, grid_offset=0.0).tolist() == [0.0, 0.5, 1.0]


def test_no_instances_all_negative():
    levels = assign_level_targets([], [8, 4], 1.0, ((0.0, 4.0), (4.0, math.inf)))
    assert sum(int(t.positive.sum()) for t in levels) == 0
    assert sum(int(t.negative.sum()) for t in levels) == 12


def test_long_action_only_at_coarse_level():
    levels = assign_level_targets([ActionInstance(0.0, 16.0, 2)], [16, 8, 4], 1.0, THREE_LEVELS)
    assert [int(t.positive.sum()) for t in levels] == [0, 0, 2]
    coarse = levels[2]
    assert coarse.labels.tolist() == [-1, 2, 2, -1]
    # grid times 6 s and 10 s at a 4 s level stride
    assert coarse.d_start[1] == pytest.approx(1.5) and coarse.d_end[1] == pytest.approx(2.5)


def test_instant_at_centre_has_symmetric_distances():
    (level,) = assign_level_targets([ActionInstance(3.0, 6.0, 0)], [8], 1.0, ONE_LEVEL)
    assert level.labels[4] == 0
    assert level.d_start[4] == pytest.approx(1.5)
    assert level.d_end[4] == pytest.approx(1.5)


def test_distances_are_in_level_units():
    levels = assign_level_targets([ActionInstance(2.0, 10.0, 1)], [16, 8, 4], 1.0, THREE_LEVELS)
    level1 = levels[1]
    assert np.nonzero(level1.positive)[0].tolist() == [2, 3]
    assert level1.d_start[2] == pytest.approx(1.5)
    assert level1.d_end[2] == pytest.approx(2.5)


def test_center_region_is_strict_and_clipped():
    # centre 4.5 s, radius 1.5 s: only times strictly inside (3, 6) qualify
    (level,) = assign_level_targets([ActionInstance(3.0, 6.0, 0)], [10], 1.0, ONE_LEVEL, grid_offset=0.0)
    assert np.nonzero(level.positive)[0].tolist() == [4, 5]


def test_shortest_instance_wins():
    instances = [ActionInstance(0.0, 10.0, 0), ActionInstance(3.0, 6.0, 1)]
    (level,) = assign_level_targets(instances, [10], 1.0, ONE_LEVEL)
    assert level.labels.tolist() == [-1, -1, -1, 1, 1, 1, -1, -1, -1, -1]
    assert level.matched[3:6].tolist() == [1, 1, 1]


def test_equal_length_tie_goes_to_earlier_start():
    instances = [ActionInstance(3.0, 6.0, 1), ActionInstance(2.0, 5.0, 0)]
    (level,) = assign_level_targets(instances, [8], 1.0, ONE_LEVEL)
    assert level.labels.tolist() == [-1, -1, 0, 0, 0, 1, -1, -1]


def test_padded_instants_are_neither_positive_nor_negative():
    (level,) = assign_level_targets([ActionInstance(5.0, 8.0, 0)], [8], 1.0, ONE_LEVEL, level_valid=[5])
    assert not level.positive.any()
    assert int(level.negative.sum()) == 5


def test_instant_targets_carry_match_and_roundtrip():
    instances = [ActionInstance(2.0, 10.0, 1), ActionInstance(1.0, 2.5, 0)]
    instants = assign_targets(instances, [16, 8, 4], 1.0, THREE_LEVELS)
    assert len(instants) == 28
    positives = [it for it in instants if it.is_positive]
    assert positives
    for it in positives:
        assert it.label is not None and it.d_start + it.d_end > 0
        assert it.matched.label == it.label
    levels = assign_level_targets(instances, [16, 8, 4], 1.0, THREE_LEVELS)
    for lt in levels:
        rebuilt = LevelTargets.from_instants(lt.level, lt.length, instants)
        assert rebuilt.labels.tolist() == lt.labels.tolist()
        assert np.allclose(rebuilt.d_end, lt.d_end)


def test_invalid_inputs():
    with pytest.raises(ValidationError):
        ActionInstance(4.0, 4.0, 0)
    with pytest.raises(ContractError):
        assign_level_targets([], [8, 4], 1.0, ONE_LEVEL)
