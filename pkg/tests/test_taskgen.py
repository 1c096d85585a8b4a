from __future__ import annotations

import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from cgsnn import taskgen
from cgsnn.taskgen import Decision, InvalidGrid, decision_target, encode_stimulus, make_curriculum, make_grid


def test_grid_size_and_rewards():
    grid = make_grid(5)
    assert len(grid) == 50
    s = next(t for t in grid if t.context == 1 and t.leaf_level == 5)
    assert s.reward == 2
    assert all(t.reward == 0 for t in grid if (t.leaf_level if t.context == 1 else t.branch_level) == 3)


def test_congruent_count():
    task1 = [t for t in make_grid(5) if t.context == 1]
    assert sum(t.congruent is True for t in task1) == 8
    brute = sum(
        1 for b in range(1, 6) for l in range(1, 6) if np.sign(l - 3) == np.sign(b - 3) != 0
    )
    assert brute == 8


@pytest.mark.parametrize("D", [2, 4, 1])
def test_invalid_grid(D):
    with pytest.raises(InvalidGrid):
        make_grid(D)


def test_encode_one_hot_without_blur():
    v = encode_stimulus(2, 4, 5, blur=0.0)
    assert v.sum() == 1.0 and v[(2 - 1) * 5 + 3] == 1.0


def test_encode_gaussian_neighbour():
    v = encode_stimulus(3, 3, 5, blur=0.8).reshape(5, 5)
    assert v[2, 2] == 1.0
    assert v[2, 3] == pytest.approx(math.exp(-1 / (2 * 0.8**2)), rel=1e-12)


@given(st.integers(1, 5), st.integers(1, 5), st.integers(1, 5), st.integers(1, 5))
def test_distinct_deltas_are_orthogonal(b1, l1, b2, l2):
    a, b = encode_stimulus(b1, l1, 5, 0.0), encode_stimulus(b2, l2, 5, 0.0)
    assert (a @ b == 0) == ((b1, l1) != (b2, l2))


@given(st.integers(1, 7), st.integers(1, 7), st.floats(0, 3))
def test_features_in_unit_interval(b, l, blur):
    v = encode_stimulus(b, l, 7, blur)
    assert v.shape == (49,) and v.min() >= 0 and v.max() <= 1


@given(st.sampled_from([3, 5, 7, 9]))
def test_reward_antisymmetry(D):
    for level in range(1, D + 1):
        assert taskgen.level_reward(level, D) == -taskgen.level_reward(D + 1 - level, D)


def test_context_swap_keeps_features():
    s1 = taskgen.make_stimulus(2, 5, 1, 5)
    s2 = taskgen.make_stimulus(2, 5, 2, 5)
    np.testing.assert_array_equal(s1.features, s2.features)
    assert (s1.reward, s2.reward) == (2, -1)


def test_blocked_ordering():
    cur = make_curriculum("blocked", 3, seed=0)
    assert tuple(cur.contexts) == (1, 1, 1, 2, 2, 2)


def test_interleaved_deterministic_and_mixed():
    a = make_curriculum("interleaved", 400, seed=11)
    b = make_curriculum("interleaved", 400, seed=11)
    assert [(s.context, s.branch_level, s.leaf_level) for s in a.trials] == [
        (s.context, s.branch_level, s.leaf_level) for s in b.trials
    ]
    first = a.contexts[:400]
    assert 0.4 <= np.mean(first == 1) <= 0.6
    assert len(a) == 800 and np.sum(a.contexts == 1) == 400


def test_decision_targets():
    s = taskgen.make_stimulus(1, 5, 1, 5)
    assert decision_target(s) is Decision.ACCEPT
    assert decision_target(taskgen.make_stimulus(1, 2, 1, 5)) is Decision.REJECT
    assert decision_target(taskgen.make_stimulus(1, 3, 1, 5)) is Decision.NEUTRAL


def test_csv_rows():
    text = taskgen.trials_to_csv(make_grid(3))
    lines = text.strip().split("\n")
    assert lines[0] == "index,context,branch,leaf,reward,congruent"
    assert len(lines) == 19
