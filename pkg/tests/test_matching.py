import itertools

import numpy as np
import pytest
from hypothesis import given, strategies as st

from irsnoma.matching import (
    Matching,
    UtilityContext,
    assign_channels,
    best_partition_utility,
    blocking_pairs,
    count_assignments,
    enumerate_assignments,
    init_matching,
    is_swap_blocking,
)
from irsnoma.scenario import SystemConfig, sample_channels

from conftest import synthetic_channel


def matching_from(channel_of, n_channels, cap):
    return Matching(n_channels, cap, np.asarray(channel_of))


def ctx_from(gains, power=1.0, noise=1.0):
    return UtilityContext(np.asarray(gains, float), power, noise)


def test_rates_follow_ascending_gain_sic():
    ctx = ctx_from([[1.0, 4.0]], power=1.0)
    r = ctx.rates(0, [1, 0])
    # weak user decoded first, interfered by the strong one
    assert r[0] == pytest.approx(np.log2(1 + 1.0 / (1.0 + 1.0)))
    assert r[1] == pytest.approx(np.log2(1 + 4.0))


def test_init_matching_follows_strongest_channel():
    chan = synthetic_channel(np.sqrt([[3.0, 1.0], [2.0, 5.0]]))
    cfg = SystemConfig(n_channels=2, n_users=2, per_channel_cap=1, n_elements=0)
    m = init_matching(chan, cfg)
    assert m.channel_of.tolist() == [0, 1]
    # the exhaustive two-permutation oracle agrees
    gains = np.array([[3.0, 1.0], [2.0, 5.0]])
    best = max(itertools.permutations(range(2)), key=lambda perm: sum(gains[perm[k], k] for k in range(2)))
    assert list(best) == [0, 1]


def test_init_matching_tie_breaks_by_channel_index():
    chan = synthetic_channel(np.ones((3, 4)))
    cfg = SystemConfig(n_channels=3, n_users=4, per_channel_cap=2, n_elements=0)
    first = init_matching(chan, cfg)
    again = init_matching(chan, cfg)
    assert first.channel_of.tolist() == again.channel_of.tolist() == [0, 0, 1, 1]


def test_rejection_sets_are_consistent():
    cfg = SystemConfig(n_channels=2, n_users=4, per_channel_cap=2)
    m = init_matching(sample_channels(cfg, 5), cfg)
    m.check()
    for n, rejected in enumerate(m.rejected_by):
        for k in rejected:
            assert n in m.rejected_channels[k]


def test_swap_of_identical_users_is_not_blocking():
    ctx = ctx_from(np.ones((2, 2)))
    m = matching_from([0, 1], 2, 1)
    assert not is_swap_blocking(m, 0, 1, ctx)


def test_crossing_swap_that_helps_everyone_is_blocking():
    # user 0 is strong on channel 1, user 1 is strong on channel 0
    ctx = ctx_from([[0.1, 9.0], [9.0, 0.1]])
    m = matching_from([0, 1], 2, 1)
    before = [ctx.channel_utility(0, [0]), ctx.channel_utility(1, [1])]
    after = [ctx.channel_utility(0, [1]), ctx.channel_utility(1, [0])]
    assert all(a > b for a, b in zip(after, before))
    assert is_swap_blocking(m, 0, 1, ctx)


def test_swap_that_lowers_one_channel_is_not_blocking():
    ctx = ctx_from([[5.0, 1.0], [1.0, 2.0]])
    m = matching_from([0, 1], 2, 1)
    # the swap lowers channel 0's utility while raising nothing on it
    assert ctx.channel_utility(0, [1]) < ctx.channel_utility(0, [0])
    assert not is_swap_blocking(m, 0, 1, ctx)


def test_same_channel_pair_is_rejected():
    ctx = ctx_from(np.ones((2, 3)))
    m = matching_from([0, 0, 1], 2, 2)
    with pytest.raises(ValueError):
        is_swap_blocking(m, 0, 1, ctx)


@pytest.mark.parametrize("seed", range(10))
def test_assign_channels_is_stable_and_monotone(seed):
    cfg = SystemConfig(n_channels=2, n_users=4, per_channel_cap=2)
    chan = sample_channels(cfg, seed)
    m = assign_channels(chan, cfg)
    m.check()
    ctx = UtilityContext.from_config(chan, cfg)
    assert blocking_pairs(m, ctx, cfg.swap_margin) == []
    assert m.swaps <= cfg.swap_safety_factor * cfg.n_users**2
    assert len(m.utility_trace) == m.swaps + 1


@pytest.mark.parametrize("seed", range(5))
def test_assign_channels_close_to_exhaustive_partition(seed):
    cfg = SystemConfig(n_channels=2, n_users=4, per_channel_cap=2)
    chan = sample_channels(cfg, seed)
    ctx = UtilityContext.from_config(chan, cfg)
    got = assign_channels(chan, cfg).total_utility(ctx)
    _, best = best_partition_utility(chan, cfg)
    assert got <= best + 1e-9
    assert got >= 0.9 * best


def test_count_matches_enumeration():
    assert count_assignments(4, 2, 2) == 6
    for users, channels, cap in [(3, 2, 2), (4, 3, 2), (5, 2, 3), (2, 2, 1)]:
        assert count_assignments(users, channels, cap) == sum(1 for _ in enumerate_assignments(users, channels, cap))


@given(st.integers(1, 5), st.integers(1, 3), st.integers(1, 3))
def test_enumerated_assignments_respect_the_cap(users, channels, cap):
    seen = set()
    for a in enumerate_assignments(users, channels, cap):
        assert len(a) == channels
        assert sorted(k for u in a for k in u) == list(range(users))
        assert all(len(u) <= cap for u in a)
        seen.add(a)
    assert len(seen) == count_assignments(users, channels, cap)
