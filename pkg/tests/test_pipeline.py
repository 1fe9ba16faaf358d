import decimal
import math
from decimal import Decimal

import numpy as np
import pytest
from hypothesis import given, strategies as st

from irsnoma.pipeline import (
    NOMA_NO_IRS,
    SearchTooLarge,
    check_solution,
    exhaustive_assignment,
    exhaustive_order,
    no_irs_variant,
    oma_waterfill,
    placement_gain_approx,
    random_order_variant,
    run_algorithm,
    three_step,
    water_fill,
)
from irsnoma.scenario import SystemConfig, sample_channels

from conftest import synthetic_channel
from oracles import recheck_solution, water_fill_bisection

SMALL = SystemConfig(n_channels=2, n_users=4, per_channel_cap=2, n_elements=4)


def recheck(chan, sol, config):
    assert recheck_solution(chan, sol, config) == []


# water-filling


def test_water_fill_closed_form_example():
    np.testing.assert_allclose(water_fill([4.0, 1.0], 1.0), [0.875, 0.125], atol=1e-12)


def test_water_fill_flat_for_equal_gains():
    np.testing.assert_allclose(water_fill([2.0] * 4, 3.0), [0.75] * 4)


@given(st.lists(st.floats(1e-3, 1e3), min_size=1, max_size=6), st.floats(1e-3, 1e2))
def test_water_fill_matches_bisection(gains, p_max):
    p = water_fill(gains, p_max)
    assert p.sum() == pytest.approx(p_max, rel=1e-9)
    np.testing.assert_allclose(p, water_fill_bisection(gains, p_max), atol=1e-7 * p_max)


def test_water_fill_floors_and_errors():
    p = water_fill([4.0, 1.0], 1.0, floors=[0.0, 0.3])
    np.testing.assert_allclose(p, [0.7, 0.3])
    with pytest.raises(ValueError):
        water_fill([1.0, 1.0], 1.0, floors=[0.8, 0.8])
    with pytest.raises(ValueError):
        water_fill([0.0, 1.0], 1.0)


def test_single_user_oma_rate():
    chan = synthetic_channel(np.array([[0.5 + 0.5j]]), noise_power=0.1)
    cfg = SystemConfig(n_channels=1, n_users=1, n_elements=0, p_max=2.0)
    sol = oma_waterfill(chan, cfg, 0)
    assert sol.throughput == pytest.approx(math.log2(1 + 2.0 * 0.5 / 0.1))


# pipelines


@pytest.mark.parametrize("seed", range(4))
def test_three_step_solution_is_feasible_and_monotone(seed):
    chan = sample_channels(SMALL, seed)
    sol = three_step(chan, SMALL, seed)
    assert sol.feasible, sol.info
    assert check_solution(chan, sol, SMALL) == []
    recheck(chan, sol, SMALL)
    assert np.all(np.diff(sol.trace) >= -1e-6)
    assert sol.iterations <= SMALL.max_outer_iters


def test_three_step_is_deterministic():
    chan = sample_channels(SMALL, 8)
    a, b = three_step(chan, SMALL, 8), three_step(chan, SMALL, 8)
    assert a.throughput == b.throughput
    np.testing.assert_array_equal(a.e, b.e)


def test_random_order_with_one_user_per_channel_equals_three_step():
    cfg = SystemConfig(n_channels=3, n_users=3, per_channel_cap=1, n_elements=4)
    chan = sample_channels(cfg, 1)
    a, b = random_order_variant(chan, cfg, 1), three_step(chan, cfg, 1)
    assert a.throughput == b.throughput
    assert a.order == b.order


def test_random_order_draws_permutations():
    chan = sample_channels(SMALL, 2)
    sol = random_order_variant(chan, SMALL, 2)
    assert sorted(map(sorted, sol.order)) == sorted(map(sorted, sol.assignment))


def test_no_irs_equals_three_step_without_reflection_path():
    chan = sample_channels(SMALL, 5)
    a = no_irs_variant(chan, SMALL, "noma", 5)
    b = three_step(chan.without_irs(), SMALL, 5, NOMA_NO_IRS)
    assert a.throughput == b.throughput
    with pytest.raises(ValueError):
        no_irs_variant(chan, SMALL, "tdma", 5)


@pytest.mark.parametrize("seed", range(3))
def test_oma_solutions_recheck(seed):
    chan = sample_channels(SMALL, seed)
    for label in ("TwoStep-IRS-OMA", "OMA-noIRS", "NOMA-noIRS"):
        sol = run_algorithm(label, chan, SMALL, seed)
        # the no-IRS variants report an empty reflection vector
        target = chan.without_irs() if label.endswith("noIRS") else chan
        if sol.feasible:
            recheck(target, sol, SMALL)


@pytest.mark.parametrize("seed", range(3))
def test_exhaustive_order_dominates_sdr_order(seed):
    chan = sample_channels(SMALL, seed)
    base = three_step(chan, SMALL, seed)
    order, best = exhaustive_order(chan, base.assignment, SMALL, seed)
    assert best.throughput >= base.throughput - 1e-9
    assert sorted(map(sorted, order)) == sorted(map(sorted, base.assignment))


def test_search_caps_report_counts():
    chan = sample_channels(SMALL, 0)
    with pytest.raises(SearchTooLarge, match="4"):
        exhaustive_order(chan, ((0, 1), (2, 3)), SMALL.replace(max_order_combinations=3), 0)
    with pytest.raises(SearchTooLarge, match="6"):
        exhaustive_assignment(chan, SMALL.replace(max_assignments=5), 0)


def test_single_channel_exhaustive_is_the_order_search():
    cfg = SystemConfig(n_channels=1, n_users=2, per_channel_cap=2, n_elements=4)
    chan = sample_channels(cfg, 3)
    full = exhaustive_assignment(chan, cfg, 3)
    _, by_order = exhaustive_order(chan, ((0, 1),), cfg, 3)
    assert full.throughput == by_order.throughput


def test_exhaustive_assignment_dominates_three_step():
    cfg = SMALL.replace(n_elements=2)
    chan = sample_channels(cfg, 1)
    full = exhaustive_assignment(chan, cfg, 1)
    assert full.feasible
    assert full.throughput >= three_step(chan, cfg, 1).throughput - 1e-9
    oma = exhaustive_assignment(chan, cfg, 1, mode="oma")
    assert oma.throughput >= oma_waterfill(chan, cfg, 1).throughput - 1e-9 or not oma.feasible


def test_unknown_label():
    with pytest.raises(ValueError, match="unknown algorithm"):
        run_algorithm("Greedy", sample_channels(SMALL, 0), SMALL, 0)


# placement


def ternary_argmin(f, lo, hi, iters=300):
    for _ in range(iters):
        a, b = lo + (hi - lo) / 3, hi - (hi - lo) / 3
        if f(a) < f(b):
            hi = b
        else:
            lo = a
    return (lo + hi) / 2


def test_placement_minimum_is_the_midpoint():
    # the direct path swamps the reflected one in double precision, so the
    # tight check runs the same function in 60-digit decimal arithmetic
    with decimal.localcontext() as ctx:
        ctx.prec = 60
        for d in ("20", "50", "80"):
            d = Decimal(d)
            x = ternary_argmin(lambda t: placement_gain_approx(t, d), Decimal("1e-6"), d - Decimal("1e-6"))
            assert abs(x - d / 2) <= Decimal("1e-9")
    for d in (20.0, 50.0, 80.0):
        x = ternary_argmin(lambda t: placement_gain_approx(t, d), 1e-6, d - 1e-6)
        assert x == pytest.approx(d / 2, rel=1e-4)


def test_placement_is_symmetric_and_checks_range():
    assert placement_gain_approx(10, 50) == pytest.approx(placement_gain_approx(40, 50))
    for bad in (0.0, 50.0, 60.0, -1.0):
        with pytest.raises(ValueError):
            placement_gain_approx(bad, 50)
