"""Acceptance suite.

Each test checks one criterion and records a single PASS/FAIL line; the
lines are printed together at the end of the pytest run (see conftest.py)
and also when this file is executed directly. Tolerances and trial counts
are pinned below. Runs shared between criteria are cached per session.
"""

import decimal
import functools
import math
import time
from decimal import Decimal

import numpy as np
import pytest

from irsnoma.decode_order import optimize_decoding_order
from irsnoma.experiment import placement_config
from irsnoma.matching import UtilityContext, assign_channels, best_partition_utility, blocking_pairs
from irsnoma.pipeline import (
    NOMA_NO_IRS,
    THREE_STEP,
    TWO_STEP_OMA,
    exhaustive_order,
    placement_gain_approx,
    run_algorithm,
)
from irsnoma.scenario import SystemConfig, dbm_to_watts, sample_channels
from irsnoma.subsolvers import p3_violation, solve_p3, solve_p9

from conftest import synthetic_channel
from oracles import p3_grid_two_users, phase_grid_gain_sum, recheck_solution
from test_subsolvers import two_user_sub

DESK = SystemConfig(n_channels=2, n_users=4, per_channel_cap=2, n_elements=8)
SEEDS = range(50)
MATCH_SEEDS = range(100)
M_SWEEP = (4, 8, 16)
P_SWEEP_DBM = (5.0, 10.0, 15.0)
PLACEMENTS = (10.0, 25.0, 45.0)

P3_TOL = 1e-3
P9_ROUND_FRACTION = 0.95
MONOTONE_TOL = 1e-6
MATCH_FRACTION, MATCH_SHARE = 0.95, 0.90
ORDER_FRACTION, ORDER_SHARE = 0.95, 0.80
SIGN_TEST_LEVEL = 0.05
CONVERGE_CAP, CONVERGE_SHARE = 30, 0.95
RUNTIME_LIMITS = {1: 60.0, 2: 300.0, 3: 300.0, 4: 600.0}

RESULTS: dict[int, str] = {}


def report(number, ok, detail):
    RESULTS[number] = f"criterion {number}: {'PASS' if ok else 'FAIL'} | {detail}"
    return ok


# cached runs ------------------------------------------------------------


def config_for(m=8, p_dbm=15.0, irs_x=None):
    cfg = DESK.replace(n_elements=m, p_max=dbm_to_watts(p_dbm))
    return placement_config(cfg, irs_x) if irs_x is not None else cfg


@functools.lru_cache(maxsize=None)
def channel(m, p_dbm, irs_x, seed):
    return sample_channels(config_for(m, p_dbm, irs_x), seed)


RUN_TIME: dict[str, float] = {}


@functools.lru_cache(maxsize=None)
def run(label, m, p_dbm, irs_x, seed):
    start = time.perf_counter()
    sol = run_algorithm(label, channel(m, p_dbm, irs_x, seed), config_for(m, p_dbm, irs_x), seed)
    RUN_TIME[label] = RUN_TIME.get(label, 0.0) + time.perf_counter() - start
    return sol


def throughput(sol):
    return sol.throughput if sol.feasible else math.nan


def sign_test(a, b):
    """One-sided sign test of ``a > b`` on paired samples where both are
    finite; ties are dropped. Returns ``(wins, trials, p_value)``."""
    diffs = [x - y for x, y in zip(a, b) if math.isfinite(x) and math.isfinite(y) and x != y]
    n, wins = len(diffs), sum(d > 0 for d in diffs)
    p = sum(math.comb(n, i) for i in range(wins, n + 1)) / 2**n if n else 1.0
    return wins, n, p


def feasible_mean(values):
    vals = [v for v in values if math.isfinite(v)]
    return float(np.mean(vals)) if vals else math.nan


def paired_means(a, b):
    """Means of ``a`` and ``b`` over the seeds where both are feasible."""
    both = [(x, y) for x, y in zip(a, b) if math.isfinite(x) and math.isfinite(y)]
    if not both:
        return math.nan, math.nan
    x, y = np.array(both).T
    return float(x.mean()), float(y.mean())


# criteria ----------------------------------------------------------------


def test_criterion_1_subsolver_oracles():
    start = time.perf_counter()
    p3_errors = []
    for seed in range(20):
        rng = np.random.default_rng(1000 + seed)
        nu = rng.uniform(0.05, 1.0, 2)
        alpha0 = rng.uniform(0.2, 4.0)
        sub = two_user_sub(nu, alpha0)
        p, chi, obj = solve_p3(sub)
        best, _ = p3_grid_two_users(nu, alpha0, sub.chi_min, sub.p_max)
        assert p3_violation(sub, p, chi) <= 1e-6
        p3_errors.append(abs(obj - best))
    p9_bound, p9_round = [], []
    for seed in range(20):
        rng = np.random.default_rng(2000 + seed)
        m = 1 + seed % 2
        rows = rng.standard_normal((3, m + 1)) + 1j * rng.standard_normal((3, m + 1))
        grid = phase_grid_gain_sum(rows, points=100)
        sol = solve_p9(rows.conj().T @ rows)
        p9_bound.append(sol.objective - grid * (1 - 1e-6))
        chan = synthetic_channel(rows[None, :, m], rows[None, :, :m])
        cfg = SystemConfig(n_channels=1, n_users=3, per_channel_cap=3, n_elements=m, n_candidates=100)
        res = optimize_decoding_order(chan, ((0, 1, 2),), cfg, np.random.default_rng(seed))
        p9_round.append(res.gain_sum / grid)
    elapsed = time.perf_counter() - start
    ok = (max(p3_errors) <= P3_TOL and min(p9_bound) >= 0 and min(p9_round) >= P9_ROUND_FRACTION
          and elapsed < RUNTIME_LIMITS[1])
    detail = (f"power problem max |obj - grid| = {max(p3_errors):.2e} (tol {P3_TOL:g}) on 20 instances; "
              f"relaxation >= phase grid on {sum(b >= 0 for b in p9_bound)}/20; "
              f"rounded/grid min {min(p9_round):.4f} (need >= {P9_ROUND_FRACTION}); {elapsed:.1f}s")
    assert report(1, ok, detail), detail


def test_criterion_2_sca_monotonicity():
    start = time.perf_counter()
    bad_inner = bad_outer = rounds = 0
    for seed in SEEDS:
        sol = run(THREE_STEP, 8, 15.0, None, seed)
        bad_outer += bool(np.any(np.diff(sol.trace) < -MONOTONE_TOL))
        for tr in sol.power_traces:
            rounds += 1
            bad_inner += bool(np.any(np.diff(tr) < -MONOTONE_TOL))
    elapsed = time.perf_counter() - start
    ok = bad_inner == 0 and bad_outer == 0 and elapsed < RUNTIME_LIMITS[2]
    detail = (f"{len(SEEDS)} seeds, {rounds} power-SCA traces: {bad_inner} inner and {bad_outer} outer "
              f"traces decrease by more than {MONOTONE_TOL:g}; {elapsed:.1f}s")
    assert report(2, ok, detail), detail


def test_criterion_3_matching_near_optimal():
    start = time.perf_counter()
    ratios = []
    for seed in MATCH_SEEDS:
        chan = channel(8, 15.0, None, seed)
        ctx = UtilityContext.from_config(chan, DESK)
        got = assign_channels(chan, DESK).total_utility(ctx)
        _, best = best_partition_utility(chan, DESK)
        ratios.append(got / best)
    elapsed = time.perf_counter() - start
    share = np.mean(np.array(ratios) >= MATCH_FRACTION)
    ok = share >= MATCH_SHARE and elapsed < RUNTIME_LIMITS[3]
    detail = (f"utility >= {MATCH_FRACTION:.0%} of optimum on {share:.0%} of {len(ratios)} seeds "
              f"(need {MATCH_SHARE:.0%}); mean ratio {np.mean(ratios):.4f}; {elapsed:.1f}s")
    assert report(3, ok, detail), detail


def test_criterion_4_decoding_order_near_optimal():
    start = time.perf_counter()
    ratios = []
    for seed in SEEDS:
        sol = run(THREE_STEP, 8, 15.0, None, seed)
        _, best = exhaustive_order(channel(8, 15.0, None, seed), sol.assignment, DESK, seed)
        if not best.feasible:
            continue
        ratios.append(throughput(sol) / best.throughput if sol.feasible else 0.0)
    elapsed = time.perf_counter() - start
    share = np.mean(np.array(ratios) >= ORDER_FRACTION)
    ok = share >= ORDER_SHARE and elapsed < RUNTIME_LIMITS[4]
    detail = (f"throughput >= {ORDER_FRACTION:.0%} of exhaustive-order result on {share:.0%} of "
              f"{len(ratios)} seeds (need {ORDER_SHARE:.0%}); min ratio {min(ratios):.4f}; {elapsed:.1f}s")
    assert report(4, ok, detail), detail


def test_criterion_5_stable_matchings():
    blocking, seeds = 0, 0
    for seed in MATCH_SEEDS:
        for m in M_SWEEP:
            chan = channel(m, 15.0, None, seed)
            cfg = config_for(m)
            matched = assign_channels(chan, cfg)
            blocking += len(blocking_pairs(matched, UtilityContext.from_config(chan, cfg), cfg.swap_margin))
            seeds += 1
    ok = blocking == 0
    detail = f"{blocking} swap-blocking pairs across {seeds} matchings"
    assert report(5, ok, detail), detail


def test_criterion_6_trends():
    points = [(m, 15.0) for m in M_SWEEP] + [(8, p) for p in P_SWEEP_DBM if p != 15.0]
    means, failures, lines = {}, [], []
    for m, p in points:
        noma = [throughput(run(THREE_STEP, m, p, None, s)) for s in SEEDS]
        bare = [throughput(run(NOMA_NO_IRS, m, p, None, s)) for s in SEEDS]
        oma = [throughput(run(TWO_STEP_OMA, m, p, None, s)) for s in SEEDS]
        means[m, p] = feasible_mean(noma)
        for name, other in (("NOMA-noIRS", bare), ("IRS-OMA", oma)):
            wins, n, pval = sign_test(noma, other)
            mine, theirs = paired_means(noma, other)
            better = mine > theirs
            lines.append(f"M={m},P={p:g}: vs {name} {wins}/{n} p={pval:.1e}, paired means {mine:.3f} vs {theirs:.3f}")
            if not (better and pval < SIGN_TEST_LEVEL):
                failures.append(lines[-1])
    by_m = [means[m, 15.0] for m in M_SWEEP]
    by_p = [means[8, p] for p in P_SWEEP_DBM]
    if not all(b > a for a, b in zip(by_m, by_m[1:])):
        failures.append(f"mean not increasing in M: {by_m}")
    if not all(b > a for a, b in zip(by_p, by_p[1:])):
        failures.append(f"mean not increasing in P: {by_p}")
    detail = (f"means over M {M_SWEEP}: {[round(v, 4) for v in by_m]}; over P {P_SWEEP_DBM} dBm: "
              f"{[round(v, 4) for v in by_p]}; " + ("; ".join(failures) if failures else
                                                      f"all {len(lines)} sign tests p < {SIGN_TEST_LEVEL}"))
    assert report(6, not failures, detail), detail


def test_criterion_7_placement():
    with decimal.localcontext() as ctx:
        ctx.prec = 60
        d = Decimal(50)
        lo, hi = Decimal("1e-6"), d - Decimal("1e-6")
        for _ in range(300):
            a, b = lo + (hi - lo) / 3, hi - (hi - lo) / 3
            if placement_gain_approx(a, d) < placement_gain_approx(b, d):
                hi = b
            else:
                lo = a
        argmin_error = float(abs((lo + hi) / 2 - d / 2))
    means = {x: feasible_mean([throughput(run(THREE_STEP, 8, 15.0, x, s)) for s in SEEDS]) for x in PLACEMENTS}
    ok = argmin_error <= 1e-9 and min(means, key=means.get) == 25.0
    detail = (f"analytic argmin error {argmin_error:.1e} (tol 1e-9); mean throughput by IRS x: "
              + ", ".join(f"{x:g} m: {v:.4f}" for x, v in means.items()))
    assert report(7, ok, detail), detail


def test_criterion_8_convergence_budget():
    noma = [run(THREE_STEP, m, 15.0, None, s) for m in M_SWEEP for s in SEEDS]
    oma = [run(TWO_STEP_OMA, m, 15.0, None, s) for m in M_SWEEP for s in SEEDS]
    within = np.mean([s.converged and s.iterations <= CONVERGE_CAP for s in noma])
    it_noma = np.mean([s.iterations for s in noma])
    it_oma = np.mean([s.iterations for s in oma])
    ok = within >= CONVERGE_SHARE and it_oma < it_noma
    detail = (f"{within:.1%} of {len(noma)} three_step runs converge within {CONVERGE_CAP} rounds "
              f"(need {CONVERGE_SHARE:.0%}); mean rounds IRS-OMA {it_oma:.2f} vs IRS-NOMA {it_noma:.2f}")
    assert report(8, ok, detail), detail


def test_criterion_9_feasibility_contract():
    checked, problems = 0, []
    for (label, m, p, x, seed), sol in _cached_runs():
        if not sol.feasible:
            continue
        chan = channel(m, p, x, seed)
        if label.endswith("noIRS"):
            chan = chan.without_irs()
        found = recheck_solution(chan, sol, config_for(m, p, x))
        checked += 1
        if found:
            problems.append(f"{label} seed {seed}: {found}")
    ok = not problems and checked > 0
    detail = f"{checked} feasible solutions rechecked, {len(problems)} violations" + (
        f": {problems[:3]}" if problems else "")
    assert report(9, ok, detail), detail


def _cached_runs():
    # every run the other criteria use (cached, so this is free after them)
    keys = [(lab, m, 15.0, None, s) for lab in (THREE_STEP, NOMA_NO_IRS, TWO_STEP_OMA) for m in M_SWEEP for s in SEEDS]
    keys += [(lab, 8, p, None, s) for lab in (THREE_STEP, NOMA_NO_IRS, TWO_STEP_OMA) for p in P_SWEEP_DBM
             for s in SEEDS]
    keys += [(THREE_STEP, 8, 15.0, x, s) for x in PLACEMENTS for s in SEEDS]
    for key in dict.fromkeys(keys):
        yield key, run(*key)


if __name__ == "__main__":
    import sys

    sys.exit(pytest.main([__file__, "-q", "-p", "no:cacheprovider"]))
