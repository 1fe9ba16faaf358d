"""End-to-end allocation: channel matching, decoding order, and alternating
power/reflection optimisation, plus the comparison baselines.

Every entry point takes a ``seed``. Randomness is split into independent
streams per stage (decoding-order randomisation, Step-3 initialisation,
random order draws), so two algorithms run with the same seed see the same
random numbers wherever their stages coincide.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .decode_order import optimize_decoding_order
from .matching import assign_channels, count_assignments, enumerate_assignments
from .power_alloc import PowerState, find_feasible, optimize_power
from .reflect_design import optimize_reflection
from .scenario import (
    ChannelRealization,
    DecodingOrder,
    SystemConfig,
    rate,
    sic_feasible,
    sinr,
)
from .subsolvers import SolverError

EXHAUST_NOMA = "Exhaust-IRS-NOMA"
THREE_STEP = "ThreeStep-IRS-NOMA"
RANDOM_NOMA = "Random-IRS-NOMA"
EXHAUST_OMA = "Exhaust-IRS-OMA"
TWO_STEP_OMA = "TwoStep-IRS-OMA"
NOMA_NO_IRS = "NOMA-noIRS"
OMA_NO_IRS = "OMA-noIRS"
LABELS = (EXHAUST_NOMA, THREE_STEP, RANDOM_NOMA, EXHAUST_OMA, TWO_STEP_OMA, NOMA_NO_IRS, OMA_NO_IRS)

FEAS_TOL = 1e-6


@dataclass
class Solution:
    label: str
    mode: str
    assignment: tuple[tuple[int, ...], ...]
    order: DecodingOrder
    p: np.ndarray
    e: np.ndarray
    rates: np.ndarray
    throughput: float
    feasible: bool
    trace: list[float] = field(default_factory=list)
    iterations: int = 0
    converged: bool = False
    info: str = ""
    power_traces: list[list[float]] = field(default_factory=list)


class SearchTooLarge(ValueError):
    """Exhaustive search refused because the candidate count exceeds the cap."""


def _streams(seed: int) -> dict[str, np.random.Generator]:
    children = np.random.SeedSequence([seed, 7919]).spawn(3)
    return {name: np.random.default_rng(s) for name, s in zip(("decode", "init", "order"), children)}


def _seed(config: SystemConfig, seed: int | None) -> int:
    return config.seed if seed is None else seed


def oma_rates(chan: ChannelRealization, assignment, p: np.ndarray, e: np.ndarray) -> np.ndarray:
    """Time-shared rates: each of the ``K_n`` users on channel ``n`` gets 1/K_n of the time."""
    gains = chan.gains(e)
    out = np.zeros_like(gains)
    for n, users in enumerate(assignment):
        users = list(users)
        if users:
            out[n, users] = np.log2(1.0 + p[n, users] * gains[n, users] / chan.noise_power) / len(users)
    return out


def check_solution(chan: ChannelRealization, sol: Solution, config: SystemConfig) -> list[str]:
    """Names of the violated feasibility conditions (empty when feasible)."""
    problems = []
    if np.any(np.abs(sol.e) > 1 + FEAS_TOL):
        problems.append("reflection modulus")
    if sol.p.sum() > config.p_max + FEAS_TOL or np.any(sol.p < 0):
        problems.append("power budget")
    served = [(n, k) for n, users in enumerate(sol.assignment) for k in users]
    if served and min(sol.rates[n, k] for n, k in served) < config.r_min - FEAS_TOL:
        problems.append("minimum rate")
    if sol.mode == "noma" and not sic_feasible(chan, sol.assignment, sol.order, sol.e):
        problems.append("decoding order")
    return problems


def _finish(chan, config, label, mode, assignment, order, p, e, trace, iterations, converged, info=""):
    p = np.asarray(p, float)
    if mode == "noma":
        rates = rate(chan, assignment, order, p, e)
    else:
        rates = oma_rates(chan, assignment, p, e)
    sol = Solution(label, mode, tuple(map(tuple, assignment)), tuple(map(tuple, order)), p,
                   np.asarray(e, complex), rates, float(rates.sum()), True, list(trace),
                   iterations, converged, info)
    problems = check_solution(chan, sol, config)
    if problems:
        sol.feasible = False
        sol.info = "; ".join(filter(None, [info, "violates " + ", ".join(problems)]))
    return sol


def _failed(chan, label, mode, assignment, order, info) -> Solution:
    shape = chan.h.shape
    return Solution(label, mode, tuple(map(tuple, assignment)), tuple(map(tuple, order)),
                    np.zeros(shape), np.zeros(chan.n_elements, complex), np.zeros(shape),
                    0.0, False, [], 0, False, info)


def random_reflection(m: int, rng: np.random.Generator) -> np.ndarray:
    return np.exp(2j * np.pi * rng.uniform(size=m))


def initial_reflection(chan, order, config, rng, fallback=None) -> np.ndarray:
    """Random unit-modulus start that respects the decoding order.

    Draws up to ``config.max_init_draws`` vectors; if none orders the
    gains along ``order``, ``fallback`` (when given) is used instead.
    """
    m = chan.n_elements
    e = random_reflection(m, rng)
    for _ in range(config.max_init_draws):
        if sic_feasible(chan, None, order, e, config.order_margin):
            return e
        e = random_reflection(m, rng)
    if fallback is not None and sic_feasible(chan, None, order, fallback, config.order_margin):
        return np.asarray(fallback, complex)
    return e


def joint_optimize(
    chan: ChannelRealization,
    order: DecodingOrder,
    config: SystemConfig,
    seed: int | None = None,
    fallback_e: np.ndarray | None = None,
    label: str = THREE_STEP,
) -> Solution:
    """Alternate power allocation and reflection design for a fixed order.

    The sum rate is recorded after every outer round; the loop stops when
    its relative change drops below ``config.tol_outer``.
    """
    rng = _streams(_seed(config, seed))["init"]
    assignment = tuple(tuple(sorted(u)) for u in order)
    if config.warm_start_reflection and fallback_e is not None:
        e = np.asarray(fallback_e, complex)
    else:
        e = initial_reflection(chan, order, config, rng, fallback_e)
    try:
        state = find_feasible(chan, order, e, config, rng)
    except SolverError as exc:
        return _failed(chan, label, "noma", assignment, order, f"no feasible start: {exc}")
    p = state.p
    trace = [float(rate(chan, None, order, p, e).sum())]
    converged, info, t0 = False, "", 0
    power_traces = []
    for t0 in range(1, config.max_outer_iters + 1):
        chi = sinr(chan, order, p, e)
        try:
            ps = optimize_power(chan, order, e, PowerState(p, chi), config)
        except SolverError as exc:
            info = f"power step failed at round {t0}: {exc}"
            break
        p = ps.p
        power_traces.append(list(ps.trace))
        if chan.n_elements:
            e = optimize_reflection(chan, order, p, ps.chi, e, config).e
        trace.append(float(rate(chan, None, order, p, e).sum()))
        if abs(trace[-1] - trace[-2]) <= config.tol_outer * max(abs(trace[-2]), 1e-12):
            converged = True
            break
    sol = _finish(chan, config, label, "noma", assignment, order, p, e, trace, t0, converged, info)
    sol.power_traces = power_traces
    return sol


def three_step(chan: ChannelRealization, config: SystemConfig, seed: int | None = None,
               label: str = THREE_STEP) -> Solution:
    """Matching, then SDR-based decoding order, then the alternating optimisation."""
    seed = _seed(config, seed)
    assignment = assign_channels(chan, config).assignment()
    res = optimize_decoding_order(chan, assignment, config, _streams(seed)["decode"])
    return joint_optimize(chan, res.order, config, seed, res.e, label)


def random_order_variant(chan: ChannelRealization, config: SystemConfig, seed: int | None = None) -> Solution:
    """Matching, then a uniformly random decoding order on each channel."""
    seed = _seed(config, seed)
    rng = _streams(seed)["order"]
    assignment = assign_channels(chan, config).assignment()
    order = tuple(tuple(int(k) for k in rng.permutation(u)) if len(u) > 1 else u for u in assignment)
    return joint_optimize(chan, order, config, seed, None, RANDOM_NOMA)


def water_fill(gains, p_max: float, floors=None) -> np.ndarray:
    """Maximise ``sum log(1 + p g)`` subject to ``sum p = p_max`` and ``p >= floors``.

    ``gains`` are noise-normalised. Returns ``max(floor, mu - 1/g)`` with
    the water level ``mu`` solved exactly from the budget. Raises
    ``ValueError`` when the floors alone exceed the budget.
    """
    g = np.asarray(gains, float)
    floors = np.zeros_like(g) if floors is None else np.asarray(floors, float)
    if np.any(g <= 0):
        raise ValueError("gains must be strictly positive")
    if floors.sum() > p_max * (1 + 1e-12):
        raise ValueError("power floors exceed the budget")
    inv = 1.0 / g

    def alloc(mu):
        return np.maximum(floors, mu - inv)

    lo, hi = 0.0, p_max + float(np.max(inv + floors))
    for _ in range(200):
        mid = 0.5 * (lo + hi)
        if alloc(mid).sum() > p_max:
            hi = mid
        else:
            lo = mid
    # exact level on the active set found by bisection
    active = hi - inv > floors
    if np.any(active):
        mu = (p_max - floors[~active].sum() + inv[active].sum()) / active.sum()
        p = np.where(active, mu - inv, floors)
        if np.all(p >= floors - 1e-15) and abs(p.sum() - p_max) <= 1e-12 * max(p_max, 1e-300):
            return np.maximum(p, 0.0)
    return alloc(hi)


def _oma(chan, config, assignment, seed, label) -> Solution:
    rng = _streams(seed)["init"]
    served = [(n, k) for n, users in enumerate(assignment) for k in users]
    order = tuple(tuple(u) for u in assignment)
    m = chan.n_elements
    e = random_reflection(m, rng)
    sigma2 = chan.noise_power

    share = np.array([len(assignment[n]) for n, _ in served], float)

    def allocate(e):
        g = np.array([chan.gains(e)[n, k] for n, k in served]) / sigma2
        # smallest power meeting r_min with a 1/K_n time share
        floors = (2.0 ** (share * config.r_min) - 1.0) / g
        if floors.sum() > config.p_max:
            floors = None
        p = np.zeros(chan.h.shape)
        for (n, k), v in zip(served, water_fill(g, config.p_max, floors)):
            p[n, k] = v
        return p

    p = allocate(e)
    trace = [float(oma_rates(chan, assignment, p, e).sum())]
    converged, t0 = False, 0
    for t0 in range(1, config.max_outer_iters + 1):
        if m:
            active = tuple(tuple(k for k in users if p[n, k] > 0) for n, users in enumerate(assignment))
            chi = p * chan.gains(e) / sigma2
            e = optimize_reflection(chan, active, p, chi, e, config, oma=True).e
        p = allocate(e)
        trace.append(float(oma_rates(chan, assignment, p, e).sum()))
        if abs(trace[-1] - trace[-2]) <= config.tol_outer * max(abs(trace[-2]), 1e-12):
            converged = True
            break
    return _finish(chan, config, label, "oma", assignment, order, p, e, trace, t0, converged)


def oma_waterfill(chan: ChannelRealization, config: SystemConfig, seed: int | None = None,
                  assignment=None, label: str = TWO_STEP_OMA) -> Solution:
    """Matching, then alternating water-filling and reflection design with
    equal time sharing inside each channel.

    Water-filling keeps every user at the power its minimum rate needs;
    when those floors alone exceed the budget it falls back to plain
    water-filling and the solution is reported infeasible.
    """
    if assignment is None:
        assignment = assign_channels(chan, config).assignment()
    return _oma(chan, config, assignment, _seed(config, seed), label)


def no_irs_variant(chan: ChannelRealization, config: SystemConfig, mode: str = "noma",
                   seed: int | None = None) -> Solution:
    """Same pipelines with the reflection path removed."""
    bare = chan.without_irs()
    if mode == "noma":
        return three_step(bare, config, seed, NOMA_NO_IRS)
    if mode == "oma":
        return oma_waterfill(bare, config, seed, label=OMA_NO_IRS)
    raise ValueError(f"unknown mode {mode!r}")


def _best(solutions: Sequence[Solution]) -> Solution:
    feasible = [s for s in solutions if s.feasible]
    pool = feasible or list(solutions)
    return max(pool, key=lambda s: s.throughput)


def exhaustive_order(chan: ChannelRealization, assignment, config: SystemConfig,
                     seed: int | None = None, label: str = EXHAUST_NOMA):
    """Run the alternating optimisation for every decoding order; keep the best.

    Returns ``(order, solution)``.
    """
    seed = _seed(config, seed)
    count = math.prod(math.factorial(len(u)) for u in assignment)
    if count > config.max_order_combinations:
        raise SearchTooLarge(f"{count} decoding-order combinations exceed the cap "
                             f"of {config.max_order_combinations}")
    fallback = optimize_decoding_order(chan, assignment, config, _streams(seed)["decode"]).e
    sols = [
        joint_optimize(chan, order, config, seed, fallback, label)
        for order in itertools.product(*(itertools.permutations(u) for u in assignment))
    ]
    best = _best(sols)
    return best.order, best


def exhaustive_assignment(chan: ChannelRealization, config: SystemConfig, seed: int | None = None,
                          mode: str = "noma", order_search: str = "exhaustive") -> Solution:
    """Try every capacity-respecting channel assignment and keep the best.

    For ``mode="noma"`` each assignment is followed by an exhaustive order
    search (``order_search="exhaustive"``) or the SDR order
    (``order_search="sdr"``); for ``mode="oma"`` by the water-filling loop.
    """
    seed = _seed(config, seed)
    n_users, n_ch, cap = chan.n_users, chan.n_channels, config.per_channel_cap
    count = count_assignments(n_users, n_ch, cap)
    if count > config.max_assignments:
        raise SearchTooLarge(f"{count} channel assignments exceed the cap of {config.max_assignments}")
    full = n_users == n_ch * cap
    sols = []
    for a in enumerate_assignments(n_users, n_ch, cap):
        if full and any(len(u) != cap for u in a):
            continue
        if mode == "oma":
            sols.append(_oma(chan, config, a, seed, EXHAUST_OMA))
        elif mode == "noma" and order_search == "exhaustive":
            sols.append(exhaustive_order(chan, a, config, seed, EXHAUST_NOMA)[1])
        elif mode == "noma" and order_search == "sdr":
            res = optimize_decoding_order(chan, a, config, _streams(seed)["decode"])
            sols.append(joint_optimize(chan, res.order, config, seed, res.e, EXHAUST_NOMA))
        else:
            raise ValueError(f"unknown mode/order_search {mode!r}/{order_search!r}")
    return _best(sols)


def placement_gain_approx(d_bs_irs, d_bs_user, irs_exponent=2.5, direct_exponent=3.0):
    """Approximate large-scale gain of a user at ``d_bs_user`` with the IRS
    on the BS-user line at ``d_bs_irs`` from the BS.

    Works in whatever real type the distances carry (``float``,
    ``decimal.Decimal``, ...), so the minimiser can be located beyond double
    precision, where the reflected term is far below the direct one.
    """
    num = float if isinstance(d_bs_user, int) else type(d_bs_user)
    d1, d = num(d_bs_irs), num(d_bs_user)
    if not 0 < d1 < d:
        raise ValueError("need 0 < d_bs_irs < d_bs_user")
    a, b = num(str(irs_exponent)), num(str(direct_exponent))
    reflected = num("1e-6") * (d1 * (d - d1)) ** (-a)
    return reflected + num("1e-3") * d ** (-b)


def run_algorithm(label: str, chan: ChannelRealization, config: SystemConfig,
                  seed: int | None = None) -> Solution:
    """Dispatch by algorithm label."""
    if label == THREE_STEP:
        return three_step(chan, config, seed)
    if label == RANDOM_NOMA:
        return random_order_variant(chan, config, seed)
    if label == EXHAUST_NOMA:
        return exhaustive_assignment(chan, config, seed, "noma")
    if label == TWO_STEP_OMA:
        return oma_waterfill(chan, config, seed)
    if label == EXHAUST_OMA:
        return exhaustive_assignment(chan, config, seed, "oma")
    if label == NOMA_NO_IRS:
        return no_irs_variant(chan, config, "noma", seed)
    if label == OMA_NO_IRS:
        return no_irs_variant(chan, config, "oma", seed)
    raise ValueError(f"unknown algorithm {label!r}; expected one of {', '.join(LABELS)}")
