"""Iterative SCA power allocation and the feasible-start search."""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .scenario import ChannelRealization, DecodingOrder, SystemConfig, check_order, sinr
from .subsolvers import (
    InfeasibleError,
    PowerSubproblem,
    SolverError,
    SolverSettings,
    solve_p3,
    solve_p4,
)


@dataclass(frozen=True)
class UserLayout:
    """Flattened view of the users served under a decoding order."""

    order: DecodingOrder
    users: tuple[tuple[int, int], ...]
    later: np.ndarray

    @classmethod
    def from_order(cls, order: DecodingOrder) -> "UserLayout":
        users = tuple((n, k) for n, chan_users in enumerate(order) for k in chan_users)
        size = len(users)
        later = np.zeros((size, size), bool)
        start = 0
        for chan_users in order:
            c = len(chan_users)
            for a in range(c):
                later[start + a, start + a + 1:start + c] = True
            start += c
        return cls(tuple(tuple(u) for u in order), users, later)

    @property
    def size(self) -> int:
        return len(self.users)

    def flatten(self, mat: np.ndarray) -> np.ndarray:
        return np.array([mat[n, k] for n, k in self.users], dtype=mat.dtype)

    def expand(self, vec: np.ndarray, shape: tuple[int, int]) -> np.ndarray:
        out = np.zeros(shape, dtype=np.asarray(vec).dtype)
        for (n, k), v in zip(self.users, vec):
            out[n, k] = v
        return out

    def later_power(self, p_flat: np.ndarray) -> np.ndarray:
        return self.later @ p_flat


@dataclass
class PowerState:
    """Power/SINR-surrogate iterate with SCA bookkeeping.

    ``p``, ``chi`` and ``alpha`` are (N, K) arrays with zeros off the
    assignment. ``trace`` holds the surrogate objective per iteration.
    """

    p: np.ndarray
    chi: np.ndarray
    alpha: np.ndarray | None = None
    z_slack: float = 0.0
    iterations: int = 0
    trace: list[float] = field(default_factory=list)
    note: str = ""

    @property
    def objective(self) -> float:
        return float(np.sum(np.log2(1.0 + self.chi)))


def update_alpha(later_power, chi, chi_floor: float = 1e-12) -> np.ndarray:
    """Fixed points making the product bound tight: ``sum(later p) / chi``.

    Entries with no successor power (last-decoded users) are returned as 0,
    which marks the quadratic bound as unused for that user.
    """
    later_power = np.asarray(later_power, dtype=float)
    chi = np.asarray(chi, dtype=float)
    if np.any(chi < 0) or not np.all(np.isfinite(chi)):
        raise ValueError("chi must be finite and non-negative")
    return np.where(later_power > 0, later_power / np.maximum(chi, chi_floor), 0.0)


def _subproblem(layout: UserLayout, nu, p, chi, config: SystemConfig) -> PowerSubproblem:
    # users with successors need alpha > 0 even when those successors are silent
    later = layout.later_power(p)
    has_later = layout.later.any(axis=1)
    scale = config.p_max if config.p_max > 0 else 1.0
    later = np.where(has_later, np.maximum(later, 1e-9 * scale), 0.0)
    alpha = update_alpha(later, chi, config.chi_floor)
    return PowerSubproblem(
        nu=nu, alpha=alpha, later=layout.later, chi_min=config.chi_min,
        p_max=config.p_max, r_min=config.r_min, p_ref=p, chi_ref=chi,
    )


def _nu(chan: ChannelRealization, layout: UserLayout, e: np.ndarray) -> np.ndarray:
    gains = layout.flatten(chan.gains(e))
    return chan.noise_power / np.maximum(gains, 1e-300)


def _strictly_feasible(sub: PowerSubproblem, p, chi) -> bool:
    q = p / sub.scale
    return bool(
        np.all(chi > sub.chi_min)
        and p.sum() < sub.p_max
        and np.all(sub.quad(q, chi) < q)
    )


def find_feasible(
    chan: ChannelRealization,
    order: DecodingOrder,
    e: np.ndarray,
    config: SystemConfig,
    rng: np.random.Generator | None = None,
    assignment=None,
) -> PowerState:
    """Search for a strictly feasible start by driving the shared slack to 0.

    Raises :class:`InfeasibleError` (with the last slack as ``violation``)
    when the slack stays above ``config.feasibility_threshold``.
    """
    check_order(order, assignment)
    rng = np.random.default_rng(config.seed) if rng is None else rng
    layout = UserLayout.from_order(order)
    shape = chan.h.shape
    if layout.size == 0:
        return PowerState(np.zeros(shape), np.zeros(shape))
    if config.p_max <= 0:
        raise InfeasibleError("power budget is zero", violation=config.r_min)
    nu = _nu(chan, layout, e)
    settings = SolverSettings.from_config(config)

    p = rng.uniform(0.0, 1.0, layout.size) * config.p_max / layout.size
    p = np.where(p > 0, p, config.p_max / layout.size * 1e-3)
    chi = 0.5 * layout.flatten(sinr(chan, order, layout.expand(p, shape), e))
    trace = []
    z = math.inf
    for t2 in range(1, config.max_feasibility_iters + 1):
        sub = _subproblem(layout, nu, p, chi, config)
        p, chi, z = solve_p4(sub, settings)
        trace.append(z)
        if z < config.feasibility_threshold:
            nxt = _subproblem(layout, nu, p, np.maximum(chi, 0.0), config)
            if _strictly_feasible(nxt, p, chi):
                break
        elif t2 > 1 and z >= trace[-2] * (1 - 1e-9):
            raise InfeasibleError(f"feasibility slack stalled at z={z:.3g}", violation=z)
        chi = np.maximum(chi, 0.0)
    else:
        raise InfeasibleError(
            f"no feasible power allocation after {config.max_feasibility_iters} rounds (z={z:.3g})",
            violation=z,
        )
    alpha = update_alpha(layout.later_power(p), chi, config.chi_floor)
    return PowerState(
        p=layout.expand(p, shape), chi=layout.expand(chi, shape),
        alpha=layout.expand(alpha, shape), z_slack=z, iterations=t2, trace=trace,
    )


def optimize_power(
    chan: ChannelRealization,
    order: DecodingOrder,
    e: np.ndarray,
    init: PowerState,
    config: SystemConfig,
    assignment=None,
) -> PowerState:
    """Successive convex approximation of the sum-rate power problem.

    Each round refreshes the fixed points from the current iterate and
    solves the convexified problem; stops when the surrogate objective
    changes by less than ``config.tol_sca`` (relative). The objective trace
    is non-decreasing.
    """
    check_order(order, assignment)
    layout = UserLayout.from_order(order)
    shape = chan.h.shape
    if layout.size == 0:
        return PowerState(np.zeros(shape), np.zeros(shape), trace=[0.0])
    nu = _nu(chan, layout, e)
    settings = SolverSettings.from_config(config)
    p = layout.flatten(np.asarray(init.p, float))
    chi = layout.flatten(np.asarray(init.chi, float))
    obj = float(np.sum(np.log2(1.0 + chi)))
    trace = [obj]
    note = ""
    t1 = 0
    for t1 in range(1, config.max_power_iters + 1):
        sub = _subproblem(layout, nu, p, chi, config)
        try:
            p_new, chi_new, obj_new = solve_p3(sub, settings)
        except SolverError as exc:
            if t1 == 1:
                raise type(exc)(f"power SCA iteration {t1}: {exc}") from exc
            note = f"stopped at iteration {t1}: {exc}"
            break
        if obj_new < obj:
            note = f"stopped at iteration {t1}: objective would decrease"
            break
        change = (obj_new - obj) / max(abs(obj), 1e-12)
        p, chi, obj = p_new, chi_new, obj_new
        trace.append(obj)
        if change < config.tol_sca:
            break
    alpha = update_alpha(layout.later_power(p), chi, config.chi_floor)
    return PowerState(
        p=layout.expand(p, shape), chi=layout.expand(chi, shape),
        alpha=layout.expand(alpha, shape), iterations=t1, trace=trace, note=note,
    )
