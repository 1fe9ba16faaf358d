"""SCA design of the reflection vector for fixed powers."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .power_alloc import UserLayout
from .scenario import ChannelRealization, DecodingOrder, SystemConfig
from .subsolvers import InfeasibleError, ReflectionSubproblem, SolverError, SolverSettings, solve_p6


def phi_lower_bound(kappa, xi, kappa_t, xi_t):
    """First-order expansion of ``kappa**2 + xi**2`` at ``(kappa_t, xi_t)``.

    Never exceeds the true squared modulus (convexity of the square).
    """
    return kappa_t**2 + xi_t**2 + 2 * kappa_t * (kappa - kappa_t) + 2 * xi_t * (xi - xi_t)


def refresh_linearization(chan: ChannelRealization, layout: UserLayout, e: np.ndarray):
    """Real and imaginary parts of ``z e + h`` for each served user."""
    resp = layout.flatten(chan.responses(e))
    return resp.real.copy(), resp.imag.copy()


@dataclass
class ReflectionState:
    e: np.ndarray
    kappa: np.ndarray
    xi: np.ndarray
    iterations: int = 0
    infeasible: bool = False
    slack_trace: list[float] = field(default_factory=list)


def _noma_targets(chan, layout, p_flat, chi_flat, e):
    gains = layout.flatten(chan.gains(e))
    later = layout.later_power(p_flat)
    achieved = p_flat * gains / (gains * later + chan.noise_power)
    chi_eff = np.maximum(chi_flat, achieved)
    beta = chi_eff * later / p_flat
    return beta, chi_eff


def optimize_reflection(
    chan: ChannelRealization,
    order: DecodingOrder,
    p: np.ndarray,
    chi: np.ndarray,
    e_init: np.ndarray,
    config: SystemConfig,
    oma: bool = False,
) -> ReflectionState:
    """Improve ``e`` while keeping every served user's SINR at least its
    current level and, for NOMA, keeping gains ordered along ``order``.

    ``chi`` is raised to the SINR achieved at ``(p, e_init)`` where that is
    larger, so the returned vector never lowers any user's rate at ``p``.
    When the first linearised problem is infeasible ``e_init`` is returned
    with ``infeasible`` set.
    """
    layout = UserLayout.from_order(order)
    e_init = np.asarray(e_init, complex)
    kap, xi = refresh_linearization(chan, layout, e_init)
    state = ReflectionState(e_init.copy(), kap, xi)
    if layout.size == 0 or chan.n_elements == 0:
        return state
    z = np.array([chan.z[n, k] for n, k in layout.users])
    if not np.any(z):
        return state

    sigma = np.sqrt(chan.noise_power)
    z = z / sigma
    h = layout.flatten(chan.h) / sigma
    p_flat = layout.flatten(np.asarray(p, float))
    chi_flat = layout.flatten(np.asarray(chi, float))
    if np.any(p_flat <= 0):
        raise ValueError("served users need strictly positive power")
    if oma:
        gains = layout.flatten(chan.gains(e_init))
        chi_eff = np.maximum(chi_flat, p_flat * gains / chan.noise_power)
        beta = np.zeros(layout.size)
        pairs: list[tuple[int, int]] = []
    else:
        beta, chi_eff = _noma_targets(chan, layout, p_flat, chi_flat, e_init)
        pairs = [(i, j) for i in range(layout.size) for j in np.flatnonzero(layout.later[i])]
    rhs = chi_eff / p_flat

    settings = SolverSettings.from_config(config)
    e = e_init.copy()
    for t3 in range(1, config.max_reflection_iters + 1):
        kt, xt = refresh_linearization(chan, layout, e)
        sub = ReflectionSubproblem(
            z=z, h=h, kt=kt / sigma, xt=xt / sigma, beta=beta, rhs=rhs,
            pairs=pairs, margin=config.order_margin,
        )
        try:
            e_new, slack = solve_p6(sub, e, settings, tol=config.tol_slack)
        except (InfeasibleError, SolverError):
            if t3 == 1:
                state.infeasible = True
            break
        state.slack_trace.append(slack)
        k_new, x_new = refresh_linearization(chan, layout, e_new)
        de = np.linalg.norm(e_new - e) / max(np.linalg.norm(e), 1e-12)
        resp_scale = max(np.max(np.hypot(kt, xt)), 1e-300)
        dk = max(np.max(np.abs(k_new - kt)), np.max(np.abs(x_new - xt))) / resp_scale
        e = e_new
        state.iterations = t3
        if max(de, dk) < config.tol_sca:
            break

    if not _targets_hold(chan, layout, p_flat, chi_eff, e, oma, config.tol_slack):
        state.infeasible = state.infeasible or state.iterations == 0
        e = e_init.copy()
    state.e = e
    state.kappa, state.xi = refresh_linearization(chan, layout, e)
    return state


def _targets_hold(chan, layout, p_flat, chi_eff, e, oma, tol) -> bool:
    if np.any(np.abs(e) > 1 + 1e-9):
        return False
    gains = layout.flatten(chan.gains(e))
    if oma:
        achieved = p_flat * gains / chan.noise_power
    else:
        later = layout.later_power(p_flat)
        achieved = p_flat * gains / (gains * later + chan.noise_power)
        for i in range(layout.size):
            if np.any(gains[layout.later[i]] < gains[i]):
                return False
    return bool(np.all(achieved >= chi_eff * (1 - tol)))
