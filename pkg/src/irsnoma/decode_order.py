"""Decoding-order selection through a semidefinite relaxation of the
sum-of-gains maximisation over the reflection vector."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .scenario import ChannelRealization, DecodingOrder, SystemConfig
from .subsolvers import ConvergenceError, SdpSolution, solve_p9


@dataclass(frozen=True)
class SdrInstance:
    """Stacked rows ``[z_nk, h_nk]`` of the served users and their Gram sum.

    The gain of user ``i`` for an augmented vector ``x = [e, 1]`` is
    ``|rows[i] @ x|**2`` and ``x^H v_sum x`` is the gain sum.
    """

    users: tuple[tuple[int, int], ...]
    rows: np.ndarray
    v_sum: np.ndarray


def build_v(chan: ChannelRealization, assignment: Sequence[Sequence[int]]) -> SdrInstance:
    users = tuple((n, k) for n, chan_users in enumerate(assignment) for k in chan_users)
    if not users:
        raise ValueError("assignment serves no users")
    m = chan.n_elements
    rows = np.empty((len(users), m + 1), complex)
    for i, (n, k) in enumerate(users):
        rows[i, :m] = chan.z[n, k]
        rows[i, m] = chan.h[n, k]
    rows /= np.sqrt(chan.noise_power)
    v_sum = rows.conj().T @ rows
    return SdrInstance(users, rows, v_sum)


def gaussian_randomize(E: np.ndarray, n_candidates: int, rng: np.random.Generator):
    """Draw candidates ``U sqrt(L) r`` with ``r`` of unit-modulus entries.

    Returns ``(x, theta)``: the augmented draws, shape (L, M+1), and the
    phase-only reflection vectors ``exp(j arg(x_m / x_M))``, shape (L, M).
    Each draw satisfies ``x^H x == trace(E)``.
    """
    if n_candidates < 1:
        raise ValueError("need at least one candidate")
    lam, vec = np.linalg.eigh(0.5 * (E + E.conj().T))
    basis = vec * np.sqrt(np.clip(lam, 0.0, None))
    size = E.shape[0]
    draws = np.empty((n_candidates, size), complex)
    for i in range(n_candidates):
        for _ in range(100):
            r = np.exp(2j * np.pi * rng.uniform(size=size))
            x = basis @ r
            if abs(x[-1]) > 1e-12 * max(np.linalg.norm(x), 1e-300):
                break
        draws[i] = x
    last = draws[:, -1:]
    last = np.where(np.abs(last) > 0, last, 1.0)
    theta = np.exp(1j * np.angle(draws[:, :-1] / last))
    return draws, theta


def rank_one_vector(E: np.ndarray, tol: float) -> np.ndarray | None:
    """Reflection vector from a numerically rank-one ``E`` (else None)."""
    lam, vec = np.linalg.eigh(0.5 * (E + E.conj().T))
    if lam[-1] <= 0 or (lam[:-1].clip(0.0).sum() > tol * lam[-1]):
        return None
    x = vec[:, -1] * np.sqrt(lam[-1])
    if abs(x[-1]) == 0:
        return None
    return x[:-1] / x[-1]


@dataclass
class OrderResult:
    order: DecodingOrder
    e: np.ndarray
    sdp: SdpSolution
    rank_one: bool
    gain_sum: float


def optimize_decoding_order(
    chan: ChannelRealization,
    assignment: Sequence[Sequence[int]],
    config: SystemConfig,
    rng: np.random.Generator | None = None,
) -> OrderResult:
    """Pick ``e`` maximising the gain sum of the served users and decode
    each channel in ascending order of the resulting gains (ties by index).

    The relaxation is solved as an SDP; a rank-one solution is used
    directly, otherwise the best of ``config.n_candidates`` Gaussian
    randomisations is kept.
    """
    rng = np.random.default_rng(config.seed) if rng is None else rng
    m = chan.n_elements
    inst = build_v(chan, assignment)
    if m == 0:
        e = np.zeros(0, complex)
        sdp = SdpSolution(np.ones((1, 1), complex), float(inst.v_sum[0, 0].real), 0.0, 0.0, 0)
        return OrderResult(_sort(chan, assignment, e), e, sdp, True, sdp.objective)
    try:
        sdp = solve_p9(inst.v_sum, tol_gap=config.tol_gap, barrier_factor=config.barrier_factor,
                       max_newton_iters=max(config.max_newton_iters, 500))
    except ConvergenceError as exc:
        if exc.best is None:
            raise
        E = exc.best
        sdp = SdpSolution(E, float(np.real(np.trace(inst.v_sum @ E))), float("nan"), exc.gap, -1)

    e = rank_one_vector(sdp.E, config.rank_one_tol)
    rank_one = e is not None and bool(np.all(np.abs(e) <= 1 + 1e-3))
    if rank_one:
        e = e / np.maximum(np.abs(e), 1.0)
    else:
        _, theta = gaussian_randomize(sdp.E, config.n_candidates, rng)
        vals = np.array([_gain_sum(inst, th) for th in theta])
        e = theta[int(np.argmax(vals))]
    return OrderResult(_sort(chan, assignment, e), e, sdp, rank_one, _gain_sum(inst, e))


def _gain_sum(inst: SdrInstance, e: np.ndarray) -> float:
    x = np.append(e, 1.0)
    return float(np.sum(np.abs(inst.rows @ x) ** 2))


def _sort(chan, assignment, e) -> DecodingOrder:
    gains = chan.gains(e)
    return tuple(
        tuple(sorted(users, key=lambda k, n=n: (gains[n, k], k))) for n, users in enumerate(assignment)
    )
