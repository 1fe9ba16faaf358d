"""Scenario geometry, channel sampling and rate evaluation.

All quantities are linear scale: powers in watts, gains as squared
magnitudes, rates in bit/s/Hz. Channel indices ``n`` and user indices ``k``
are zero-based.

A decoding order is a tuple with one entry per channel; each entry lists the
users on that channel in the order their signals are decoded (weakest
first). The assignment is implied by the order, so most functions take the
order alone.
"""

from __future__ import annotations

import dataclasses
import math
from functools import cached_property
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

DecodingOrder = tuple[tuple[int, ...], ...]


def dbm_to_watts(dbm: float) -> float:
    return 10.0 ** ((dbm - 30.0) / 10.0)


def db_to_linear(db: float) -> float:
    return 10.0 ** (db / 10.0)


@dataclass(frozen=True)
class SystemConfig:
    """Scenario, solver and experiment parameters.

    Defaults reproduce the evaluation setup at desk scale (two channels,
    four users, two users per channel, eight reflecting elements). Powers
    are stored in watts; use :func:`dbm_to_watts` for conversion.
    """

    n_channels: int = 2
    n_users: int = 4
    per_channel_cap: int = 2
    p_max: float = dbm_to_watts(15.0)
    r_min: float = 0.01
    noise_power: float = dbm_to_watts(-80.0)
    total_bandwidth: float = 30e3
    bs_pos: tuple[float, float, float] = (0.0, 0.0, 15.0)
    irs_pos: tuple[float, float, float] = (50.0, 50.0, 15.0)
    user_center: tuple[float, float, float] = (50.0, 45.0, 0.0)
    user_radius: float = 5.0
    pl_exp_bs_user: float = 3.0
    pl_exp_bs_irs: float = 2.2
    pl_exp_irs_user: float = 2.5
    rician_factor: float = db_to_linear(3.0)
    n_elements: int = 8
    min_distance: float = 1.0
    seed: int = 0

    # power allocation and its feasibility search
    tol_sca: float = 1e-4
    max_power_iters: int = 50
    max_feasibility_iters: int = 50
    feasibility_threshold: float = 1e-6
    chi_floor: float = 1e-12

    # reflection design
    max_reflection_iters: int = 30
    order_margin: float = 1e-8

    # decoding order
    n_candidates: int = 100
    rank_one_tol: float = 1e-6
    warm_start_reflection: bool = False

    # channel matching
    matching_reflection: str = "ones"
    swap_margin: float = 1e-9
    swap_safety_factor: int = 10

    # outer alternation and exhaustive baselines
    tol_outer: float = 1e-3
    max_outer_iters: int = 30
    max_init_draws: int = 100
    max_assignments: int = 10_000
    max_order_combinations: int = 1_000

    # convex subsolvers
    tol_slack: float = 1e-6
    tol_gap: float = 1e-6
    barrier_factor: float = 10.0
    max_newton_iters: int = 200

    def __post_init__(self) -> None:
        self.validate()

    @property
    def channel_bandwidth(self) -> float:
        return self.total_bandwidth / self.n_channels

    @property
    def chi_min(self) -> float:
        return 2.0**self.r_min - 1.0

    def validate(self) -> None:
        counts = {
            "n_channels": self.n_channels,
            "n_users": self.n_users,
            "per_channel_cap": self.per_channel_cap,
        }
        for name, value in counts.items():
            if int(value) != value or value < 1:
                raise ValueError(f"{name} must be a positive integer, got {value!r}")
        if self.n_elements < 0 or int(self.n_elements) != self.n_elements:
            raise ValueError(f"n_elements must be a non-negative integer, got {self.n_elements!r}")
        if self.n_users > self.n_channels * self.per_channel_cap:
            raise ValueError(
                f"{self.n_users} users do not fit in {self.n_channels} channels "
                f"of capacity {self.per_channel_cap}"
            )
        positive = {
            "noise_power": self.noise_power,
            "total_bandwidth": self.total_bandwidth,
            "user_radius": self.user_radius,
            "pl_exp_bs_user": self.pl_exp_bs_user,
            "pl_exp_bs_irs": self.pl_exp_bs_irs,
            "pl_exp_irs_user": self.pl_exp_irs_user,
            "rician_factor": self.rician_factor,
            "min_distance": self.min_distance,
        }
        for name, value in positive.items():
            if not value > 0:
                raise ValueError(f"{name} must be strictly positive, got {value!r}")
        if self.p_max < 0:
            raise ValueError(f"p_max must be non-negative, got {self.p_max!r}")
        if self.r_min < 0:
            raise ValueError(f"r_min must be non-negative, got {self.r_min!r}")
        if self.matching_reflection not in ("ones", "zeros"):
            raise ValueError("matching_reflection must be 'ones' or 'zeros'")

    @property
    def full_occupancy(self) -> bool:
        return self.n_users == self.n_channels * self.per_channel_cap

    def replace(self, **changes) -> "SystemConfig":
        return dataclasses.replace(self, **changes)


def path_loss(distance: float | np.ndarray, exponent: float) -> float | np.ndarray:
    """Large-scale power gain ``1e-3 * d**(-exponent)``."""
    d = np.asarray(distance, dtype=float)
    if np.any(d <= 0):
        raise ValueError("distance must be strictly positive")
    if exponent <= 0:
        raise ValueError("path-loss exponent must be strictly positive")
    out = 1e-3 * d ** (-exponent)
    return float(out) if out.ndim == 0 else out


def placement_angle(config: SystemConfig) -> float:
    """Angle of the BS as seen from the IRS, used for the LoS steering vector."""
    d = np.subtract(config.bs_pos, config.irs_pos)
    horizontal = math.hypot(d[0], d[1])
    if horizontal == 0.0 and d[2] == 0.0:
        return 0.0
    return math.atan2(d[1], d[0]) if horizontal > 0 else math.copysign(math.pi / 2, d[2])


def los_vector(n_elements: int, angle: float) -> np.ndarray:
    m = np.arange(n_elements)
    return np.exp(1j * np.pi * m * np.sin(angle))


def _cn(rng: np.random.Generator, shape) -> np.ndarray:
    return (rng.standard_normal(shape) + 1j * rng.standard_normal(shape)) / np.sqrt(2.0)


@dataclass(frozen=True, eq=False)
class ChannelRealization:
    """One draw of every link.

    ``h[n, k]`` is the BS-user channel, ``g[n, k]`` the IRS-user vector and
    ``f[n]`` the BS-IRS vector; ``f == w_los * f_los + w_nlos * f_nlos``.
    """

    h: np.ndarray
    g: np.ndarray
    f: np.ndarray
    f_los: np.ndarray
    f_nlos: np.ndarray
    noise_power: float
    user_pos: np.ndarray = field(repr=False)
    seed: int | None = None

    def __post_init__(self) -> None:
        for name in ("h", "g", "f", "f_los", "f_nlos", "user_pos"):
            arr = getattr(self, name)
            arr.setflags(write=False)
            if not np.all(np.isfinite(arr)):
                raise ValueError(f"non-finite entries in {name}")

    @property
    def n_channels(self) -> int:
        return self.h.shape[0]

    @property
    def n_users(self) -> int:
        return self.h.shape[1]

    @property
    def n_elements(self) -> int:
        return self.g.shape[2]

    @cached_property
    def z(self) -> np.ndarray:
        """Cascaded rows ``g^H diag(f)``, shape (N, K, M)."""
        return np.conj(self.g) * self.f[:, None, :]

    def gains(self, e: np.ndarray) -> np.ndarray:
        """Combined gains ``|z e + h|^2`` for every (n, k)."""
        return np.abs(self.responses(e)) ** 2

    def responses(self, e: np.ndarray) -> np.ndarray:
        e = np.asarray(e, dtype=complex)
        if e.shape != (self.n_elements,):
            raise ValueError(f"reflection vector must have length {self.n_elements}")
        return self.z @ e + self.h

    def without_irs(self) -> "ChannelRealization":
        """Same direct links with the reflection path removed (M = 0)."""
        n, k = self.h.shape
        return ChannelRealization(
            h=self.h.copy(),
            g=np.zeros((n, k, 0), complex),
            f=np.zeros((n, 0), complex),
            f_los=np.zeros((n, 0), complex),
            f_nlos=np.zeros((n, 0), complex),
            noise_power=self.noise_power,
            user_pos=self.user_pos.copy(),
            seed=self.seed,
        )


def sample_user_positions(config: SystemConfig, rng: np.random.Generator) -> np.ndarray:
    r = config.user_radius * np.sqrt(rng.uniform(size=config.n_users))
    phi = rng.uniform(0.0, 2.0 * np.pi, size=config.n_users)
    center = np.asarray(config.user_center, dtype=float)
    pos = np.tile(center, (config.n_users, 1))
    pos[:, 0] += r * np.cos(phi)
    pos[:, 1] += r * np.sin(phi)
    return pos


def sample_channels(config: SystemConfig, seed: int | None = None) -> ChannelRealization:
    """Draw user positions and all small-scale fading for one trial.

    Each link family uses its own child stream of ``seed``, so changing
    ``n_elements`` or the IRS position leaves the direct channels and the
    user drop untouched for the same seed.
    """
    seed = config.seed if seed is None else seed
    pos_rng, h_rng, g_rng, f_rng = (
        np.random.default_rng(s) for s in np.random.SeedSequence(seed).spawn(4)
    )
    n, k, m = config.n_channels, config.n_users, config.n_elements
    users = sample_user_positions(config, pos_rng)
    bs = np.asarray(config.bs_pos, dtype=float)
    irs = np.asarray(config.irs_pos, dtype=float)

    d_bu = np.maximum(np.linalg.norm(users - bs, axis=1), config.min_distance)
    d_iu = np.maximum(np.linalg.norm(users - irs, axis=1), config.min_distance)
    d_bi = max(float(np.linalg.norm(irs - bs)), config.min_distance)

    pl_bu = path_loss(d_bu, config.pl_exp_bs_user)
    pl_iu = path_loss(d_iu, config.pl_exp_irs_user)
    pl_bi = path_loss(d_bi, config.pl_exp_bs_irs)

    h = np.sqrt(pl_bu)[None, :] * _cn(h_rng, (n, k))
    g = np.sqrt(pl_iu)[None, :, None] * _cn(g_rng, (n, k, m))
    f_los = np.sqrt(pl_bi) * np.tile(los_vector(m, placement_angle(config)), (n, 1))
    f_nlos = np.sqrt(pl_bi) * _cn(f_rng, (n, m))
    w_los, w_nlos = rician_weights(config.rician_factor)
    f = w_los * f_los + w_nlos * f_nlos
    return ChannelRealization(
        h=h, g=g, f=f, f_los=f_los, f_nlos=f_nlos,
        noise_power=config.noise_power, user_pos=users, seed=seed,
    )


def rician_weights(kappa: float) -> tuple[float, float]:
    if math.isinf(kappa):
        return 1.0, 0.0
    return math.sqrt(kappa / (1.0 + kappa)), math.sqrt(1.0 / (1.0 + kappa))


def combined_gain(chan: ChannelRealization, n: int, k: int, e: np.ndarray) -> float:
    """``|g^H diag(e) f + h|^2`` for channel ``n`` and user ``k``."""
    e = np.asarray(e, dtype=complex)
    return float(abs(chan.z[n, k] @ e + chan.h[n, k]) ** 2)


def order_positions(order: DecodingOrder, n_users: int) -> np.ndarray:
    """Channel and one-based decoding position of each user (-1, 0 if unassigned)."""
    out = np.full((n_users, 2), -1, dtype=int)
    out[:, 1] = 0
    for n, users in enumerate(order):
        for j, k in enumerate(users):
            if out[k, 0] != -1:
                raise ValueError(f"user {k} appears on more than one channel")
            out[k] = (n, j + 1)
    return out


def check_order(order: DecodingOrder, assignment: Sequence[Sequence[int]] | None = None) -> None:
    seen: set[int] = set()
    for users in order:
        if len(set(users)) != len(users) or seen.intersection(users):
            raise ValueError("decoding order repeats a user")
        seen.update(users)
    if assignment is not None:
        if len(assignment) != len(order):
            raise ValueError("assignment and order disagree on the channel count")
        for users, assigned in zip(order, assignment):
            if set(users) != set(assigned):
                raise ValueError("decoding order is not a permutation of the channel's users")


def rate(
    chan: ChannelRealization,
    assignment: Sequence[Sequence[int]] | None,
    order: DecodingOrder,
    p: np.ndarray,
    e: np.ndarray,
) -> np.ndarray:
    """Per-(n, k) achievable NOMA rates under SIC with the given order.

    ``p`` has shape (N, K); entries of users not on channel ``n`` are
    ignored. Users decoded later act as interference for earlier ones.
    """
    check_order(order, assignment)
    p = np.asarray(p, dtype=float)
    if np.any(p < 0):
        raise ValueError("powers must be non-negative")
    gains = chan.gains(e)
    out = np.zeros_like(gains)
    for n, users in enumerate(order):
        users = list(users)
        if not users:
            continue
        pw = p[n, users]
        later = np.concatenate([np.cumsum(pw[::-1])[::-1][1:], [0.0]])
        gn = gains[n, users]
        out[n, users] = np.log2(1.0 + pw * gn / (gn * later + chan.noise_power))
    return out


def cross_rate(
    chan: ChannelRealization,
    order: DecodingOrder,
    p: np.ndarray,
    e: np.ndarray,
    decoder: int,
    target: int,
) -> float:
    """Rate at which ``decoder`` can decode ``target``'s signal."""
    pos = order_positions(order, chan.n_users)
    n = pos[target, 0]
    if n < 0 or pos[decoder, 0] != n:
        raise ValueError("decoder and target must share a channel")
    if pos[target, 1] > pos[decoder, 1]:
        raise ValueError("decoder must not be decoded before the target")
    users = order[n]
    j = users.index(target)
    later = float(sum(p[n, u] for u in users[j + 1:]))
    gain = combined_gain(chan, n, decoder, e)
    return math.log2(1.0 + p[n, target] * gain / (gain * later + chan.noise_power))


def sic_feasible(
    chan: ChannelRealization,
    assignment: Sequence[Sequence[int]] | None,
    order: DecodingOrder,
    e: np.ndarray,
    margin: float = 0.0,
) -> bool:
    """True when gains increase along the decoding order on every channel.

    ``margin`` is an absolute gain gap in watts-normalised units, i.e. it is
    compared against ``gain / noise_power``.
    """
    check_order(order, assignment)
    gains = chan.gains(e) / chan.noise_power
    for n, users in enumerate(order):
        g = gains[n, list(users)]
        for a in range(len(users)):
            for b in range(a + 1, len(users)):
                if g[b] - g[a] < margin:
                    return False
    return True


def throughput(chan: ChannelRealization, order: DecodingOrder, p: np.ndarray, e: np.ndarray) -> float:
    return float(rate(chan, None, order, p, e).sum())


def sinr(chan: ChannelRealization, order: DecodingOrder, p: np.ndarray, e: np.ndarray) -> np.ndarray:
    """Per-(n, k) SINR after SIC; zero for unassigned pairs."""
    gains = chan.gains(e)
    out = np.zeros_like(gains)
    for n, users in enumerate(order):
        users = list(users)
        if not users:
            continue
        pw = p[n, users]
        later = np.concatenate([np.cumsum(pw[::-1])[::-1][1:], [0.0]])
        gn = gains[n, users]
        out[n, users] = pw * gn / (gn * later + chan.noise_power)
    return out
