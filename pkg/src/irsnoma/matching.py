"""Many-to-one matching of users to channels with swap-based refinement."""

from __future__ import annotations

import itertools
from math import comb
from dataclasses import dataclass, field
from typing import Iterator, Sequence

import numpy as np

from .scenario import ChannelRealization, SystemConfig


@dataclass
class UtilityContext:
    """Fixed quantities used to score channel coalitions.

    Every served user gets ``p_max / n_users``, the reflection vector is
    fixed (all ones or all zeros) and each channel decodes in ascending
    gain order.
    """

    gains: np.ndarray
    power: float
    noise_power: float

    @classmethod
    def from_config(cls, chan: ChannelRealization, config: SystemConfig) -> "UtilityContext":
        fill = 1.0 if config.matching_reflection == "ones" else 0.0
        e = np.full(chan.n_elements, fill, complex)
        return cls(chan.gains(e), config.p_max / chan.n_users, chan.noise_power)

    def rates(self, n: int, users: Sequence[int]) -> dict[int, float]:
        """Per-user rates on channel ``n`` when it serves ``users``."""
        users = sorted(users, key=lambda k: (self.gains[n, k], k))
        g = self.gains[n, users]
        later = self.power * np.arange(len(users) - 1, -1, -1)
        r = np.log2(1.0 + self.power * g / (g * later + self.noise_power))
        return dict(zip(users, r.tolist()))

    def channel_utility(self, n: int, users: Sequence[int]) -> float:
        return float(sum(self.rates(n, users).values()))


@dataclass
class Matching:
    """Channel of each user plus the rejection bookkeeping."""

    n_channels: int
    cap: int
    channel_of: np.ndarray
    rejected_by: list[set[int]] = field(default_factory=list)
    rejected_channels: list[set[int]] = field(default_factory=list)
    swaps: int = 0
    utility_trace: list[float] = field(default_factory=list)

    def members(self, n: int) -> list[int]:
        return [int(k) for k in np.flatnonzero(self.channel_of == n)]

    def assignment(self) -> tuple[tuple[int, ...], ...]:
        return tuple(tuple(self.members(n)) for n in range(self.n_channels))

    def total_utility(self, ctx: UtilityContext) -> float:
        return sum(ctx.channel_utility(n, self.members(n)) for n in range(self.n_channels))

    def check(self) -> None:
        """Raise if a user is unmatched or a channel is over capacity."""
        if np.any(self.channel_of < 0):
            raise ValueError("some user is unmatched")
        counts = np.bincount(self.channel_of, minlength=self.n_channels)
        if np.any(counts > self.cap):
            raise ValueError("channel over capacity")


def init_matching(chan: ChannelRealization, config: SystemConfig) -> Matching:
    """Proposal rounds: each unmatched user proposes to its best channel
    that has not rejected it; channels keep their strongest users up to
    capacity."""
    n_ch, n_users = chan.n_channels, chan.n_users
    gains = UtilityContext.from_config(chan, config).gains
    m = Matching(n_ch, config.per_channel_cap, np.full(n_users, -1),
                 [set() for _ in range(n_ch)], [set() for _ in range(n_users)])
    for _ in range(n_ch * n_users + 1):
        unmatched = [k for k in range(n_users) if m.channel_of[k] < 0]
        if not unmatched:
            return m
        proposals: dict[int, list[int]] = {n: [] for n in range(n_ch)}
        for k in unmatched:
            options = [n for n in range(n_ch) if n not in m.rejected_channels[k]]
            if not options:
                raise RuntimeError(f"user {k} was rejected by every channel")
            best = max(options, key=lambda n: (gains[n, k], -n))
            proposals[best].append(k)
        for n, new in proposals.items():
            if not new:
                continue
            pool = m.members(n) + new
            pool.sort(key=lambda k: (-gains[n, k], k))
            keep, drop = pool[:m.cap], pool[m.cap:]
            for k in keep:
                m.channel_of[k] = n
            for k in drop:
                m.channel_of[k] = -1
                m.rejected_by[n].add(k)
                m.rejected_channels[k].add(n)
    raise RuntimeError("proposal phase did not terminate")


def is_swap_blocking(m: Matching, k: int, k2: int, ctx: UtilityContext, margin: float = 1e-9) -> bool:
    """True when exchanging the channels of ``k`` and ``k2`` leaves none of
    the four players (the two users and the two channels, scored by their
    sum rate) worse off and makes at least one better by more than ``margin``.

    Raises ``ValueError`` for users on the same channel or unmatched users.
    """
    n, n2 = int(m.channel_of[k]), int(m.channel_of[k2])
    if n < 0 or n2 < 0:
        raise ValueError("both users must be matched")
    if n == n2:
        raise ValueError(f"users {k} and {k2} share channel {n}")
    a, b = m.members(n), m.members(n2)
    a_new = [u for u in a if u != k] + [k2]
    b_new = [u for u in b if u != k2] + [k]
    ra, rb = ctx.rates(n, a), ctx.rates(n2, b)
    ra_new, rb_new = ctx.rates(n, a_new), ctx.rates(n2, b_new)
    diffs = [
        rb_new[k] - ra[k],
        ra_new[k2] - rb[k2],
        sum(ra_new.values()) - sum(ra.values()),
        sum(rb_new.values()) - sum(rb.values()),
    ]
    return all(d >= -margin for d in diffs) and any(d > margin for d in diffs)


def assign_channels(chan: ChannelRealization, config: SystemConfig) -> Matching:
    """Initial proposals followed by swap operations until no swap-blocking
    pair remains. Pairs are scanned in index order, so the result is
    deterministic."""
    ctx = UtilityContext.from_config(chan, config)
    m = init_matching(chan, config)
    m.utility_trace.append(m.total_utility(ctx))
    limit = config.swap_safety_factor * chan.n_users**2
    changed = True
    while changed:
        changed = False
        for k, k2 in itertools.combinations(range(chan.n_users), 2):
            if m.channel_of[k] == m.channel_of[k2]:
                continue
            if is_swap_blocking(m, k, k2, ctx, config.swap_margin):
                m.channel_of[k], m.channel_of[k2] = m.channel_of[k2], m.channel_of[k]
                m.swaps += 1
                m.utility_trace.append(m.total_utility(ctx))
                changed = True
                if m.swaps > limit:
                    raise RuntimeError(f"swap phase exceeded {limit} swaps")
    m.check()
    return m


def blocking_pairs(m: Matching, ctx: UtilityContext, margin: float = 1e-9) -> list[tuple[int, int]]:
    """Every swap-blocking pair of users on different channels."""
    return [
        (k, k2)
        for k, k2 in itertools.combinations(range(len(m.channel_of)), 2)
        if m.channel_of[k] != m.channel_of[k2] and is_swap_blocking(m, k, k2, ctx, margin)
    ]


def enumerate_assignments(n_users: int, n_channels: int, cap: int) -> Iterator[tuple[tuple[int, ...], ...]]:
    """Every map of users to channels respecting the per-channel cap."""
    for labels in itertools.product(range(n_channels), repeat=n_users):
        counts = np.bincount(labels, minlength=n_channels)
        if np.all(counts <= cap):
            yield tuple(tuple(k for k in range(n_users) if labels[k] == n) for n in range(n_channels))


def count_assignments(n_users: int, n_channels: int, cap: int) -> int:
    """Number of capacity-respecting maps, without enumerating them."""
    # ways[j] = number of ways to place j labelled users on the channels seen so far
    ways = [1] + [0] * n_users
    for _ in range(n_channels):
        new = [0] * (n_users + 1)
        for j, w in enumerate(ways):
            if not w:
                continue
            for c in range(min(cap, n_users - j) + 1):
                new[j + c] += w * comb(n_users - j, c)
        ways = new
    return ways[n_users]


def best_partition_utility(chan: ChannelRealization, config: SystemConfig):
    """Exhaustive maximiser of the matching utility. Returns ``(assignment, utility)``."""
    ctx = UtilityContext.from_config(chan, config)
    best, best_u = None, -np.inf
    for a in enumerate_assignments(chan.n_users, chan.n_channels, config.per_channel_cap):
        u = sum(ctx.channel_utility(n, users) for n, users in enumerate(a))
        if u > best_u + 1e-12:
            best, best_u = a, u
    return best, best_u
