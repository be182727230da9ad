"""Pairwise click statistics and the KL-UCB numerics built on them.

The re-ranking algorithms decide everything from two integer matrices:
``s[i, j]`` accumulates click differences between items ``i`` and ``j`` and
``n[i, j]`` counts the informative observations of the pair. ``s`` is
antisymmetric, ``n`` symmetric, and ``|s| <= n`` always.

The numeric kernels are numba-compiled; they are shared verbatim by the
stepwise ranker classes and the fused simulation loops so both execution
paths produce bit-identical trajectories.
"""

from __future__ import annotations

import math

import numpy as np
from numba import njit

from .errors import ConfigurationError, InputContractError

KLUCB_TOL = 1e-9


# ---------------------------------------------------------------------------
# compiled numeric core


@njit(cache=True, nogil=True)
def _kl(p, q):
    if p == q:
        return 0.0
    if q <= 0.0 or q >= 1.0:
        return np.inf
    out = 0.0
    if p > 0.0:
        out += p * math.log(p / q)
    if p < 1.0:
        out += (1.0 - p) * math.log((1.0 - p) / (1.0 - q))
    return out


@njit(cache=True, nogil=True)
def _exploration_budget(t):
    # log t + 3 log log t, clamped at zero; undefined below t = 2
    if t <= 1:
        return 0.0
    b = math.log(t) + 3.0 * math.log(math.log(t))
    return b if b > 0.0 else 0.0


@njit(cache=True, nogil=True)
def _klucb(mu_hat, n_obs, t):
    if t == 0 or n_obs == 0 or mu_hat >= 1.0:
        return 1.0
    budget = _exploration_budget(t)
    if budget <= 0.0:
        return mu_hat
    lo = mu_hat
    hi = 1.0
    it = 0
    while hi - lo > KLUCB_TOL and it < 64:
        mid = 0.5 * (lo + hi)
        if n_obs * _kl(mu_hat, mid) <= budget:
            lo = mid
        else:
            hi = mid
        it += 1
    return lo


@njit(cache=True, nogil=True)
def _pair_index(s_ij, n_ij, leader_count):
    if n_ij == 0:
        return 1.0
    mu_hat = 0.5 * (1.0 + s_ij / n_ij)
    return 2.0 * _klucb(mu_hat, n_ij, leader_count) - 1.0


@njit(cache=True, nogil=True)
def _confident(s_ij, n_ij, log_inv_delta):
    return s_ij > 2.0 * math.sqrt(n_ij * log_inv_delta)


@njit(cache=True, nogil=True)
def _update_stats(s, n, version, working, clicks, parity):
    # one pass over the alternating adjacent pairs of this round's parity;
    # a pair is informative only when exactly one of its positions was clicked
    K = working.shape[0] - 1
    for p in range(parity, K, 2):
        i = working[p]
        j = working[p + 1]
        d = clicks[p] - clicks[p + 1]
        if d == 1 or d == -1:
            s[i, j] += d
            s[j, i] -= d
            n[i, j] += 1
            n[j, i] += 1
            version[i, j] += 1
            version[j, i] += 1


# ---------------------------------------------------------------------------
# public surface


def bernoulli_kl(p: float, q: float) -> float:
    """KL divergence between Bernoulli(p) and Bernoulli(q), in nats.

    Uses the convention 0 log 0 = 0 and returns +inf when q is 0 or 1 while
    p is not.
    """
    if not (0.0 <= p <= 1.0 and 0.0 <= q <= 1.0):
        raise InputContractError(f"kl arguments must lie in [0, 1], got ({p}, {q})")
    return _kl(p, q)


def klucb_index(mu_hat: float, n_obs: int, t: int) -> float:
    """Upper confidence bound for a Bernoulli mean after ``n_obs`` samples.

    Largest mean mu in [mu_hat, 1] whose divergence stays within the
    exploration budget log t + 3 log log t (clamped at zero), located by
    bisection to absolute tolerance 1e-9. Degenerate inputs (t = 0,
    n_obs = 0, or mu_hat = 1) return 1.
    """
    if not 0.0 <= mu_hat <= 1.0:
        raise InputContractError(f"mu_hat must lie in [0, 1], got {mu_hat}")
    if n_obs < 0 or t < 0:
        raise InputContractError("counts must be nonnegative")
    return _klucb(float(mu_hat), int(n_obs), int(t))


def candidate_pairs(parity: int, display_size: int) -> list[tuple[int, int]]:
    """Adjacent position pairs examined in a round of the given parity.

    Positions are 0-based; pairs are ``(p, p + 1)`` for ``p = parity,
    parity + 2, ...`` and the second slot may reach ``display_size``, i.e.
    the hidden extra slot of the working ranking.
    """
    if display_size < 1:
        raise InputContractError("display_size must be positive")
    if parity not in (0, 1):
        raise InputContractError("parity must be 0 or 1")
    return [(p, p + 1) for p in range(parity, display_size, 2)]


class PairStats:
    """Click-difference and observation-count matrices over item pairs.

    ``version`` counts how many times each pair was touched; the rankers use
    it to invalidate cached confidence-bound values.
    """

    __slots__ = ("num_items", "s", "n", "version")

    def __init__(self, num_items: int):
        if num_items < 1:
            raise InputContractError("num_items must be positive")
        self.num_items = num_items
        self.s = np.zeros((num_items, num_items), dtype=np.int64)
        self.n = np.zeros((num_items, num_items), dtype=np.int64)
        self.version = np.zeros((num_items, num_items), dtype=np.int64)

    def update(self, working: np.ndarray, clicks: np.ndarray, parity: int) -> None:
        """Fold one round of clicks on a working ranking into the matrices.

        ``working`` holds K + 1 items; ``clicks`` covers the K displayed
        positions (the hidden slot counts as unclicked).
        """
        working = np.asarray(working, dtype=np.int64)
        clicks = np.asarray(clicks, dtype=np.int64)
        if parity not in (0, 1):
            raise InputContractError("parity must be 0 or 1")
        K = working.shape[0] - 1
        if K < 1:
            raise InputContractError("working ranking must hold at least two items")
        if np.any(working < 0) or np.any(working >= self.num_items):
            raise InputContractError("working ranking contains out-of-range items")
        if clicks.shape[0] == K:
            clicks = np.append(clicks, 0)
        elif clicks.shape[0] != K + 1:
            raise InputContractError(
                f"clicks must cover {K} displayed positions, got {clicks.shape[0]}"
            )
        if np.any((clicks != 0) & (clicks != 1)):
            raise InputContractError("clicks must be 0/1")
        _update_stats(self.s, self.n, self.version, working, clicks, parity)

    def copy(self) -> "PairStats":
        out = PairStats(self.num_items)
        out.s[:] = self.s
        out.n[:] = self.n
        out.version[:] = self.version
        return out


def is_confidently_better(stats: PairStats, i: int, j: int, delta: float) -> bool:
    """Whether item ``i`` has beaten item ``j`` beyond the confidence radius.

    True when s[i, j] > 2 sqrt(n[i, j] log(1 / delta)); with no observations
    this is 0 > 0 and therefore false.
    """
    if i == j:
        raise InputContractError("pair must consist of two distinct items")
    if not 0.0 < delta < 1.0:
        raise ConfigurationError(f"delta must lie in (0, 1), got {delta}")
    return bool(_confident(stats.s[i, j], stats.n[i, j], math.log(1.0 / delta)))


def optimistic_pair_index(stats: PairStats, i: int, j: int, leader_count: int) -> float:
    """Optimistic estimate in [-1, 1] of how item ``i`` compares to ``j``.

    Rescales the KL-UCB bound of the win-rate statistic (1 + s/n) / 2 back
    to the click-difference scale; unobserved pairs score the maximal 1.
    """
    if i == j:
        raise InputContractError("pair must consist of two distinct items")
    if leader_count < 0:
        raise InputContractError("leader_count must be nonnegative")
    return float(_pair_index(stats.s[i, j], stats.n[i, j], int(leader_count)))


class LeaderCounts:
    """How many rounds each ranking has served as the leader."""

    __slots__ = ("_counts",)

    def __init__(self) -> None:
        self._counts: dict[tuple[int, ...], int] = {}

    def bump(self, ranking: np.ndarray) -> int:
        """Record one more leader round for ``ranking`` and return its count."""
        key = tuple(int(x) for x in ranking)
        value = self._counts.get(key, 0) + 1
        self._counts[key] = value
        return value

    def count(self, ranking: np.ndarray) -> int:
        return self._counts.get(tuple(int(x) for x in ranking), 0)

    @property
    def total(self) -> int:
        return sum(self._counts.values())
