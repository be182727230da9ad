"""Ranking algorithms behind a common propose/feedback interface.

``SafeRanker`` implements the bubble-sort style safe re-ranker: it keeps a
leader ranking of the K best items found so far, appends one unranked item
per round to a hidden extra slot, displays the leader with randomized
adjacent exchanges wherever the pairwise order is still uncertain, and
promotes items only once their pairwise superiority is established beyond
the confidence radius. The two algorithm ids "klucb-br" and
"bubblerank-random" differ only in how the unranked item is chosen:
optimistically by a KL-UCB index, or uniformly among items not yet proven
worse than the current bottom item.

"original" (static production ranking) and "uniform-random" (safety-agnostic
baseline) complete the roster.
"""

from __future__ import annotations

import math

import numpy as np
from numba import njit

from .click_models import validate_ranking
from .errors import ConfigurationError, InputContractError, ProtocolError
from .pairwise_stats import (
    KLUCB_TOL,
    LeaderCounts,
    PairStats,
    _confident,
    _exploration_budget,
    _kl,
)

ALGORITHM_IDS = ("klucb-br", "bubblerank-random", "original", "uniform-random")

# cache_step values are clamped into [KLUCB_TOL, _MAX_STEP]
_MAX_STEP = 0.25


# ---------------------------------------------------------------------------
# compiled helpers, shared by the stepwise rankers and the fused kernels


@njit(cache=True, nogil=True)
def _warm_klucb(mu_hat, n_obs, budget, lo_hint, step_hint):
    """KL-UCB bisection warm-started from a trusted lower bound.

    Same fixpoint and tolerance as the cold bisection; the hint only
    tightens the initial bracket.
    """
    lo = mu_hat if lo_hint < mu_hat else lo_hint
    hi = 1.0
    if step_hint > 0.0 and lo > mu_hat:
        step = step_hint
        cand = lo + step
        while cand < 1.0 and n_obs * _kl(mu_hat, cand) <= budget:
            lo = cand
            step *= 4.0
            cand = lo + step
        if cand < 1.0:
            hi = cand
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
def _select_klucb(s, n, version, cache_f, cache_version, cache_bottom,
                  cache_count, cache_step, champion, leader, leader_count, u,
                  scratch_items, scratch_f):
    """Unranked item with the highest optimistic index against the bottom item.

    Equivalent to evaluating the pair index for every unranked item and
    breaking argmax ties uniformly (``u`` is one pre-drawn uniform). Two
    shortcuts keep the exact same outcome cheap: items whose index is
    structurally 1 skip the numerics entirely, and an item shown infeasible
    at the best bound found so far is strictly below the maximum, so it can
    neither win nor tie. Cache arrays persist warm-start brackets between
    rounds and are part of the ranker state.
    """
    L = s.shape[0]
    K = leader.shape[0]
    bot = leader[K - 1]

    nun = 0
    for j in range(L):
        ranked = False
        for p in range(K):
            if leader[p] == j:
                ranked = True
                break
        if not ranked:
            scratch_items[nun] = j
            nun += 1

    # structural maxima: unobserved pairs, a degenerate win rate, or a zero
    # leader count all pin the index at exactly 1
    n_top = 0
    for q in range(nun):
        j = scratch_items[q]
        scratch_f[q] = -2.0
        if leader_count == 0 or n[j, bot] == 0 or s[j, bot] == n[j, bot]:
            scratch_f[q] = 1.0
            n_top += 1
    if n_top > 0:
        pick = int(u * n_top)
        c = 0
        for q in range(nun):
            if scratch_f[q] == 1.0:
                if c == pick:
                    champion[0] = scratch_items[q]
                    return scratch_items[q]
                c += 1

    budget = _exploration_budget(leader_count)
    if budget <= 0.0:
        # bisection cannot move off mu_hat, so compare the means directly
        best = -1.0
        for q in range(nun):
            j = scratch_items[q]
            scratch_f[q] = 0.5 * (1.0 + s[j, bot] / n[j, bot])
            if scratch_f[q] > best:
                best = scratch_f[q]
        n_tie = 0
        for q in range(nun):
            if scratch_f[q] == best:
                scratch_items[n_tie] = scratch_items[q]
                n_tie += 1
        sel = scratch_items[int(u * n_tie)]
        champion[0] = sel
        return sel

    champ_slot = 0
    for q in range(nun):
        if scratch_items[q] == champion[0]:
            champ_slot = q
            break

    best_f = -1.0
    for visit in range(nun):
        if visit == 0:
            q = champ_slot
        else:
            q = visit - 1 if visit - 1 < champ_slot else visit
        j = scratch_items[q]
        nn = n[j, bot]
        mu = 0.5 * (1.0 + s[j, bot] / nn)
        if visit > 0 and mu < best_f:
            # one evaluation decides whether this item can reach the leader
            if nn * _kl(mu, best_f) > budget:
                continue
        lo = mu
        step = KLUCB_TOL
        if (cache_version[j] == version[j, bot] and cache_bottom[j] == bot
                and leader_count >= cache_count[j]):
            if cache_f[j] > lo:
                lo = cache_f[j]
            if cache_step[j] > step:
                step = cache_step[j]
        f = _warm_klucb(mu, nn, budget, lo, step)
        cache_f[j] = f
        cache_version[j] = version[j, bot]
        cache_bottom[j] = bot
        cache_count[j] = leader_count
        adv = f - lo
        if adv < KLUCB_TOL:
            adv = KLUCB_TOL
        elif adv > _MAX_STEP:
            adv = _MAX_STEP
        cache_step[j] = adv
        scratch_f[q] = f
        if f > best_f:
            best_f = f

    n_tie = 0
    for q in range(nun):
        if scratch_f[q] == best_f:
            scratch_items[n_tie] = scratch_items[q]
            n_tie += 1
    sel = scratch_items[int(u * n_tie)]
    champion[0] = sel
    return sel


@njit(cache=True, nogil=True)
def _select_random_unproven(s, n, leader, log_inv_delta, u, scratch_items):
    """Uniform choice among unranked items not yet proven worse than the
    bottom item; falls back to all unranked items if none remain."""
    L = s.shape[0]
    K = leader.shape[0]
    bot = leader[K - 1]
    n_cand = 0
    n_all = 0
    for j in range(L):
        ranked = False
        for p in range(K):
            if leader[p] == j:
                ranked = True
                break
        if ranked:
            continue
        n_all += 1
        if not _confident(s[bot, j], n[bot, j], log_inv_delta):
            scratch_items[n_cand] = j
            n_cand += 1
    if n_cand == 0:
        for j in range(L):
            ranked = False
            for p in range(K):
                if leader[p] == j:
                    ranked = True
                    break
            if not ranked:
                scratch_items[n_cand] = j
                n_cand += 1
    return scratch_items[int(u * n_cand)]


@njit(cache=True, nogil=True)
def _randomized_exchange(display, s, n, parity, log_inv_delta, coins):
    """Swap each still-uncertain adjacent pair of this parity with prob 1/2.

    ``coins`` supplies one pre-drawn uniform per candidate pair; a coin is
    consumed whether or not its pair is exchanged, keeping the draw count a
    function of the round parity alone.
    """
    K = display.shape[0] - 1
    ci = 0
    for p in range(parity, K, 2):
        i = display[p]
        j = display[p + 1]
        coin = coins[ci]
        ci += 1
        if not _confident(s[i, j], n[i, j], log_inv_delta):
            if coin < 0.5:
                display[p] = j
                display[p + 1] = i


@njit(cache=True, nogil=True)
def _bubble_pass(working, s, n, log_inv_delta):
    """Single in-place pass promoting items proven better than their upper
    neighbour; sequential, so an item rises at most one position per round."""
    K = working.shape[0] - 1
    for k in range(K):
        i = working[k]
        j = working[k + 1]
        if _confident(s[j, i], n[j, i], log_inv_delta):
            working[k] = j
            working[k + 1] = i


@njit(cache=True, nogil=True)
def _fill_kperm(items, us, out):
    """Uniform K-permutation via partial Fisher-Yates on ``items`` (reset
    to 0..L-1 first), consuming exactly K pre-drawn uniforms."""
    L = items.shape[0]
    K = out.shape[0]
    for i in range(L):
        items[i] = i
    for i in range(K):
        j = i + int(us[i] * (L - i))
        tmp = items[i]
        items[i] = items[j]
        items[j] = tmp
        out[i] = items[i]


# ---------------------------------------------------------------------------
# public selection operations


def select_unranked_klucb(
    stats: PairStats,
    leader: np.ndarray,
    leader_counts: LeaderCounts,
    rng: np.random.Generator,
) -> int:
    """Pick the unranked item with the highest optimistic index against the
    leader's bottom item, breaking ties uniformly at random."""
    leader = np.asarray(leader, dtype=np.int64)
    L = stats.num_items
    if leader.shape[0] >= L:
        raise InputContractError("no unranked items exist")
    state = _fresh_selection_state(L)
    return int(_select_klucb(
        stats.s, stats.n, stats.version,
        state["cache_f"], state["cache_version"], state["cache_bottom"],
        state["cache_count"], state["cache_step"], state["champion"],
        leader, leader_counts.count(leader), rng.random(),
        state["scratch_items"], state["scratch_f"],
    ))


def select_unranked_random(
    stats: PairStats,
    leader: np.ndarray,
    delta: float,
    rng: np.random.Generator,
) -> int:
    """Pick uniformly among unranked items not yet proven worse than the
    leader's bottom item (all unranked items if none qualify)."""
    leader = np.asarray(leader, dtype=np.int64)
    L = stats.num_items
    if leader.shape[0] >= L:
        raise InputContractError("no unranked items exist")
    if not 0.0 < delta < 1.0:
        raise ConfigurationError(f"delta must lie in (0, 1), got {delta}")
    scratch = np.empty(L, dtype=np.int64)
    return int(_select_random_unproven(
        stats.s, stats.n, leader, math.log(1.0 / delta), rng.random(), scratch,
    ))


def _fresh_selection_state(num_items: int) -> dict:
    return {
        "cache_f": np.zeros(num_items),
        "cache_version": np.full(num_items, -1, dtype=np.int64),
        "cache_bottom": np.full(num_items, -1, dtype=np.int64),
        "cache_count": np.zeros(num_items, dtype=np.int64),
        "cache_step": np.full(num_items, KLUCB_TOL),
        "champion": np.full(1, -1, dtype=np.int64),
        "scratch_items": np.empty(num_items, dtype=np.int64),
        "scratch_f": np.empty(num_items),
    }


# ---------------------------------------------------------------------------
# rankers


class Ranker:
    """Round-based interface: reset once, then propose/feedback per round.

    ``propose(t)`` returns the K-item ranking to display in round ``t``
    (1-based, contiguous); ``feedback(t, clicks)`` delivers the observed
    click vector. Behaviour is deterministic given the seed and the click
    history.
    """

    algorithm_id: str = ""

    def reset(self, num_items: int, display_size: int, original_ranking: np.ndarray,
              delta: float, seed) -> None:
        raise NotImplementedError

    def propose(self, t: int) -> np.ndarray:
        raise NotImplementedError

    def feedback(self, t: int, clicks: np.ndarray) -> None:
        raise NotImplementedError

    # shared protocol bookkeeping
    def _start_protocol(self) -> None:
        self._round = 0
        self._pending = False

    def _check_propose(self, t: int) -> None:
        if self._pending:
            raise ProtocolError(f"propose({t}) called before feedback({self._round})")
        if t != self._round + 1:
            raise ProtocolError(f"expected propose({self._round + 1}), got propose({t})")
        self._round = t
        self._pending = True

    def _check_feedback(self, t: int) -> None:
        if not self._pending or t != self._round:
            raise ProtocolError(f"feedback({t}) does not match a pending propose")
        self._pending = False


class SafeRanker(Ranker):
    """Safe re-ranker with a pluggable unranked-item selector.

    ``selector`` is "klucb" for the optimistic index or "random-unproven"
    for the uniform baseline; everything else about the two algorithms is
    literally the same code path.
    """

    def __init__(self, selector: str):
        if selector not in ("klucb", "random-unproven"):
            raise ConfigurationError(f"unknown selector {selector!r}")
        self.selector = selector
        self.algorithm_id = "klucb-br" if selector == "klucb" else "bubblerank-random"

    def reset(self, num_items, display_size, original_ranking, delta, seed):
        if not 0.0 < delta < 1.0:
            raise ConfigurationError(f"delta must lie in (0, 1), got {delta}")
        original_ranking = np.asarray(original_ranking, dtype=np.int64)
        validate_ranking(original_ranking, num_items, display_size)
        if display_size >= num_items:
            raise InputContractError("safe rankers need at least one unranked item")
        self.L = num_items
        self.K = display_size
        self.delta = delta
        self._log_inv_delta = math.log(1.0 / delta)
        self.rng = np.random.default_rng(seed)
        self.stats = PairStats(num_items)
        self.leader_counts = LeaderCounts()
        self.leader = original_ranking.copy()
        self._sel_state = _fresh_selection_state(num_items)
        self._working = np.empty(display_size + 1, dtype=np.int64)
        self._display = np.empty(display_size + 1, dtype=np.int64)
        self._start_protocol()

    def propose(self, t: int) -> np.ndarray:
        self._check_propose(t)
        h = t % 2
        leader_count = self.leader_counts.bump(self.leader)
        u = self.rng.random()
        if self.selector == "klucb":
            st = self._sel_state
            sel = _select_klucb(
                self.stats.s, self.stats.n, self.stats.version,
                st["cache_f"], st["cache_version"], st["cache_bottom"],
                st["cache_count"], st["cache_step"], st["champion"],
                self.leader, leader_count, u,
                st["scratch_items"], st["scratch_f"],
            )
        else:
            sel = _select_random_unproven(
                self.stats.s, self.stats.n, self.leader,
                self._log_inv_delta, u, self._sel_state["scratch_items"],
            )
        self._working[: self.K] = self.leader
        self._working[self.K] = sel
        self._display[:] = self._working
        coins = self.rng.random(len(range(h, self.K, 2)))
        _randomized_exchange(self._display, self.stats.s, self.stats.n, h,
                             self._log_inv_delta, coins)
        return self._display[: self.K].copy()

    def feedback(self, t: int, clicks: np.ndarray) -> None:
        self._check_feedback(t)
        clicks = np.asarray(clicks, dtype=np.int64)
        if clicks.shape != (self.K,):
            raise InputContractError(f"clicks must have shape ({self.K},)")
        self.stats.update(self._display, clicks, t % 2)
        _bubble_pass(self._working, self.stats.s, self.stats.n, self._log_inv_delta)
        self.leader = self._working[: self.K].copy()

    @property
    def working_ranking(self) -> np.ndarray:
        """Working ranking of the current round (leader plus explored item)."""
        return self._working.copy()

    @property
    def displayed_working(self) -> np.ndarray:
        """Working ranking in displayed order, including the hidden slot."""
        return self._display.copy()


class OriginalRanker(Ranker):
    """Static baseline that always shows the original ranking."""

    algorithm_id = "original"

    def reset(self, num_items, display_size, original_ranking, delta, seed):
        original_ranking = np.asarray(original_ranking, dtype=np.int64)
        validate_ranking(original_ranking, num_items, display_size)
        self._original = original_ranking.copy()
        self._start_protocol()

    def propose(self, t: int) -> np.ndarray:
        self._check_propose(t)
        return self._original.copy()

    def feedback(self, t: int, clicks: np.ndarray) -> None:
        self._check_feedback(t)


class UniformRandomRanker(Ranker):
    """Safety-agnostic baseline showing a uniformly random K-permutation."""

    algorithm_id = "uniform-random"

    def reset(self, num_items, display_size, original_ranking, delta, seed):
        if display_size > num_items:
            raise InputContractError("display_size cannot exceed num_items")
        self.L = num_items
        self.K = display_size
        self.rng = np.random.default_rng(seed)
        self._items = np.empty(num_items, dtype=np.int64)
        self._out = np.empty(display_size, dtype=np.int64)
        self._start_protocol()

    def propose(self, t: int) -> np.ndarray:
        self._check_propose(t)
        _fill_kperm(self._items, self.rng.random(self.K), self._out)
        return self._out.copy()

    def feedback(self, t: int, clicks: np.ndarray) -> None:
        self._check_feedback(t)


def make_ranker(algorithm_id: str) -> Ranker:
    """Instantiate a ranker by its string id (see ``ALGORITHM_IDS``)."""
    if algorithm_id == "klucb-br":
        return SafeRanker("klucb")
    if algorithm_id == "bubblerank-random":
        return SafeRanker("random-unproven")
    if algorithm_id == "original":
        return OriginalRanker()
    if algorithm_id == "uniform-random":
        return UniformRandomRanker()
    raise ConfigurationError(
        f"unknown algorithm id {algorithm_id!r}; known ids: {', '.join(ALGORITHM_IDS)}"
    )
