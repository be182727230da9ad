"""Fused per-run simulation loops, numba-compiled for throughput.

Each kernel simulates one full run (propose, click sampling, feedback,
metric accumulation) and fills preallocated checkpoint arrays. They call
the same compiled helpers as the stepwise ranker classes and consume their
random streams in the same order, so a kernel run and a stepwise run with
equal seeds produce bit-identical results; ``tests/test_engines.py`` pins
that equivalence.

Scalar draws here pair up with the block draws of the stepwise path because
``Generator.random(k)`` consumes the underlying bit stream exactly like
``k`` successive scalar ``random()`` calls.
"""

from __future__ import annotations

import math

import numpy as np
from numba import njit, types
from numba.typed import Dict

from .click_models import _expected_reward_arrays
from .evaluation import _count_inversions
from .pairwise_stats import _update_stats
from .rankers import (
    _bubble_pass,
    _fill_kperm,
    _randomized_exchange,
    _select_klucb,
    _select_random_unproven,
)


def leader_key_fits(num_items: int, display_size: int) -> bool:
    """Whether a K-item ranking can be encoded as a single int64 dict key."""
    return num_items ** display_size < 2 ** 62


@njit(cache=True, nogil=True)
def run_safe(alpha, chi, is_pbm, original, horizon, delta, use_klucb,
             env_rng, alg_rng, stride, r_star, rank, threshold,
             out_regret, out_violations):
    L = alpha.shape[0]
    K = original.shape[0]
    log_inv_delta = math.log(1.0 / delta)

    s = np.zeros((L, L), dtype=np.int64)
    n = np.zeros((L, L), dtype=np.int64)
    version = np.zeros((L, L), dtype=np.int64)
    cache_f = np.zeros(L)
    cache_version = np.full(L, -1, dtype=np.int64)
    cache_bottom = np.full(L, -1, dtype=np.int64)
    cache_count = np.zeros(L, dtype=np.int64)
    cache_step = np.full(L, 1e-9)
    champion = np.full(1, -1, dtype=np.int64)
    scratch_items = np.empty(L, dtype=np.int64)
    scratch_f = np.empty(L)
    pos = np.empty(L, dtype=np.int64)
    coins = np.empty((K + 2) // 2, dtype=np.float64)

    leader = original.copy()
    working = np.empty(K + 1, dtype=np.int64)
    display = np.empty(K + 1, dtype=np.int64)
    clicks = np.zeros(K + 1, dtype=np.int64)
    counts = Dict.empty(types.int64, types.int64)

    cum_regret = 0.0
    cum_violations = 0
    ci = 0
    for t in range(1, horizon + 1):
        h = t % 2

        key = np.int64(0)
        for p in range(K):
            key = key * L + leader[p]
        if key in counts:
            counts[key] += 1
        else:
            counts[key] = np.int64(1)
        leader_count = counts[key]

        u = alg_rng.random()
        if use_klucb:
            sel = _select_klucb(s, n, version, cache_f, cache_version,
                                cache_bottom, cache_count, cache_step,
                                champion, leader, leader_count, u,
                                scratch_items, scratch_f)
        else:
            sel = _select_random_unproven(s, n, leader, log_inv_delta, u,
                                          scratch_items)

        for p in range(K):
            working[p] = leader[p]
        working[K] = sel
        for p in range(K + 1):
            display[p] = working[p]

        n_pairs = 0
        for p in range(h, K, 2):
            coins[n_pairs] = alg_rng.random()
            n_pairs += 1
        _randomized_exchange(display, s, n, h, log_inv_delta, coins[:n_pairs])

        if is_pbm:
            for k in range(K):
                clicks[k] = 1 if env_rng.random() < chi[k] else 0
            for k in range(K):
                a = env_rng.random()
                if clicks[k] == 1 and not (a < alpha[display[k]]):
                    clicks[k] = 0
        else:
            clicked = False
            for k in range(K):
                a = env_rng.random()
                if not clicked and a < alpha[display[k]]:
                    clicks[k] = 1
                    clicked = True
                else:
                    clicks[k] = 0
        clicks[K] = 0

        shown = display[:K]
        regret = r_star - _expected_reward_arrays(alpha, chi, is_pbm, shown)
        if regret < 0.0:
            regret = 0.0
        cum_regret += regret
        if _count_inversions(rank, shown, pos) > threshold:
            cum_violations += 1

        _update_stats(s, n, version, display, clicks, h)
        _bubble_pass(working, s, n, log_inv_delta)
        for p in range(K):
            leader[p] = working[p]

        if t % stride == 0 or t == horizon:
            out_regret[ci] = cum_regret
            out_violations[ci] = cum_violations
            ci += 1


@njit(cache=True, nogil=True)
def run_uniform(alpha, chi, is_pbm, display_size, horizon, env_rng, alg_rng,
                stride, r_star, rank, threshold, out_regret, out_violations):
    L = alpha.shape[0]
    K = display_size
    items = np.empty(L, dtype=np.int64)
    display = np.empty(K, dtype=np.int64)
    us = np.empty(K, dtype=np.float64)
    pos = np.empty(L, dtype=np.int64)

    cum_regret = 0.0
    cum_violations = 0
    ci = 0
    for t in range(1, horizon + 1):
        for k in range(K):
            us[k] = alg_rng.random()
        _fill_kperm(items, us, display)

        # clicks are sampled to march the environment stream but carry no
        # information for this baseline
        if is_pbm:
            for k in range(2 * K):
                env_rng.random()
        else:
            for k in range(K):
                env_rng.random()

        regret = r_star - _expected_reward_arrays(alpha, chi, is_pbm, display)
        if regret < 0.0:
            regret = 0.0
        cum_regret += regret
        if _count_inversions(rank, display, pos) > threshold:
            cum_violations += 1

        if t % stride == 0 or t == horizon:
            out_regret[ci] = cum_regret
            out_violations[ci] = cum_violations
            ci += 1


@njit(cache=True, nogil=True)
def run_original(alpha, chi, is_pbm, original, horizon, env_rng, stride,
                 r_star, rank, threshold, out_regret, out_violations):
    L = alpha.shape[0]
    K = original.shape[0]
    pos = np.empty(L, dtype=np.int64)

    regret = r_star - _expected_reward_arrays(alpha, chi, is_pbm, original)
    if regret < 0.0:
        regret = 0.0
    violated = _count_inversions(rank, original, pos) > threshold

    cum_regret = 0.0
    cum_violations = 0
    ci = 0
    for t in range(1, horizon + 1):
        if is_pbm:
            for k in range(2 * K):
                env_rng.random()
        else:
            for k in range(K):
                env_rng.random()
        cum_regret += regret
        if violated:
            cum_violations += 1
        if t % stride == 0 or t == horizon:
            out_regret[ci] = cum_regret
            out_violations[ci] = cum_violations
            ci += 1
