"""Shared independent oracles used by unit and acceptance tests.

These deliberately reimplement the quantities under test from their
definitions, in a different code shape than the production paths.
"""

from __future__ import annotations

import math

import numpy as np


def klucb_bisect_oracle(mu_hat: float, n_obs: int, t: int) -> float:
    """Brute-force bisection for the KL-UCB bound, independent of the
    production implementation."""
    if t == 0 or n_obs == 0 or mu_hat >= 1.0:
        return 1.0
    budget = 0.0
    if t >= 2:
        budget = max(0.0, math.log(t) + 3.0 * math.log(math.log(t)))

    def feasible(q: float) -> bool:
        if q <= mu_hat:
            return True
        if q >= 1.0:
            return False
        value = 0.0
        if mu_hat > 0.0:
            value += mu_hat * math.log(mu_hat / q)
        if mu_hat < 1.0:
            value += (1.0 - mu_hat) * math.log((1.0 - mu_hat) / (1.0 - q))
        return n_obs * value <= budget

    lo, hi = mu_hat, 1.0
    for _ in range(200):
        mid = 0.5 * (lo + hi)
        if feasible(mid):
            lo = mid
        else:
            hi = mid
    return lo


def inversion_oracle(displayed, alpha) -> int:
    """Count incorrectly ordered pairs by scanning every ordered item pair."""
    displayed = list(displayed)
    L = len(alpha)
    K = len(displayed)
    position = {item: p for p, item in enumerate(displayed)}
    count = 0
    for i in range(L):
        for j in range(L):
            if i == j or not alpha[i] > alpha[j]:
                continue
            pj = position.get(j, math.inf)
            pi = position.get(i, math.inf)
            if pj < pi and pj <= K - 1:
                count += 1
    return count


def candidate_positions_oracle(parity: int, display_size: int) -> list[tuple[int, int]]:
    """Alternating adjacent position pairs, derived from the 1-based loop
    bound ceil((K - h) / 2) and shifted to 0-based indices."""
    pairs = []
    for k in range(1, math.ceil((display_size - parity) / 2) + 1):
        first = 2 * k - 1 + parity
        pairs.append((first - 1, first))
    return pairs


def stats_history_oracle(num_items: int, history) -> tuple[np.ndarray, np.ndarray]:
    """Recompute the (s, n) matrices from a full round history.

    ``history`` holds (working ranking of K+1 items, clicks over K displayed
    positions, parity) triples. Every ordered item pair is scanned per round
    rather than walking position pairs, so the code path is independent of
    the production update.
    """
    s = np.zeros((num_items, num_items), dtype=np.int64)
    n = np.zeros((num_items, num_items), dtype=np.int64)
    for working, clicks, parity in history:
        working = list(working)
        K = len(working) - 1
        extended = list(clicks) + [0]
        position = {item: p for p, item in enumerate(working)}
        candidate_firsts = {p for p, _ in candidate_positions_oracle(parity, K)}
        for i in range(num_items):
            for j in range(num_items):
                if i == j or i not in position or j not in position:
                    continue
                pi, pj = position[i], position[j]
                if pj == pi + 1 and pi in candidate_firsts:
                    if extended[pi] != extended[pj]:
                        s[i, j] += extended[pi] - extended[pj]
                        s[j, i] -= extended[pi] - extended[pj]
                        n[i, j] += 1
                        n[j, i] += 1
    return s, n


def expected_reward_oracle(instance, displayed) -> float:
    """Expected clicks from the defining per-position sums."""
    displayed = list(displayed)
    if instance.model_kind == "pbm":
        return sum(
            instance.examination[k] * instance.attraction[item]
            for k, item in enumerate(displayed)
        )
    total = 0.0
    seen = 1.0
    for item in displayed:
        total += seen * instance.attraction[item]
        seen *= 1.0 - instance.attraction[item]
    return total
