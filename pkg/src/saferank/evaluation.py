"""Per-round evaluation: expected regret, inversion counts, safety test.

Regret is measured against the analytic expected reward of the displayed
ranking, not realized clicks, so the metric carries no Monte Carlo noise.
Safety compares the inversion count of the K displayed items against a
slack above the original ranking's count; the hidden working slot never
enters the metric.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from numba import njit

from .click_models import BanditInstance, expected_reward, optimal_reward
from .errors import InputContractError, ProtocolError


@dataclass(frozen=True)
class TrueOrder:
    """Items ranked by true attraction; tied items share a rank.

    ``rank[i]`` is the number of items strictly more attractive than ``i``,
    so ``rank[i] < rank[j]`` holds exactly when ``i`` strictly beats ``j``
    and tied pairs are never ordered either way.
    """

    rank: np.ndarray

    @classmethod
    def from_attraction(cls, attraction: np.ndarray) -> "TrueOrder":
        alpha = np.asarray(attraction, dtype=np.float64)
        rank = (alpha[None, :] > alpha[:, None]).sum(axis=1).astype(np.int64)
        rank.setflags(write=False)
        return cls(rank)

    @classmethod
    def from_instance(cls, instance: BanditInstance) -> "TrueOrder":
        return cls.from_attraction(instance.attraction)

    @property
    def num_items(self) -> int:
        return int(self.rank.shape[0])


@njit(cache=True, nogil=True)
def _count_inversions(rank, displayed, pos):
    # pairs (i, j) with i strictly better but positioned behind a displayed j;
    # absent items take a sentinel position greater than any display slot
    L = rank.shape[0]
    K = displayed.shape[0]
    for i in range(L):
        pos[i] = L + 1
    for p in range(K):
        pos[displayed[p]] = p
    v = 0
    for p in range(K):
        j = displayed[p]
        for i in range(L):
            if rank[i] < rank[j] and pos[i] > p:
                v += 1
    return v


def count_inversions(displayed: np.ndarray, true_order: TrueOrder) -> int:
    """Number of incorrectly ordered item pairs charged to a display ranking.

    Counts pairs where the strictly less attractive item is displayed ahead
    of the better one; the better item may be displayed further down or
    absent entirely. Pairs of equally attractive items never count.
    """
    displayed = np.asarray(displayed, dtype=np.int64)
    L = true_order.num_items
    if displayed.ndim != 1 or displayed.shape[0] > L:
        raise InputContractError("displayed ranking longer than the item set")
    if np.any(displayed < 0) or np.any(displayed >= L):
        raise InputContractError("displayed ranking contains out-of-range items")
    if len(set(displayed.tolist())) != displayed.shape[0]:
        raise InputContractError("displayed ranking contains duplicates")
    scratch = np.empty(L, dtype=np.int64)
    return int(_count_inversions(true_order.rank, displayed, scratch))


def safety_slack(num_items: int, display_size: int, conservative: bool = False) -> float:
    """Allowed excess of inversions over the original ranking's count.

    The standard rule allows ``L - K/2``; the conservative variant allows
    ``(L - K)/2`` instead, for measuring how often the tighter constraint
    would have been breached.
    """
    if conservative:
        return (num_items - display_size) / 2.0
    return num_items - display_size / 2.0


def is_safe(v_t: int, v_0: int, num_items: int, display_size: int,
            conservative: bool = False) -> bool:
    """Whether an inversion count stays within the allowed slack of the
    original ranking's count; the threshold may be fractional."""
    return v_t <= v_0 + safety_slack(num_items, display_size, conservative)


def per_round_regret(instance: BanditInstance, displayed: np.ndarray) -> float:
    """Expected-reward gap of the displayed ranking to the optimum.

    Clamped at zero: equal-value rankings can differ by one rounding step
    under the position-based sum.
    """
    return max(0.0, optimal_reward(instance) - expected_reward(instance, displayed))


@dataclass
class RunResult:
    """Checkpointed time series of one simulated run."""

    algorithm: str
    seed: int
    rounds: np.ndarray
    cum_regret: np.ndarray
    cum_violations: np.ndarray

    def __post_init__(self) -> None:
        n = self.rounds.shape[0]
        if self.cum_regret.shape[0] != n or self.cum_violations.shape[0] != n:
            raise InputContractError("checkpoint arrays must have equal length")


def checkpoint_rounds(horizon: int, stride: int) -> np.ndarray:
    """Rounds at which checkpoints are recorded: every multiple of ``stride``
    plus the final round, without duplicates."""
    if horizon < 1 or stride < 1:
        raise InputContractError("horizon and stride must be positive")
    ts = list(range(stride, horizon + 1, stride))
    if not ts or ts[-1] != horizon:
        ts.append(horizon)
    return np.asarray(ts, dtype=np.int64)


class RunRecorder:
    """Accumulates per-round regret and violations into checkpoints."""

    def __init__(self, algorithm: str, seed: int, horizon: int, stride: int):
        self.algorithm = algorithm
        self.seed = seed
        self.horizon = horizon
        self.stride = stride
        self._expected = checkpoint_rounds(horizon, stride)
        self._rounds: list[int] = []
        self._regret: list[float] = []
        self._violations: list[int] = []
        self._cum_regret = 0.0
        self._cum_violations = 0
        self._last_t = 0

    def record_round(self, t: int, regret_increment: float, violated: bool) -> None:
        if t != self._last_t + 1:
            raise ProtocolError(f"rounds must be recorded in order; got {t} after {self._last_t}")
        if regret_increment < 0.0:
            raise InputContractError("regret increments cannot be negative")
        self._last_t = t
        self._cum_regret += regret_increment
        self._cum_violations += 1 if violated else 0
        if t % self.stride == 0 or t == self.horizon:
            self._rounds.append(t)
            self._regret.append(self._cum_regret)
            self._violations.append(self._cum_violations)

    def finish(self) -> RunResult:
        if self._last_t != self.horizon:
            raise ProtocolError(f"run stopped at round {self._last_t} of {self.horizon}")
        return RunResult(
            algorithm=self.algorithm,
            seed=self.seed,
            rounds=np.asarray(self._rounds, dtype=np.int64),
            cum_regret=np.asarray(self._regret, dtype=np.float64),
            cum_violations=np.asarray(self._violations, dtype=np.int64),
        )
