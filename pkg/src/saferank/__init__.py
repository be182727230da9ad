"""saferank: a simulation laboratory for safe online learning to re-rank.

The package simulates click feedback under position-based and cascade
models, runs safe bubble-sort style re-ranking algorithms against static
and random baselines, and measures cumulative expected regret together
with a pairwise-inversion safety constraint.
"""

from .click_models import (
    BanditInstance,
    expected_reward,
    generate_instance,
    load_instance,
    optimal_ranking,
    optimal_reward,
    sample_clicks,
    save_instance,
)
from .errors import ConfigurationError, InputContractError, ProtocolError
from .evaluation import (
    RunRecorder,
    RunResult,
    TrueOrder,
    count_inversions,
    is_safe,
    per_round_regret,
    safety_slack,
)
from .harness import (
    AggregateSeries,
    ExperimentConfig,
    InstanceSpec,
    aggregate,
    load_config,
    plot_series,
    run_and_emit,
    run_experiment,
    simulate_run,
)
from .pairwise_stats import (
    LeaderCounts,
    PairStats,
    bernoulli_kl,
    candidate_pairs,
    is_confidently_better,
    klucb_index,
    optimistic_pair_index,
)
from .rankers import (
    ALGORITHM_IDS,
    OriginalRanker,
    Ranker,
    SafeRanker,
    UniformRandomRanker,
    make_ranker,
    select_unranked_klucb,
    select_unranked_random,
)

__version__ = "0.1.0"

__all__ = [
    "ALGORITHM_IDS",
    "AggregateSeries",
    "BanditInstance",
    "ConfigurationError",
    "ExperimentConfig",
    "InputContractError",
    "InstanceSpec",
    "LeaderCounts",
    "OriginalRanker",
    "PairStats",
    "ProtocolError",
    "Ranker",
    "RunRecorder",
    "RunResult",
    "SafeRanker",
    "TrueOrder",
    "UniformRandomRanker",
    "aggregate",
    "bernoulli_kl",
    "candidate_pairs",
    "count_inversions",
    "expected_reward",
    "generate_instance",
    "is_confidently_better",
    "is_safe",
    "klucb_index",
    "load_config",
    "load_instance",
    "make_ranker",
    "optimal_ranking",
    "optimal_reward",
    "optimistic_pair_index",
    "per_round_regret",
    "plot_series",
    "run_and_emit",
    "run_experiment",
    "sample_clicks",
    "save_instance",
    "safety_slack",
    "select_unranked_klucb",
    "select_unranked_random",
    "simulate_run",
]
