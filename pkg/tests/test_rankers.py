import itertools

import numpy as np
import pytest

from saferank import (
    ConfigurationError,
    InputContractError,
    LeaderCounts,
    OriginalRanker,
    PairStats,
    ProtocolError,
    SafeRanker,
    TrueOrder,
    UniformRandomRanker,
    count_inversions,
    generate_instance,
    make_ranker,
    safety_slack,
    sample_clicks,
    select_unranked_klucb,
    select_unranked_random,
)

L, K = 8, 5
DELTA = 1e-3
ORIGINAL = np.array([5, 2, 7, 0, 3])


def fresh(selector="klucb", seed=0):
    ranker = SafeRanker(selector)
    ranker.reset(L, K, ORIGINAL, DELTA, seed)
    return ranker


def run_rounds(ranker, instance, rounds, env_seed=123):
    env_rng = np.random.default_rng(env_seed)
    trajectory = []
    for t in range(1, rounds + 1):
        displayed = ranker.propose(t)
        clicks = sample_clicks(instance, displayed, env_rng)
        ranker.feedback(t, clicks)
        trajectory.append(displayed)
    return trajectory


class TestRegistry:
    def test_known_ids(self):
        assert make_ranker("klucb-br").algorithm_id == "klucb-br"
        assert make_ranker("bubblerank-random").algorithm_id == "bubblerank-random"
        assert isinstance(make_ranker("original"), OriginalRanker)
        assert isinstance(make_ranker("uniform-random"), UniformRandomRanker)

    def test_unknown_id_rejected(self):
        with pytest.raises(ConfigurationError, match="unknown algorithm id"):
            make_ranker("toprank")


class TestProtocol:
    @pytest.mark.parametrize("algo", ["klucb-br", "bubblerank-random",
                                      "original", "uniform-random"])
    def test_double_propose_rejected(self, algo):
        ranker = make_ranker(algo)
        ranker.reset(L, K, ORIGINAL, DELTA, 0)
        ranker.propose(1)
        with pytest.raises(ProtocolError):
            ranker.propose(2)

    def test_feedback_without_propose_rejected(self):
        ranker = fresh()
        with pytest.raises(ProtocolError):
            ranker.feedback(1, np.zeros(K, dtype=np.int64))

    def test_round_indices_must_be_contiguous(self):
        ranker = fresh()
        with pytest.raises(ProtocolError):
            ranker.propose(2)

    def test_click_shape_checked(self):
        ranker = fresh()
        ranker.propose(1)
        with pytest.raises(InputContractError):
            ranker.feedback(1, np.zeros(K + 1, dtype=np.int64))

    def test_bad_delta_rejected(self):
        ranker = SafeRanker("klucb")
        with pytest.raises(ConfigurationError):
            ranker.reset(L, K, ORIGINAL, 0.0, 0)

    def test_unknown_selector_rejected(self):
        with pytest.raises(ConfigurationError):
            SafeRanker("thompson")


class TestSafeRankerPropose:
    def test_first_round_displays_only_leader_items(self):
        # odd parity leaves the hidden slot out of every candidate pair, so
        # round 1 shows a permutation of the original items
        ranker = fresh(seed=5)
        displayed = ranker.propose(1)
        assert sorted(displayed.tolist()) == sorted(ORIGINAL.tolist())

    def test_draw_protocol_is_one_uniform_then_pair_coins(self):
        seed = 11
        ranker = fresh(seed=seed)
        displayed = ranker.propose(1)

        rng = np.random.default_rng(seed)
        u = rng.random()
        unranked = sorted(set(range(L)) - set(ORIGINAL.tolist()))
        expected_sel = unranked[int(u * len(unranked))]
        coins = rng.random(2)  # parity 1, K=5: pairs (1,2) and (3,4)
        working = np.append(ORIGINAL, expected_sel)
        expect = working.copy()
        if coins[0] < 0.5:
            expect[[1, 2]] = expect[[2, 1]]
        if coins[1] < 0.5:
            expect[[3, 4]] = expect[[4, 3]]
        assert ranker.working_ranking.tolist() == working.tolist()
        assert displayed.tolist() == expect[:K].tolist()

    def test_even_round_can_admit_the_explored_item(self):
        # parity 0 includes the boundary pair, so the explored item reaches
        # the display for some seeds
        admitted = set()
        for seed in range(30):
            ranker = fresh(seed=seed)
            ranker.propose(1)
            ranker.feedback(1, np.zeros(K, dtype=np.int64))
            displayed = set(ranker.propose(2).tolist())
            admitted |= displayed - set(ORIGINAL.tolist())
        assert admitted

    def test_confident_pairs_are_never_exchanged(self):
        ranker = fresh(seed=3)
        # resolve every pair confidently, consistently with the leader order
        # (unranked items sit below all leader items)
        reference = ORIGINAL.tolist() + sorted(set(range(L)) - set(ORIGINAL.tolist()))
        rank_of = {item: r for r, item in enumerate(reference)}
        for i in range(L):
            for j in range(L):
                if i != j:
                    ranker.stats.n[i, j] = 10_000
                    ranker.stats.s[i, j] = 10_000 if rank_of[i] < rank_of[j] else -10_000
        displayed = ranker.propose(1)
        assert displayed.tolist() == ranker.working_ranking[:K].tolist()

    def test_leader_stays_distinct_under_random_clicks(self):
        inst = generate_instance("missing_top", L, K, 2, "pbm")
        ranker = SafeRanker("klucb")
        ranker.reset(L, K, inst.original_ranking, 0.01, 9)
        for displayed in run_rounds(ranker, inst, 400):
            assert len(set(displayed.tolist())) == K
            assert len(set(ranker.leader.tolist())) == K
            assert len(set(ranker.working_ranking.tolist())) == K + 1


class TestSafeRankerFeedback:
    def test_uninformative_round_changes_nothing(self):
        ranker = fresh(seed=1)
        leader_before = ranker.leader.copy()
        ranker.propose(1)
        working_before = ranker.working_ranking
        ranker.feedback(1, np.zeros(K, dtype=np.int64))
        assert not ranker.stats.n.any()
        assert ranker.working_ranking.tolist() == working_before.tolist()
        assert ranker.leader.tolist() == leader_before.tolist()

    def test_proven_pair_swaps_in_the_working_ranking(self):
        ranker = fresh(seed=1)
        ranker.propose(1)
        a, b = ranker.working_ranking[0], ranker.working_ranking[1]
        ranker.stats.s[b, a], ranker.stats.n[b, a] = 200, 400
        ranker.stats.s[a, b], ranker.stats.n[a, b] = -200, 400
        ranker.feedback(1, np.zeros(K, dtype=np.int64))
        assert ranker.leader[0] == b
        assert ranker.leader[1] == a

    def test_explored_item_can_enter_the_leader(self):
        ranker = fresh(seed=1)
        ranker.propose(1)
        bottom = ranker.working_ranking[K - 1]
        explored = ranker.working_ranking[K]
        ranker.stats.s[explored, bottom], ranker.stats.n[explored, bottom] = 200, 400
        ranker.stats.s[bottom, explored], ranker.stats.n[bottom, explored] = -200, 400
        ranker.feedback(1, np.zeros(K, dtype=np.int64))
        assert ranker.leader[K - 1] == explored
        assert bottom not in ranker.leader

    def test_leader_counts_track_rounds(self):
        inst = generate_instance("random", L, K, 4, "cm")
        ranker = SafeRanker("random-unproven")
        ranker.reset(L, K, inst.original_ranking, 0.01, 2)
        run_rounds(ranker, inst, 50)
        assert ranker.leader_counts.total == 50


class TestSelectors:
    def test_klucb_uniform_over_fresh_unranked(self):
        stats = PairStats(L)
        counts = LeaderCounts()
        counts.bump(ORIGINAL)
        unranked = set(range(L)) - set(ORIGINAL.tolist())
        picks = {
            select_unranked_klucb(stats, ORIGINAL, counts, np.random.default_rng(s))
            for s in range(60)
        }
        assert picks == unranked

    def test_klucb_prefers_strong_statistics(self):
        stats = PairStats(L)
        counts = LeaderCounts()
        for _ in range(1000):
            counts.bump(ORIGINAL)
        bottom = ORIGINAL[-1]
        for j in set(range(L)) - set(ORIGINAL.tolist()):
            stats.s[j, bottom], stats.n[j, bottom] = -100, 100
        stats.s[4, bottom], stats.n[4, bottom] = 50, 100
        assert select_unranked_klucb(stats, ORIGINAL, counts,
                                     np.random.default_rng(0)) == 4

    def test_klucb_ignores_statistics_at_zero_leader_count(self):
        stats = PairStats(L)
        bottom = ORIGINAL[-1]
        for j in set(range(L)) - set(ORIGINAL.tolist()):
            stats.s[j, bottom], stats.n[j, bottom] = -100, 100
        picks = {
            select_unranked_klucb(stats, ORIGINAL, LeaderCounts(),
                                  np.random.default_rng(s))
            for s in range(60)
        }
        assert picks == set(range(L)) - set(ORIGINAL.tolist())

    def test_random_uniform_over_fresh_unranked(self):
        stats = PairStats(L)
        picks = {
            select_unranked_random(stats, ORIGINAL, DELTA, np.random.default_rng(s))
            for s in range(60)
        }
        assert picks == set(range(L)) - set(ORIGINAL.tolist())

    def test_random_excludes_proven_inferior_items(self):
        stats = PairStats(L)
        bottom = ORIGINAL[-1]
        unranked = sorted(set(range(L)) - set(ORIGINAL.tolist()))
        for j in unranked[1:]:
            stats.s[bottom, j], stats.n[bottom, j] = 1000, 1000
        for s in range(20):
            assert select_unranked_random(stats, ORIGINAL, DELTA,
                                          np.random.default_rng(s)) == unranked[0]

    def test_random_falls_back_when_everything_is_proven_inferior(self):
        stats = PairStats(L)
        bottom = ORIGINAL[-1]
        unranked = set(range(L)) - set(ORIGINAL.tolist())
        for j in unranked:
            stats.s[bottom, j], stats.n[bottom, j] = 1000, 1000
        picks = {
            select_unranked_random(stats, ORIGINAL, DELTA, np.random.default_rng(s))
            for s in range(60)
        }
        assert picks == unranked


class TestBaselines:
    def test_original_is_static_with_noop_feedback(self):
        ranker = OriginalRanker()
        ranker.reset(L, K, ORIGINAL, DELTA, 0)
        for t in range(1, 6):
            assert ranker.propose(t).tolist() == ORIGINAL.tolist()
            ranker.feedback(t, np.ones(K, dtype=np.int64))

    def test_uniform_covers_positions_evenly(self):
        ranker = UniformRandomRanker()
        ranker.reset(L, K, ORIGINAL, DELTA, 17)
        counts = np.zeros((L, K))
        rounds = 30_000
        for t in range(1, rounds + 1):
            displayed = ranker.propose(t)
            counts[displayed, np.arange(K)] += 1
            ranker.feedback(t, np.zeros(K, dtype=np.int64))
        assert np.all(np.abs(counts / rounds - 1.0 / L) < 0.012)

    def test_uniform_full_catalog_is_a_permutation(self):
        ranker = UniformRandomRanker()
        ranker.reset(4, 4, np.array([0, 1, 2, 3]), DELTA, 3)
        assert sorted(ranker.propose(1).tolist()) == [0, 1, 2, 3]

    def test_uniform_violates_safety_on_inverted_instances(self):
        inst = generate_instance("missing_top", 10, 5, 3, "cm")
        order = TrueOrder.from_instance(inst)
        v0 = count_inversions(inst.original_ranking, order)
        threshold = v0 + safety_slack(10, 5)

        # some K-permutation must exceed the threshold at all
        worst = max(count_inversions(np.array(p), order)
                    for p in itertools.permutations(range(10), 5))
        assert worst > threshold

        ranker = UniformRandomRanker()
        ranker.reset(10, 5, inst.original_ranking, DELTA, 0)
        violations = 0
        for t in range(1, 30_001):
            displayed = ranker.propose(t)
            if count_inversions(displayed, order) > threshold:
                violations += 1
            ranker.feedback(t, np.zeros(5, dtype=np.int64))
        assert violations > 0


class TestDeterminismAndSharing:
    @pytest.mark.parametrize("algo", ["klucb-br", "bubblerank-random",
                                      "original", "uniform-random"])
    def test_replay_determinism(self, algo):
        inst = generate_instance("missing_top", L, K, 6, "pbm")

        def trajectory():
            ranker = make_ranker(algo)
            ranker.reset(L, K, inst.original_ranking, 0.01, 42)
            return [d.tolist() for d in run_rounds(ranker, inst, 300, env_seed=7)]

        assert trajectory() == trajectory()

    def test_selectors_coincide_with_a_single_unranked_item(self):
        # with exactly one unranked item both selectors must return it, so
        # the two safe rankers follow identical trajectories
        small_L, small_K = 5, 4
        inst = generate_instance("missing_top", small_L, small_K, 1, "cm")

        def trajectory(selector):
            ranker = SafeRanker(selector)
            ranker.reset(small_L, small_K, inst.original_ranking, 0.01, 21)
            return [d.tolist() for d in run_rounds(ranker, inst, 500, env_seed=9)]

        assert trajectory("klucb") == trajectory("random-unproven")
