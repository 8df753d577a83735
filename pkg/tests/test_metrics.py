import numpy as np
import pytest

from bandit_lab import ConfigError, ReplayEnv, StochasticEnv, UCB1, aggregate, realized_regret, run_episode
from bandit_lab.baselines import ScriptedPolicy
from bandit_lab.metrics import EpisodeStats, stochastic_decomposition


def _hand_record():
    x = np.array([[1.0, 0.0], [0.0, 1.0], [1.0, 1.0]])
    return run_episode(ScriptedPolicy(3, 2, [0, 1, 0]), ReplayEnv(x), 3, seed=0)


def test_negative_regret_example():
    assert realized_regret(_hand_record()) == -1.0


def test_best_arm_player_zero_regret():
    x = np.array([[0.2, 0.9], [0.1, 0.8], [0.4, 0.7]])
    rec = run_episode(ScriptedPolicy(3, 2, [1, 1, 1]), ReplayEnv(x), 3, seed=0)
    assert realized_regret(rec) == 0.0


def test_single_arm_zero_regret():
    rec = run_episode(UCB1(50, 1), StochasticEnv([0.4]), 50, seed=1)
    assert realized_regret(rec) == 0.0


def _stats(seed, gaps, digest="d"):
    # received 10, arm totals 10 + gap
    return EpisodeStats(seed=seed, config_digest=digest, arm_totals=[10.0 + g for g in gaps],
                        received=10.0, plays=[1, 1])


def test_max_mean_order():
    s = aggregate([_stats(1, (3, -1)), _stats(2, (-1, 3))])
    assert s.pseudo_regret_estimate == 1.0
    assert s.expected_regret_estimate == 3.0
    assert s.per_run_realized_regret == [3.0, 3.0]


def test_single_record_degenerate():
    rec = _hand_record()
    s = aggregate([rec])
    assert s.pseudo_regret_estimate == s.expected_regret_estimate == realized_regret(rec)
    assert s.per_arm_mean_gap == [-1.0, -1.0]


def test_identical_records_zero_se():
    s = aggregate([_stats(i, (2, 1)) for i in range(5)])
    assert s.pseudo_regret_se == 0.0 and s.expected_regret_se == 0.0


def test_mixed_configs_rejected():
    with pytest.raises(ConfigError):
        aggregate([_stats(1, (1, 1), "a"), _stats(2, (1, 1), "b")])
    with pytest.raises(ConfigError):
        aggregate([])


def test_aggregate_sorts_by_seed():
    s = aggregate([_stats(5, (1, 0)), _stats(2, (4, 0))])
    assert s.seeds == [2, 5] and s.per_run_realized_regret == [4.0, 1.0]


def test_pseudo_at_most_expected_on_batches():
    for means in ([0.6, 0.4], [0.5, 0.5], [0.3, 0.35, 0.7]):
        recs = [run_episode(UCB1(2000, len(means)), StochasticEnv(means), 2000, seed=s) for s in range(30)]
        s = aggregate(recs)
        assert s.pseudo_regret_estimate <= s.expected_regret_estimate + 2 * (s.pseudo_regret_se + s.expected_regret_se)


def test_stochastic_decomposition():
    means = [0.6, 0.4]
    recs = [run_episode(UCB1(5000, 2), StochasticEnv(means), 5000, seed=s) for s in range(60)]
    s = aggregate(recs)
    value, se = stochastic_decomposition(s, means)
    assert abs(s.pseudo_regret_estimate - value) <= 2 * np.hypot(se, s.pseudo_regret_se)
