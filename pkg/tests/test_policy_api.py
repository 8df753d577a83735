import numpy as np
import pytest
from scipy import stats

from bandit_lab import (
    UCB1,
    ConfigError,
    ConstantEnv,
    Exp3P,
    ProtocolError,
    ReplayEnv,
    RewardRangeError,
    SapoConfig,
    SapoPolicy,
    StochasticEnv,
    run_episode,
)
from bandit_lab.baselines import EpsGreedy, ScriptedPolicy
from bandit_lab.rng import sample_inverse_cdf

from conftest import same_record


def test_empty_horizon(backend):
    rec = run_episode(Exp3P(0, 2, 0.1), StochasticEnv([0.5, 0.5]), 0, seed=1, backend=backend)
    assert len(rec) == 0
    assert rec.rounds == []
    assert rec.switch_round is None


def test_single_arm_single_round(backend):
    rec = run_episode(UCB1(1, 1), ConstantEnv([0.7]), 1, seed=3, backend=backend)
    assert rec.n == 1
    r = rec.round(1)
    assert r.reward == 0.7
    assert r.probability_vector == (1.0,)
    assert r.chosen_arm == 0


def test_replayed_three_rounds():
    x = np.array([[1.0, 0.0], [0.0, 1.0], [1.0, 1.0]])
    rec = run_episode(ScriptedPolicy(3, 2, [0, 1, 0]), ReplayEnv(x), 3, seed=0)
    assert rec.rewards.tolist() == [1.0, 1.0, 1.0]
    assert np.array_equal(rec.counterfactuals, x)
    for r in rec.rounds:
        assert r.reward == r.counterfactual_rewards[r.chosen_arm]


def test_mismatched_arms_rejected():
    with pytest.raises(ConfigError):
        run_episode(UCB1(10, 3), StochasticEnv([0.5, 0.5]), 10, seed=0)


def test_policy_horizon_must_match():
    with pytest.raises(ConfigError):
        run_episode(UCB1(10, 2), StochasticEnv([0.5, 0.5]), 20, seed=0)


def test_negative_horizon_rejected():
    with pytest.raises(ConfigError):
        run_episode(UCB1(0, 2), StochasticEnv([0.5, 0.5]), -1, seed=0)


class _BadEnv(ConstantEnv):
    def rewards(self, t):
        return [1.5, 0.0]


def test_env_reward_out_of_range():
    with pytest.raises(RewardRangeError):
        run_episode(UCB1(3, 2), _BadEnv([0.1, 0.1]), 3, seed=0, backend="python")


def test_double_select_is_protocol_error():
    p = UCB1(5, 2)
    p.select(1, 0.3)
    with pytest.raises(ProtocolError):
        p.select(1, 0.3)


def test_feedback_must_match_selection():
    p = UCB1(5, 2)
    arm, _ = p.select(1, 0.3)
    with pytest.raises(ProtocolError):
        p.feedback(1, 1 - arm, 1.0)
    with pytest.raises(ProtocolError):
        p.feedback(2, arm, 1.0)


def test_round_skipping_is_protocol_error():
    p = UCB1(5, 2)
    with pytest.raises(ProtocolError):
        p.select(2, 0.1)


def test_feedback_reward_range():
    p = UCB1(5, 2)
    arm, _ = p.select(1, 0.3)
    with pytest.raises(RewardRangeError):
        p.feedback(1, arm, 1.2)


def test_step_examples():
    arm, p = UCB1(10, 3).select(1, 0.99)
    assert arm == 0 and p == [1.0, 0.0, 0.0]
    _, p = Exp3P(10, 4, 0.1).select(1, 0.5)
    assert p == [0.25] * 4
    _, p = SapoPolicy(SapoConfig(10, 3, 0.1)).select(1, 0.5)
    assert p == [1 / 3] * 3


def test_ucb1_feedback_example():
    p = UCB1(10, 2)
    p.select(1, 0.0)
    p.feedback(1, 0, 1.0)
    assert p.plays[0] == 1 and p.means[0] == 1.0


def test_zero_reward_leaves_sum():
    p = EpsGreedy(10, 2, c=1.0)
    arm, _ = p.select(1, 0.2)
    p.feedback(1, arm, 0.0)
    assert p.sums[arm] == 0.0 and p.plays[arm] == 1


def test_determinism(backend):
    mk = lambda: SapoPolicy(SapoConfig(3000, 3, 0.1, constant_scale=0.05))
    a = run_episode(mk(), StochasticEnv([0.2, 0.5, 0.8]), 3000, seed=42, backend=backend)
    b = run_episode(mk(), StochasticEnv([0.2, 0.5, 0.8]), 3000, seed=42, backend=backend)
    assert same_record(a, b)
    assert a.config_digest == b.config_digest


def test_probability_vectors_are_distributions():
    rec = run_episode(SapoPolicy(SapoConfig(3000, 3, 0.1, constant_scale=0.05)),
                      StochasticEnv([0.2, 0.5, 0.8]), 3000, seed=5)
    assert np.all(rec.probabilities >= 0)
    assert np.max(np.abs(rec.probabilities.sum(axis=1) - 1.0)) <= 1e-12
    assert np.array_equal(rec.rewards, rec.counterfactuals[np.arange(3000), rec.arms])


def _observed_trace(policy_factory, matrix, n):
    rec = run_episode(policy_factory(), ReplayEnv(matrix), n, seed=11, backend="python")
    return rec


@pytest.mark.parametrize("make", [
    lambda n: SapoPolicy(SapoConfig(n, 2, 0.1, constant_scale=0.05)),
    lambda n: Exp3P(n, 2, 0.1),
    lambda n: UCB1(n, 2),
    lambda n: EpsGreedy(n, 2, c=3.0),
])
def test_information_hygiene(make):
    """Changing rewards of arms that are never observed cannot change the policy."""
    n = 1500
    rng = np.random.default_rng(0)
    m1 = (rng.random((n, 2)) < 0.5).astype(float)
    rec = run_episode(make(n), ReplayEnv(m1), n, seed=11, backend="python")
    # rewrite every unobserved counterfactual entry
    m2 = m1.copy()
    mask = np.ones_like(m2, dtype=bool)
    mask[np.arange(n), rec.arms] = False
    m2[mask] = 1.0 - m2[mask]
    rec2 = run_episode(make(n), ReplayEnv(m2), n, seed=11, backend="python")
    assert np.array_equal(rec.arms, rec2.arms)
    assert np.array_equal(rec.probabilities, rec2.probabilities)
    assert not np.array_equal(rec.counterfactuals, rec2.counterfactuals)


def test_inverse_cdf_sampler_matches_vector():
    """Chi-square check of 200k draws against the logged vector."""
    p = [0.1, 0.25, 0.05, 0.6]
    u = np.random.default_rng(123).random(200_000)
    counts = np.bincount([sample_inverse_cdf(p, x) for x in u], minlength=4)
    chi2, pval = stats.chisquare(counts, np.array(p) * len(u))
    assert pval > 1e-3


def test_sampler_never_picks_zero_mass():
    p = [0.0, 0.5, 0.0, 0.5]
    for u in [0.0, 0.49999, 0.5, 0.99999999]:
        assert p[sample_inverse_cdf(p, u)] > 0
    assert sample_inverse_cdf([0.3, 0.3, 0.0], 0.9999) == 1


def test_compiled_matches_python_across_policies():
    from bandit_lab import kernels
    if not kernels.HAVE_EXTENSION:
        pytest.skip("extension not built")
    n = 4000
    makers = [
        lambda: SapoPolicy(SapoConfig(n, 3, 0.1, constant_scale=0.05)),
        lambda: SapoPolicy(SapoConfig(n, 3, 0.1, constant_scale=0.1, bucb_init=float("inf"))),
        lambda: Exp3P(n, 3, 0.05),
        lambda: UCB1(n, 3),
        lambda: EpsGreedy(n, 3, c=5.0),
    ]
    for make in makers:
        for seed in range(3):
            a = run_episode(make(), StochasticEnv([0.3, 0.5, 0.8]), n, seed, backend="python",
                            check=True, trace_detection=True)
            b = run_episode(make(), StochasticEnv([0.3, 0.5, 0.8]), n, seed, backend="compiled",
                            check=True, trace_detection=True)
            assert same_record(a, b)
            assert a.violations == b.violations
            if a.detection_trace is not None:
                assert np.array_equal(a.detection_trace, b.detection_trace, equal_nan=True)


def test_compiled_backend_requires_table_env():
    from bandit_lab import kernels
    if not kernels.HAVE_EXTENSION:
        pytest.skip("extension not built")
    with pytest.raises(ConfigError):
        run_episode(ScriptedPolicy(3, 2, [0, 1, 0]), ConstantEnv([0.1, 0.2]), 3, seed=0, backend="compiled")
