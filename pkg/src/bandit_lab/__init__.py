"""Bandit algorithms that adapt to stochastic and adversarial rewards.

SAPO (arm elimination with tests for non-stochastic arms and an Exp3.P
fallback), Exp3.P, UCB1 and epsilon-greedy, the phase-flip adversaries,
tail-bound evaluators and a seeded Monte Carlo harness.
"""

__version__ = "0.1.0"

from .baselines import UCB1, EpsGreedy, ScriptedPolicy
from .concentration import azuma_max_bound, azuma_maxmax_bound, bernstein_bound
from .environments import (
    AdaptiveSwitchbackEnv,
    ConstantEnv,
    LowerBoundParams,
    ObliviousFlipEnv,
    ReplayEnv,
    StochasticEnv,
    estimate_jstar,
    phase_layout,
)
from .errors import BanditError, ConfigError, ProtocolError, RewardRangeError
from .exp3p import Exp3P, Exp3PState
from .kernels import BACKEND, HAVE_EXTENSION
from .metrics import RegretSummary, aggregate, realized_regret
from .policy_api import EpisodeRecord, RoundOutcome, run_episode
from .sapo import SapoConfig, SapoPolicy

