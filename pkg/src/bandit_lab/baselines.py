"""Reference players: UCB1, epsilon-greedy and a scripted player for tests."""

from __future__ import annotations

import math
from typing import Callable, Sequence

from .errors import ConfigError
from .policy_api import BasePolicy
from .rng import sample_inverse_cdf

UCB1_CODE = 2
EPS_GREEDY_CODE = 3


def ucb1_index(mean: float, t: int, plays: int) -> float:
    """Classic UCB1 index with exploration constant 2."""
    return mean + math.sqrt(2.0 * math.log(t) / plays)


class UCB1(BasePolicy):
    """UCB1: one sweep over the arms in index order, then the largest index.

    Ties go to the lowest arm index.  The returned probability vector is
    degenerate on the chosen arm; the round's uniform is consumed but unused.
    """

    def __init__(self, n: int, K: int):
        super().__init__(n, K)
        self.plays = [0] * K
        self.sums = [0.0] * K
        self.means = [0.0] * K

    def choose(self, t: int) -> int:
        if t <= self.K:
            return t - 1
        best, best_val = 0, -math.inf
        for i in range(self.K):
            v = ucb1_index(self.means[i], t, self.plays[i])
            if v > best_val:
                best, best_val = i, v
        return best

    def _select(self, t, u):
        arm = self.choose(t)
        p = [0.0] * self.K
        p[arm] = 1.0
        return arm, p

    def _feedback(self, t, arm, reward, p):
        self.plays[arm] += 1
        self.sums[arm] += reward
        self.means[arm] = self.sums[arm] / self.plays[arm]

    def describe(self):
        return {"policy": "ucb1", "n": self.n, "K": self.K}

    def kernel_spec(self):
        return UCB1_CODE, []


def harmonic_schedule(c: float) -> Callable[[int], float]:
    """The schedule ``eps(t) = min(1, c / t)``."""

    def eps(t: int) -> float:
        return min(1.0, c / t)

    return eps


class EpsGreedy(BasePolicy):
    """Epsilon-greedy with a per-round exploration schedule.

    With probability ``eps(t)`` a uniformly random arm is played, otherwise
    the empirical leader (unplayed arms first, lowest index on ties).  The
    mixture is sampled in one inverse-CDF draw from

        p_i = eps/K + (1 - eps) * [i == leader]

    Passing ``c`` selects the harmonic schedule ``min(1, c/t)``, which is
    also the only schedule the compiled loop supports.
    """

    def __init__(self, n: int, K: int, c: float | None = None, schedule: Callable[[int], float] | None = None):
        super().__init__(n, K)
        if (c is None) == (schedule is None):
            raise ConfigError("give exactly one of c or schedule")
        if c is not None and c < 0:
            raise ConfigError(f"exploration constant must be >= 0, got {c}")
        self.c = c
        self.schedule = harmonic_schedule(c) if c is not None else schedule
        self.plays = [0] * K
        self.sums = [0.0] * K

    def leader(self) -> int:
        best, best_val = 0, -math.inf
        for i in range(self.K):
            if self.plays[i] == 0:
                return i
            v = self.sums[i] / self.plays[i]
            if v > best_val:
                best, best_val = i, v
        return best

    def _select(self, t, u):
        eps = float(self.schedule(t))
        if not 0.0 <= eps <= 1.0:
            raise ConfigError(f"eps({t}) = {eps} outside [0, 1]")
        lead = self.leader()
        base = eps / self.K
        p = [base] * self.K
        p[lead] = base + (1.0 - eps)
        return sample_inverse_cdf(p, u), p

    def _feedback(self, t, arm, reward, p):
        self.plays[arm] += 1
        self.sums[arm] += reward

    def describe(self):
        return {"policy": "eps_greedy", "n": self.n, "K": self.K, "c": self.c}

    def kernel_spec(self):
        if self.c is None:
            return None
        return EPS_GREEDY_CODE, [float(self.c)]


class ScriptedPolicy(BasePolicy):
    """Plays a fixed arm sequence; used to exercise environments and metrics."""

    def __init__(self, n: int, K: int, choices: Sequence[int] | Callable[[int], int]):
        super().__init__(n, K)
        self.choices = choices

    def _select(self, t, u):
        arm = self.choices(t) if callable(self.choices) else self.choices[t - 1]
        if not 0 <= arm < self.K:
            raise ConfigError(f"scripted arm {arm} outside [0, {self.K})")
        p = [0.0] * self.K
        p[arm] = 1.0
        return arm, p

    def _feedback(self, t, arm, reward, p):
        pass

    def describe(self):
        return {"policy": "scripted", "n": self.n, "K": self.K}
