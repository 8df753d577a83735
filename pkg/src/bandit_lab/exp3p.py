"""Exp3.P for adversarial bandits, in the reward formulation.

Parameters follow the usual high-probability tuning of Exp3.P (Bubeck and
Cesa-Bianchi, 2012)::

    beta  = sqrt(ln(K/delta) / (horizon K))
    eta   = 0.95 sqrt(ln K / (horizon K))
    gamma = min(1/2, 1.05 sqrt(K ln K / horizon))

Weights are kept in log space; probabilities are a softmax mixed with a
uniform floor of ``gamma / K``.
"""

from __future__ import annotations

import math

from .errors import ConfigError
from .policy_api import BasePolicy
from .rng import sample_inverse_cdf

EXP3P_CODE = 1


def exp3p_parameters(K: int, horizon: int, delta: float) -> tuple[float, float, float]:
    """Return ``(beta, eta, gamma)`` for the given problem size."""
    if K < 1:
        raise ConfigError(f"need at least one arm, got K={K}")
    if horizon < 1:
        raise ConfigError(f"horizon must be >= 1, got {horizon}")
    if not 0.0 < delta < 1.0:
        raise ConfigError(f"delta must lie in (0, 1), got {delta}")
    beta = math.sqrt(math.log(K / delta) / (horizon * K))
    eta = 0.95 * math.sqrt(math.log(K) / (horizon * K))
    gamma = min(0.5, 1.05 * math.sqrt(K * math.log(K) / horizon))
    return beta, eta, gamma


class Exp3PState:
    """Bare Exp3.P state, usable on its own or embedded in SAPO after a switch."""

    def __init__(self, K: int, horizon: int, delta: float):
        self.K = K
        self.horizon = horizon
        self.delta = delta
        self.beta, self.eta, self.gamma = exp3p_parameters(K, horizon, delta)
        self.log_weights = [0.0] * K

    def probabilities(self) -> list[float]:
        K = self.K
        w = self.log_weights
        top = w[0]
        for i in range(1, K):
            if w[i] > top:
                top = w[i]
        e = [math.exp(w[i] - top) for i in range(K)]
        z = 0.0
        for i in range(K):
            z += e[i]
        g = self.gamma
        return [(1.0 - g) * (e[i] / z) + g / K for i in range(K)]

    def select(self, u: float) -> tuple[int, list[float]]:
        p = self.probabilities()
        return sample_inverse_cdf(p, u), p

    def update(self, arm: int, reward: float, p: list[float]) -> None:
        beta, eta = self.beta, self.eta
        w = self.log_weights
        for i in range(self.K):
            gain = reward if i == arm else 0.0
            w[i] += eta * ((gain + beta) / p[i])


class Exp3P(BasePolicy):
    """Exp3.P as a stand-alone policy over the full horizon."""

    def __init__(self, n: int, K: int, delta: float):
        super().__init__(n, K)
        self.delta = float(delta)
        self.state = Exp3PState(K, max(n, 1), self.delta)

    def _select(self, t, u):
        return self.state.select(u)

    def _feedback(self, t, arm, reward, p):
        self.state.update(arm, reward, p)

    def describe(self):
        return {"policy": "exp3p", "n": self.n, "K": self.K, "delta": self.delta}

    def kernel_spec(self):
        s = self.state
        return EXP3P_CODE, [s.beta, s.eta, s.gamma, self.delta]
