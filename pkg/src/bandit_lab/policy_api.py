"""Round-based player/environment contract and the episode loop.

Arms are 0-based throughout the Python API; rounds are 1-based (``t`` runs
from 1 to ``n``).  A policy only ever sees its own choices and the rewards of
the arms it played; the full counterfactual reward vector is logged for
regret metrics but never handed to the policy.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass, field
from typing import Any, NamedTuple, Protocol, runtime_checkable

import numpy as np

from . import kernels
from .errors import ConfigError, ProtocolError, RewardRangeError
from .rng import episode_streams, policy_uniforms


class Event(NamedTuple):
    """Something notable that happened at round ``t``.

    ``kind`` is one of ``evicted``, ``detection``, ``phase_end``, ``guard``
    or ``switch``; ``detail`` is a small dict of the values involved.
    """

    t: int
    kind: str
    arm: int | None
    detail: dict


@dataclass(frozen=True)
class RoundOutcome:
    round_index: int
    chosen_arm: int
    probability_vector: tuple[float, ...]
    reward: float
    counterfactual_rewards: tuple[float, ...]
    event_tags: frozenset[str]


@dataclass
class EpisodeRecord:
    """Complete log of one episode, stored column-wise."""

    seed: int
    config_digest: str
    arms: np.ndarray
    probabilities: np.ndarray
    rewards: np.ndarray
    counterfactuals: np.ndarray
    events: list[Event] = field(default_factory=list)
    switch_round: int | None = None
    switch_reason: str | None = None
    violations: dict[str, int] = field(default_factory=dict)
    detection_trace: np.ndarray | None = None

    @property
    def n(self) -> int:
        return int(self.arms.shape[0])

    @property
    def K(self) -> int:
        return int(self.counterfactuals.shape[1])

    def __len__(self) -> int:
        return self.n

    def round(self, t: int) -> RoundOutcome:
        """The :class:`RoundOutcome` of round ``t`` (1-based)."""
        if not 1 <= t <= self.n:
            raise IndexError(f"round {t} outside [1, {self.n}]")
        tags = frozenset(
            f"{e.kind}({e.arm if e.arm is not None else e.detail.get('reason')})"
            for e in self.events
            if e.t == t
        )
        return RoundOutcome(
            round_index=t,
            chosen_arm=int(self.arms[t - 1]),
            probability_vector=tuple(float(v) for v in self.probabilities[t - 1]),
            reward=float(self.rewards[t - 1]),
            counterfactual_rewards=tuple(float(v) for v in self.counterfactuals[t - 1]),
            event_tags=tags,
        )

    @property
    def rounds(self) -> list[RoundOutcome]:
        return [self.round(t) for t in range(1, self.n + 1)]

    def arm_totals(self) -> np.ndarray:
        return self.counterfactuals.sum(axis=0)

    def plays(self) -> np.ndarray:
        return np.bincount(self.arms, minlength=self.K)

    def events_of(self, kind: str, arm: int | None = None) -> list[Event]:
        return [e for e in self.events if e.kind == kind and (arm is None or e.arm == arm)]


@runtime_checkable
class Policy(Protocol):
    n: int
    K: int

    def select(self, t: int, u: float) -> tuple[int, list[float]]: ...

    def feedback(self, t: int, arm: int, reward: float) -> None: ...


@runtime_checkable
class RewardSource(Protocol):
    K: int

    def start(self, n: int, rng: np.random.Generator) -> None: ...

    def rewards(self, t: int) -> list[float]: ...

    def observe(self, t: int, arm: int) -> None: ...


class BasePolicy:
    """Enforces the select/feedback alternation shared by every policy.

    Subclasses implement ``_select(t, u)`` and ``_feedback(t, arm, reward, p)``.
    Each round consumes exactly one uniform ``u`` in [0, 1).
    """

    def __init__(self, n: int, K: int):
        if K < 1:
            raise ConfigError(f"need at least one arm, got K={K}")
        if n < 0:
            raise ConfigError(f"horizon must be non-negative, got n={n}")
        self.n = int(n)
        self.K = int(K)
        self.t = 0
        self.events: list[Event] = []
        self._pending: tuple[int, int, list[float]] | None = None

    def select(self, t: int, u: float) -> tuple[int, list[float]]:
        if self._pending is not None:
            raise ProtocolError(f"select called twice for round {t} without feedback")
        if t != self.t + 1:
            raise ProtocolError(f"expected round {self.t + 1}, got {t}")
        arm, p = self._select(t, u)
        self._pending = (t, arm, p)
        return arm, p

    def feedback(self, t: int, arm: int, reward: float) -> None:
        if self._pending is None or self._pending[0] != t or self._pending[1] != arm:
            raise ProtocolError(f"feedback for (t={t}, arm={arm}) does not match the pending selection")
        if not 0.0 <= reward <= 1.0:
            raise RewardRangeError(f"reward {reward!r} outside [0, 1]")
        p = self._pending[2]
        self._pending = None
        self._feedback(t, arm, reward, p)
        self.t = t

    def describe(self) -> dict[str, Any]:
        return {"policy": type(self).__name__, "n": self.n, "K": self.K}

    def kernel_spec(self) -> tuple[int, list[float]] | None:
        """``(policy_code, params)`` for the compiled loop, or None if unsupported."""
        return None

    def _select(self, t: int, u: float) -> tuple[int, list[float]]:
        raise NotImplementedError

    def _feedback(self, t: int, arm: int, reward: float, p: list[float]) -> None:
        raise NotImplementedError


def config_digest(payload: dict) -> str:
    blob = json.dumps(payload, sort_keys=True, separators=(",", ":"), default=str)
    return hashlib.sha256(blob.encode()).hexdigest()[:16]


def _describe(obj) -> dict:
    fn = getattr(obj, "describe", None)
    return fn() if callable(fn) else {"type": type(obj).__name__}


def run_episode(
    policy: Policy,
    env: RewardSource,
    n: int,
    seed: int,
    *,
    backend: str = "auto",
    check: bool = False,
    trace_detection: bool = False,
) -> EpisodeRecord:
    """Play ``n`` rounds of ``policy`` against ``env``.

    ``backend`` is ``"auto"`` (compiled loop when the extension is built and
    both sides support it), ``"python"`` or ``"compiled"``.  Both backends
    produce bit-identical records for the same seed.  ``check`` counts SAPO
    invariant violations into ``record.violations``; ``trace_detection``
    logs the detection statistic of every evicted arm per round.
    """
    if n < 0:
        raise ConfigError(f"horizon must be non-negative, got n={n}")
    if policy.K != env.K:
        raise ConfigError(f"policy has K={policy.K} arms but environment has K={env.K}")
    if getattr(policy, "n", n) != n:
        raise ConfigError(f"policy was built for n={policy.n}, episode asks for n={n}")
    if backend not in ("auto", "python", "compiled"):
        raise ConfigError(f"unknown backend {backend!r}")
    K = env.K
    digest = config_digest({"policy": _describe(policy), "env": _describe(env), "n": n})

    pol_gen, env_gen = episode_streams(seed)
    u_pol = policy_uniforms(pol_gen, n)
    env.start(n, env_gen)

    kspec = policy.kernel_spec() if hasattr(policy, "kernel_spec") else None
    table = env.table() if hasattr(env, "table") else None
    use_compiled = backend == "compiled" or (
        backend == "auto" and kernels.HAVE_EXTENSION and kspec is not None and table is not None
    )
    if use_compiled:
        if kspec is None or table is None:
            raise ConfigError("compiled backend needs a built-in policy and a table environment")
        out = kernels.run_compiled(kspec, table, n, K, u_pol, check, trace_detection)
        rec = EpisodeRecord(
            seed=int(seed),
            config_digest=digest,
            arms=out["arms"],
            probabilities=out["probs"],
            rewards=out["rewards"],
            counterfactuals=out["cf"],
            events=[Event(*e) for e in out["events"]],
            switch_round=out["switch_round"],
            switch_reason=out["switch_reason"],
            violations={k: v for k, v in out["violations"].items() if v} if check else {},
            detection_trace=out["trace"] if trace_detection else None,
        )
        return rec

    arms = np.zeros(n, dtype=np.int64)
    probs = np.zeros((n, K))
    rewards = np.zeros(n)
    cf = np.zeros((n, K))
    if hasattr(policy, "check"):
        policy.check = check
    if trace_detection and hasattr(policy, "detection_trace"):
        policy.detection_trace = np.full((n, K), np.nan)
    for t in range(1, n + 1):
        x = env.rewards(t)
        if len(x) != K:
            raise RewardRangeError(f"environment returned {len(x)} rewards at round {t}, expected {K}")
        for v in x:
            if not 0.0 <= v <= 1.0:
                raise RewardRangeError(f"environment reward {v!r} at round {t} outside [0, 1]")
        arm, p = policy.select(t, float(u_pol[t - 1]))
        env.observe(t, arm)
        policy.feedback(t, arm, x[arm])
        arms[t - 1] = arm
        probs[t - 1] = p
        rewards[t - 1] = x[arm]
        cf[t - 1] = x
    violations = dict(getattr(policy, "violations", {}) or {}) if check else {}
    return EpisodeRecord(
        seed=int(seed),
        config_digest=digest,
        arms=arms,
        probabilities=probs,
        rewards=rewards,
        counterfactuals=cf,
        events=list(getattr(policy, "events", [])),
        switch_round=getattr(policy, "switch_round", None),
        switch_reason=getattr(policy, "switch_reason", None),
        violations={k: v for k, v in violations.items() if v},
        detection_trace=getattr(policy, "detection_trace", None) if trace_detection else None,
    )
