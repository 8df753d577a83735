"""Regret of single episodes and Monte Carlo estimates over batches.

Three notions are kept apart:

* realized regret ``R(n) = max_i G_i - G_alg`` of one episode (may be negative);
* pseudo-regret ``max_i E[G_i - G_alg]``: average the per-arm gaps over runs,
  then take the max;
* expected regret ``E[max_i G_i - G_alg]``: take the max per run, then average.

The first never exceeds the second in expectation.
"""

from __future__ import annotations

from dataclasses import asdict, dataclass, field

import numpy as np

from .errors import ConfigError


@dataclass
class EpisodeStats:
    """Everything the aggregate needs from one episode."""

    seed: int
    config_digest: str
    arm_totals: list[float]
    received: float
    plays: list[int]
    switch_round: int | None = None
    switch_reason: str | None = None
    detections: list[int] = field(default_factory=list)
    guard_fired: int = 0

    @classmethod
    def from_record(cls, rec) -> "EpisodeStats":
        K = rec.K
        det = [0] * K
        guards = 0
        for e in rec.events:
            if e.kind == "detection":
                det[e.arm] += 1
            elif e.kind == "guard":
                guards += 1
        return cls(
            seed=rec.seed,
            config_digest=rec.config_digest,
            arm_totals=[float(v) for v in rec.arm_totals()],
            received=float(rec.rewards.sum()),
            plays=[int(v) for v in rec.plays()],
            switch_round=rec.switch_round,
            switch_reason=rec.switch_reason,
            detections=det,
            guard_fired=guards,
        )

    @property
    def gaps(self) -> np.ndarray:
        return np.asarray(self.arm_totals) - self.received

    @property
    def realized_regret(self) -> float:
        return float(self.gaps.max())

    @property
    def switched(self) -> bool:
        return self.switch_reason is not None


def realized_regret(record) -> float:
    """Best arm's cumulative reward minus the player's, for one episode."""
    if hasattr(record, "counterfactuals"):
        if record.n == 0:
            return 0.0
        return float(record.counterfactuals.sum(axis=0).max() - record.rewards.sum())
    return record.realized_regret


@dataclass
class RegretSummary:
    runs: int
    seeds: list[int]
    per_run_realized_regret: list[float]
    per_arm_mean_gap: list[float]
    per_arm_gap_se: list[float]
    pseudo_regret_estimate: float
    pseudo_regret_se: float
    expected_regret_estimate: float
    expected_regret_se: float
    switch_fraction: float
    switch_fraction_se: float
    mean_plays: list[float]
    mean_plays_se: list[float]

    def to_dict(self) -> dict:
        return asdict(self)


def _se(x: np.ndarray, axis=0) -> np.ndarray:
    m = x.shape[axis]
    if m < 2:
        return np.zeros(x.shape[1:] if x.ndim > 1 else ())
    return x.std(axis=axis, ddof=1) / np.sqrt(m)


def aggregate(records) -> RegretSummary:
    """Monte Carlo summary of a batch; input order is by ascending seed."""
    stats = [r if isinstance(r, EpisodeStats) else EpisodeStats.from_record(r) for r in records]
    if not stats:
        raise ConfigError("aggregate needs at least one episode")
    digests = {s.config_digest for s in stats}
    if len(digests) > 1:
        raise ConfigError(f"cannot aggregate episodes from different configurations: {sorted(digests)}")
    stats.sort(key=lambda s: s.seed)
    gaps = np.array([s.gaps for s in stats])
    per_run = gaps.max(axis=1)
    arm_mean = gaps.mean(axis=0)
    arm_se = _se(gaps)
    best = int(np.argmax(arm_mean))
    switched = np.array([1.0 if s.switched else 0.0 for s in stats])
    plays = np.array([s.plays for s in stats], dtype=np.float64)
    return RegretSummary(
        runs=len(stats),
        seeds=[s.seed for s in stats],
        per_run_realized_regret=per_run.tolist(),
        per_arm_mean_gap=arm_mean.tolist(),
        per_arm_gap_se=np.atleast_1d(arm_se).tolist(),
        pseudo_regret_estimate=float(arm_mean[best]),
        pseudo_regret_se=float(np.atleast_1d(arm_se)[best]),
        expected_regret_estimate=float(per_run.mean()),
        expected_regret_se=float(_se(per_run)),
        switch_fraction=float(switched.mean()),
        switch_fraction_se=float(_se(switched)),
        mean_plays=plays.mean(axis=0).tolist(),
        mean_plays_se=np.atleast_1d(_se(plays)).tolist(),
    )


def stochastic_decomposition(summary: RegretSummary, means) -> tuple[float, float]:
    """``sum_i Delta_i * mean T_i`` and its standard error, for a stochastic instance."""
    mu = np.asarray(means, dtype=np.float64)
    gaps = mu.max() - mu
    value = float(gaps @ np.asarray(summary.mean_plays))
    se = float(np.sqrt(np.sum((gaps * np.asarray(summary.mean_plays_se)) ** 2)))
    return value, se
