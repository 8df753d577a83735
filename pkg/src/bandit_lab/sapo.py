"""SAPO: arm elimination guarded by tests for non-stochastic arms.

Each round runs, in order:

1. switch checks: an active arm whose importance-weighted mean leaves its
   own running confidence interval, or a cumulative reward deficit against
   the best lower confidence bound that exceeds ``c_1b sqrt(K n log(n/delta))``;
2. eviction of active arms that are well-sampled and clearly below ``lcb*``;
3. sampling: evicted ("bad") arms get ``L0 / (K L)``, active arms split the
   rest uniformly;
4. after the reward, every bad arm is tested: a large positive excess of
   its rewards over the frozen mean in the current testing phase counts as
   a detection (phase restarts with halved length); ``E0`` detections hand
   control to Exp3.P.  An exhausted phase restarts with doubled length.

``log`` is the natural logarithm except in the phase bound ``M``, which
uses ``ceil(log2 n)``.
"""

from __future__ import annotations

import math
from collections import Counter
from dataclasses import asdict, dataclass, field

from .errors import ConfigError
from .exp3p import Exp3PState
from .policy_api import BasePolicy, Event
from .rng import sample_inverse_cdf

SAPO_CODE = 0

# reason codes shared with the compiled kernel
SWITCH_REASONS = ("unbiased_interval", "reward_deficit", "detections")

# relative slack for the float identities L*p == L0/K and the threshold identity
IDENTITY_RTOL = 1e-12


@dataclass(frozen=True)
class SapoConfig:
    """Horizon, arm count, confidence and the seven algorithm constants.

    ``constant_scale`` multiplies ``c_wid, c_1b, c_1, c_gap, c_pp, c_4c``
    (not ``c_4a``); it exists for desk-scale experiments where the default
    constants make phases longer than the horizon.

    ``bucb_init`` is the starting value of every upper bound on the
    importance-weighted mean.  The default 1 is the literal choice, but that
    estimate is not confined to [0, 1] (one reward of 1 at ``p = 1/K`` gives
    ``K``), so the unbiased-interval switch can fire at round 2 on a purely
    stochastic instance.  ``math.inf`` lets the first observation set the bound.
    """

    n: int
    K: int
    delta: float
    c_wid: float = 16.0
    c_1b: float = 522.0
    c_1: float = 100.0 / 9.0
    c_gap: float = 60.0
    c_pp: float = 1300.0
    c_4a: float = 0.1
    c_4c: float = 15.0
    constant_scale: float = 1.0
    bucb_init: float = 1.0

    def __post_init__(self):
        if self.K < 1:
            raise ConfigError(f"need at least one arm, got K={self.K}")
        if self.n < self.K:
            raise ConfigError(f"SAPO needs n >= K, got n={self.n}, K={self.K}")
        if not 0.0 < self.delta <= 1.0:
            raise ConfigError(f"delta must lie in (0, 1], got {self.delta}")
        if not self.constant_scale > 0.0:
            raise ConfigError(f"constant_scale must be positive, got {self.constant_scale}")
        if not self.bucb_init >= 1.0:
            raise ConfigError(f"bucb_init must be >= 1 (or inf), got {self.bucb_init}")

    def _scaled(self, c: float) -> float:
        return c * self.constant_scale

    @property
    def wid(self) -> float:
        return self._scaled(self.c_wid)

    @property
    def deficit_const(self) -> float:
        return self._scaled(self.c_1b)

    @property
    def min_plays_const(self) -> float:
        return self._scaled(self.c_1)

    @property
    def gap(self) -> float:
        return self._scaled(self.c_gap)

    @property
    def pp(self) -> float:
        return self._scaled(self.c_pp)

    @property
    def detect_frac(self) -> float:
        return self.c_4a

    @property
    def detections_const(self) -> float:
        return self._scaled(self.c_4c)

    @property
    def log_term(self) -> float:
        return math.log(self.n / self.delta)

    @property
    def E0(self) -> int:
        """Detections that force the switch: ``ceil(c_4c log(n/delta))``."""
        return math.ceil(self.detections_const * self.log_term)

    @property
    def M(self) -> int:
        """Bound on the number of testing phases per arm."""
        return (self.n - 1).bit_length() + 2 * self.E0

    @property
    def min_plays(self) -> float:
        return self.min_plays_const * self.log_term

    @property
    def deficit_threshold(self) -> float:
        return self.deficit_const * math.sqrt(self.K * self.n * self.log_term)

    def to_dict(self) -> dict:
        return asdict(self)


def sample_width(c_wid: float, log_term: float, plays: int) -> float:
    """Half-width of the sample-mean interval after ``plays`` observations."""
    return math.sqrt(c_wid * log_term / plays)


def unbiased_width(c_wid: float, K: int, log_term: float, t: int) -> float:
    """Half-width of the importance-weighted interval after ``t`` rounds."""
    return math.sqrt(c_wid * K * log_term / t)


@dataclass
class ArmStats:
    T: int = 0
    sum_rewards: float = 0.0
    hmu: float = 0.0
    bmu_numerator: float = 0.0
    bmu: float = 0.0
    lcb: float = 0.0
    blcb: float = 0.0
    bucb: float = 1.0
    width: float = math.inf


@dataclass
class EvictedArm:
    emu: float
    egp: float
    L0: int
    phase_start: int
    L: int
    E: int = 0
    phase_count: int = 1
    phase_prefix: float = 0.0
    # min of the phase prefix sums P(start-1), ..., P(t-1); P(start-1) = 0
    phase_prefix_min: float = 0.0


@dataclass(frozen=True)
class SwitchReason:
    kind: str
    arm: int | None = None


@dataclass
class _Snapshot:
    lcb: list = field(default_factory=list)
    blcb: list = field(default_factory=list)
    bucb: list = field(default_factory=list)
    lcb_star: float = 0.0


class SapoPolicy(BasePolicy):
    """Pure-Python SAPO, operation by operation.

    Also serves as the fallback when the compiled kernel is unavailable;
    both produce identical traces.
    """

    def __init__(self, config: SapoConfig, check: bool = False):
        super().__init__(config.n, config.K)
        self.config = config
        self.check = check
        self.arms = [ArmStats(bucb=config.bucb_init) for _ in range(config.K)]
        self.active = [True] * config.K
        self.bad: dict[int, EvictedArm] = {}
        self.lcb_star = 0.0
        self.deficit = 0.0
        self.switch_reason: str | None = None
        self.switch_round: int | None = None
        self.switched = False
        self.exp3p: Exp3PState | None = None
        self.violations: Counter = Counter()
        self.detection_trace = None
        self._p: list[float] | None = None
        # cached constants (same values the kernel receives)
        self._log = config.log_term
        self._E0 = config.E0
        self._M = config.M

    # -- the four per-round operations ---------------------------------

    def begin_round(self, t: int) -> SwitchReason | None:
        """Switch checks, then eviction.  Returns a reason if SAPO must hand over."""
        cfg = self.config
        K = self.K
        for i in range(K):
            if self.active[i]:
                a = self.arms[i]
                if a.bmu < a.blcb or a.bmu > a.bucb:
                    return SwitchReason("unbiased_interval", i)
        if self.deficit > cfg.deficit_threshold:
            return SwitchReason("reward_deficit")

        min_plays = cfg.min_plays
        gap = cfg.gap
        cands = []
        for i in range(K):
            if not self.active[i]:
                continue
            a = self.arms[i]
            if a.T >= 1 and a.T >= min_plays and a.hmu + gap * a.width < self.lcb_star:
                cands.append(i)
        if not cands:
            return None
        n_active = 0
        for i in range(K):
            if self.active[i]:
                n_active += 1
        if len(cands) == n_active:
            spare = self._spare(cands)
            cands.remove(spare)
            self.events.append(Event(t, "guard", spare, {}))
        for i in cands:
            self._evict(t, i)
        return None

    def select_arm(self, t: int, u: float) -> tuple[int, list[float]]:
        K = self.K
        p = [0.0] * K
        bad_mass = 0.0
        n_active = 0
        for i in range(K):
            if self.active[i]:
                n_active += 1
            else:
                e = self.bad[i]
                p[i] = e.L0 / (K * e.L)
                bad_mass += p[i]
        share = (1.0 - bad_mass) / n_active
        for i in range(K):
            if self.active[i]:
                p[i] = share
        if self.check:
            self._check_probs(p)
        return sample_inverse_cdf(p, u), p

    def update_estimates(self, t: int, arm: int, reward: float, p: list[float]) -> None:
        cfg = self.config
        K = self.K
        log = self._log
        if p[arm] <= 0.0:
            raise RuntimeError(f"arm {arm} was played with probability {p[arm]}")
        if self.check:
            snap = self._snapshot()

        a = self.arms[arm]
        a.T += 1
        a.sum_rewards += reward
        a.bmu_numerator += reward / p[arm]

        bwidth = unbiased_width(cfg.wid, K, log, t)
        for s in self.arms:
            s.bmu = s.bmu_numerator / t
            s.blcb = max(s.blcb, s.bmu - bwidth)
            s.bucb = min(s.bucb, s.bmu + bwidth)
        a.hmu = a.sum_rewards / a.T
        a.width = sample_width(cfg.wid, log, a.T)
        a.lcb = max(a.lcb, a.hmu - a.width)

        star = self.lcb_star
        for s in self.arms:
            star = max(star, s.lcb, s.blcb)
        self.lcb_star = star
        # reward deficit against the end-of-round lcb*
        self.deficit += star - reward

        for i, e in self.bad.items():
            e.phase_prefix_min = min(e.phase_prefix_min, e.phase_prefix)
            if i == arm:
                e.phase_prefix += reward - e.emu

        if self.check:
            self._check_monotone(snap)

    def detection_stat(self, i: int) -> float:
        """Largest within-phase sum of ``(x_i - emu_i) 1{I=i}`` over windows ending now."""
        if i not in self.bad:
            raise ValueError(f"arm {i} is not evicted")
        e = self.bad[i]
        return e.phase_prefix - e.phase_prefix_min

    def end_round_step4(self, t: int) -> SwitchReason | None:
        """Test every evicted arm; restart or stretch its testing phase."""
        K = self.K
        c4a = self.config.detect_frac
        for i in sorted(self.bad):
            e = self.bad[i]
            p_i = e.L0 / (K * e.L)
            stat = e.phase_prefix - e.phase_prefix_min
            thr = c4a * e.egp * e.L * p_i
            if self.detection_trace is not None:
                self.detection_trace[t - 1, i] = stat
            if self.check:
                self._check_phase(e, p_i, thr)
            if stat >= thr:
                e.L = e.L // 2 if e.L > e.L0 else e.L0
                e.E += 1
                self._new_phase(e, t + 1)
                self.events.append(Event(t, "detection", i, {"stat": stat, "threshold": thr, "E": e.E, "L": e.L}))
                if e.E >= self._E0:
                    return SwitchReason("detections", i)
            elif t == e.phase_start + e.L - 1:
                e.L *= 2
                self._new_phase(e, t + 1)
                self.events.append(Event(t, "phase_end", i, {"L": e.L}))
        return None

    # -- BasePolicy plumbing --------------------------------------------

    def _select(self, t, u):
        if not self.switched:
            reason = self.begin_round(t)
            if reason is not None:
                self._switch(reason, t, t)
        if self.switched:
            return self.exp3p.select(u)
        return self.select_arm(t, u)

    def _feedback(self, t, arm, reward, p):
        if self.switched:
            self.exp3p.update(arm, reward, p)
            return
        self.update_estimates(t, arm, reward, p)
        reason = self.end_round_step4(t)
        if reason is not None:
            self._switch(reason, t, t + 1)

    def describe(self):
        return {"policy": "sapo", **self.config.to_dict()}

    def kernel_spec(self):
        cfg = self.config
        params = [
            self._log,
            cfg.wid,
            cfg.deficit_threshold,
            cfg.min_plays,
            cfg.gap,
            cfg.pp,
            cfg.detect_frac,
            float(self._E0),
            float(self._M),
            handover_delta(cfg.delta),
            cfg.bucb_init,
        ]
        return SAPO_CODE, params

    def snapshot(self) -> dict:
        """JSON-ready view of the state, keyed by the usual symbol names."""
        return {
            "t": self.t,
            "lcb_star": self.lcb_star,
            "deficit": self.deficit,
            "active": [i for i in range(self.K) if self.active[i]],
            "arms": [asdict(a) for a in self.arms],
            "bad": {str(i): asdict(e) for i, e in sorted(self.bad.items())},
            "switch_reason": self.switch_reason,
            "switch_round": self.switch_round,
        }

    # -- internals ------------------------------------------------------

    def _spare(self, cands: list[int]) -> int:
        # keep the candidate closest to attaining lcb*; lowest index on ties
        best, best_val = cands[0], -math.inf
        for i in cands:
            a = self.arms[i]
            v = max(a.lcb, a.blcb)
            if v > best_val:
                best, best_val = i, v
        return best

    def _evict(self, t: int, i: int) -> None:
        cfg = self.config
        a = self.arms[i]
        emu = a.hmu
        egp = cfg.gap * a.width
        L0 = math.ceil(cfg.pp * self.K / (egp * egp))
        if self.check and not (egp > 0.0 and emu + egp < self.lcb_star):
            self.violations["eviction_margin"] += 1
        self.active[i] = False
        self.bad[i] = EvictedArm(emu=emu, egp=egp, L0=L0, phase_start=t, L=L0)
        self.events.append(Event(t, "evicted", i, {"emu": emu, "egp": egp, "L0": L0}))

    @staticmethod
    def _new_phase(e: EvictedArm, start: int) -> None:
        e.phase_start = start
        e.phase_count += 1
        e.phase_prefix = 0.0
        e.phase_prefix_min = 0.0

    def _switch(self, reason: SwitchReason, t: int, start: int) -> None:
        self.switched = True
        self.switch_reason = reason.kind
        detail = {"reason": reason.kind}
        self.events.append(Event(t, "switch", reason.arm, detail))
        if start <= self.n:
            self.switch_round = start
            self.exp3p = Exp3PState(self.K, self.n - start + 1, handover_delta(self.config.delta))

    def _snapshot(self) -> _Snapshot:
        return _Snapshot(
            lcb=[a.lcb for a in self.arms],
            blcb=[a.blcb for a in self.arms],
            bucb=[a.bucb for a in self.arms],
            lcb_star=self.lcb_star,
        )

    def _check_probs(self, p: list[float]) -> None:
        total = 0.0
        for i in range(self.K):
            total += p[i]
            if not p[i] > 0.0:
                self.violations["prob_positive"] += 1
            if not self.active[i]:
                e = self.bad[i]
                if p[i] != e.L0 / (self.K * e.L) or p[i] > 1.0 / self.K:
                    self.violations["bad_prob_formula"] += 1
        if abs(total - 1.0) > 1e-12:
            self.violations["prob_sum"] += 1

    def _check_monotone(self, snap: _Snapshot) -> None:
        v = self.violations
        for i, a in enumerate(self.arms):
            if a.lcb < snap.lcb[i]:
                v["lcb_monotone"] += 1
            if a.blcb < snap.blcb[i]:
                v["blcb_monotone"] += 1
            if a.bucb > snap.bucb[i]:
                v["bucb_monotone"] += 1
            if a.T >= 1 and not 0.0 <= a.hmu <= 1.0:
                v["hmu_range"] += 1
        if self.lcb_star < snap.lcb_star:
            v["lcb_star_monotone"] += 1

    def _check_phase(self, e: EvictedArm, p_i: float, thr: float) -> None:
        v = self.violations
        K = self.K
        ratio, rem = divmod(e.L, e.L0)
        if e.L < e.L0 or rem != 0 or ratio & (ratio - 1):
            v["phase_length_power_of_two"] += 1
        if e.E > self._E0:
            v["detections_bound"] += 1
        if e.phase_count > self._M:
            v["phase_count_bound"] += 1
        if e.phase_prefix_min > 0.0:
            v["prefix_min_nonpositive"] += 1
        target = e.L0 / K
        if abs(e.L * p_i - target) > IDENTITY_RTOL * target:
            v["phase_mass_identity"] += 1
        ref = self.config.detect_frac * e.egp * target
        if abs(thr - ref) > IDENTITY_RTOL * ref:
            v["threshold_identity"] += 1


def handover_delta(delta: float) -> float:
    """Confidence passed to Exp3.P after a switch (which needs delta < 1)."""
    return delta if delta < 1.0 else math.nextafter(1.0, 0.0)
