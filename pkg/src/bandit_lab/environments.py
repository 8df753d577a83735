"""Reward sources: stochastic, constant and replayed arms, plus the phase-flip
adversaries used to show that little exploration gets punished.

Every built-in source realizes an episode as a table: a per-round mean
schedule, a per-arm Bernoulli flag and one pre-drawn uniform per
(round, arm).  The reward of arm ``i`` at round ``t`` is ``u < mean`` for
Bernoulli arms and ``mean`` itself otherwise.  The adaptive adversary adds a
single "revert" rule: once the player has pulled the watched arm more than
``threshold`` times inside a window, that arm's mean drops to
``revert_mean`` for every later round.  The compiled episode loop consumes
the same table, so both backends see identical rewards.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Sequence

import numpy as np

from .errors import ConfigError
from .rng import derive_seed, env_uniforms

DELTA_FLIP = 1.0 / 8.0


@dataclass(frozen=True)
class Revert:
    arm: int
    window_start: int
    window_end: int
    threshold: float
    mean: float


@dataclass
class EnvTable:
    means: np.ndarray  # (n, K)
    bernoulli: np.ndarray  # (K,) bool
    uniforms: np.ndarray  # (n, K)
    revert: Revert | None = None


class TableSource:
    """Base for the built-in reward sources."""

    K: int
    bernoulli: np.ndarray

    def __init__(self):
        self._table: EnvTable | None = None
        self._revert_after: int | None = None
        self._window_plays = 0

    def mean_schedule(self, n: int) -> np.ndarray:
        raise NotImplementedError

    def revert_rule(self, n: int) -> Revert | None:
        return None

    def start(self, n: int, rng: np.random.Generator) -> None:
        means = np.ascontiguousarray(self.mean_schedule(n), dtype=np.float64)
        if means.shape != (n, self.K):
            raise ConfigError(f"mean schedule has shape {means.shape}, expected {(n, self.K)}")
        self._table = EnvTable(
            means=means,
            bernoulli=np.asarray(self.bernoulli, dtype=bool),
            uniforms=env_uniforms(rng, n, self.K),
            revert=self.revert_rule(n),
        )
        self._revert_after = None
        self._window_plays = 0

    def table(self) -> EnvTable:
        if self._table is None:
            raise RuntimeError("call start() before table()")
        return self._table

    def rewards(self, t: int) -> list[float]:
        tab = self._table
        row = tab.means[t - 1]
        u = tab.uniforms[t - 1]
        rv = tab.revert
        out = []
        for i in range(self.K):
            m = float(row[i])
            if rv is not None and i == rv.arm and self._revert_after is not None and t > self._revert_after:
                m = rv.mean
            if tab.bernoulli[i]:
                out.append(1.0 if u[i] < m else 0.0)
            else:
                out.append(m)
        return out

    def observe(self, t: int, arm: int) -> None:
        rv = self._table.revert
        if rv is None or self._revert_after is not None or arm != rv.arm:
            return
        if rv.window_start <= t <= rv.window_end:
            self._window_plays += 1
            if self._window_plays > rv.threshold:
                self._revert_after = t

    @property
    def reverted_after(self) -> int | None:
        """Round after which the revert rule took effect (python backend only)."""
        return self._revert_after


def _check_unit(values, what: str) -> np.ndarray:
    arr = np.asarray(values, dtype=np.float64)
    if arr.size == 0 or not np.all(np.isfinite(arr)) or arr.min() < 0.0 or arr.max() > 1.0:
        raise ConfigError(f"{what} must be non-empty and lie in [0, 1]")
    return arr


class StochasticEnv(TableSource):
    """Independent Bernoulli arms with fixed means."""

    def __init__(self, means: Sequence[float]):
        super().__init__()
        self.means = _check_unit(means, "means")
        self.K = len(self.means)
        self.bernoulli = np.ones(self.K, dtype=bool)

    def mean_schedule(self, n):
        return np.broadcast_to(self.means, (n, self.K))

    def describe(self):
        return {"env": "stochastic", "means": self.means.tolist()}


class ConstantEnv(TableSource):
    """Every arm pays its fixed value every round."""

    def __init__(self, values: Sequence[float]):
        super().__init__()
        self.values = _check_unit(values, "values")
        self.K = len(self.values)
        self.bernoulli = np.zeros(self.K, dtype=bool)

    def mean_schedule(self, n):
        return np.broadcast_to(self.values, (n, self.K))

    def describe(self):
        return {"env": "constant", "values": self.values.tolist()}


class ReplayEnv(TableSource):
    """Replays an ``n x K`` reward matrix verbatim."""

    def __init__(self, matrix):
        super().__init__()
        m = np.asarray(matrix, dtype=np.float64)
        if m.ndim != 2 or m.shape[1] < 1:
            raise ConfigError(f"reward matrix must be 2-D with at least one column, got shape {m.shape}")
        if m.size and (not np.all(np.isfinite(m)) or m.min() < 0.0 or m.max() > 1.0):
            raise ConfigError("reward matrix entries must lie in [0, 1]")
        self.matrix = m
        self.K = m.shape[1]
        self.bernoulli = np.zeros(self.K, dtype=bool)

    def mean_schedule(self, n):
        if n > self.matrix.shape[0]:
            raise ConfigError(f"matrix has {self.matrix.shape[0]} rows, horizon is {n}")
        return self.matrix[:n]

    def describe(self):
        return {"env": "replay", "rows": int(self.matrix.shape[0]), "K": self.K,
                "checksum": float(self.matrix.sum())}


# -- phase construction ----------------------------------------------------


def floor_power(n: int, alpha: float) -> int:
    """``floor(n ** alpha)``, robust to ``1e5 ** 0.6 == 999.9999999999998``."""
    v = n ** alpha
    b = math.floor(v)
    if math.isclose(b + 1, v, rel_tol=1e-12):
        b += 1
    return b


@dataclass(frozen=True)
class PhaseLayout:
    """Phases of length ``3**j * floor(n**alpha)``; a final partial phase takes the rest."""

    n: int
    alpha: float
    base: int
    lengths: tuple[int, ...]
    cumulative: tuple[int, ...]
    n_full: int

    def bounds(self, j: int) -> tuple[int, int]:
        """First and last round (1-based, inclusive) of phase ``j``."""
        start = self.cumulative[j - 1] + 1 if j > 0 else 1
        return start, self.cumulative[j]

    def phase_of(self, t: int) -> int:
        for j, end in enumerate(self.cumulative):
            if t <= end:
                return j
        raise ValueError(f"round {t} beyond horizon {self.n}")


def phase_layout(n: int, alpha: float) -> PhaseLayout:
    if n < 1:
        raise ConfigError(f"horizon must be >= 1, got {n}")
    if not 0.0 < alpha < 1.0:
        raise ConfigError(f"alpha must lie in (0, 1), got {alpha}")
    base = floor_power(n, alpha)
    if base == 0:
        raise ConfigError(f"floor(n**alpha) is 0 for n={n}, alpha={alpha}")
    lengths, cumulative = [], []
    total, j = 0, 0
    while total + base * 3**j <= n:
        total += base * 3**j
        lengths.append(base * 3**j)
        cumulative.append(total)
        j += 1
    n_full = len(lengths)
    if total < n:
        lengths.append(n - total)
        cumulative.append(n)
    return PhaseLayout(n, alpha, base, tuple(lengths), tuple(cumulative), n_full)


@dataclass(frozen=True)
class LowerBoundParams:
    """Parameters of the phase-flip construction for horizon ``n``.

    ``B = 8 c ln 3 / (1 - alpha) * (ln n)**(beta - 1)`` bounds the expected
    arm-2 plays in the chosen phase ``j_star``.
    """

    n: int
    alpha: float
    beta: float
    epsilon: float
    c_lower: float
    Delta: float = DELTA_FLIP
    j_star: int | None = None
    layout: PhaseLayout = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        if self.c_lower <= 0:
            raise ConfigError(f"c_lower must be positive, got {self.c_lower}")
        if self.epsilon <= 0:
            raise ConfigError(f"epsilon must be positive, got {self.epsilon}")
        if not 0.0 < self.Delta < 0.5:
            raise ConfigError(f"Delta must lie in (0, 1/2), got {self.Delta}")
        object.__setattr__(self, "layout", phase_layout(self.n, self.alpha))
        if self.j_star is not None and not 0 <= self.j_star < self.layout.n_full:
            raise ConfigError(f"j_star={self.j_star} outside [0, {self.layout.n_full})")

    @property
    def B(self) -> float:
        return 8.0 * self.c_lower * math.log(3) / (1.0 - self.alpha) * math.log(self.n) ** (self.beta - 1.0)

    @property
    def trigger(self) -> float:
        """Arm-2 plays inside phase ``j_star`` beyond which the adaptive source reverts."""
        return 4.0 * self.B

    def with_jstar(self, j_star: int) -> "LowerBoundParams":
        return LowerBoundParams(self.n, self.alpha, self.beta, self.epsilon, self.c_lower, self.Delta, j_star)

    def n_condition(self) -> bool:
        """Whether ``(ln n)**(2 - beta) >= 64 c ln 3 / ((1 - alpha) epsilon)`` holds."""
        lhs = math.log(self.n) ** (2.0 - self.beta)
        return lhs >= 64.0 * self.c_lower * math.log(3) / ((1.0 - self.alpha) * self.epsilon)

    def flip_round(self) -> int:
        """Last round before arm 2's mean is raised (0 when ``j_star == 0``)."""
        if self.j_star is None:
            raise ConfigError("j_star is not set")
        return self.layout.cumulative[self.j_star - 1] if self.j_star > 0 else 0

    def to_dict(self) -> dict:
        return {
            "n": self.n, "alpha": self.alpha, "beta": self.beta, "epsilon": self.epsilon,
            "c_lower": self.c_lower, "Delta": self.Delta, "j_star": self.j_star, "B": self.B,
            "layout": list(self.layout.lengths), "n_condition": self.n_condition(),
        }


class ObliviousFlipEnv(TableSource):
    """Arm 0 pays exactly 1/2; arm 1 is Bernoulli(1/2 - Delta), raised to
    1/2 + Delta from phase ``j_star`` on.  With ``j_star=None`` arm 1 is
    never raised (the unmodified stochastic base)."""

    K = 2

    def __init__(self, params: LowerBoundParams, flip: bool = True):
        super().__init__()
        if flip and params.j_star is None:
            raise ConfigError("oblivious flip needs j_star")
        self.params = params
        self.flip = flip
        self.bernoulli = np.array([False, True])

    def mean_schedule(self, n):
        P = self.params
        if n != P.n:
            raise ConfigError(f"parameters were built for n={P.n}, episode has n={n}")
        means = np.empty((n, 2))
        means[:, 0] = 0.5
        means[:, 1] = 0.5 - P.Delta
        if self.flip:
            means[P.flip_round():, 1] = 0.5 + P.Delta
        return means

    def describe(self):
        return {"env": "oblivious_flip" if self.flip else "flip_base", **self.params.to_dict()}


class AdaptiveSwitchbackEnv(ObliviousFlipEnv):
    """The flip construction, except that once the player pulls arm 1 more
    than ``4B`` times inside phase ``j_star``, arm 1 reverts to
    ``1/2 - Delta`` for the rest of the episode."""

    def __init__(self, params: LowerBoundParams):
        super().__init__(params, flip=True)

    def revert_rule(self, n):
        P = self.params
        lo, hi = P.layout.bounds(P.j_star)
        return Revert(arm=1, window_start=lo, window_end=hi, threshold=P.trigger, mean=0.5 - P.Delta)

    def describe(self):
        return {"env": "adaptive_switchback", **self.params.to_dict()}


def flip_base_env(params: LowerBoundParams) -> ObliviousFlipEnv:
    return ObliviousFlipEnv(params, flip=False)


def phase_plays(arms: np.ndarray, layout: PhaseLayout, arm: int = 1) -> np.ndarray:
    """Plays of ``arm`` inside each phase of ``layout``."""
    hits = (np.asarray(arms) == arm).astype(np.int64)
    edges = np.concatenate([[0], layout.cumulative])
    csum = np.concatenate([[0], np.cumsum(hits)])
    return csum[edges[1:]] - csum[edges[:-1]]


@dataclass
class JStarEstimate:
    j_star: int
    flagged: bool
    mean_plays: list[float]
    B: float
    runs: int


def estimate_jstar(
    player: Callable[[int, int], object],
    params: LowerBoundParams,
    runs: int,
    seed: int,
) -> JStarEstimate:
    """Monte Carlo choice of the flip phase for a given player.

    ``player(n, K)`` must build a fresh policy.  The player faces the
    unmodified base problem for ``runs`` episodes; the result is the first
    full phase whose mean arm-1 play count is at most ``B``, or the argmin
    phase with ``flagged=True`` when no phase qualifies.
    """
    from .policy_api import run_episode

    if runs < 1:
        raise ConfigError(f"runs must be >= 1, got {runs}")
    layout = params.layout
    totals = np.zeros(layout.n_full)
    for r in range(runs):
        rec = run_episode(player(params.n, 2), flip_base_env(params), params.n, derive_seed(seed, r))
        totals += phase_plays(rec.arms, layout)[: layout.n_full]
    mean = totals / runs
    ok = np.nonzero(mean <= params.B)[0]
    if ok.size:
        return JStarEstimate(int(ok[0]), False, mean.tolist(), params.B, runs)
    return JStarEstimate(int(np.argmin(mean)), True, mean.tolist(), params.B, runs)


# -- CSV reward matrices -----------------------------------------------------


def write_matrix_csv(path, matrix) -> None:
    m = np.asarray(matrix, dtype=np.float64)
    path = Path(path)
    with path.open("w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["t"] + [f"arm_{i + 1}" for i in range(m.shape[1])])
        for t, row in enumerate(m, start=1):
            w.writerow([t] + [repr(float(v)) for v in row])


def read_matrix_csv(path) -> np.ndarray:
    path = Path(path)
    with path.open(newline="") as fh:
        rows = list(csv.reader(fh))
    if not rows:
        raise ConfigError(f"{path}: empty reward matrix file")
    header = rows[0]
    K = len(header) - 1
    if K < 1 or header[0] != "t" or header[1:] != [f"arm_{i + 1}" for i in range(K)]:
        raise ConfigError(f"{path}: header must be t,arm_1,...,arm_K")
    out = np.empty((len(rows) - 1, K))
    for r, row in enumerate(rows[1:]):
        if len(row) != K + 1:
            raise ConfigError(f"{path}: row {r + 2} has {len(row)} fields, expected {K + 1}")
        try:
            t = int(row[0])
            vals = [float(v) for v in row[1:]]
        except ValueError as exc:
            raise ConfigError(f"{path}: row {r + 2}: {exc}") from None
        if t != r + 1:
            raise ConfigError(f"{path}: row {r + 2} has t={t}, expected {r + 1}")
        out[r] = vals
    if out.size and (out.min() < 0.0 or out.max() > 1.0):
        raise ConfigError(f"{path}: rewards must lie in [0, 1]")
    return out
