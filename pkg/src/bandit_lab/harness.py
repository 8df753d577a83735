"""Seeded Monte Carlo batches: configuration, execution and file output.

A batch is fully described by an :class:`ExperimentConfig`.  Its digest plus
the package version determine every byte written by :func:`emit`; worker
count and output location are deliberately left out of the digest.
"""

from __future__ import annotations

import csv
import io
import json
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, replace
from pathlib import Path
from typing import Any

import numpy as np

from . import __version__
from .baselines import UCB1, EpsGreedy
from .environments import (
    AdaptiveSwitchbackEnv,
    ConstantEnv,
    LowerBoundParams,
    ObliviousFlipEnv,
    ReplayEnv,
    StochasticEnv,
    estimate_jstar,
    read_matrix_csv,
)
from .errors import ConfigError
from .exp3p import Exp3P
from .metrics import EpisodeStats, RegretSummary, aggregate
from .policy_api import EpisodeRecord, config_digest, run_episode
from .rng import derive_seeds
from .sapo import SapoConfig, SapoPolicy

POLICIES = ("sapo", "exp3p", "ucb1", "eps_greedy")
ENVS = ("stochastic", "constant", "oblivious_flip", "adaptive_switchback", "replay")
FLIP_ENVS = ("oblivious_flip", "adaptive_switchback")

# fields that do not influence any output value
_NOT_DIGESTED = ("out", "jobs")


@dataclass
class ExperimentConfig:
    policy: str = "sapo"
    env: str = "stochastic"
    n: int = 1000
    K: int = 2
    delta: float = 0.1
    seeds: list[int] | None = None
    master_seed: int = 0
    runs: int = 10
    # policy parameters
    constant_scale: float = 1.0
    bucb_init: float = 1.0
    eps_c: float = 2.0
    # environment parameters
    means: list[float] | None = None
    matrix: str | None = None
    alpha: float = 0.5
    beta: float = 1.0
    epsilon: float = 0.1
    c_lower: float = 1.0
    j_star: int | None = None
    jstar_runs: int = 100
    # output
    out: str | None = None
    format: str = "csv"
    trace: bool = False
    jobs: int = 1

    def __post_init__(self):
        self.validate()

    def validate(self) -> None:
        if self.policy not in POLICIES:
            raise ConfigError(f"unknown policy {self.policy!r}; choose from {', '.join(POLICIES)}")
        if self.env not in ENVS:
            raise ConfigError(f"unknown environment {self.env!r}; choose from {', '.join(ENVS)}")
        if self.format not in ("csv", "json"):
            raise ConfigError(f"format must be csv or json, got {self.format!r}")
        if self.n < 0:
            raise ConfigError(f"n must be non-negative, got {self.n}")
        if self.K < 1:
            raise ConfigError(f"K must be at least 1, got {self.K}")
        if self.seeds is None and self.runs < 1:
            raise ConfigError(f"runs must be at least 1, got {self.runs}")
        if self.seeds is not None and len(set(self.seeds)) != len(self.seeds):
            raise ConfigError("seeds must be distinct")
        if self.jobs < 1:
            raise ConfigError(f"jobs must be at least 1, got {self.jobs}")
        if self.env in FLIP_ENVS and self.K != 2:
            raise ConfigError(f"{self.env} has exactly 2 arms, got K={self.K}")
        if self.env in ("stochastic", "constant"):
            if self.means is None:
                raise ConfigError(f"{self.env} environment needs means")
            if len(self.means) != self.K:
                raise ConfigError(f"{len(self.means)} means given for K={self.K}")
        if self.env == "replay" and not self.matrix:
            raise ConfigError("replay environment needs a matrix CSV path")

    @classmethod
    def from_dict(cls, d: dict[str, Any]) -> "ExperimentConfig":
        known = {f for f in cls.__dataclass_fields__}
        extra = set(d) - known
        if extra:
            raise ConfigError(f"unknown config keys: {sorted(extra)}")
        return cls(**d)

    @classmethod
    def from_json(cls, path) -> "ExperimentConfig":
        try:
            data = json.loads(Path(path).read_text())
        except json.JSONDecodeError as exc:
            raise ConfigError(f"{path}: invalid JSON ({exc})") from exc
        if not isinstance(data, dict):
            raise ConfigError(f"{path}: expected a JSON object")
        return cls.from_dict(data)

    def to_dict(self) -> dict[str, Any]:
        return asdict(self)

    def seed_list(self) -> list[int]:
        seeds = list(self.seeds) if self.seeds is not None else derive_seeds(self.master_seed, self.runs)
        return sorted(int(s) for s in seeds)

    def digest(self) -> str:
        d = {k: v for k, v in self.to_dict().items() if k not in _NOT_DIGESTED}
        if self.matrix:
            d["matrix_checksum"] = float(read_matrix_csv(self.matrix).sum())
        return config_digest(d)

    def lower_bound_params(self) -> LowerBoundParams:
        return LowerBoundParams(self.n, self.alpha, self.beta, self.epsilon, self.c_lower, j_star=self.j_star)


def build_policy(cfg: ExperimentConfig):
    if cfg.policy == "sapo":
        return SapoPolicy(SapoConfig(cfg.n, cfg.K, cfg.delta, constant_scale=cfg.constant_scale,
                                     bucb_init=cfg.bucb_init))
    if cfg.policy == "exp3p":
        return Exp3P(cfg.n, cfg.K, cfg.delta)
    if cfg.policy == "ucb1":
        return UCB1(cfg.n, cfg.K)
    return EpsGreedy(cfg.n, cfg.K, c=cfg.eps_c)


def policy_factory(cfg: ExperimentConfig):
    def make(n: int, K: int):
        return build_policy(replace(cfg, n=n, K=K))

    return make


def build_env(cfg: ExperimentConfig):
    if cfg.env == "stochastic":
        return StochasticEnv(cfg.means)
    if cfg.env == "constant":
        return ConstantEnv(cfg.means)
    if cfg.env == "replay":
        env = ReplayEnv(read_matrix_csv(cfg.matrix))
        if env.K != cfg.K:
            raise ConfigError(f"matrix has {env.K} columns, config has K={cfg.K}")
        return env
    params = cfg.lower_bound_params()
    if params.j_star is None:
        raise ConfigError(f"{cfg.env} needs j_star; resolve it first")
    if cfg.env == "oblivious_flip":
        return ObliviousFlipEnv(params)
    return AdaptiveSwitchbackEnv(params)


def resolve(cfg: ExperimentConfig) -> tuple[ExperimentConfig, dict]:
    """Check preconditions and fill in ``j_star`` for the flip environments.

    Returns the resolved config plus manifest flags.  Raises ConfigError
    before any episode runs.
    """
    flags: dict[str, Any] = {}
    build_policy(cfg)  # surfaces n < K, bad delta, ...
    if cfg.env in FLIP_ENVS:
        params = cfg.lower_bound_params()
        flags["n_condition_violated"] = not params.n_condition()
        flags["B"] = params.B
        if cfg.j_star is None:
            est = estimate_jstar(policy_factory(cfg), params, cfg.jstar_runs, cfg.master_seed)
            cfg = replace(cfg, j_star=est.j_star)
            flags["j_star_estimated"] = True
            flags["j_star_flagged"] = est.flagged
            flags["j_star_phase_means"] = est.mean_plays
        else:
            flags["j_star_estimated"] = False
    build_env(cfg)
    return cfg, flags


def _run_one(cfg: ExperimentConfig, seed: int) -> EpisodeRecord:
    return run_episode(build_policy(cfg), build_env(cfg), cfg.n, seed)


def run_batch(cfg: ExperimentConfig) -> tuple[list[EpisodeRecord], RegretSummary, dict]:
    """Run every seed of ``cfg`` and aggregate in ascending seed order."""
    requested = cfg
    cfg, flags = resolve(cfg)
    flags["j_star"] = cfg.j_star
    seeds = cfg.seed_list()
    if cfg.jobs > 1 and len(seeds) > 1:
        with ProcessPoolExecutor(max_workers=cfg.jobs) as pool:
            records = list(pool.map(_run_one, [cfg] * len(seeds), seeds))
    else:
        records = [_run_one(cfg, s) for s in seeds]
    records.sort(key=lambda r: r.seed)
    digest = requested.digest()
    for r in records:
        r.config_digest = digest
    summary = aggregate(records)
    guards = sum(len(r.events_of("guard")) for r in records)
    flags["empty_active_guard_fired"] = guards
    meta = {"config": requested.to_dict(), "digest": digest, "flags": flags}
    return records, summary, meta


# -- output --------------------------------------------------------------


def _fmt(v) -> str:
    if v is None:
        return ""
    if isinstance(v, float):
        return repr(v)
    return str(v)


def _write_text(path: Path, text: str) -> None:
    try:
        path.write_text(text)
    except OSError as exc:
        raise OSError(f"cannot write {path}: {exc.strerror or exc}") from exc


def _csv_text(header: list[str], rows: list[list]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    for row in rows:
        w.writerow([_fmt(v) for v in row])
    return buf.getvalue()


def _json_text(obj) -> str:
    return json.dumps(obj, indent=2, sort_keys=True) + "\n"


def run_rows(records: list[EpisodeRecord]) -> tuple[list[str], list[list]]:
    K = records[0].K
    header = (["seed", "realized_regret", "received"]
              + [f"total_arm_{i + 1}" for i in range(K)]
              + [f"plays_arm_{i + 1}" for i in range(K)]
              + [f"detections_arm_{i + 1}" for i in range(K)]
              + ["switch_round", "switch_reason", "guard_fired"])
    rows = []
    for r in records:
        st = EpisodeStats.from_record(r)
        rows.append([st.seed, st.realized_regret, st.received, *st.arm_totals, *st.plays,
                     *st.detections, st.switch_round, st.switch_reason, st.guard_fired])
    return header, rows


def trace_rows(records: list[EpisodeRecord]) -> tuple[list[str], list[list]]:
    header = ["seed", "t", "arm", "reward", "regret_so_far", "switched"]
    rows = []
    for r in records:
        if r.n == 0:
            continue
        best = int(np.argmax(r.arm_totals()))
        regret = np.cumsum(r.counterfactuals[:, best]) - np.cumsum(r.rewards)
        sw = r.switch_round if r.switch_round is not None else math.inf
        for t in range(1, r.n + 1):
            rows.append([r.seed, t, int(r.arms[t - 1]) + 1, float(r.rewards[t - 1]),
                         float(regret[t - 1]), int(t >= sw)])
    return header, rows


def emit(records: list[EpisodeRecord], summary: RegretSummary, meta: dict, out, fmt: str = "csv",
         trace: bool = False) -> list[Path]:
    """Write per-run and summary tables plus ``manifest.json`` into ``out``.

    Returns the written paths.  Arms are numbered from 1 in every file.
    """
    out = Path(out)
    try:
        out.mkdir(parents=True, exist_ok=True)
    except OSError as exc:
        raise OSError(f"cannot create output directory {out}: {exc.strerror or exc}") from exc
    written = []
    header, rows = run_rows(records)
    sd = summary.to_dict()
    if fmt == "csv":
        _write_text(out / "runs.csv", _csv_text(header, rows))
        scalar = {k: v for k, v in sd.items() if not isinstance(v, list)}
        K = len(summary.per_arm_mean_gap)
        cols = list(scalar)
        vals = list(scalar.values())
        for key in ("per_arm_mean_gap", "per_arm_gap_se", "mean_plays", "mean_plays_se"):
            cols += [f"{key}_{i + 1}" for i in range(K)]
            vals += sd[key]
        _write_text(out / "summary.csv", _csv_text(cols, [vals]))
        written += [out / "runs.csv", out / "summary.csv"]
    else:
        _write_text(out / "runs.json", _json_text([dict(zip(header, row)) for row in rows]))
        _write_text(out / "summary.json", _json_text(sd))
        written += [out / "runs.json", out / "summary.json"]
    if trace:
        th, tr = trace_rows(records)
        _write_text(out / "trace.csv", _csv_text(th, tr))
        written.append(out / "trace.csv")
    manifest = {
        "code_version": __version__,
        "config": {k: v for k, v in meta["config"].items() if k not in _NOT_DIGESTED},
        "config_digest": meta["digest"],
        "seeds": summary.seeds,
        "flags": meta["flags"],
        "files": sorted(p.name for p in written),
    }
    _write_text(out / "manifest.json", _json_text(manifest))
    written.append(out / "manifest.json")
    return written


def config_from_manifest(path) -> ExperimentConfig:
    """Rebuild the config recorded in a ``manifest.json`` (for exact re-runs)."""
    try:
        data = json.loads(Path(path).read_text())
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}: invalid manifest ({exc})") from exc
    return ExperimentConfig.from_dict(data["config"])


def demo_lower_bound(cfg: ExperimentConfig) -> dict:
    """Estimate ``j_star`` for the configured player, then play both phase-flip
    adversaries on the same seeds and report how often the player stays
    below ``4B`` arm-2 plays in phase ``j_star`` and what that costs."""
    base = replace(cfg, env="oblivious_flip", K=2)
    base, flags = resolve(base)
    params = base.lower_bound_params()
    j = params.j_star
    lo, hi = params.layout.bounds(j)
    L = hi - lo + 1
    target = params.Delta * L / 4.0
    report: dict[str, Any] = {
        "params": params.to_dict(),
        "j_star": j,
        "j_star_flagged": flags.get("j_star_flagged", False),
        "trigger": params.trigger,
        "phase_length": L,
        "regret_target": target,
        "tail_reference": 1.0 / (16.0 * cfg.n ** cfg.epsilon),
    }
    for env in FLIP_ENVS:
        recs, summ, _ = run_batch(replace(base, env=env))
        within = np.array([int(np.count_nonzero(r.arms[lo - 1:hi] == 1)) for r in recs])
        regret = np.array(summ.per_run_realized_regret)
        low = within <= params.trigger
        m = len(recs)
        report[env] = {
            "runs": m,
            "low_play_fraction": float(low.mean()),
            "conditional_mean_regret": float(regret[low].mean()) if low.any() else None,
            "tail_fraction": float((low & (regret >= target)).mean()),
            "mean_regret": float(regret.mean()),
            "mean_regret_se": float(regret.std(ddof=1) / math.sqrt(m)) if m > 1 else 0.0,
        }
    return report
