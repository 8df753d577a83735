"""Command-line entry point: ``bandit-lab {run,sweep,estimate-jstar,demo-lower-bound}``.

Exit codes: 0 success, 2 configuration error, 3 I/O error.
"""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys
from dataclasses import replace
from pathlib import Path

from . import __version__
from .environments import estimate_jstar
from .errors import ConfigError
from .harness import (
    ENVS,
    POLICIES,
    ExperimentConfig,
    _csv_text,
    _write_text,
    demo_lower_bound,
    emit,
    policy_factory,
    run_batch,
)

log = logging.getLogger("bandit_lab")

EXIT_CONFIG = 2
EXIT_IO = 3

# flag name -> ExperimentConfig field
_FIELDS = {
    "policy": "policy", "env": "env", "n": "n", "k": "K", "delta": "delta", "seeds": "seeds",
    "master_seed": "master_seed", "runs": "runs", "constant_scale": "constant_scale",
    "bucb_init": "bucb_init", "eps_c": "eps_c", "means": "means", "matrix": "matrix",
    "alpha": "alpha", "beta": "beta", "epsilon": "epsilon", "c_lower": "c_lower",
    "jstar": "j_star", "jstar_runs": "jstar_runs", "out": "out", "format": "format",
    "trace": "trace", "jobs": "jobs",
}


def _floats(text: str) -> list[float]:
    try:
        return [float(v) for v in text.split(",") if v.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated numbers, got {text!r}")


def _seeds(text: str) -> list[int]:
    """``1,2,3`` or ``1..4`` (inclusive) or a mix of both."""
    out: list[int] = []
    try:
        for part in text.split(","):
            part = part.strip()
            if not part:
                continue
            if ".." in part:
                a, b = part.split("..")
                out.extend(range(int(a), int(b) + 1))
            else:
                out.append(int(part))
    except ValueError:
        raise argparse.ArgumentTypeError(f"bad seed list {text!r}")
    return out


def _ints(text: str) -> list[int]:
    return [int(float(v)) for v in _floats(text)]


def _common(p: argparse.ArgumentParser) -> None:
    # defaults are None so that only explicitly given flags override --config
    p.add_argument("--config", type=Path, help="JSON experiment config; flags override its fields")
    p.add_argument("--policy", choices=POLICIES)
    p.add_argument("--env", choices=ENVS)
    p.add_argument("--n", type=int, help="horizon")
    p.add_argument("--k", type=int, help="number of arms")
    p.add_argument("--delta", type=float, help="confidence parameter")
    p.add_argument("--seeds", type=_seeds, help="explicit seeds, e.g. 1..4 or 3,7,9")
    p.add_argument("--master-seed", type=int, help="derive --runs seeds from this (env: BANDIT_LAB_SEED)")
    p.add_argument("--runs", type=int, help="replications when --seeds is not given")
    p.add_argument("--constant-scale", type=float, help="multiplier for the SAPO constants")
    p.add_argument("--bucb-init", type=float, help="initial upper bound of the unbiased SAPO estimate")
    p.add_argument("--eps-c", type=float, help="epsilon-greedy schedule min(1, c/t)")
    p.add_argument("--means", type=_floats, help="arm means (stochastic) or values (constant)")
    p.add_argument("--matrix", help="reward matrix CSV for the replay environment")
    p.add_argument("--alpha", type=float)
    p.add_argument("--beta", type=float)
    p.add_argument("--epsilon", type=float)
    p.add_argument("--c-lower", type=float)
    p.add_argument("--jstar", type=int, help="flip phase; estimated for the player when omitted")
    p.add_argument("--jstar-runs", type=int, help="episodes used to estimate j*")
    p.add_argument("--out", help="output directory")
    p.add_argument("--format", choices=("csv", "json"))
    p.add_argument("--trace", action="store_true", default=None, help="also write the per-round trace.csv")
    p.add_argument("--jobs", type=int, help="episodes run concurrently")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="bandit-lab", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("run", help="one seeded batch")
    _common(p)

    p = sub.add_parser("sweep", help="one batch per grid point")
    _common(p)
    p.add_argument("--n-grid", type=_ints, help="horizons to sweep")
    p.add_argument("--scale-grid", type=_floats, help="constant_scale values to sweep")

    p = sub.add_parser("estimate-jstar", help="Monte Carlo estimate of the flip phase for a player")
    _common(p)

    p = sub.add_parser("demo-lower-bound", help="estimate j*, then play both flip adversaries")
    _common(p)
    return parser


def config_from_args(args: argparse.Namespace, defaults: dict | None = None, **overrides) -> ExperimentConfig:
    """Merge, in increasing priority: ``defaults``, the ``--config`` file
    (a plain config or a ``manifest.json``), explicit flags, ``overrides``."""
    data: dict = dict(defaults or {})
    if args.config is not None:
        try:
            loaded = json.loads(args.config.read_text())
        except json.JSONDecodeError as exc:
            raise ConfigError(f"{args.config}: invalid JSON ({exc})") from exc
        if not isinstance(loaded, dict):
            raise ConfigError(f"{args.config}: expected a JSON object")
        if "config_digest" in loaded and isinstance(loaded.get("config"), dict):
            loaded = loaded["config"]  # a manifest.json from an earlier run
        data.update(loaded)
    for flag, fld in _FIELDS.items():
        v = getattr(args, flag, None)
        if v is not None:
            data[fld] = v
    if "master_seed" not in data and os.environ.get("BANDIT_LAB_SEED"):
        try:
            data["master_seed"] = int(os.environ["BANDIT_LAB_SEED"])
        except ValueError:
            raise ConfigError(f"BANDIT_LAB_SEED must be an integer, got {os.environ['BANDIT_LAB_SEED']!r}")
    if "means" in data and "K" not in data:
        data["K"] = len(data["means"])
    data.update(overrides)
    return ExperimentConfig.from_dict(data)


def _print_json(obj) -> None:
    print(json.dumps(obj, indent=2, sort_keys=True))


def cmd_run(args) -> int:
    cfg = config_from_args(args)
    records, summary, meta = run_batch(cfg)
    if cfg.out:
        for path in emit(records, summary, meta, cfg.out, cfg.format, cfg.trace):
            log.info("wrote %s", path)
    _print_json({
        "config_digest": meta["digest"],
        "runs": summary.runs,
        "pseudo_regret_estimate": summary.pseudo_regret_estimate,
        "pseudo_regret_se": summary.pseudo_regret_se,
        "expected_regret_estimate": summary.expected_regret_estimate,
        "expected_regret_se": summary.expected_regret_se,
        "switch_fraction": summary.switch_fraction,
        "flags": meta["flags"],
    })
    return 0


def cmd_sweep(args) -> int:
    cfg = config_from_args(args)
    if args.n_grid and args.scale_grid:
        raise ConfigError("sweep over either --n-grid or --scale-grid, not both")
    if args.n_grid:
        grid = [("n", v) for v in args.n_grid]
    elif args.scale_grid:
        grid = [("constant_scale", v) for v in args.scale_grid]
    else:
        raise ConfigError("sweep needs --n-grid or --scale-grid")
    header = ["n", "constant_scale", "runs", "pseudo_regret_estimate", "pseudo_regret_se",
              "expected_regret_estimate", "expected_regret_se", "switch_fraction", "config_digest"]
    rows = []
    for key, value in grid:
        point = replace(cfg, **{key: value})
        records, summary, meta = run_batch(point)
        if cfg.out:
            emit(records, summary, meta, Path(cfg.out) / f"{key}={value}", cfg.format, cfg.trace)
        rows.append([point.n, point.constant_scale, summary.runs, summary.pseudo_regret_estimate,
                     summary.pseudo_regret_se, summary.expected_regret_estimate,
                     summary.expected_regret_se, summary.switch_fraction, meta["digest"]])
    text = _csv_text(header, rows)
    if cfg.out:
        _write_text(Path(cfg.out) / "sweep.csv", text)
    sys.stdout.write(text)
    return 0


def cmd_estimate_jstar(args) -> int:
    cfg = config_from_args(args, env="oblivious_flip", K=2)
    est = estimate_jstar(policy_factory(cfg), cfg.lower_bound_params(), cfg.jstar_runs, cfg.master_seed)
    result = {"j_star": est.j_star, "flagged": est.flagged, "B": est.B, "runs": est.runs,
              "phase_mean_plays": est.mean_plays, "policy": cfg.policy, "n": cfg.n, "alpha": cfg.alpha}
    if cfg.out:
        Path(cfg.out).mkdir(parents=True, exist_ok=True)
        _write_text(Path(cfg.out) / "jstar.json", json.dumps(result, indent=2, sort_keys=True) + "\n")
    _print_json(result)
    return 0


def cmd_demo(args) -> int:
    cfg = config_from_args(args, {"policy": "eps_greedy"}, env="oblivious_flip", K=2)
    report = demo_lower_bound(cfg)
    if cfg.out:
        Path(cfg.out).mkdir(parents=True, exist_ok=True)
        _write_text(Path(cfg.out) / "demo.json", json.dumps(report, indent=2, sort_keys=True) + "\n")
    _print_json(report)
    return 0


COMMANDS = {"run": cmd_run, "sweep": cmd_sweep, "estimate-jstar": cmd_estimate_jstar,
            "demo-lower-bound": cmd_demo}


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(message)s")
    try:
        return COMMANDS[args.command](args)
    except ConfigError as exc:
        print(f"bandit-lab: configuration error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except OSError as exc:
        print(f"bandit-lab: I/O error: {exc}", file=sys.stderr)
        return EXIT_IO


if __name__ == "__main__":
    sys.exit(main())
