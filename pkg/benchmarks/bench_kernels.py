"""Compare the compiled episode loop with the pure-Python one.

    python3 benchmarks/bench_kernels.py --n 20000 --repeats 3

Both backends are run on the same seeds; the script also checks that they
return identical arm sequences.
"""

import argparse
import time

import numpy as np

from bandit_lab import kernels
from bandit_lab.baselines import UCB1
from bandit_lab.environments import StochasticEnv
from bandit_lab.exp3p import Exp3P
from bandit_lab.policy_api import run_episode
from bandit_lab.sapo import SapoConfig, SapoPolicy

CASES = {
    "sapo": lambda n: SapoPolicy(SapoConfig(n, 2, 0.1, constant_scale=0.1, bucb_init=float("inf"))),
    "exp3p": lambda n: Exp3P(n, 2, 0.05),
    "ucb1": lambda n: UCB1(n, 2),
}


def timed(make, n, seed, backend):
    t0 = time.perf_counter()
    rec = run_episode(make(n), StochasticEnv([0.75, 0.5]), n, seed, backend=backend)
    return time.perf_counter() - t0, rec


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--n", type=int, default=20000)
    ap.add_argument("--repeats", type=int, default=3)
    args = ap.parse_args()
    if not kernels.HAVE_EXTENSION:
        print("compiled extension not built; only the Python backend is available")
        return
    print(f"{'policy':8s} {'python s':>10s} {'compiled s':>11s} {'speedup':>8s}  identical")
    for name, make in CASES.items():
        py, cc, same = [], [], True
        for seed in range(args.repeats):
            tp, rp = timed(make, args.n, seed, "python")
            tc, rc = timed(make, args.n, seed, "compiled")
            py.append(tp)
            cc.append(tc)
            same &= bool(np.array_equal(rp.arms, rc.arms) and np.array_equal(rp.probabilities, rc.probabilities))
        p, c = float(np.median(py)), float(np.median(cc))
        print(f"{name:8s} {p:10.3f} {c:11.4f} {p / c:8.1f}x  {same}")


if __name__ == "__main__":
    main()
