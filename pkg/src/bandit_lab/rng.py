"""Seeding scheme for reproducible episodes.

Every episode owns two counter-based Philox streams spawned from its seed:
one for the policy (exactly one uniform per round, consumed by inverse-CDF
sampling) and one for the environment (one uniform per (round, arm) cell).
Both are realized up front, so the value used at round ``t`` for arm ``i``
depends only on ``(seed, t, i)`` and never on evaluation order.
"""

from __future__ import annotations

import numpy as np

POLICY_STREAM = 0
ENV_STREAM = 1


def episode_streams(seed: int) -> tuple[np.random.Generator, np.random.Generator]:
    """Return the ``(policy, environment)`` generators for one episode."""
    root = np.random.SeedSequence(int(seed))
    pol, env = root.spawn(2)
    return np.random.Generator(np.random.Philox(pol)), np.random.Generator(np.random.Philox(env))


def derive_seed(master_seed: int, replication: int) -> int:
    """64-bit episode seed for replication ``replication`` of a batch."""
    ss = np.random.SeedSequence([int(master_seed), int(replication)])
    return int(ss.generate_state(1, dtype=np.uint64)[0])


def derive_seeds(master_seed: int, count: int) -> list[int]:
    return [derive_seed(master_seed, r) for r in range(count)]


def policy_uniforms(gen: np.random.Generator, n: int) -> np.ndarray:
    return gen.random(n)


def env_uniforms(gen: np.random.Generator, n: int, K: int) -> np.ndarray:
    return gen.random((n, K))


def sample_inverse_cdf(p, u: float) -> int:
    """Index of the first cumulative probability exceeding ``u``.

    The last arm with positive mass absorbs any rounding shortfall, so the
    draw is always consistent with the logged vector.
    """
    c = 0.0
    last = 0
    for i in range(len(p)):
        pi = p[i]
        if pi > 0.0:
            last = i
        c += pi
        if u < c:
            return i
    return last
