"""Selects the episode-loop backend at import time.

The compiled loop lives in ``bandit_lab._ckernel`` (Cython).  When it is
not built, or ``BANDIT_LAB_PURE=1`` is set, :data:`HAVE_EXTENSION` is False
and :func:`bandit_lab.policy_api.run_episode` uses the pure-Python policy
classes instead.  Both paths produce identical records.
"""

from __future__ import annotations

import os

import numpy as np

try:
    if os.environ.get("BANDIT_LAB_PURE") == "1":
        raise ImportError("pure-Python backend forced by BANDIT_LAB_PURE")
    from . import _ckernel
except ImportError:  # pragma: no cover - exercised when the extension is absent
    _ckernel = None

HAVE_EXTENSION = _ckernel is not None
BACKEND = "compiled" if HAVE_EXTENSION else "python"


def run_compiled(kspec, table, n: int, K: int, u_pol: np.ndarray, check: bool, trace: bool) -> dict:
    if _ckernel is None:
        raise RuntimeError("compiled kernel is not available; build the extension or use backend='python'")
    code, params = kspec
    rv = table.revert
    if rv is None:
        rv_args = (-1, 0, -1, 0.0, 0.0)
    else:
        rv_args = (rv.arm, rv.window_start, rv.window_end, float(rv.threshold), float(rv.mean))
    return _ckernel.run(
        code,
        list(params),
        n,
        K,
        np.ascontiguousarray(table.means, dtype=np.float64),
        np.ascontiguousarray(table.bernoulli, dtype=np.uint8),
        np.ascontiguousarray(table.uniforms, dtype=np.float64),
        np.ascontiguousarray(u_pol, dtype=np.float64),
        *rv_args,
        bool(check),
        bool(trace),
    )
