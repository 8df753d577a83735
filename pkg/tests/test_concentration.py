import math

import mpmath
import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from bandit_lab.concentration import azuma_max_bound, azuma_maxmax_bound, bernstein_bound

mpmath.mp.dps = 40

BERNSTEIN_10_25_1 = float(mpmath.exp(-mpmath.mpf(100) / (50 + mpmath.mpf(20) / 3)))
AZUMA_10_100 = float(mpmath.exp(-2))


def test_bernstein_spot_value():
    assert abs(bernstein_bound(10, 25, 1) - BERNSTEIN_10_25_1) < 1e-9
    assert abs(BERNSTEIN_10_25_1 - 0.1712371429) < 1e-10


def test_azuma_spot_values():
    assert abs(azuma_max_bound(10, 100) - AZUMA_10_100) < 1e-9
    assert round(AZUMA_10_100, 6) == 0.135335
    assert azuma_maxmax_bound(10, 100) == 1.0
    assert abs(azuma_maxmax_bound(10, 100, raw=True) - float(2 * mpmath.exp(-0.5))) < 1e-9
    assert round(azuma_maxmax_bound(10, 100, raw=True), 6) == 1.213061


def test_zero_deviation():
    assert bernstein_bound(0, 0, 0) == 1.0
    assert azuma_max_bound(0, 5) == 1.0
    assert azuma_maxmax_bound(0, 5) == 1.0
    assert azuma_maxmax_bound(0, 5, raw=True) == 2.0


def test_large_deviation_limit():
    assert bernstein_bound(1e6, 25, 1) == 0.0
    assert azuma_max_bound(1e6, 100) == 0.0


def test_zero_ranges():
    assert azuma_max_bound(1, 0) == 0.0
    assert azuma_maxmax_bound(1, 0) == 0.0


@pytest.mark.parametrize("args", [(-1, 1, 1), (1, -1, 1), (1, 1, -1)])
def test_negative_inputs(args):
    with pytest.raises(ValueError):
        bernstein_bound(*args)


def test_negative_inputs_azuma():
    with pytest.raises(ValueError):
        azuma_max_bound(-1, 1)
    with pytest.raises(ValueError):
        azuma_maxmax_bound(1, -1)


def test_bernstein_degenerate():
    with pytest.raises(ValueError):
        bernstein_bound(1, 0, 0)


def test_quartered_ranges_give_fourth_power():
    z, S = 3.0, 40.0
    assert abs(azuma_max_bound(z, S / 4, raw=True) - azuma_max_bound(z, S, raw=True) ** 4) < 1e-15


def test_maxmax_relation_to_max():
    # 2 exp(-z^2 / (2S)) == 2 * azuma_max(z/2, S)
    for z, S in [(1.0, 3.0), (5.0, 40.0), (0.3, 0.2)]:
        assert abs(azuma_maxmax_bound(z, S, raw=True) - 2 * azuma_max_bound(z / 2, S, raw=True)) < 1e-15


pos = st.floats(0, 1e3, allow_nan=False)


@settings(max_examples=3000, deadline=None)
@given(z1=pos, z2=pos, V=st.floats(1e-6, 1e3), b=pos)
def test_bernstein_monotone(z1, z2, V, b):
    lo, hi = sorted((z1, z2))
    assert bernstein_bound(hi, V, b) <= bernstein_bound(lo, V, b)
    assert bernstein_bound(lo, V, b) <= bernstein_bound(lo, V * 2, b)
    assert bernstein_bound(lo, V, b) <= bernstein_bound(lo, V, b + 1)


@settings(max_examples=3000, deadline=None)
@given(z1=pos, z2=pos, S1=pos, S2=pos)
def test_azuma_monotone(z1, z2, S1, S2):
    lo, hi = sorted((z1, z2))
    s_lo, s_hi = sorted((S1, S2))
    for f in (azuma_max_bound, azuma_maxmax_bound):
        assert f(hi, s_lo) <= f(lo, s_lo)
        assert f(lo, s_lo) <= f(lo, s_hi)
        assert 0.0 <= f(hi, s_hi) <= 1.0


def simulate_pm1(paths: int, steps: int, seed: int):
    """Final sum, running max, and max window sum of +-1 random walks."""
    rng = np.random.default_rng(seed)
    inc = rng.integers(0, 2, size=(paths, steps), dtype=np.int8) * 2 - 1
    S = np.cumsum(inc, axis=1, dtype=np.int32)
    final = S[:, -1]
    run_max = S.max(axis=1)
    prev_min = np.minimum.accumulate(np.concatenate([np.zeros((paths, 1), np.int32), S[:, :-1]], axis=1), axis=1)
    window = (S - prev_min).max(axis=1)
    return final, run_max, window


def test_martingale_exceedance():
    paths, N = 10**5, 100
    final, run_max, window = simulate_pm1(paths, N, seed=2024)
    for z in [5, 10, 15, 20, 25, 30, 40]:
        for emp_sample, bound in [
            (final, bernstein_bound(z, N, 1)),
            (run_max, azuma_max_bound(z, 4 * N)),
            (window, azuma_maxmax_bound(z, 4 * N)),
        ]:
            freq = np.mean(emp_sample >= z)
            slack = 3 * math.sqrt(max(bound * (1 - bound), 1e-12) / paths)
            assert freq <= bound + slack, (z, freq, bound)
