import itertools
import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from trainless.errors import DegenerateInput, EmptyInput, LengthMismatch
from trainless.metrics import PairedSeries, kendall_tau, mse, r_squared, report


def brute_tau_b(x, y):
    conc = disc = tx = ty = 0
    for i, j in itertools.combinations(range(len(x)), 2):
        dx, dy = x[i] - x[j], y[i] - y[j]
        if dx == 0 and dy == 0:
            tx += 1
            ty += 1
        elif dx == 0:
            tx += 1
        elif dy == 0:
            ty += 1
        elif (dx > 0) == (dy > 0):
            conc += 1
        else:
            disc += 1
    n0 = len(x) * (len(x) - 1) // 2
    return (conc - disc) / math.sqrt((n0 - tx) * (n0 - ty))


def brute_mse(p, t):
    return sum((a - b) ** 2 for a, b in zip(p, t)) / len(p)


def brute_r2(p, t):
    mean = sum(t) / len(t)
    return 1 - sum((b - a) ** 2 for a, b in zip(p, t)) / sum((b - mean) ** 2 for b in t)


def random_series(rng, k):
    n = int(rng.integers(3, 60))
    if k % 3 == 0:  # rounded values force ties
        p, t = np.round(rng.random(n), 1), np.round(rng.random(n), 1)
    else:
        t = rng.random(n)
        p = t + rng.normal(0, 0.2, n)
    return p.tolist(), t.tolist()


@pytest.mark.parametrize("k", range(100))
def test_against_brute_force(k):
    p, t = random_series(np.random.default_rng(k), k)
    if len(set(p)) == 1 or len(set(t)) == 1:
        pytest.skip("degenerate draw")
    assert mse(p, t) == pytest.approx(brute_mse(p, t), rel=1e-12)
    assert kendall_tau(p, t) == pytest.approx(brute_tau_b(p, t), rel=1e-12)
    assert r_squared(p, t) == pytest.approx(brute_r2(p, t), rel=1e-12)


def test_hand_cases():
    assert mse([0.5, 0.5], [0.4, 0.6]) == pytest.approx(0.01, rel=1e-12)
    assert mse([0.3, 0.7], [0.3, 0.7]) == 0.0
    assert kendall_tau([1, 2, 3, 4], [1, 3, 2, 4]) == pytest.approx(2 / 3, abs=1e-9)
    assert kendall_tau([1, 2, 3], [4, 5, 6]) == 1.0
    assert kendall_tau([1, 2, 3], [6, 5, 4]) == -1.0
    assert r_squared([1, 2, 3], [1, 2, 3]) == 1.0
    assert r_squared([2, 2, 2], [1, 2, 3]) == 0.0


def test_errors():
    with pytest.raises(LengthMismatch):
        mse([1, 2], [1])
    with pytest.raises(EmptyInput):
        mse([], [])
    with pytest.raises(EmptyInput):
        kendall_tau([1], [1])
    with pytest.raises(DegenerateInput):
        kendall_tau([1, 1, 1], [1, 2, 3])
    with pytest.raises(DegenerateInput):
        r_squared([1, 2, 3], [2, 2, 2])


def test_report_accepts_paired_series():
    s = PairedSeries([0.1, 0.4, 0.3], [0.2, 0.5, 0.3])
    r = report(s)
    assert r["n"] == 3 and r["mse"] == mse(s) and r["kendall_tau"] == kendall_tau(s)


@settings(max_examples=50, deadline=None)
@given(st.lists(st.integers(-30, 30), min_size=3, max_size=20, unique=True), st.randoms())
def test_tau_invariant_under_monotone_transform(xs, rnd):
    ys = xs[:]
    rnd.shuffle(ys)
    base = kendall_tau(xs, ys)
    assert kendall_tau([math.exp(x) for x in xs], ys) == pytest.approx(base, abs=1e-12)
    assert kendall_tau(xs, [y**3 + 2 * y for y in ys]) == pytest.approx(base, abs=1e-12)
