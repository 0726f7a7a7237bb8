import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy import stats

from brwexplode.distributions import Deterministic, PowerTail, Uniform01, stream
from brwexplode.findpath import (
    LevelRecord,
    PathRecord,
    _conditioned_count_log,
    alpha_default,
    audit_multiplier,
    findpath_runs,
    growth_shift,
    inequality_audit,
    jth_largest_log,
    option_count,
    option_count_log,
    option_growth_check,
    run_findpath,
    wilson_upper,
)
from brwexplode.criteria import SpeedSeq
from brwexplode.gwsim import SimConfig


@pytest.mark.parametrize("Y,alpha,X", [(16, 0.5, 2), (1, 0.5, 1), (0, 0.5, 0), (100, 0.5, 5), (10**6, 0.25, 15812)])
def test_option_count_examples(Y, alpha, X):
    assert option_count(Y, alpha) == X


@given(Y=st.integers(1, 10**12), alpha=st.floats(0.05, 0.95))
def test_option_count_log_matches_integer_version(Y, alpha):
    a, b = option_count(Y, alpha), option_count_log(math.log(Y), alpha)
    # the two differ only when Y^(1-alpha)/2 sits within rounding of an integer
    assert abs(a - b) <= 1


def test_constants():
    assert alpha_default(1.0) == pytest.approx(2**-0.5)
    # 2 ceil(log(1/(1-0.7071)) / log 2) + 1 = 2*2 + 1
    assert growth_shift(alpha_default(1.0), 1.0) == 5
    assert audit_multiplier(1.0) == 5
    assert audit_multiplier(0.25) == 3 + 2 * math.ceil(math.log(2) / math.log(1.25))


def test_wilson_upper_closed_form():
    z = stats.norm.ppf(0.975)
    for k, n in [(0, 10**5), (7, 1000), (50, 100)]:
        p = k / n
        centre = p + z * z / (2 * n)
        half = z * math.sqrt(p * (1 - p) / n + z * z / (4 * n * n))
        assert wilson_upper(k, n) == pytest.approx((centre + half) / (1 + z * z / n), rel=1e-9)


def test_dead_root_fails_at_first_level():
    rec = run_findpath(Deterministic(0), Uniform01(), 0.5, 5, stream(0, "t"))
    assert rec.failed_at_level == 1


def test_alpha_domain():
    with pytest.raises(ValueError):
        run_findpath(Deterministic(2), Uniform01(), 1.0, 3, stream(0, "t"))


@settings(max_examples=30)
@given(seed=st.integers(0, 10**6))
def test_partial_sums_accumulate_chosen_weights(seed):
    rec = run_findpath(PowerTail(0.5), Uniform01(), 2**-0.5, 6, stream(seed, "t"))
    total = 0.0
    for row in rec.per_level:
        if math.isnan(row.chosen_weight):
            break
        total += row.chosen_weight
        assert row.partial_sum == pytest.approx(total, rel=1e-12)
        assert row.Xn >= 1


def test_chosen_weight_is_min_over_options():
    # Z = 16, alpha = 1/2 gives two options, so the weight is the min of two uniforms
    cfg = SimConfig(reps=3000, seed=4)
    recs = findpath_runs(Deterministic(16), Uniform01(), 0.5, 1, cfg)
    w = np.array([r.per_level[0].chosen_weight for r in recs])
    assert all(r.per_level[0].Xn == 2 for r in recs)
    assert stats.kstest(w, lambda y: 1 - (1 - y) ** 2).pvalue > 1e-3


def test_order_statistic_shortcut_matches_explicit_draws():
    Z, Y, J = PowerTail(0.5), 400, 3
    rng = np.random.default_rng(0)
    explicit = np.array([math.log(np.sort(Z.sample(rng, Y)[0])[-J]) for _ in range(1500)])
    rng2 = np.random.default_rng(1)
    short = np.array([jth_largest_log(Z, math.log(Y), J, rng2) for _ in range(1500)])
    assert stats.ks_2samp(explicit, short).pvalue > 1e-3


def test_large_counts_switch_to_order_statistics():
    rec = run_findpath(PowerTail(0.5), Uniform01(), 2**-0.5, 6, stream(2, "t"), offspring_cap=10)
    assert any(row.approximate for row in rec.per_level)


@settings(max_examples=40)
@given(lo=st.floats(0.0, 30.0), width=st.floats(0.5, 20.0), seed=st.integers(0, 1000))
def test_conditioned_draws_stay_in_range(lo, width, seed):
    Z = PowerTail(0.5)
    rng = np.random.default_rng(seed)
    for hi in (lo + width, math.inf):
        v = _conditioned_count_log(Z, lo, hi, rng)
        assert v >= lo - 1e-9 and v <= hi + 1e-9


def _rec(xs, failed=None):
    rows = [LevelRecord(n + 1, None, 0.0, x, 0.1, 0.1 * (n + 1), None, 0.0, False) for n, x in enumerate(xs)]
    return PathRecord(0.5, rows, failed)


def test_option_growth_check_counts_runs():
    f = SpeedSeq([math.log(2), math.log(4), math.log(16)], "f", 2.0)
    recs = [_rec([2, 4, 16, 16]), _rec([2, 3, 16, 16]), _rec([2, 4], failed=3)]
    # gamma = 1 compares X_n with f(n - 1)
    assert option_growth_check(recs, f, 1) == pytest.approx(1 / 3)
    assert math.isnan(option_growth_check([], f, 1))


def test_audit_rows_have_bounds_and_verdicts():
    rows = inequality_audit(PowerTail(0.5), None, 1.0, levels=(2,), reps=2000)
    assert [(r.n, r.event) for r in rows] == [(2, "A"), (2, "B")]
    for r in rows:
        assert r.bound == 4.0**-3 and r.trials == 2000
        assert r.ucb >= r.frequency
        assert r.passed == (r.ucb <= r.bound)


def test_audit_of_non_plump_law_is_unaudited():
    rows = inequality_audit(Deterministic(2), None, 1.0, levels=(1, 2), reps=10)
    assert all(not r.audited and r.passed is None for r in rows)
