import math

import mpmath
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from mpmath import mpf

from brwexplode.counterexample import (
    BadWeight,
    build_bad_weight,
    build_counterexample,
    counterexample_audit,
    dominates,
    double_exponential_log_speed,
    goodspeed_value,
    haste_variant,
    minsum_bound,
    minsum_bound_direct,
    large_n_seq,
    select_subsequence,
    sqrt_omega,
    toy_n_seq,
    verify_suffcond,
)

LN2 = math.log(2)


@pytest.fixture(scope="module")
def toy():
    return build_counterexample(toy_n_seq(4))


def test_toy_sequence_recurrence():
    seq, total = [4], 4
    for _ in range(3):
        seq.append((total + 4) ** 2)
        total += seq[-1]
    assert toy_n_seq(4) == seq == [4, 64, 5184, 27625536]
    assert large_n_seq(2) == [10**10, 10**100]


def test_rejects_bad_sequences():
    for bad in ([], [4, 4], [0, 3], [5, 2]):
        with pytest.raises(ValueError):
            build_counterexample(bad)


def test_first_periods_match_exact_integers(toy):
    # m_1 = 16 * 4^2 = 2^8, M_1 = m_1^8 = 2^64, m_2 = 16 * 64^2 * M_1^2 = 2^144, M_2 = M_1 * m_2^128
    assert float(toy.log_m[0]) == pytest.approx(8 * LN2, rel=1e-15)
    assert float(toy.log_M[0]) == pytest.approx(64 * LN2, rel=1e-15)
    assert float(toy.log_m[1]) == pytest.approx(144 * LN2, rel=1e-15)
    assert float(toy.log_M[1]) == pytest.approx((64 + 144 * 128) * LN2, rel=1e-15)
    assert float(toy.log_L[1]) == pytest.approx((144 + 64) * LN2, rel=1e-15)
    assert toy.N == [4, 68, 5252, 27630788]
    assert toy.eps[0] == mpf(1) / 40


def test_structural_checks_on_toy(toy):
    for name in ("multiplier_bound", "N_increasing", "M_increasing", "swift"):
        assert toy.checks[name] is True
    # the toy sequence is too short for the square-root step past the second period
    assert toy.checks["sqrt_step"] == [True, False, False]
    assert "sqrt_step[i=3]" in toy.violations


def test_large_scale_passes_all_checks_and_records_truncation():
    spec = build_counterexample(large_n_seq(3))
    assert spec.violations == [] and all(spec.checks["sqrt_step"])
    cut = build_counterexample(large_n_seq(4))
    assert cut.periods == 3 and cut.truncated_at == 4
    assert "truncated_at_period_4" in cut.violations


def test_speed_is_continuous_at_period_ends(toy):
    assert toy.log_f(0) is None and toy.log_f(toy.N[-1] + 1) is None
    assert float(toy.log_f(1)) == pytest.approx(16 * LN2)  # f(1) = L_1 m_1 = m_1^2
    for i in range(toy.periods):
        assert mpmath.almosteq(toy.log_f(toy.N[i]), toy.log_M[i], rel_eps=mpf(10) ** -40)


@settings(max_examples=60)
@given(n=st.integers(1, 27630787))
def test_speed_increases(n):
    spec = build_counterexample(toy_n_seq(4))
    assert spec.log_f(n + 1) > spec.log_f(n)


def test_tail_domination_check():
    ok = build_counterexample(toy_n_seq(3), log_g=lambda lm: lm)
    assert ok.checks["tail_dominates_g"]
    bad = build_counterexample(toy_n_seq(3), log_g=lambda lm: 3 * lm)
    assert not bad.checks["tail_dominates_g"] and "tail_dominates_g" in bad.violations


def test_offspring_tail_hits_breakpoints(toy):
    Z = toy.offspring()
    # Pr{Z > M_1^(1 + eps_1)} = 1 / M_1
    top = float((1 + toy.eps[0]) * toy.log_M[0])
    assert Z.log_survival_cont(top) == pytest.approx(-float(toy.log_M[0]))
    xs, ys = toy.tail_table()
    assert len(xs) == len(ys) and all(b <= a for a, b in zip(ys, ys[1:]))


def test_haste_variant_dominates_a_fast_speed():
    spec = build_counterexample(toy_n_seq(3))
    log_s = lambda n: mpf(10) ** 6 * n  # noqa: E731
    assert not dominates(spec, log_s, upto=2000)
    fast = haste_variant(spec, log_s)
    assert dominates(fast, log_s, upto=2000)
    assert all(a >= b for a, b in zip(fast.log_m, spec.log_m))


def test_goodspeed_value_direct(toy):
    # n = 4: k = 2, f(4) = 2^64, f(2) = m_1^4 = 2^32, value = log(2^4 2^64 2^-64)
    assert float(goodspeed_value(toy.log_f, 4, sqrt_omega)) == pytest.approx(4 * LN2)


def test_goodspeed_passes_for_toy(toy):
    res = verify_suffcond(toy)
    assert res.passed and res.indices == toy.n_seq
    assert all(b < a for a, b in zip(res.values, res.values[1:]))


def test_goodspeed_fails_for_slow_periods():
    res = verify_suffcond(build_counterexample([4, 16, 64]))
    assert not res.passed


def test_plump_control_goodspeed_increases():
    res = verify_suffcond(double_exponential_log_speed, indices=30)
    assert not res.passed
    n = 30
    direct = n * LN2 + 2.0**n * LN2 - n / 2 * 2.0 ** math.ceil(n / math.sqrt(n)) * LN2
    assert float(res.values[-1]) == pytest.approx(direct, rel=1e-12)


def test_callable_target_needs_indices():
    with pytest.raises(ValueError):
        verify_suffcond(lambda n: n)


def test_select_subsequence_is_greedy():
    lb = [math.log(v) for v in (1.5, 2.5, 3.0, 4.5, 8.5, 20.0)]
    # needs beta >= 2, then >= 4, then >= 8, then >= 16
    assert select_subsequence(lb) == [1, 3, 4, 5]
    assert select_subsequence([0.0, 0.1]) == []


def test_bad_weight_masses_telescope(toy):
    bw = build_bad_weight(toy)
    assert isinstance(bw, BadWeight)
    assert mpmath.almosteq(bw.total_mass(), 1, rel_eps=mpf(10) ** -40)
    positions = [lp for lp, _, _ in bw.atoms]
    assert positions == sorted(positions)
    run = mpf(0)
    for lp, lm, lc in bw.atoms:
        run += mpmath.exp(lm)
        assert mpmath.almosteq(mpmath.log(run), lc, abs_eps=mpf(10) ** -30)
    for j, k in enumerate(bw.k, start=1):
        assert bw.log_position(j) == -(bw.log_beta[j - 1] + mpmath.log(k))
    assert bw.quantile_log(mpf(0)) == 0
    assert bw.quantile_log(mpf(-10) ** 11) == bw.atoms[0][0]


def test_bad_weight_needs_two_periods():
    with pytest.raises(ValueError):
        build_bad_weight(build_counterexample([4, 5]))


def test_minsum_bound_block_and_direct_agree(toy):
    bw = build_bad_weight(toy)
    mb = minsum_bound(toy, bw)
    direct = minsum_bound_direct(toy, bw)
    assert mpmath.almosteq(mb.log_sum, direct, rel_eps=mpf(10) ** -30)
    assert mb.passed and float(mb.log_sum) == pytest.approx(-2.1340157, abs=1e-7)
    assert mb.log_sum <= mb.log_bound and mpmath.exp(mb.log_bound) <= 0.5
    assert mb.head_excluded == bw.k[0] - 1


def test_audit_lines(toy):
    lines = counterexample_audit(toy)
    assert [ln.name for ln in lines] == ["minsum_bound", "goodspeed", "plump_control_fails"]
    assert all(ln.passed for ln in lines)
    assert all(str(ln).startswith("PASS ") for ln in lines)
    slow = counterexample_audit(build_counterexample([4, 16, 64]))
    assert not slow[1].passed


def test_spec_serializes(toy):
    d = toy.to_dict()
    assert d["n_seq"] == ["4", "64", "5184", "27625536"]
    assert d["truncated_at"] is None and "form" in d["speed"]
