import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy import optimize

from brwexplode.criteria import PreconditionError
from brwexplode.distributions import (
    Deterministic,
    DoubleExpSmall,
    Exponential,
    MixtureWithZeroAtom,
    PointMass,
    PowerTail,
    Uniform01,
)
from brwexplode.gwsim import SimConfig
from brwexplode.limitlaw import (
    FAIL,
    INCONCLUSIVE,
    PASS,
    _interval_verdict,
    _slope_range,
    _trend_verdict,
    additive_speed_check,
    bramson_normalization,
    bramson_steps,
    delta_sensitivity,
    mn_ratio_study,
    normalization_sum,
    normalization_terms,
)


def _invert_cdf(W, u, hi=10.0):
    return optimize.brentq(lambda w: float(W.cdf(w)) - u, 1e-12, hi, xtol=1e-15, rtol=1e-14)


def test_double_exp_terms_by_root_finding():
    W = DoubleExpSmall()
    got = normalization_terms(W, 1.0, 6)
    for k, t in enumerate(got.terms, start=1):
        assert t == pytest.approx(_invert_cdf(W, math.exp(-(2.0**k))), rel=1e-10)
    cum = np.cumsum(got.terms)
    assert cum[0] == pytest.approx(1.0742, abs=1e-4)
    assert cum[1] == pytest.approx(1.0742 + 1 / math.log(4), abs=1e-4)


def test_uniform_and_exponential_sums():
    direct = math.fsum(math.exp(-(2.0**k)) for k in range(1, 9))
    assert normalization_sum(Uniform01(), 1.0, 8) == pytest.approx(direct, rel=1e-14)
    assert normalization_sum(Uniform01(), 1.0, 8) == pytest.approx(0.15398649728843677, rel=1e-14)
    assert normalization_sum(Exponential(1.0), 1.0, 1) == pytest.approx(-math.log1p(-math.exp(-2)), rel=1e-14)


def test_underflow_is_reported():
    # exp(-2^10) is below the smallest double
    out = normalization_terms(Uniform01(), 1.0, 12)
    assert out.underflow_index == 10 and out.terms[9] == 0.0 and out.terms[8] > 0.0
    assert normalization_terms(Uniform01(), 1.0, 5).underflow_index is None


def test_normalization_validation():
    with pytest.raises(ValueError):
        normalization_terms(Uniform01(), 0.0, 3)
    with pytest.raises(ValueError):
        normalization_terms(Uniform01(), 1.0, -1)
    assert normalization_terms(Uniform01(), 1.0, 0).total == 0.0


@settings(max_examples=40)
@given(eps=st.floats(0.05, 2.0), n=st.integers(1, 15), shift=st.integers(0, 10))
def test_shift_drops_leading_terms(eps, n, shift):
    W = DoubleExpSmall()
    a = normalization_terms(W, eps, n, shift=shift).terms
    b = normalization_terms(W, eps, n + shift).terms[shift:]
    assert a == pytest.approx(b, rel=1e-12)


def test_ratio_is_one_for_point_masses():
    # M_n = 0.25 n and every normalizing term is 0.25
    study = mn_ratio_study(Deterministic(3), PointMass(0.25), 1.0, [2, 4, 6], SimConfig(reps=5, seed=0),
                           check_precondition=False)
    for d in study.per_depth:
        assert d["ratio_lower"]["median"] == pytest.approx(1.0)
        assert d["ratio_upper"]["median"] == pytest.approx(1.0)
        assert d["exact_fraction"] == 1.0
    assert study.interval_verdict == PASS and study.trend_verdict == PASS
    assert [r["depth"] for r in study.csv_rows()] == [2, 4, 6]


def test_ratio_study_requires_non_explosive_pair():
    with pytest.raises(PreconditionError):
        mn_ratio_study(PowerTail(0.5), Uniform01(), 1.0, [2, 3], SimConfig(reps=2))


def test_ratio_bounds_are_ordered():
    study = mn_ratio_study(PowerTail(0.5), DoubleExpSmall(), 1.0, [2, 4], SimConfig(reps=8, seed=2,
                           node_budget=2000), width=64)
    for d in study.per_depth:
        assert d["ratio_lower"]["median"] <= d["ratio_upper"]["median"]
    assert study.interval_verdict in (PASS, FAIL, INCONCLUSIVE)


def test_interval_verdict():
    assert _interval_verdict(0.8, 1.2) == PASS
    assert _interval_verdict(0.1, 0.4) == FAIL
    assert _interval_verdict(0.4, 0.8) == INCONCLUSIVE


@settings(max_examples=40)
@given(lo=st.lists(st.floats(0.0, 3.0), min_size=3, max_size=3), w=st.lists(st.floats(0.0, 1.0), min_size=3, max_size=3))
def test_slope_range_covers_every_box_corner(lo, w):
    x = [4, 7, 10]
    hi = [a + b for a, b in zip(lo, w)]
    smin, smax = _slope_range(x, lo, hi)
    corners = [np.polyfit(x, [hi[i] if (m >> i) & 1 else lo[i] for i in range(3)], 1)[0] for m in range(8)]
    assert smin == pytest.approx(min(corners), abs=1e-9)
    assert smax == pytest.approx(max(corners), abs=1e-9)


def test_trend_verdict_cases():
    assert _trend_verdict((-0.2, -0.1), 1.1, 1.3) == PASS
    assert _trend_verdict((0.1, 0.2), 1.1, 1.3) == FAIL
    assert _trend_verdict((-0.1, 0.2), 1.1, 1.3) == INCONCLUSIVE
    assert _trend_verdict((0.1, 0.2), 0.5, 0.8) == PASS
    assert _trend_verdict((-0.1, 0.2), 0.9, 1.1) == INCONCLUSIVE
    assert _trend_verdict((0.0, 0.0), 1.0, 1.0) == PASS


def test_additive_speed_events_nest():
    rep = additive_speed_check(PowerTail(0.5), 1.0, [1, 2, 4], 8, SimConfig(reps=100, seed=1))
    vals = [rep.e_r[r] for r in (1, 2, 4)]
    assert all(0 <= v <= 1 for v in vals)
    assert vals == sorted(vals)
    assert rep.window == (1, 8) and not rep.flagged
    assert len(rep.v_hat_median) == 9 and len(rep.v_step_median) == 8


def test_additive_speed_of_a_chain():
    # Z_n = 1 never reaches exp((1+eps)^(n-r))
    rep = additive_speed_check(Deterministic(1), 1.0, [1, 3], 5, SimConfig(reps=4))
    assert rep.e_r == {1: 0.0, 3: 0.0} and rep.survival_fraction == 1.0
    assert rep.v_hat_median[3] == pytest.approx(math.log(2) / 8)


@pytest.mark.parametrize("n,base,s", [(100, math.e, 3), (16, 2.0, 2), (256, 2.0, 3), (1e6, math.e, 4)])
def test_bramson_steps(n, base, s):
    assert bramson_steps(n, base) == s


def test_bramson_steps_domain():
    with pytest.raises(ValueError):
        bramson_steps(2)


def test_bramson_normalization():
    s, total = bramson_normalization(MixtureWithZeroAtom(0.5, PointMass(1.0)), 2.0, 1e6)
    assert (s, total) == (4, 4.0)
    s, total = bramson_normalization(MixtureWithZeroAtom(0.3, Uniform01()), 2.0, 1e6)
    assert total == pytest.approx(math.fsum(math.exp(-(2.0**k)) for k in range(1, 5)), rel=1e-14)
    with pytest.raises(ValueError):
        bramson_normalization(Uniform01(), 2.0, 1e6)


def test_delta_sensitivity_rows():
    rows = delta_sensitivity(PowerTail(0.5), Uniform01(), 1.0, [0.5, 1.0], 4, SimConfig(reps=20, seed=3))
    assert [r["delta"] for r in rows] == [0.5, 1.0]
    for r in rows:
        assert r["alpha"] == pytest.approx(2.0 ** -r["delta"])
        assert 0.0 <= r["fraction"] <= 1.0
