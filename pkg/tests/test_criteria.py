import math

import mpmath
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from brwexplode.criteria import (
    EXPLODES,
    NO_EXPLOSION,
    UNDETERMINED,
    PreconditionError,
    SigmaSeq,
    SpeedSeq,
    bramson_criterion,
    bramson_sigma,
    certify_series,
    check_plump,
    extend_speed,
    f_start,
    find_plump_witness,
    harris_orientation,
    harris_series,
    growth_checks,
    minsum_criterion,
    sigma_corollary,
    sigma_three_series,
    speed_f,
    speed_h,
    vatutin_integral,
    vatutin_regularity,
)
from brwexplode.distributions import (
    Atomic,
    Deterministic,
    DoubleExpSmall,
    Exponential,
    ExpInverse,
    LogInverse,
    LogTail,
    MixtureWithZeroAtom,
    PiecewiseTail,
    PointMass,
    PowerTail,
    Uniform01,
)

L = math.log
PIECEWISE = PiecewiseTail([0, L(10), L(1e4)], [0, -0.9 * L(10), -0.9 * L(10) - 0.3 * L(1e3)])


# ---- series certification -------------------------------------------------

def test_certify_geometric_series_brackets_its_sum():
    rep = certify_series([-n * L(2) for n in range(1, 30)], True)
    assert rep.verdict == EXPLODES
    assert rep.extra["sum_without_bound"] <= 1.0 <= rep.partial_sum + 1e-15


def test_certify_harmonic_series_diverges():
    rep = certify_series([-L(n) for n in range(1, 200)], True)
    assert rep.verdict == NO_EXPLOSION


def test_certify_refuses_divergence_for_atomic_tails():
    rep = certify_series([-L(n) for n in range(1, 200)], False)
    assert rep.verdict == UNDETERMINED


def test_certify_empty():
    assert certify_series([], True).verdict == UNDETERMINED


def test_certify_vanishing_terms():
    rep = certify_series([-1.0, -2.0, -3.0, -math.inf, -math.inf], True)
    assert rep.verdict == EXPLODES


# ---- plumpness and speeds -------------------------------------------------

@pytest.mark.parametrize("Z,eps,holds", [
    (PowerTail(0.5), 1.0, True),
    (LogTail(), 1.0, True),
    (Deterministic(2), 0.1, False),
])
def test_check_plump_examples(Z, eps, holds):
    assert check_plump(Z, eps).holds is holds


def test_plump_witness_for_power_tail_uses_largest_eps():
    # beta(1+eps) <= 1 is needed, so eps = 1/beta - 1
    assert find_plump_witness(PowerTail(0.5)).eps == 1.0
    assert find_plump_witness(PowerTail(0.8)).eps == 0.25
    assert find_plump_witness(Deterministic(3)) is None


def test_speed_h_power_tail_is_squaring():
    # F^{-1}(1 - 1/h) = h^2 for S(m) = m^{-1/2}, so h(n) = 2^(2^n)
    s = speed_h(PowerTail(0.5), 2, 6)
    for n, v in enumerate(s.values):
        assert v == pytest.approx(2**n * L(2), rel=1e-13)


def test_speed_h_log_tail_is_a_tower():
    # S(m) = 1/log2 m gives h(n+1) = 2^h(n)
    s = speed_h(LogTail(), 2, 10)
    exact = [2, 4, 16, 65536]
    for n, h in enumerate(exact):
        assert s.values[n] == pytest.approx(L(h), rel=1e-13)
    assert s.values[4] == pytest.approx(65536 * L(2), rel=1e-13)
    assert s.overflow_index == 5


def test_speed_h_deterministic_is_constant():
    s = speed_h(Deterministic(2), 2, 5)
    assert all(v == pytest.approx(L(2)) for v in s.values)


def _start_oracle(eps):
    # least integer m with m^(1-a) >= 16/(1-a)+16 and m^(1/a-1) >= 4^(ceil(1/(1/a-1))+1)
    mpmath.mp.dps = 60
    a = (1 + mpmath.mpf(eps)) ** mpmath.mpf(-0.5)
    b = 16 / (1 - a) + 16
    inv = 1 / a - 1
    c = mpmath.mpf(4) ** (mpmath.ceil(1 / inv) + 1)
    guess = int(mpmath.ceil(max(b ** (1 / (1 - a)), c ** (1 / inv))))
    for m in range(guess - 3, guess + 3):
        if mpmath.mpf(m) ** (1 - a) >= b and mpmath.mpf(m) ** inv >= c:
            return m


def test_f_start_matches_high_precision_oracle():
    assert f_start(PowerTail(0.5), 1.0) == _start_oracle(1.0) == 2054896


def test_f_start_large_value_is_found_quickly():
    # m is near 1e51, so the double-precision logs only pin it relatively
    m = f_start(PowerTail(0.8), 0.25)
    assert abs(m / _start_oracle(0.25) - 1) < 1e-12


def test_speed_f_power_tail_matches_exact_ceiling_recursion():
    s = speed_f(PowerTail(0.5), 1.0, 6)
    mpmath.mp.dps = 80
    f = mpmath.mpf(2054896)
    for n in range(4):
        assert s.values[n] == pytest.approx(float(mpmath.log(f)), rel=1e-12)
        f = mpmath.ceil(f ** mpmath.sqrt(2))
    assert s.alpha == pytest.approx(2**-0.5)


@pytest.mark.parametrize("Z", [PowerTail(0.5), PowerTail(0.8), PowerTail(0.25), LogTail(), PIECEWISE])
def test_growth_inequalities_hold_termwise(Z):
    eps = find_plump_witness(Z).eps
    checks = growth_checks(speed_f(Z, eps, 60), Z)
    assert all(checks["double_jump"]) and all(checks["four_power"])
    for k, vals in checks["power_jump"].items():
        assert all(vals), k


def test_extended_speed_is_a_lower_bound():
    wit = find_plump_witness(PIECEWISE)
    exact = speed_h(PIECEWISE, wit.suggested_m0, 40)
    cut = SpeedSeq(exact.values[:6], "h", float(wit.suggested_m0), overflow_index=6)
    ext = extend_speed(cut, wit.eps, 40)
    assert ext.bounded_from == 6 and len(ext.values) == 41
    for a, b in zip(ext.values, exact.values):
        assert a <= b * (1 + 1e-12)


# ---- minimum-sum criterion ------------------------------------------------

def test_minsum_power_uniform_partial_sum():
    rep = minsum_criterion(PowerTail(0.5), Uniform01())
    oracle = math.fsum(2.0 ** -(2**n) for n in range(1, 12))
    assert rep.verdict == EXPLODES
    assert rep.partial_sum == pytest.approx(oracle, abs=1e-10)
    assert rep.partial_sum == pytest.approx(0.31642150902189314, abs=1e-15)


def test_minsum_power_exponential_partial_sum():
    rep = minsum_criterion(PowerTail(0.5), Exponential(1.0))
    oracle = math.fsum(-math.log1p(-(2.0 ** -(2**n))) for n in range(1, 12))
    assert rep.verdict == EXPLODES
    assert rep.partial_sum == pytest.approx(oracle, abs=1e-10)


def test_minsum_power_double_exp_small_diverges():
    rep = minsum_criterion(PowerTail(0.5), DoubleExpSmall())
    assert rep.verdict == NO_EXPLOSION


def test_minsum_rejects_atom_at_zero():
    with pytest.raises(PreconditionError):
        minsum_criterion(PowerTail(0.5), MixtureWithZeroAtom(0.5, Uniform01()))


def test_minsum_non_plump_is_undetermined():
    assert minsum_criterion(Deterministic(2), Uniform01()).verdict == UNDETERMINED


def test_minsum_tower_with_slowest_weight_is_not_falsely_certified():
    # the lower-bound continuation of the tower speed cannot decide this pair
    assert minsum_criterion(LogTail(), DoubleExpSmall()).verdict == UNDETERMINED


@pytest.mark.parametrize("m0", [2, 5, 100])
@pytest.mark.parametrize("W,verdict", [(Uniform01(), EXPLODES), (DoubleExpSmall(), NO_EXPLOSION)])
def test_minsum_start_value_invariance(m0, W, verdict):
    assert minsum_criterion(PowerTail(0.5), W, m0=m0).verdict == verdict


WEIGHTS = [Uniform01(), Exponential(1.0), DoubleExpSmall(), ExpInverse(1.0), LogInverse()]


@settings(max_examples=25)
@given(beta=st.floats(0.15, 0.95), wi=st.integers(0, len(WEIGHTS) - 1), gamma=st.sampled_from([2, 3]))
def test_subsampling_invariance(beta, wi, gamma):
    Z, W = PowerTail(beta), WEIGHTS[wi]
    base = minsum_criterion(Z, W).verdict
    assert base != UNDETERMINED
    assert minsum_criterion(Z, W, gamma=gamma).verdict == base


def test_minsum_f_speed_agrees_with_h_speed():
    for W in WEIGHTS:
        assert (minsum_criterion(PowerTail(0.5), W, speed="f").verdict
                == minsum_criterion(PowerTail(0.5), W).verdict)


# ---- sigma-summability ----------------------------------------------------

def test_sigma_corollary_exponential_geometric_sum():
    rep = sigma_corollary(Exponential(1.0), SigmaSeq("geometric", 1.0, 2.0))
    mpmath.mp.dps = 30
    oracle = float(-mpmath.log(mpmath.qp(0.5, 0.5)))  # sum -log(1 - 2^-n)
    assert rep.verdict == EXPLODES
    assert rep.extra["sum_without_bound"] <= oracle + 1e-12 <= rep.partial_sum + 2e-12
    assert rep.partial_sum == pytest.approx(oracle, rel=1e-9)


@pytest.mark.parametrize("W,sigma,verdict", [
    (Exponential(1.0), SigmaSeq("geometric", 1.0, 2.0), EXPLODES),
    (LogInverse(), SigmaSeq("geometric", 1.0, 2.0), EXPLODES),
    (Uniform01(), SigmaSeq("geometric", 1.0, 2.0), EXPLODES),
    (DoubleExpSmall(), SigmaSeq("geometric", 1.0, 2.0), NO_EXPLOSION),
])
def test_sigma_tests_agree_on_geometric_sequences(W, sigma, verdict):
    assert sigma_corollary(W, sigma, cross_check=False).verdict == verdict
    assert sigma_three_series(W, sigma).verdict == verdict


def test_sigma_three_series_linear_and_bounded_below():
    assert sigma_three_series(Uniform01(), SigmaSeq("linear", 1.0)).verdict == NO_EXPLOSION
    assert sigma_three_series(PointMass(0.5), SigmaSeq("geometric", 1.0, 2.0)).verdict == NO_EXPLOSION


def test_sigma_corollary_needs_geometric_growth():
    with pytest.raises(PreconditionError):
        sigma_corollary(Uniform01(), SigmaSeq("linear", 1.0), cross_check=False)


def test_sigma_from_extended_speed_does_not_certify_divergence():
    f = extend_speed(speed_f(LogTail(), 1.0, 40), 1.0, 40)
    sig = SigmaSeq.from_speed(f)
    assert sig.lower_bound_from is not None
    assert sigma_corollary(DoubleExpSmall(), sig, N=40).verdict == UNDETERMINED
    assert sigma_corollary(Uniform01(), sig, N=40).verdict == EXPLODES


# ---- related criteria -----------------------------------------------------

def test_harris_orientation_and_examples():
    assert harris_orientation() == "convergent_means_explosion"
    assert harris_series(PowerTail(0.5)).verdict == EXPLODES
    assert harris_series(Deterministic(2)).verdict == NO_EXPLOSION


def test_harris_first_term():
    # 1 / (1 * (Pr{Z>0} + Pr{Z>1})) = 1/2 for Z = 2
    assert harris_series(Deterministic(2), N=1).partial_sum == pytest.approx(0.5)


@pytest.mark.parametrize("W,holds", [
    (Uniform01(), True), (Exponential(1.0), True), (ExpInverse(1.0), False), (DoubleExpSmall(), False),
])
def test_regularity_examples(W, holds):
    assert vatutin_regularity(W).holds is holds


def test_regularity_ratio_for_uniform():
    r = vatutin_regularity(Uniform01(), lam=0.5)
    assert r.liminf_est == pytest.approx(0.5, abs=1e-12)
    assert r.limsup_est == pytest.approx(0.5, abs=1e-12)


@pytest.mark.slow
def test_vatutin_integral_agrees_with_minsum_and_ignores_upper_limit():
    for Z, W in [(PowerTail(0.5), Uniform01()), (PowerTail(0.8), Exponential(1.0))]:
        a = vatutin_integral(Z, W).verdict
        b = vatutin_integral(Z, W, eps_upper=0.25).verdict
        assert a == b == minsum_criterion(Z, W).verdict


def test_bramson_sigma_value():
    assert bramson_sigma(0.5, 2.0, 1) == pytest.approx(0.5 + 0.5 * math.exp(-2.0), rel=1e-15)


def test_bramson_examples():
    assert bramson_criterion(MixtureWithZeroAtom(0.5, Uniform01())).verdict == EXPLODES
    assert bramson_criterion(MixtureWithZeroAtom(0.5, PointMass(1.0))).verdict == NO_EXPLOSION
    with pytest.raises(PreconditionError):
        bramson_criterion(Uniform01())


def test_atomic_weight_cannot_certify_divergence():
    rep = minsum_criterion(PowerTail(0.5), Atomic([0.5, 1.0], [0.5, 0.5]))
    assert rep.verdict == UNDETERMINED
