import math
from collections import defaultdict

import numpy as np
import pytest

from brwexplode.collapse import (
    CASE_I,
    CASE_II,
    CASE_III,
    INFINITE_MEAN,
    classify_case,
    collapsed_weight,
    sample_zeta_batch,
    tail_slope,
    verify_functional_equation,
    zeta_height_pmf,
    zeta_mean_trend,
)
from brwexplode.distributions import (
    Atomic,
    Collapsed,
    Deterministic,
    Geometric,
    MixtureWithZeroAtom,
    PointMass,
    PositivePart,
    PowerTail,
    Uniform01,
    stream,
)


def mix(p):
    return MixtureWithZeroAtom(p, Uniform01())


@pytest.mark.parametrize("Z,W,label,H", [
    (Deterministic(2), mix(0.5), CASE_III, 1.0),
    (Deterministic(2), mix(0.25), CASE_I, 0.5),
    (Deterministic(3), mix(0.5), CASE_II, 1.5),
    (Geometric(0.5), mix(0.5), CASE_I, 0.5),
    (Deterministic(4), Atomic([0.0, 1.0], [0.25, 0.75]), CASE_III, 1.0),
])
def test_case_examples(Z, W, label, H):
    rep = classify_case(Z, W)
    assert rep.case_label == label and rep.exact
    assert rep.H == H


def test_infinite_mean_case():
    rep = classify_case(PowerTail(0.5), mix(0.5))
    assert rep.case_label == INFINITE_MEAN and math.isinf(rep.H)
    assert rep.to_dict()["H"] == "Infinite"


def test_case_iii_is_exact_not_float():
    # 0.1 * 10 is 1 in rationals though 0.1 is not exact in binary
    rep = classify_case(Deterministic(10), mix(0.1))
    assert rep.case_label == CASE_III and not rep.flagged


def _height_law_oracle(k, p, height):
    # law of (non-zero children) over clusters of height <= h, by direct convolution
    def node(h):
        # one child edge: nonzero (contributes 1) or zero (a subcluster of height <= h-1)
        out = defaultdict(float)
        out[1] += 1 - p
        if h > 0:
            for j, q in node_cache[h - 1].items():
                out[j] += p * q
        return out

    node_cache = {}
    for h in range(height + 1):
        one = node(h)
        acc = {0: 1.0}
        for _ in range(k):
            nxt = defaultdict(float)
            for a, qa in acc.items():
                for b, qb in one.items():
                    nxt[a + b] += qa * qb
            acc = nxt
        node_cache[h] = acc
    return node_cache[height]


@pytest.mark.parametrize("k,p,h", [(2, 0.5, 0), (2, 0.5, 2), (3, 0.25, 2), (1, 0.7, 4)])
def test_height_pmf_matches_convolution(k, p, h):
    pmf = zeta_height_pmf(Deterministic(k), p, h)
    oracle = _height_law_oracle(k, p, h)
    for j in range(max(len(pmf), max(oracle) + 1)):
        got = pmf[j] if j < len(pmf) else 0.0
        assert got == pytest.approx(oracle.get(j, 0.0), abs=1e-14)


def test_sampled_heights_follow_exact_law():
    p, reps = 0.5, 200000
    z, _, _, height = sample_zeta_batch(Deterministic(2), p, stream(0, "t"), reps, with_height=True)
    pmf = zeta_height_pmf(Deterministic(2), p, 1)
    for j, q in enumerate(pmf):
        freq = np.mean((z == j) & (height <= 1))
        assert abs(freq - q) <= 4 * math.sqrt(q * (1 - q) / reps) + 1e-12


def test_chain_collapses_to_single_child():
    z, S, tr = sample_zeta_batch(Deterministic(1), 0.6, stream(1, "t"), 1000)
    assert np.all(z == 1) and not tr.any()
    assert S.min() >= 1


def test_functional_equation_against_fixed_point():
    Z, p = Geometric(0.5), 0.5
    s_grid = [0.2, 0.5, 0.8]
    rows = verify_functional_equation(Z, p, s_grid, reps=40000, seed=3, batches=200)
    for row in rows:
        g = 0.0
        for _ in range(2000):
            g = Z.pgf((1 - p) * row.s + p * g)
        assert abs(row.g_hat - g) <= 4 * row.se + 1e-3
        assert row.within


def test_functional_equation_residual_vanishes_at_one():
    rows = verify_functional_equation(Deterministic(2), 0.25, [1.0], reps=500, batches=50)
    assert rows[0].residual == 0.0


def test_tail_slope_of_pareto_sample():
    rng = np.random.default_rng(0)
    S = np.floor(rng.random(200000) ** -2.0)
    assert tail_slope(S) == pytest.approx(-0.5, abs=0.05)


def test_critical_cluster_tail_slope():
    _, S, _ = sample_zeta_batch(Deterministic(2), 0.5, stream(2, "t"), 20000, cap=1e5)
    assert tail_slope(S) == pytest.approx(-0.5, abs=0.1)


def test_subcritical_mean_matches_formula():
    Z, p = Deterministic(2), 0.25
    out = zeta_mean_trend(Z, p, [1e4], reps=50000)
    assert Collapsed(Z, p).mean == pytest.approx(3.0)
    # Var(zeta) is finite here; 4 SE with a generous variance guess
    assert out[0]["mean"] == pytest.approx(3.0, abs=0.1)


def test_critical_mean_grows_with_cap():
    out = zeta_mean_trend(Deterministic(2), 0.5, [10, 1000, 100000], reps=20000)
    means = [o["mean"] for o in out]
    assert means[0] < means[1] < means[2]


def test_collapsed_weight_cases():
    assert isinstance(collapsed_weight(mix(0.5)), Uniform01)
    U = Uniform01()
    assert collapsed_weight(U) is U
    a = collapsed_weight(Atomic([0.0, 1.0, 2.0], [0.5, 0.25, 0.25]))
    assert list(a.positions) == [1.0, 2.0] and np.allclose(a.masses, [0.5, 0.5])
    pm = collapsed_weight(Atomic([0.0, 1.0], [0.5, 0.5]))
    assert isinstance(pm, PointMass) and pm.a == 1.0
    with pytest.raises(ValueError):
        collapsed_weight(PointMass(0.0))


def test_positive_part_conditions_away_the_atom():
    W = MixtureWithZeroAtom(0.5, MixtureWithZeroAtom(0.2, Uniform01()))
    cw = collapsed_weight(W)
    assert isinstance(cw, PositivePart)
    assert cw.atom_at_zero == 0.0
    draws = cw.sample(np.random.default_rng(0), 1000)
    assert np.all(draws > 0)
