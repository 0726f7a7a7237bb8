"""Zero-weight clusters: case classification, the collapse transform and its generating function."""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass
from fractions import Fraction

import numpy as np

from .distributions import (
    COUNT_CAP,
    Atomic,
    Deterministic,
    Geometric,
    MixtureWithZeroAtom,
    OffspringDist,
    PointMass,
    PositivePart,
    WeightDist,
    stream,
)
from .gwsim import map_reps

CASE_I, CASE_II, CASE_III, INFINITE_MEAN = "I", "II", "III", "InfiniteMean"
CASE_TOL = 1e-12
BINOMIAL_MAX = 2**62


def _exact(x: float) -> Fraction:
    """Rational reading of a parameter as written in decimal."""
    return Fraction(repr(float(x)))


def _exact_mean(Z: OffspringDist) -> Fraction | None:
    if isinstance(Z, Deterministic):
        return Fraction(Z.k)
    if isinstance(Z, Geometric):
        q = _exact(Z.q)
        return (1 - q) / q
    return None


def _exact_atom(W: WeightDist) -> Fraction | None:
    if isinstance(W, PointMass):
        return Fraction(1 if W.a == 0 else 0)
    if isinstance(W, MixtureWithZeroAtom) and W.base.atom_at_zero == 0:
        return _exact(W.p)
    if isinstance(W, Atomic):
        return _exact(W.atom_at_zero) if W.atom_at_zero > 0 else Fraction(0)
    if W.atom_at_zero == 0:
        return Fraction(0)
    return None


@dataclass
class CaseReport:
    H: float
    case_label: str
    p: float
    mean_z: float
    exact: bool  # H computed in rational arithmetic
    flagged: bool  # Case III declared from a float within tolerance

    def to_dict(self) -> dict:
        d = asdict(self)
        if math.isinf(d["mean_z"]):
            d["mean_z"] = "Infinite"
        if math.isinf(d["H"]):
            d["H"] = "Infinite"
        return d


def classify_case(Z: OffspringDist, W: WeightDist) -> CaseReport:
    """H = E{Z} Pr{W = 0} and the regime it selects."""
    p = float(W.atom_at_zero)
    mean = Z.mean
    if math.isinf(mean):
        return CaseReport(math.inf if p > 0 else math.nan, INFINITE_MEAN, p, math.inf, False, False)
    em, ep = _exact_mean(Z), _exact_atom(W)
    if em is not None and ep is not None:
        H = em * ep
        label = CASE_III if H == 1 else CASE_I if H < 1 else CASE_II
        return CaseReport(float(H), label, p, mean, True, False)
    H = mean * p
    if abs(H - 1.0) <= CASE_TOL:
        return CaseReport(H, CASE_III, p, mean, False, True)
    return CaseReport(H, CASE_I if H < 1 else CASE_II, p, mean, False, False)


# ---------------------------------------------------------------------------
# Sampling the collapsed offspring count
# ---------------------------------------------------------------------------


def _children_total(Z: OffspringDist, F: np.ndarray, rng: np.random.Generator) -> tuple[np.ndarray, np.ndarray]:
    """Total offspring of F[i] parents for every i, with overflow flags."""
    if isinstance(Z, Deterministic):
        T = F * Z.k
        return T, np.zeros(F.shape, bool)
    total = int(F.sum())
    draws, trunc = Z.sample(rng, total)
    starts = np.concatenate(([0], np.cumsum(F)[:-1]))
    T = np.add.reduceat(draws, starts) if total else np.zeros(F.shape)
    tr = np.logical_or.reduceat(trunc, starts) if total else np.zeros(F.shape, bool)
    T = np.where(F > 0, T, 0.0)
    over = T > BINOMIAL_MAX
    return np.minimum(T, BINOMIAL_MAX).astype(np.int64), (tr & (F > 0)) | over


def sample_zeta_batch(Z: OffspringDist, p: float, rng: np.random.Generator, size: int,
                      cap: float = COUNT_CAP, with_height: bool = False):
    """Collapsed offspring counts for ``size`` independent roots.

    Each root grows its zero-weight cluster generation by generation: every
    child is zero-weight with probability p and then joins the cluster,
    otherwise it is a child of the collapsed node.  Returns
    ``(zeta, S, truncated)`` with S the cluster size; a cluster larger than
    ``cap`` stops growing and is flagged.  With ``with_height`` the number
    of generations the cluster survived is appended.
    """
    if not 0 < p < 1:
        raise ValueError("p must lie in (0, 1)")
    zeta = np.zeros(size, np.int64)
    S = np.ones(size, np.int64)
    frontier = np.ones(size, np.int64)
    height = np.zeros(size, np.int64)
    trunc = np.zeros(size, bool)
    active = np.arange(size)
    while active.size:
        T, over = _children_total(Z, frontier[active], rng)
        zeros = rng.binomial(T, p)
        zeta[active] += T - zeros
        S[active] += zeros
        height[active] += zeros > 0
        frontier[active] = zeros
        big = (S[active] > cap) | over
        trunc[active[big]] = True
        active = active[(zeros > 0) & ~big]
    if with_height:
        return zeta, S, trunc, height
    return zeta, S, trunc


def sample_zeta(Z: OffspringDist, p: float, rng: np.random.Generator, cap: float = COUNT_CAP) -> tuple[int, bool]:
    zeta, _, trunc = sample_zeta_batch(Z, p, rng, 1, cap)
    return int(zeta[0]), bool(trunc[0])


def zeta_height_pmf(Z: Deterministic, p: float, height: int) -> np.ndarray:
    """Exact law of zeta restricted to clusters of height <= ``height``.

    Coefficient j is Pr{zeta = j, cluster dies within ``height`` generations},
    from composing generating polynomials for a deterministic offspring law.
    """
    if not isinstance(Z, Deterministic):
        raise TypeError("enumeration is only implemented for deterministic offspring")
    P = np.polynomial.Polynomial
    nonzero = P([0.0, 1.0 - p])
    cur = nonzero ** Z.k  # clusters of height 0: every child nonzero
    for _ in range(height):
        cur = (nonzero + p * cur) ** Z.k
    return cur.coef


# ---------------------------------------------------------------------------
# Functional equation
# ---------------------------------------------------------------------------


@dataclass
class ResidualRow:
    s: float
    g_hat: float
    rhs: float
    residual: float
    se: float
    truncated_fraction: float
    flagged: bool

    @property
    def within(self) -> bool:
        return abs(self.residual) <= 3.0 * self.se or self.residual == 0.0


def verify_functional_equation(Z: OffspringDist, p: float, s_grid, reps: int, seed: int = 0,
                               cap: float = 2e4, batches: int = 1000, boot: int = 400,
                               threads: int = 1) -> list:
    """Monte Carlo residuals of G_zeta(s) = G_Z((1-p)s + p G_zeta(s)).

    Reps are split into ``batches`` blocks with independent streams; the
    standard error of each residual is a bootstrap over block means.
    """
    s_grid = np.asarray(list(s_grid), dtype=float)
    batches = max(1, min(batches, reps))
    sizes = np.full(batches, reps // batches)
    sizes[: reps % batches] += 1

    def one(b: int):
        z, _, tr = sample_zeta_batch(Z, p, stream(seed, "zeta", b), int(sizes[b]), cap)
        pw = np.power.outer(s_grid, z.astype(float))  # grid x reps
        return pw.sum(axis=1), int(tr.sum())

    out = map_reps(one, batches, threads)
    sums = np.array([o[0] for o in out])  # batches x grid
    trunc = sum(o[1] for o in out) / reps
    g_hat = (sums.sum(axis=0)) / reps
    pgf = np.vectorize(Z.pgf)
    rhs = pgf((1 - p) * s_grid + p * g_hat)
    rng = stream(seed, "zeta/bootstrap", 0)
    idx = rng.integers(0, batches, size=(boot, batches))
    bs_g = sums[idx].sum(axis=1) / sizes[idx].sum(axis=1)[:, None]
    bs_res = bs_g - pgf((1 - p) * s_grid + p * bs_g)
    se = bs_res.std(axis=0, ddof=1)
    rows = []
    for i, s in enumerate(s_grid):
        res = float(g_hat[i] - rhs[i])
        if s == 1.0:
            res = 0.0
        rows.append(ResidualRow(float(s), float(g_hat[i]), float(rhs[i]), res, float(se[i]), trunc, trunc > 0.01))
    return rows


def tail_slope(S: np.ndarray, k_lo: float = 10, k_hi: float = 1000, points: int = 12) -> float:
    """Least-squares slope of log Pr{S >= k} against log k on a log grid."""
    S = np.sort(np.asarray(S))
    ks = np.unique(np.round(np.geomspace(k_lo, k_hi, points)))
    tail = 1.0 - np.searchsorted(S, ks, side="left") / S.size
    keep = tail > 0
    return float(np.polyfit(np.log(ks[keep]), np.log(tail[keep]), 1)[0])


def zeta_mean_trend(Z: OffspringDist, p: float, caps, reps: int, seed: int = 0) -> list:
    """Empirical means of zeta under growing cluster caps (diverging at criticality)."""
    out = []
    for c in caps:
        z, _, tr = sample_zeta_batch(Z, p, stream(seed, f"zeta/mean/{c}", 0), reps, c)
        out.append({"cap": c, "mean": float(z.mean()), "truncated_fraction": float(tr.mean())})
    return out


def collapsed_weight(W: WeightDist) -> WeightDist:
    """W conditioned on W > 0."""
    p = W.atom_at_zero
    if p >= 1:
        raise ValueError("W = 0 almost surely; the collapsed weight is undefined")
    if p == 0:
        return W
    if isinstance(W, MixtureWithZeroAtom) and W.base.atom_at_zero == 0:
        return W.base
    if isinstance(W, Atomic):
        pos, mass = W.positions[1:], W.masses[1:] / (1.0 - p)
        if len(pos) == 1:
            return PointMass(float(pos[0]))
        return Atomic(pos, mass)
    return PositivePart(W)
