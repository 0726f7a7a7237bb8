"""Analytic explosion and min-summability deciders.

A numerical series can never be proven convergent or divergent from a
finite prefix, so every decider here reports one of three verdicts:

* ``ExplodesCertified``: the observed tail is dominated by a geometric
  sequence with ratio at most ``RATIO_MAX`` and the geometric remainder
  is added to the partial sum;
* ``NoExplosionCertified``: ``n * t_n`` stays above a positive constant
  over the inspected window without decaying, and the weight family has a
  smooth (monotone, non-atomic) quantile near zero;
* ``Undetermined``: anything else.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import asdict, dataclass, field, replace
from typing import Callable, Sequence

import numpy as np
from scipy import integrate

from .distributions import (
    LOG_MAX,
    KSeriesError,
    LogReal,
    OffspringDist,
    UndeterminedError,
    WeightDist,
    k_function,
)

EXPLODES = "ExplodesCertified"
NO_EXPLOSION = "NoExplosionCertified"
UNDETERMINED = "Undetermined"

RATIO_MAX = 0.98
MIN_WINDOW = 3
SLOPE_TOL = -0.02
EPS_CANDIDATES = (1.0, 0.5, 0.25, 0.1, 0.05)
LOG_OVERFLOW = 0.5 * 1.7976931348623157e308


class PreconditionError(ValueError):
    """Inputs violate a criterion's stated preconditions."""


@dataclass
class CriterionReport:
    verdict: str
    partial_sum: float
    term_ratios: list
    truncation_index: int
    certificate: str
    term_table: list = field(default_factory=list)
    extra: dict = field(default_factory=dict)

    @property
    def certified(self) -> bool:
        return self.verdict != UNDETERMINED

    @property
    def converges(self) -> bool | None:
        return {EXPLODES: True, NO_EXPLOSION: False}.get(self.verdict)

    def to_dict(self) -> dict:
        d = asdict(self)
        d["term_ratios"] = [_jsonable(r) for r in self.term_ratios]
        d["term_table"] = [{k: _jsonable(v) for k, v in row.items()} for row in self.term_table]
        d["extra"] = {k: _jsonable(v) for k, v in self.extra.items()}
        d["partial_sum"] = _jsonable(self.partial_sum)
        return d


def _jsonable(v):
    if isinstance(v, float) and not math.isfinite(v):
        return None if math.isnan(v) else ("inf" if v > 0 else "-inf")
    if isinstance(v, (np.floating, np.integer)):
        return _jsonable(v.item())
    if isinstance(v, dict):
        return {k: _jsonable(x) for k, x in v.items()}
    if isinstance(v, (list, tuple)):
        return [_jsonable(x) for x in v]
    return v


# ---------------------------------------------------------------------------
# Series certification
# ---------------------------------------------------------------------------


def certify_series(log_terms: Sequence[float], smooth_tail: bool, start_index: int = 1,
                   label: str = "series") -> CriterionReport:
    """Classify sum_n t_n from the logs of its first terms.

    ``start_index`` is the index n of the first term, used by the c/n test.
    """
    lt = np.asarray(log_terms, dtype=float)
    K = len(lt)
    if K == 0:
        return CriterionReport(UNDETERMINED, 0.0, [], 0, f"{label}: no terms computed")
    with np.errstate(over="ignore"):
        terms = np.exp(lt)
    partial = math.fsum(terms)
    with np.errstate(invalid="ignore"):
        ratios = np.where(np.isneginf(lt[1:]), 0.0, np.exp(lt[1:] - lt[:-1]))
    table = [{"n": start_index + i, "log_term": float(lt[i]), "term": float(terms[i])} for i in range(K)]
    ratio_list = [float(r) for r in ratios]
    if not math.isfinite(partial):
        return CriterionReport(UNDETERMINED, partial, ratio_list, K, f"{label}: partial sum is not finite", table)

    # geometric domination over the tail window
    window = max(MIN_WINDOW, (K - 1) // 2)
    if K - 1 >= MIN_WINDOW:
        tail = ratios[-window:]
        r = float(np.max(tail))
        if np.isneginf(lt[-1]):
            return CriterionReport(
                EXPLODES, partial, ratio_list, K,
                f"{label}: terms vanish from n={start_index + int(np.argmax(np.isneginf(lt)))} on; remainder 0",
                table, {"tail_bound": 0.0, "ratio_bound": 0.0})
        # c/n has ratios 1 - 2/K over the back half, so a short window proves nothing
        if r <= RATIO_MAX and K >= 2.0 / (1.0 - r) + 1.0:
            bound = float(terms[-1]) * r / (1.0 - r)
            return CriterionReport(
                EXPLODES, partial + bound, ratio_list, K,
                f"{label}: last {window} term ratios <= {r:.6g} <= {RATIO_MAX}; geometric remainder {bound:.3e} added",
                table, {"tail_bound": bound, "ratio_bound": r, "sum_without_bound": partial})

    # harmonic lower bound
    half = K // 2
    if K >= 2 * MIN_WINDOW and smooth_tail:
        n = np.arange(start_index + half, start_index + K, dtype=float)
        with np.errstate(divide="ignore"):
            lg = np.log(n) + lt[half:]
        if np.all(np.isfinite(lg)):
            c = float(np.exp(lg.min()))
            slope = float(np.polyfit(np.log(n), lg, 1)[0]) if len(n) >= 2 else 0.0
            if c > 0 and slope >= SLOPE_TOL:
                return CriterionReport(
                    NO_EXPLOSION, partial, ratio_list, K,
                    f"{label}: n*t_n >= {c:.4g} on n in [{int(n[0])}, {int(n[-1])}], log-log slope {slope:.4f} >= {SLOPE_TOL}; "
                    "smooth weight tail, so terms dominate c/n",
                    table, {"harmonic_constant": c, "slope": slope})
    why = "no geometric domination and no certified c/n lower bound"
    if not smooth_tail:
        why += " (atomic weight: divergence cannot be certified)"
    return CriterionReport(UNDETERMINED, partial, ratio_list, K, f"{label}: {why}", table)


def _quad(f, a, b, **kw):
    """scipy quad without its warnings; callers check the returned error themselves."""
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", integrate.IntegrationWarning)
        return integrate.quad(f, a, b, **kw)


# ---------------------------------------------------------------------------
# Plumpness and speeds
# ---------------------------------------------------------------------------


@dataclass
class PlumpResult:
    holds: bool
    worst_margin: float
    suggested_m0: int | None
    eps: float
    grid_log_m: list
    margins: list


def check_plump(Z: OffspringDist, eps: float, m_lo: int = 2, m_hi: "LogReal | float" = LogReal(200.0),
                grid_size: int = 64) -> PlumpResult:
    """Test log Pr{Z >= m^{1+eps}} + log m >= 0 on a log-spaced grid of m."""
    if not eps > 0:
        raise ValueError("eps must be positive")
    if m_lo < 2 or grid_size < 16:
        raise ValueError("need m_lo >= 2 and grid_size >= 16")
    log_hi = m_hi.log if isinstance(m_hi, LogReal) else math.log(m_hi)
    log_lo = math.log(m_lo)
    if log_hi <= log_lo:
        raise ValueError("m_hi must exceed m_lo")
    grid = np.linspace(log_lo, log_hi, grid_size)
    # snap small grid points onto integers so the check is about integer m
    pts = []
    for g in grid:
        if g < 36.0:
            g = math.log(round(math.exp(g)))
        if not pts or g > pts[-1]:
            pts.append(float(g))
    margins = [Z.log_tail_ge((1.0 + eps) * g) + g for g in pts]
    tol = 1e-12
    suffix = len(pts)
    while suffix > 0 and margins[suffix - 1] >= -tol:
        suffix -= 1
    holds = suffix < len(pts)
    m0 = None
    if holds:
        m0 = max(m_lo, math.ceil(math.exp(pts[suffix]) * 0.9999999999999)) if pts[suffix] < 700 else None
    return PlumpResult(holds, float(min(margins)), m0, eps, pts, margins)


def find_plump_witness(Z: OffspringDist, candidates=EPS_CANDIDATES) -> PlumpResult | None:
    """First eps in ``candidates`` for which the grid check holds from some m on."""
    for eps in candidates:
        try:
            res = check_plump(Z, eps)
        except UndeterminedError:
            return None
        if res.holds and res.suggested_m0 is not None:
            return res
    return None


@dataclass
class SpeedSeq:
    values: list  # natural logs of f(0), f(1), ...
    kind: str
    m0: float
    alpha: float | None = None
    eps: float | None = None
    overflow_index: int | None = None
    bounded_from: int | None = None  # values from here on are lower bounds

    def __len__(self) -> int:
        return len(self.values)

    def log(self, n: int) -> float:
        return self.values[n]

    def logreal(self, n: int) -> LogReal:
        return LogReal(self.values[n])

    def to_dict(self) -> dict:
        return _jsonable(asdict(self))


def _iterate(Z: OffspringDist, log_start: float, step: Callable[[float], float], N: int):
    vals = [log_start]
    overflow = None
    for n in range(N):
        L = step(vals[-1])
        nxt = Z.quantile_log(L) if math.isfinite(L) else math.inf
        if not math.isfinite(nxt) or nxt > LOG_OVERFLOW:
            overflow = n + 1
            break
        vals.append(float(nxt))
    return vals, overflow


def speed_h(Z: OffspringDist, m0: int, N: int) -> SpeedSeq:
    """h(0) = m0 and h(n+1) = F_Z^{-1}(1 - 1/h(n)), in log space."""
    if m0 <= 1:
        raise ValueError("m0 must exceed 1")
    vals, overflow = _iterate(Z, math.log(m0), lambda lh: lh, N)
    return SpeedSeq(vals, "h", float(m0), overflow_index=overflow)


def extend_speed(seq: SpeedSeq, eps: float, N: int) -> SpeedSeq:
    """Continue an overflowed speed by the plump lower bound.

    If Pr{Z >= m^(1+eps)} >= 1/m then F_Z^{-1}(1 - m^-1) >= m^(1+eps), so
    log h grows at least by the factor 1+eps per step and log f by
    alpha*(1+eps).  The appended values are lower bounds on the speed.
    """
    if seq.overflow_index is None or len(seq.values) > N:
        return seq
    factor = (seq.alpha if seq.alpha is not None else 1.0) * (1.0 + eps)
    vals = list(seq.values)
    start = len(vals)
    while len(vals) <= N and vals[-1] * factor < LOG_OVERFLOW:
        vals.append(vals[-1] * factor)
    return replace(seq, values=vals, bounded_from=start)


def f_start(Z: OffspringDist, eps: float) -> int:
    """Least integer m with the three start-up inequalities for the f recursion."""
    alpha = (1.0 + eps) ** -0.5
    b = 16.0 / (1.0 - alpha) + 16.0
    inv = 1.0 / alpha - 1.0
    c = 4.0 ** (math.ceil(1.0 / inv) + 1)
    lo = max(math.log(b) / (1.0 - alpha), math.log(c) / inv)
    plump = check_plump(Z, eps)
    if not plump.holds or plump.suggested_m0 is None:
        raise PreconditionError(f"{Z!r} is not plump with eps={eps}")
    lo = max(lo, math.log(plump.suggested_m0) / alpha)
    if lo > 700:
        raise PreconditionError("no representable starting value for the f recursion")
    m = max(2, math.ceil(math.exp(lo)))

    def ok(m: int) -> bool:
        lm = math.log(m)
        return (lm * (1 - alpha) >= math.log(b) - 1e-15 and lm * inv >= math.log(c) - 1e-15
                and alpha * lm >= math.log(plump.suggested_m0) - 1e-15)

    # ok is monotone in m, so bisect for the least passing integer
    hi = m
    while not ok(hi):
        hi = 2 * hi
    lo_m = 1
    while hi - lo_m > 1:
        mid = (lo_m + hi) // 2
        if ok(mid):
            hi = mid
        else:
            lo_m = mid
    return max(hi, 2)


def speed_f(Z: OffspringDist, eps: float, N: int, m0_tilde: int | None = None) -> SpeedSeq:
    """f(0) = m~0 and f(n+1) = F_Z^{-1}(1 - f(n)^{-alpha}) with alpha = (1+eps)^{-1/2}."""
    alpha = (1.0 + eps) ** -0.5
    m0 = m0_tilde if m0_tilde is not None else f_start(Z, eps)
    vals, overflow = _iterate(Z, math.log(m0), lambda lf: alpha * lf, N)
    return SpeedSeq(vals, "f", float(m0), alpha, eps, overflow)


def trimming_speed(Z: OffspringDist, eps: float, m0: int, N: int) -> SpeedSeq:
    """f(0) = 1, f(1) = m0 and f(n+1) = F_Z^{-1}(1 - f(n)^{-(1+eps)^{-3/4}})."""
    expo = (1.0 + eps) ** -0.75
    vals, overflow = _iterate(Z, math.log(m0), lambda lf: expo * lf, max(N - 1, 0))
    return SpeedSeq([0.0] + vals, "trim", float(m0), expo, eps, None if overflow is None else overflow + 1)


def growth_checks(seq: SpeedSeq, Z: OffspringDist, ks=(2, 3), rel_tol: float = 1e-12) -> dict:
    """Termwise growth inequalities for an f sequence; each entry is a list of booleans."""
    v = seq.values
    eps = seq.eps
    out = {"double_jump": [], "four_power": [], "power_jump": {k: [] for k in ks}}

    def ge(a: float, b: float) -> bool:
        return a >= b - rel_tol * max(1.0, abs(b))

    for n in range(len(v) - 2):
        out["double_jump"].append(ge(v[n + 2], Z.quantile_log(v[n])))
    for n in range(len(v) - 1):
        out["four_power"].append(ge(v[n + 1], (n + 1) * math.log(4.0) + v[n]))
    for k in ks:
        shift = 2 * math.ceil(math.log(k) / math.log(1.0 + eps))
        for n in range(len(v) - shift):
            out["power_jump"][k].append(ge(v[n + shift], k * v[n]))
    return out


# ---------------------------------------------------------------------------
# Min-summability criterion
# ---------------------------------------------------------------------------


def _plump_setup(Z: OffspringDist, eps: float | None, m0: int | None):
    if eps is None:
        wit = find_plump_witness(Z)
        if wit is None:
            return None
        eps = wit.eps
        m0 = m0 or wit.suggested_m0
    elif m0 is None:
        res = check_plump(Z, eps)
        if not res.holds:
            return None
        m0 = res.suggested_m0
    return eps, max(int(m0), 2)


def minsum_criterion(Z: OffspringDist, W: WeightDist, N: int = 200, m0: int | None = None,
                     eps: float | None = None, speed: str = "h", gamma: int = 1) -> CriterionReport:
    """Decide whether sum_n F_W^{-1}(1/h(n)) is finite.

    ``gamma`` subsamples the speed (uses h(gamma*n)); verdicts are invariant
    under this change.
    """
    if W.atom_at_zero > 0:
        raise PreconditionError(
            "weight has an atom at zero; collapse the zero-weight clusters first "
            "(collapse.collapsed_weight and collapse.sample_zeta)")
    setup = _plump_setup(Z, eps, m0)
    if setup is None:
        return CriterionReport(UNDETERMINED, math.nan, [], 0,
                               f"precondition: {Z!r} is not plump on the inspected grid")
    eps, m0 = setup
    if speed == "h":
        seq = speed_h(Z, m0, gamma * N)
    elif speed == "f":
        seq = speed_f(Z, eps, gamma * N)
    else:
        raise ValueError("speed must be 'h' or 'f'")
    if seq.overflow_index is not None:
        seq = extend_speed(seq, eps, gamma * N)
    idx = list(range(gamma, len(seq), gamma))[:N]
    logs = [W.quantile_log(-seq.values[i]) for i in idx]
    rep = certify_series(logs, W.smooth_tail, start_index=1, label=f"sum F_W^-1(1/{speed}({gamma}n))")
    rep.extra.update({"eps": eps, "m0": m0, "speed": speed, "gamma": gamma,
                      "speed_overflow_index": seq.overflow_index, "speed_log_values": seq.values[: 12]})
    if seq.bounded_from is not None and idx and idx[-1] >= seq.bounded_from:
        rep.certificate += (f"; speed overflowed at index {seq.overflow_index} and was continued by the "
                            "plump lower bound, so later terms are upper bounds")
        # upper bounds on terms cannot certify divergence
        if rep.verdict == NO_EXPLOSION:
            rep.verdict = UNDETERMINED
    elif seq.overflow_index is not None:
        rep.certificate += f"; speed overflowed at index {seq.overflow_index}, beyond the terms used"
    return rep


# ---------------------------------------------------------------------------
# sigma-summability
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class SigmaSeq:
    """Integer sequence sigma_n (n >= 1) described in closed form or as a table of logs."""

    kind: str  # "linear" (c n), "geometric" (c r^n), "log_table"
    c: float = 1.0
    r: float = 2.0
    logs: tuple = ()
    lower_bound_from: int | None = None  # first n whose table entry is only a lower bound

    @classmethod
    def from_speed(cls, seq: SpeedSeq, gamma: int = 1) -> "SigmaSeq":
        lb = None if seq.bounded_from is None else -(-seq.bounded_from // gamma)
        return cls("log_table", logs=tuple(seq.values[gamma::gamma]), lower_bound_from=lb)

    def log(self, n: int) -> float:
        if self.kind == "linear":
            return math.log(self.c * n)
        if self.kind == "geometric":
            return math.log(self.c) + n * math.log(self.r)
        if self.kind == "log_table":
            return self.logs[n - 1]
        raise ValueError(f"unknown sigma kind {self.kind!r}")

    def available(self, N: int) -> int:
        if self.kind == "log_table":
            return min(N, len(self.logs))
        if self.kind == "geometric":
            return min(N, int((700.0 - math.log(self.c)) / math.log(self.r)))
        return N


def _min_tail_expectation(W: WeightDist, log_sigma: float, tol: float) -> tuple[float, float]:
    """Return (E[min(L,1)], Pr{L > 1}) for L the minimum of sigma copies of W.

    E[min(L,1)] equals int_0^1 Pr{W > t}^sigma dt; it is evaluated as an
    expectation over the minimum's uniform level B ~ Beta(1, sigma), which
    stays accurate for astronomically large sigma.
    """
    sigma = math.exp(log_sigma) if log_sigma < 700 else math.inf

    def level_log(x: float) -> float:
        # log B with B = 1 - (1-x)^{1/sigma}
        if x <= 0.0:
            return -math.inf
        if x >= 1.0:
            return 0.0
        y = math.log1p(-x) * math.exp(-log_sigma)
        if y < -1e-10:
            return math.log(-math.expm1(y))
        return math.log(-math.log1p(-x)) - log_sigma

    def g(x: float) -> float:
        lq = W.quantile_log(min(level_log(x), 0.0))
        return 1.0 if lq >= 0 else math.exp(lq)

    pts = [0.0, 1e-12, 1e-6, 1e-3, 0.1, 0.5, 0.9, 1 - 1e-3, 1 - 1e-6, 1.0]
    scale = max(g(0.5), 1e-300)  # absolute tolerance follows the size of the integral
    total, err = 0.0, 0.0
    for a, b in zip(pts, pts[1:]):
        v, e = _quad(g, a, b, epsabs=tol * 1e-3 * scale, epsrel=tol, limit=200)
        total += v
        err += e
    F1 = float(W.cdf(1.0))
    if F1 >= 1.0:
        p_gt = 0.0
    elif F1 <= 0.0:
        p_gt = 1.0
    else:
        lp = (sigma if math.isfinite(sigma) else math.exp(min(log_sigma, 709))) * math.log1p(-F1)
        p_gt = math.exp(lp) if lp > -745 else 0.0
    if err > 10 * tol * max(total, 1e-300) + 1e-14 * scale:
        total = _min_tail_expectation_v(W, sigma, tol)
    return total, p_gt


def _min_tail_expectation_v(W: WeightDist, sigma: float, tol: float) -> float:
    """int_0^1 Pr{W > t}^sigma dt after t = exp(-v); used when the level-space integrand is too sharp."""
    def h(v: float) -> float:
        F = float(W.cdf(math.exp(-v)))
        if F >= 1.0:
            return 0.0
        lg = -v + sigma * math.log1p(-F)
        return math.exp(lg) if lg > -745 else 0.0

    pts = [0.0] + [2.0**k for k in range(-3, 10)] + [800.0]
    total, err = 0.0, 0.0
    for a, b in zip(pts, pts[1:]):
        v, e = _quad(h, a, b, epsabs=0.0, epsrel=tol, limit=200)
        total += v
        err += e
    if err > 10 * tol * max(total, 1e-300) + 1e-300:
        raise ArithmeticError(f"quadrature error {err:.2e} above tolerance")
    return total


def sigma_three_series(W: WeightDist, sigma: SigmaSeq, N: int = 60, quad_tol: float = 1e-8) -> CriterionReport:
    """Both conditions of the three-series characterisation of sigma-summability.

    A verdict of ``ExplodesCertified`` here means the sum of level minima is
    a.s. finite (sigma-summable); ``NoExplosionCertified`` means it is not.
    """
    n_avail = sigma.available(N)
    cond_i, cond_ii = [], []
    try:
        for n in range(1, n_avail + 1):
            e, p = _min_tail_expectation(W, sigma.log(n), quad_tol)
            cond_i.append(math.log(p) if p > 0 else -math.inf)
            cond_ii.append(math.log(e) if e > 0 else -math.inf)
    except ArithmeticError as exc:
        return CriterionReport(UNDETERMINED, math.nan, [], len(cond_ii), f"quadrature failed: {exc}")
    r1 = certify_series(cond_i, True, label="sum Pr{W>1}^sigma_n")
    r2 = certify_series(cond_ii, W.smooth_tail or W.atom_at_zero == 0, label="sum int_0^1 Pr{W>t}^sigma_n dt")
    # a constant positive integral (weights bounded below) diverges for any family
    if r2.verdict == UNDETERMINED and len(cond_ii) >= 2 * MIN_WINDOW:
        tail = np.asarray(cond_ii[len(cond_ii) // 2:])
        if np.all(np.isfinite(tail)) and np.ptp(tail) < 1e-9:
            r2 = CriterionReport(NO_EXPLOSION, r2.partial_sum, r2.term_ratios, r2.truncation_index,
                                 "integral terms constant and positive; diverges", r2.term_table)
    if r1.verdict == EXPLODES and r2.verdict == EXPLODES:
        verdict = EXPLODES
    elif NO_EXPLOSION in (r1.verdict, r2.verdict):
        verdict = NO_EXPLOSION
    else:
        verdict = UNDETERMINED
    if verdict == NO_EXPLOSION and sigma.lower_bound_from is not None and sigma.lower_bound_from <= n_avail:
        verdict = UNDETERMINED  # a lower bound on sigma cannot certify divergence
    return CriterionReport(verdict, r2.partial_sum, r2.term_ratios, n_avail,
                           f"(i) {r1.certificate}; (ii) {r2.certificate}", r2.term_table,
                           {"condition_i": r1.verdict, "condition_ii": r2.verdict,
                            "condition_i_sum": r1.partial_sum})


def sigma_corollary(W: WeightDist, sigma: SigmaSeq, N: int = 60, min_ratio: float = 1.0 + 1e-9,
                    cross_check: bool = True, quad_tol: float = 1e-8) -> CriterionReport:
    """sum_n F_W^{-1}(1/sigma_n) for sequences with sigma_{n+1} >= c sigma_n, c > 1."""
    n_avail = sigma.available(N)
    logs = [sigma.log(n) for n in range(1, n_avail + 1)]
    steps = np.diff(logs)
    half = len(steps) // 2
    # a geometric sequence keeps its log-steps; c*n has steps decaying like 1/n
    decaying = half >= 1 and float(np.min(steps[half:])) < 0.9 * float(np.min(steps[:half]))
    if half < 1 or decaying or float(np.min(steps[half:])) < math.log(min_ratio):
        raise PreconditionError("sigma is not verified to grow geometrically on the prefix; "
                                "use sigma_three_series instead")
    log_c = float(np.min(steps[half:]))
    terms = [W.quantile_log(-ls) for ls in logs]
    rep = certify_series(terms, W.smooth_tail, label="sum F_W^-1(1/sigma_n)")
    if sigma.lower_bound_from is not None and sigma.lower_bound_from <= n_avail:
        rep.certificate += f"; sigma_n is a lower bound from n = {sigma.lower_bound_from}"
        if rep.verdict == NO_EXPLOSION:
            rep.verdict = UNDETERMINED
    rep.extra["growth_ratio_log"] = log_c
    rep.extra["growth_ratio"] = math.exp(log_c) if log_c < 709.0 else math.inf
    if cross_check:
        other = sigma_three_series(W, sigma, n_avail, quad_tol)
        rep.extra["three_series_verdict"] = other.verdict
        if rep.certified and other.certified and other.verdict != rep.verdict:
            rep.certificate += f"; DISAGREES with three-series test ({other.verdict})"
            rep.verdict = UNDETERMINED
        else:
            rep.certificate += f"; three-series cross-check: {other.verdict}"
    return rep


# ---------------------------------------------------------------------------
# Related-work criteria
# ---------------------------------------------------------------------------

_HARRIS_REFERENCE: dict = {}


def _harris_terms(Z: OffspringDist, N: int) -> np.ndarray:
    r = np.arange(0, N + 1, dtype=float)
    cum = np.cumsum(Z.survival_array(r))
    n = np.arange(1, N + 1, dtype=float)
    return 1.0 / (n * cum[1:])


def _harris_classify(terms: np.ndarray) -> tuple[bool | None, dict]:
    N = len(terms)
    n = np.arange(1, N + 1, dtype=float)
    lo = max(N // 100, 10)
    sel = slice(lo, N)
    slope = float(np.polyfit(np.log(n[sel]), np.log(terms[sel]), 1)[0])
    g = n * terms
    diag = {"power_exponent": -slope, "n_t_n_min": float(g[N // 2:].min()), "n_t_n_last": float(g[-1])}
    # power-law decay faster than 1/n over two decades
    if -slope > 1.05:
        p = -slope
        diag["tail_bound"] = float(terms[-1] * N / (p - 1.0))
        return True, diag
    g_slope = float(np.polyfit(np.log(n[N // 2:]), np.log(g[N // 2:]), 1)[0])
    diag["n_t_n_slope"] = g_slope
    if g[N // 2:].min() > 0 and g_slope >= SLOPE_TOL:
        return False, diag
    return None, diag


def harris_orientation(N: int = 10**6) -> str:
    """Calibrate which side of the exponential-weight series means explosion.

    The reference pair (PowerTail(1/2), Exponential(1)) is certified
    explosive by ``minsum_criterion``; whichever series behaviour it shows
    is taken to mean explosion.
    """
    if N in _HARRIS_REFERENCE:
        return _HARRIS_REFERENCE[N]
    from .distributions import Exponential, PowerTail

    ref = minsum_criterion(PowerTail(0.5), Exponential(1.0))
    conv, _ = _harris_classify(_harris_terms(PowerTail(0.5), N))
    if ref.verdict != EXPLODES or conv is None:
        orient = "unknown"
    else:
        orient = "convergent_means_explosion" if conv else "divergent_means_explosion"
    _HARRIS_REFERENCE[N] = orient
    return orient


def harris_series(Z: OffspringDist, N: int = 10**6) -> CriterionReport:
    """sum_n 1/(n sum_{r<=n} Pr{Z > r}) for exponential weights, both orientations reported."""
    if N < 1:
        raise ValueError("N must be positive")
    terms = _harris_terms(Z, N)
    partial = math.fsum(terms)
    table = [{"n": i + 1, "term": float(terms[i])} for i in range(min(N, 50))]
    ratios = [float(x) for x in (terms[1:min(N, 50)] / terms[:min(N, 50) - 1])] if N > 1 else []
    if N < 100:
        return CriterionReport(UNDETERMINED, partial, ratios, N, "too few terms to classify the series", table,
                               {"series": "undetermined"})
    conv, diag = _harris_classify(terms)
    orient = harris_orientation()
    series_state = {True: "converges", False: "diverges", None: "undetermined"}[conv]
    verdict = UNDETERMINED
    if conv is not None and orient != "unknown":
        explodes = conv if orient == "convergent_means_explosion" else not conv
        verdict = EXPLODES if explodes else NO_EXPLOSION
    cert = (f"exponential weights assumed; series {series_state}; calibrated orientation: {orient}; "
            f"literal reading (no explosion iff series < inf) would give "
            f"{'NoExplosion' if conv else 'Explosion' if conv is False else 'nothing'}")
    extra = {"series": series_state, "orientation": orient,
             "verdict_if_convergent_means_explosion": (EXPLODES if conv else NO_EXPLOSION) if conv is not None else UNDETERMINED,
             "verdict_if_convergent_means_no_explosion": (NO_EXPLOSION if conv else EXPLODES) if conv is not None else UNDETERMINED,
             **diag}
    if conv:
        partial += diag["tail_bound"]
    return CriterionReport(verdict, partial, ratios, N, cert, table, extra)


@dataclass
class RegularityResult:
    liminf_est: float
    limsup_est: float
    holds: bool
    ratios: list
    log_t: list
    note: str = ""


def vatutin_regularity(W: WeightDist, lam: float = 0.5, t_grid: Sequence[float] | None = None,
                       margin: float = 0.02, log_t_grid: Sequence[float] | None = None) -> RegularityResult:
    """Ratio F_W^{-1}(lam t)/F_W^{-1}(t) along t -> 0 (grid given as t or as log t)."""
    if not 0 < lam < 1:
        raise ValueError("lam must lie in (0, 1)")
    if log_t_grid is None:
        if t_grid is None:
            log_t_grid = [-float(k) for k in np.linspace(2.0, 600.0, 120)]
        else:
            log_t_grid = [math.log(t) for t in t_grid]
    lts = list(log_t_grid)
    if any(b >= a for a, b in zip(lts, lts[1:])):
        raise ValueError("t grid must decrease")
    ratios, used, note = [], [], ""
    for lt in lts:
        a, b = W.quantile_log(lt + math.log(lam)), W.quantile_log(lt)
        if not (math.isfinite(a) and math.isfinite(b)):
            note = f"quantile underflow at log t = {lt:.4g}; grid truncated"
            break
        ratios.append(math.exp(a - b))
        used.append(lt)
    if len(ratios) < 4:
        return RegularityResult(math.nan, math.nan, False, ratios, used, note or "too few grid points")
    win = ratios[len(ratios) // 2:]
    lo, hi = min(win), max(win)
    holds = margin < lo and hi < 1.0 - margin
    return RegularityResult(lo, hi, holds, ratios, used, note)


def vatutin_integral(Z: OffspringDist, W: WeightDist, eps_upper: float = 0.5, quad_tol: float = 1e-9,
                     blocks: int = 48) -> CriterionReport:
    """int_0^eps F_W^{-1}(s/K_Z(s)) ds/s, evaluated in unit blocks of t = log(1/s)."""
    if not 0 < eps_upper <= 1:
        raise ValueError("eps_upper must lie in (0, 1]")
    reg = vatutin_regularity(W)
    t0 = -math.log(eps_upper)

    def integrand(t: float) -> float:
        s = math.exp(-t)
        K = k_function(Z, s, direct_terms=4096)
        return math.exp(W.quantile_log(-t - math.log(K)))

    logs, worst = [], 0.0
    try:
        for k in range(blocks):
            v, e = _quad(integrand, t0 + k, t0 + k + 1, epsabs=0.0, epsrel=quad_tol, limit=100)
            logs.append(math.log(v) if v > 0 else -math.inf)
            worst = max(worst, e / v if v > 0 else 0.0)
    except KSeriesError as exc:
        return CriterionReport(UNDETERMINED, math.nan, [], len(logs), f"K_Z evaluation failed: {exc}")
    if worst > 1e-4:
        return CriterionReport(UNDETERMINED, math.nan, [], len(logs),
                               f"block quadrature relative error {worst:.1e} too large")
    rep = certify_series(logs, W.smooth_tail, start_index=1, label="unit blocks of int F_W^-1(s/K(s)) ds/s")
    rep.extra.update({"max_block_rel_err": worst, "regularity_holds": reg.holds, "regularity_liminf": reg.liminf_est,
                      "regularity_limsup": reg.limsup_est, "eps_upper": eps_upper})
    if not reg.holds:
        rep.certificate = "INAPPLICABLE (regularity condition fails); " + rep.certificate
    return rep


def bramson_sigma(p: float, lam: float, n: int) -> float:
    return p + (1.0 - p) * math.exp(-(lam**n))


def bramson_criterion(W: WeightDist, lam_grid: Sequence[float] = (1.5, 2.0, 4.0, 8.0),
                      N: int = 200) -> CriterionReport:
    """sum_n F_W^{-1}(p + (1-p) e^{-lam^n}) for each lam in the grid."""
    p = W.atom_at_zero
    if not 0 < p < 1:
        raise PreconditionError("weight must have an atom at zero with mass in (0, 1)")
    per_lam = {}
    reports = []
    for lam in lam_grid:
        n_max = min(N, int(math.log(1e300) / math.log(lam)))
        logs = [W.quantile_above_atom_log(-(lam**n)) for n in range(1, n_max + 1)]
        rep = certify_series(logs, W.smooth_tail, label=f"lambda={lam}")
        per_lam[str(lam)] = rep.verdict
        reports.append((lam, rep))
    conv = [(lam, r) for lam, r in reports if r.verdict == EXPLODES]
    if conv:
        lam, r = conv[0]
        verdict, chosen = EXPLODES, r
        cert = f"converges for lambda={lam}: {r.certificate}"
    elif all(r.verdict == NO_EXPLOSION for _, r in reports):
        verdict, chosen = NO_EXPLOSION, reports[0][1]
        cert = "diverges for every lambda in the grid " + str(list(lam_grid))
    else:
        verdict, chosen = UNDETERMINED, reports[0][1]
        cert = "no lambda in the grid gave a certified verdict"
    cert += f"; finite lambda grid {list(lam_grid)} stands in for 'some lambda > 1'"
    return CriterionReport(verdict, chosen.partial_sum, chosen.term_ratios, chosen.truncation_index, cert,
                           chosen.term_table, {"per_lambda": per_lam, "p": p})
