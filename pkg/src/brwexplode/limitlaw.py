"""Normalizing sums for M_n, ratio studies, generation-size speeds and the critical-case normalization."""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass, field, replace
from typing import Sequence

import numpy as np

from .criteria import NO_EXPLOSION, PreconditionError, minsum_criterion
from .distributions import OffspringDist, WeightDist
from .findpath import findpath_runs
from .gwsim import SimConfig, bracket_displacement, grow_generations

PASS, FAIL, INCONCLUSIVE = "PASS", "FAIL", "INCONCLUSIVE"


@dataclass
class Normalization:
    terms: list
    total: float
    underflow_index: int | None  # first k whose term was set to 0


def normalization_terms(W: WeightDist, eps: float, n: int, shift: int = 0) -> Normalization:
    """Terms F_W^{-1}(exp(-(1+eps)^(k+shift))) for k = 1..n.

    A term whose quantile is not representable is set to 0 and the first
    such index is reported.
    """
    if not eps > 0:
        raise ValueError("eps must be positive")
    if n < 0:
        raise ValueError("n must be nonnegative")
    terms, under = [], None
    lg = math.log1p(eps)
    for k in range(1, n + 1):
        e = (k + shift) * lg
        t = math.exp(W.quantile_log(-math.exp(e))) if e < 709.0 else 0.0
        if t == 0.0 and under is None:
            under = k
        terms.append(t)
    return Normalization(terms, math.fsum(terms), under)


def normalization_sum(W: WeightDist, eps: float, n: int) -> float:
    return normalization_terms(W, eps, n).total


def _summary(x: np.ndarray) -> dict:
    x = x[np.isfinite(x)]
    if not len(x):
        return {"n": 0}
    q10, q50, q90 = np.quantile(x, [0.1, 0.5, 0.9])
    return {"n": int(len(x)), "mean": float(x.mean()), "q10": float(q10), "median": float(q50), "q90": float(q90)}


@dataclass
class RatioStudy:
    depths: list
    per_depth: list = field(default_factory=list)
    trend_lower: float = math.nan  # slope of median lower ratio against depth
    trend_upper: float = math.nan
    slope_range: tuple = (math.nan, math.nan)  # bounds on the slope of the true median ratio
    interval_verdict: str = INCONCLUSIVE
    trend_verdict: str = INCONCLUSIVE
    truncated_reps: int = 0
    notes: list = field(default_factory=list)

    def to_dict(self) -> dict:
        return asdict(self)

    def csv_rows(self) -> list:
        return [{
            "depth": d["depth"],
            "median_ratio_lower": d["ratio_lower"].get("median"),
            "median_ratio_upper": d["ratio_upper"].get("median"),
            "q10": d["ratio_lower"].get("q10"),
            "q90": d["ratio_upper"].get("q90"),
            "normalization": d["normalization"],
            "exact_fraction": d["exact_fraction"],
        } for d in self.per_depth]


def _interval_verdict(lo: float, hi: float, band=(0.5, 1.5)) -> str:
    if band[0] <= lo and hi <= band[1]:
        return PASS
    if hi < band[0] or lo > band[1]:
        return FAIL
    return INCONCLUSIVE


def _slope_range(x: Sequence[float], lo: Sequence[float], hi: Sequence[float]) -> tuple:
    """Least and greatest least-squares slope over all y with lo <= y <= hi."""
    x = np.asarray(x, dtype=float)
    c = (x - x.mean()) / np.sum((x - x.mean()) ** 2)
    lo, hi = np.asarray(lo, dtype=float), np.asarray(hi, dtype=float)
    return float(np.sum(np.minimum(c * lo, c * hi))), float(np.sum(np.maximum(c * lo, c * hi)))


def _trend_verdict(slope_range: tuple, last_lo: float, last_hi: float, tol: float = 1e-9) -> str:
    """PASS when every slope in range moves the ratio toward 1, FAIL when none does."""
    smin, smax = slope_range
    if abs(last_lo - 1.0) <= tol and abs(last_hi - 1.0) <= tol:
        return PASS
    if last_lo > 1.0:
        return PASS if smax < 0 else FAIL if smin >= 0 else INCONCLUSIVE
    if last_hi < 1.0:
        return PASS if smin > 0 else FAIL if smax <= 0 else INCONCLUSIVE
    return INCONCLUSIVE


def mn_ratio_study(Z: OffspringDist, W: WeightDist, eps: float, depths: Sequence[int], config: SimConfig,
                   width: int = 4096, check_precondition: bool = True, band=(0.5, 1.5)) -> RatioStudy:
    """M_n divided by the normalizing sum, as a two-sided bracket per depth.

    Every rep is one tree searched to the largest depth, so all depths
    share random numbers.  Levels the best-first search settles are exact;
    the rest are bounded below by the search frontier and above by a beam
    of ``width`` paths.  Medians of the bounds bracket the median ratio, so
    the interval verdict compares both with ``band`` and the trend verdict
    uses the range of fitted slopes those brackets allow.
    """
    depths = sorted(int(d) for d in depths)
    if check_precondition:
        rep = minsum_criterion(Z, W)
        if rep.verdict != NO_EXPLOSION:
            raise PreconditionError(f"ratio study needs a non-explosive pair; criterion says {rep.verdict}")
    cfg = replace(config, depth=max(depths))
    recs = bracket_displacement(Z, W, cfg, width)
    L = np.array([r.lower for r in recs], dtype=float)
    U = np.array([r.upper for r in recs], dtype=float)
    E = np.array([r.exact for r in recs], dtype=bool)
    norm = normalization_terms(W, eps, max(depths))
    cum = np.cumsum([0.0] + norm.terms)
    study = RatioStudy(depths, truncated_reps=int(sum(r.truncated for r in recs)))
    if norm.underflow_index is not None:
        study.notes.append(f"normalization terms underflow from k = {norm.underflow_index}")
    med_lo, med_hi = [], []
    for d in depths:
        rl, ru = L[:, d] / cum[d], U[:, d] / cum[d]
        study.per_depth.append({
            "depth": d, "normalization": float(cum[d]),
            "mn_lower": _summary(L[:, d]), "mn_upper": _summary(U[:, d]),
            "ratio_lower": _summary(rl), "ratio_upper": _summary(ru),
            "exact_fraction": float(E[:, d].mean()),
        })
        med_lo.append(float(np.median(rl)))
        med_hi.append(float(np.median(ru)))
    study.interval_verdict = _interval_verdict(med_lo[-1], med_hi[-1], band)
    if len(depths) >= 2:
        study.trend_lower = float(np.polyfit(depths, med_lo, 1)[0])
        study.trend_upper = float(np.polyfit(depths, med_hi, 1)[0])
        study.slope_range = _slope_range(depths, med_lo, med_hi)
        study.trend_verdict = _trend_verdict(study.slope_range, med_lo[-1], med_hi[-1])
    if study.truncated_reps:
        study.notes.append(f"{study.truncated_reps} reps hit the offspring cap")
    return study


# ---------------------------------------------------------------------------
# Generation sizes against h(n) = exp((1+eps)^n)
# ---------------------------------------------------------------------------


@dataclass
class AdditiveSpeedReport:
    eps: float
    window: tuple  # audited levels (first, last)
    e_r: dict  # r -> empirical Pr{E_r}
    v_hat_median: list  # median of (1+eps)^-n log(Z_n + 1) per level
    v_step_median: list  # median |V_{n+1} - V_n| per level
    survival_fraction: float
    flagged: bool
    notes: list = field(default_factory=list)

    def to_dict(self) -> dict:
        d = asdict(self)
        d["e_r"] = {str(k): v for k, v in self.e_r.items()}
        return d


def additive_speed_check(Z: OffspringDist, eps: float, r_grid: Sequence[int], depth: int, config: SimConfig,
                         first_level: int = 1) -> AdditiveSpeedReport:
    """Empirical Pr{h(n-r) <= Z_n <= h(n+r) for all audited n} and the stabilization of V_n."""
    out = grow_generations(Z, replace(config, depth=depth))
    S = np.array([r.sizes_log for r in out.per_rep], dtype=float)
    alive = S[:, depth] > -np.inf
    notes = []
    last = depth
    # overflowed or unknown log sizes cannot be audited
    while last >= first_level and not np.all(np.isfinite(S[alive, last])):
        last -= 1
    flagged = last < depth
    if flagged:
        notes.append(f"window shrunk to end at level {last}: log sizes not representable beyond")
    lg = math.log1p(eps)
    n = np.arange(depth + 1)
    with np.errstate(over="ignore", invalid="ignore"):
        logZ1 = np.logaddexp(S, 0.0)  # log(Z_n + 1)
        V = logZ1 * np.exp(-n * lg)
    e_r = {}
    window = n[first_level: last + 1]
    for r in r_grid:
        lo = np.exp((window - r) * lg)
        hi = np.exp((window + r) * lg)
        seg = S[:, first_level: last + 1]
        with np.errstate(invalid="ignore"):
            ok = np.all((seg >= lo) & (seg <= hi), axis=1)
        e_r[int(r)] = float(np.mean(ok & alive))
    Va = V[alive]
    v_med = [float(np.median(Va[:, k])) if len(Va) else math.nan for k in range(depth + 1)]
    steps = np.abs(np.diff(Va, axis=1)) if len(Va) else np.empty((0, depth))
    step_med = [float(np.median(steps[:, k])) if len(steps) else math.nan for k in range(depth)]
    if any(any(r.truncated) for r in out.per_rep):
        notes.append("some sizes were aggregated above the offspring cap")
    return AdditiveSpeedReport(eps, (first_level, int(last)), e_r, v_med, step_med,
                               float(alive.mean()), flagged, notes)


# ---------------------------------------------------------------------------
# Critical-case normalization
# ---------------------------------------------------------------------------


def bramson_steps(n: float, log_base: float = math.e) -> int:
    """s(n) = ceil(log log n / log 2) with logarithms to ``log_base``."""
    if n < 3:
        raise ValueError("n must be at least 3")
    lb = math.log(log_base)
    inner = math.log(n) / lb
    if inner <= 0:
        raise ValueError("log n must be positive in the chosen base")
    v = (math.log(inner) / lb) / (math.log(2.0) / lb)
    # exact integers such as log2 log2 16 = 2 must not round up
    r = round(v)
    return int(r) if abs(v - r) <= 1e-12 * max(1.0, abs(v)) else math.ceil(v)


def bramson_normalization(W: WeightDist, lam: float, n: float, log_base: float = math.e) -> tuple[int, float]:
    """(s(n), sum_{k <= s(n)} F_W^{-1}(p + (1-p) exp(-lam^k)))."""
    p = W.atom_at_zero
    if not 0 < p < 1:
        raise ValueError("W must have an atom at zero with mass in (0, 1)")
    s = bramson_steps(n, log_base)
    total = math.fsum(math.exp(W.quantile_above_atom_log(-(lam**k))) for k in range(1, s + 1))
    return s, total


# ---------------------------------------------------------------------------
# Option growth under a modified FindPath exponent
# ---------------------------------------------------------------------------


def delta_sensitivity(Z: OffspringDist, W: WeightDist, eps: float, deltas: Sequence[float], generations: int,
                      config: SimConfig, start: int = 1) -> list:
    """For alpha = (1+eps)^-delta, the fraction of runs with log X_n >= (1+eps)^((1-delta)n) for n >= start."""
    out = []
    lg = math.log1p(eps)
    for delta in deltas:
        alpha = math.exp(-delta * lg)
        recs = findpath_runs(Z, W, alpha, generations, config)
        good = 0
        for rec in recs:
            ok = rec.failed_at_level is None
            for row in rec.per_level:
                if ok and row.n >= start:
                    ok = row.Xn > 0 and math.log(row.Xn) >= math.exp((1.0 - delta) * row.n * lg)
            good += ok
        weights = np.array([rec.per_level[-1].partial_sum for rec in recs if rec.failed_at_level is None])
        out.append({"delta": float(delta), "alpha": alpha, "fraction": good / len(recs),
                    "median_path_weight": float(np.median(weights)) if len(weights) else math.nan})
    return out
