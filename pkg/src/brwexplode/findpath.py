"""Greedy option-restricted descent and audits of its growth inequalities."""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass, field
from typing import Sequence

import numpy as np
from scipy.stats import binomtest

from .criteria import PreconditionError, SpeedSeq, speed_f
from .distributions import LogReal, OffspringDist, WeightDist, open_uniform, stream
from .gwsim import SimConfig, aggregate_log_sum, map_reps, sample_level_min

EXACT_LIMIT = 2.0**53


@dataclass
class LevelRecord:
    n: int
    Yn: int | None  # children of the current node (None when only its log is tracked)
    Yn_log: float
    Xn: int | float
    chosen_weight: float
    partial_sum: float
    lookahead: int | None  # child count drawn for the chosen option
    lookahead_log: float
    approximate: bool


@dataclass
class PathRecord:
    alpha: float
    per_level: list = field(default_factory=list)
    failed_at_level: int | None = None

    def to_dict(self) -> dict:
        d = asdict(self)
        for row in d["per_level"]:
            for k, v in row.items():
                if isinstance(v, float) and not math.isfinite(v):
                    row[k] = None
        return d


def option_count(Y: int, alpha: float) -> int:
    return math.ceil(Y ** (1.0 - alpha) / 2.0)


def option_count_log(logY: float, alpha: float) -> float:
    return float(math.ceil(math.exp((1.0 - alpha) * logY) / 2.0))


def alpha_default(eps: float) -> float:
    return (1.0 + eps) ** -0.5


def jth_largest_log(Z: OffspringDist, logY: float, J: float, rng: np.random.Generator) -> float:
    """log of the J-th largest of Y i.i.d. copies of Z, via 1 - U_(J) ~ Beta(J, Y - J + 1)."""
    gJ = rng.gamma(J)
    rest_shape = math.exp(logY) - J + 1.0 if logY < 700 else math.inf
    if rest_shape < 1e15:
        g_rest = rng.gamma(rest_shape)
        log_tail = math.log(gJ) - math.log(gJ + g_rest)
    else:
        # a Gamma(k) with k >= 1e15 equals k to 8 significant digits
        log_tail = math.log(gJ) - (logY if not math.isfinite(rest_shape) else math.log(rest_shape + gJ))
    return Z.quantile_log(-log_tail)


def _log_of(Y: int) -> float:
    return math.log(Y) if Y > 0 else -math.inf


def run_findpath(Z: OffspringDist, W: WeightDist, alpha: float, generations: int,
                 rng: np.random.Generator, offspring_cap: int = 10**5) -> PathRecord:
    """One FindPath descent of ``generations`` levels.

    Children are ranked by their own child counts, ties broken by draw
    order (stable sort); above ``offspring_cap`` children the chosen option
    is sampled through order statistics instead of explicit draws.
    """
    if not 0 < alpha < 1:
        raise ValueError("alpha must lie in (0, 1)")
    rec = PathRecord(alpha)
    counts, _ = Z.sample(rng, 1)
    Y: int | None = int(counts[0])
    logY = _log_of(Y)
    total = 0.0
    for n in range(1, generations + 1):
        if Y is not None and Y <= offspring_cap:
            X = option_count(Y, alpha)
            if X == 0:
                rec.failed_at_level = n
                rec.per_level.append(LevelRecord(n, Y, logY, 0, math.nan, total, None, math.nan, False))
                return rec
            look, _ = Z.sample(rng, Y)
            order = np.argsort(-look, kind="stable")
            options = order[:X]
            w = W.sample(rng, X)
            pick = int(np.argmin(w))
            weight = float(w[pick])
            nxt_f = float(look[options[pick]])
            nxt = int(nxt_f) if nxt_f < EXACT_LIMIT else None
            nxt_log = math.log(nxt_f) if nxt_f > 0 else -math.inf
            approx = False
        else:
            X = option_count_log(logY, alpha)
            J = float(math.ceil(X * float(open_uniform(rng))))
            weight = sample_level_min(W, math.log(X), rng)
            nxt_log = jth_largest_log(Z, logY, J, rng)
            nxt = int(round(math.exp(nxt_log))) if nxt_log < math.log(EXACT_LIMIT) else None
            approx = True
        total += weight
        rec.per_level.append(LevelRecord(n, Y, logY, X, weight, total, nxt, nxt_log, approx))
        Y, logY = nxt, nxt_log
    return rec


def findpath_runs(Z: OffspringDist, W: WeightDist, alpha: float, generations: int,
                  config: SimConfig) -> list:
    def one(rep: int) -> PathRecord:
        return run_findpath(Z, W, alpha, generations, stream(config.seed, "findpath", rep),
                            config.offspring_cap)
    return map_reps(one, config.reps, config.threads)


def growth_shift(alpha: float, eps: float) -> int:
    """gamma = 2 ceil(log(1/(1-alpha)) / log(1+eps)) + 1."""
    return 2 * math.ceil(math.log(1.0 / (1.0 - alpha)) / math.log(1.0 + eps)) + 1


def option_growth_check(records: Sequence[PathRecord], f: SpeedSeq, gamma: int) -> float:
    """Fraction of runs with X_n >= f(n - gamma) at every recorded level with n >= gamma."""
    if not records:
        return math.nan
    good = 0
    for rec in records:
        ok = True
        for row in rec.per_level:
            k = row.n - gamma
            if k < 0:
                continue
            if k >= len(f.values):
                break
            X = row.Xn
            if X <= 0 or math.log(X) < f.values[k] - 1e-12 * max(1.0, f.values[k]):
                ok = False
                break
        # a run that died has no option at later levels
        good += ok and rec.failed_at_level is None
    return good / len(records)


# ---------------------------------------------------------------------------
# Inequality audit
# ---------------------------------------------------------------------------


def wilson_upper(k: int, n: int, level: float = 0.95) -> float:
    return float(binomtest(k, n).proportion_ci(confidence_level=level, method="wilson").high)


def _conditioned_count_log(Z: OffspringDist, log_lo: float, log_hi: float, rng: np.random.Generator) -> float:
    """log of a draw of Z conditioned on exp(log_lo) <= Z <= exp(log_hi) (log_hi may be inf)."""
    s_hi = Z.log_tail_ge(log_lo)  # log Pr{Z >= lo}
    if math.isinf(log_hi):
        L = -math.log(float(open_uniform(rng))) - s_hi
    else:
        s_lo = Z.log_survival(LogReal(log_hi))
        # 1 - u uniform on (Pr{Z > hi}, Pr{Z >= lo})
        v = float(open_uniform(rng))
        a, b = math.exp(s_lo - s_hi), 1.0
        L = -(s_hi + math.log(a + v * (b - a)))
    return Z.quantile_log(L)


@dataclass
class AuditRow:
    n: int
    event: str  # "A" (Y_{n+1} < f(n+1)) or "B" (Z_{n+1} > f(a(n+1)))
    bound: float
    events: int
    trials: int
    frequency: float
    ucb: float
    passed: bool | None
    audited: bool
    note: str = ""


def audit_multiplier(eps: float) -> int:
    """a = 3 + 2 ceil(log 2 / log(1 + eps))."""
    return 3 + 2 * math.ceil(math.log(2.0) / math.log(1.0 + eps))


def inequality_audit(Z: OffspringDist, alpha: float | None, eps: float, levels: Sequence[int] = (1, 2, 3),
                     reps: int = 10**5, config: SimConfig | None = None, f: SpeedSeq | None = None) -> list:
    """Monte Carlo check of the two one-step failure bounds with Wilson upper limits.

    For A the current count Y_n is drawn from Z given Z >= f(n) (at n = 1
    from Z given f(1) <= Z <= f(a)).  For B the current generation size is
    set to the largest value allowed by the conditioning, f(an), which
    maximises the chance of B_{n+1}; at n = 1 Z_1 is drawn as for A.
    """
    config = config or SimConfig()
    alpha = alpha if alpha is not None else alpha_default(eps)
    a = audit_multiplier(eps)
    try:
        if f is None:
            f = speed_f(Z, eps, a * (max(levels) + 1) + 1)
    except PreconditionError as exc:
        return [AuditRow(n, ev, math.nan, 0, 0, math.nan, math.nan, None, False, f"unaudited: {exc}")
                for n in levels for ev in "AB"]
    fv = f.values

    def flog(k: int) -> float:
        return fv[k] if k < len(fv) else math.inf

    rows = []
    for n in levels:
        bound = 1.0 / 16.0 if n == 1 else 4.0 ** (-n - 1)
        if n == 1:
            p_cond = _mass_between(Z, flog(1), flog(a))
        else:
            p_cond = math.exp(Z.log_tail_ge(flog(n)))
        if not (0.0 < p_cond) or math.isinf(flog(n + 1)) or math.isinf(flog(a * (n + 1))):
            note = "conditioning event has probability 0" if p_cond <= 0 else "speed not representable"
            rows += [AuditRow(n, ev, bound, 0, 0, math.nan, math.nan, None, False, "unaudited: " + note) for ev in "AB"]
            continue
        if n == 1 and p_cond >= 1.0:
            rows += [AuditRow(n, ev, bound, 0, 0, math.nan, math.nan, None, False,
                              "unaudited: conditioning event is certain") for ev in "AB"]
            continue
        rngA = stream(config.seed, f"audit/A/{n}", 0)
        rngB = stream(config.seed, f"audit/B/{n}", 0)
        hitsA = hitsB = 0
        for _ in range(reps):
            lo, hi = (flog(1), flog(a)) if n == 1 else (flog(n), math.inf)
            logY = _conditioned_count_log(Z, lo, hi, rngA)
            X = option_count_log(logY, alpha)
            J = float(math.ceil(X * float(open_uniform(rngA))))
            nxt = jth_largest_log(Z, logY, J, rngA)
            hitsA += nxt < flog(n + 1)
            logZn = _conditioned_count_log(Z, lo, hi, rngB) if n == 1 else flog(a * n)
            hitsB += aggregate_log_sum(Z, logZn, rngB) > flog(a * (n + 1))
        for ev, hits in (("A", hitsA), ("B", hitsB)):
            ucb = wilson_upper(hits, reps)
            rows.append(AuditRow(n, ev, bound, hits, reps, hits / reps, ucb, ucb <= bound, True,
                                 "tail-conditioned Y_n" if ev == "A" else "boundary Z_n = f(an)" if n > 1 else "Z_1 | C"))
    return rows


def _mass_between(Z: OffspringDist, log_lo: float, log_hi: float) -> float:
    """Pr{lo <= Z <= hi}."""
    ge_lo = math.exp(Z.log_tail_ge(log_lo))
    gt_hi = math.exp(Z.log_survival(LogReal(log_hi)))
    return max(ge_lo - gt_hi, 0.0)
