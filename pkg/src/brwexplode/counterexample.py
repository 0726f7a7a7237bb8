"""Log-space construction of an offspring law whose explosion class differs from min-summability.

Generation growth comes in periods: period i lasts about 2 n_i generations
and multiplies the size by m_i per generation.  Everything is kept as
natural logarithms in mpmath so that the astronomically large parameters
stay exact enough to audit the inequalities that drive the construction.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Sequence

import mpmath
from mpmath import mpf

from .criteria import SpeedSeq
from .distributions import Atomic, PiecewiseTail

mpmath.mp.dps = 60

LOG_LIMIT = mpf(10) ** 5000  # logs beyond this are treated as unrepresentable
LN2 = mpmath.log(2)
LN16 = mpmath.log(16)
FLOAT_LOG_LIMIT = 1e300


def toy_n_seq(count: int = 4) -> list:
    """4, 64, 5184, ...: n_{i+1} = (N_i + 4)^2 puts ceil(sqrt n_{i+1}) four steps into its own period."""
    seq, total = [4], 4
    while len(seq) < count:
        nxt = (total + 4) ** 2
        seq.append(nxt)
        total += nxt
    return seq


def large_n_seq(count: int = 4) -> list:
    """n_i = 10^(10^i)."""
    return [10 ** (10**i) for i in range(1, count + 1)]


def _s(x) -> str:
    return mpmath.nstr(x, 17) if isinstance(x, mpmath.mpf) else str(x)


@dataclass
class CounterexampleSpec:
    n_seq: list  # period lengths n_i (python ints)
    log_m: list  # log m_i
    N: list  # N_j = n_1 + ... + n_j
    log_M: list  # log M_j, j >= 1
    log_L: list  # log L_j = log m_j + log M_{j-1}
    eps: list  # 1 / (10 n_i)
    truncated_at: int | None = None  # first period dropped for overflow
    violations: list = field(default_factory=list)
    checks: dict = field(default_factory=dict)

    @property
    def periods(self) -> int:
        return len(self.log_m)

    def log_f(self, n) -> mpf | None:
        """log f(n) = log L_{i+1} + (2(n - N_i) - 1) log m_{i+1} for N_i < n <= N_{i+1}."""
        if n < 1:
            return None
        prev = 0
        for i in range(self.periods):
            if n <= self.N[i]:
                return self.log_L[i] + (2 * (mpf(n) - prev) - 1) * self.log_m[i]
            prev = self.N[i]
        return None

    def speed_descriptor(self) -> dict:
        return {
            "form": "f(n) = L_{i+1} * m_{i+1}^(2(n - N_i) - 1) for N_i < n <= N_{i+1}",
            "N": [str(v) for v in self.N],
            "log_L": [_s(v) for v in self.log_L],
            "log_m": [_s(v) for v in self.log_m],
        }

    def tail_table(self) -> tuple:
        """(log x, log Pr{Z > x}) breakpoints of the three-branch tail, float-representable periods only."""
        xs, ys = [], []
        for i in range(self.periods):
            lL, lM, e = self.log_L[i], self.log_M[i], self.eps[i]
            top = (1 + e) * lM
            if top > FLOAT_LOG_LIMIT:
                break
            prev = ys[-1] if ys else 0.0
            xs += [float(lL), float(lL), float(top)]
            ys += [prev, float(-lL / (1 + e)), float(-lM)]
        return xs, ys

    def offspring(self) -> PiecewiseTail:
        xs, ys = self.tail_table()
        if len(xs) < 2:
            raise OverflowError("no period of the tail is representable in floating point")
        return PiecewiseTail(xs, ys)

    def to_dict(self) -> dict:
        return {
            "n_seq": [str(v) for v in self.n_seq],
            "log_m": [_s(v) for v in self.log_m],
            "N": [str(v) for v in self.N],
            "log_M": [_s(v) for v in self.log_M],
            "log_L": [_s(v) for v in self.log_L],
            "eps": [_s(v) for v in self.eps],
            "truncated_at": self.truncated_at,
            "violations": list(self.violations),
            "checks": {k: v for k, v in self.checks.items()},
            "speed": self.speed_descriptor(),
        }


def _max_log_s(log_s, upto: int) -> mpf:
    if log_s is None:
        return mpf(0)
    if callable(log_s):
        # s is taken nondecreasing, so the max over n <= upto is at upto
        return mpf(log_s(upto))
    table = list(log_s)
    return max((mpf(v) for v in table[: min(upto, len(table))]), default=mpf(0))


def build_counterexample(n_seq: Sequence[int], log_g: Callable[[float], float] | None = None,
                         log_s=None) -> CounterexampleSpec:
    """Periods, multipliers and speed for a given increasing sequence n_i.

    m_i is the least value allowed by m_i >= 16 n_i^2 M_{i-1}^2 (and by
    m_i >= max s(n) over the period when ``log_s`` is given).  Periods whose
    logs exceed ``LOG_LIMIT`` are dropped and the cut is recorded.
    """
    n_seq = [int(v) for v in n_seq]
    if not n_seq or any(b <= a for a, b in zip(n_seq, n_seq[1:])) or n_seq[0] < 1:
        raise ValueError("n_seq must be a nonempty increasing sequence of positive integers")
    log_m, log_M, log_L, N, eps = [], [], [], [], []
    truncated = None
    prev_M, prev_N = mpf(0), 0
    with mpmath.workdps(60):
        for i, n in enumerate(n_seq):
            lm = LN16 + 2 * mpmath.log(n) + 2 * prev_M
            if log_s is not None:
                extra = _max_log_s(log_s, prev_N + n)
                if extra > LOG_LIMIT:
                    truncated = i + 1
                    break
                lm = max(lm, extra)
            lM = prev_M + 2 * n * lm
            if lm > LOG_LIMIT or lM > LOG_LIMIT:
                truncated = i + 1
                break
            log_m.append(lm)
            log_L.append(lm + prev_M)
            log_M.append(lM)
            N.append(prev_N + n)
            eps.append(mpf(1) / (10 * n))
            prev_M, prev_N = lM, prev_N + n
    spec = CounterexampleSpec(n_seq[: len(log_m)], log_m, N, log_M, log_L, eps, truncated)
    _audit_spec(spec, log_g)
    return spec


def _audit_spec(spec: CounterexampleSpec, log_g) -> None:
    ok_m = all(spec.log_m[i] >= LN16 + 2 * mpmath.log(spec.n_seq[i]) + 2 * (spec.log_M[i - 1] if i else 0)
               for i in range(spec.periods))
    spec.checks["multiplier_bound"] = ok_m
    spec.checks["N_increasing"] = all(b > a for a, b in zip(spec.N, spec.N[1:]))
    spec.checks["M_increasing"] = all(b > a for a, b in zip(spec.log_M, spec.log_M[1:]))
    spec.checks["swift"] = all(v > 0 for v in spec.log_m)
    for name in ("multiplier_bound", "N_increasing", "M_increasing", "swift"):
        if not spec.checks[name]:
            spec.violations.append(name)
    # ceil(sqrt n_i) - N_{i-1} >= n_{i-1}: the step that bounds f(ceil(sqrt n_i)) from below
    step = []
    for i in range(1, spec.periods):
        k = mpmath.ceil(mpmath.sqrt(spec.n_seq[i]))
        good = k - spec.N[i - 1] >= spec.n_seq[i - 1]
        step.append(bool(good))
        if not good:
            spec.violations.append(f"sqrt_step[i={i + 1}]")
    spec.checks["sqrt_step"] = step
    if spec.truncated_at is not None:
        spec.violations.append(f"truncated_at_period_{spec.truncated_at}")
    if log_g is not None:
        spec.checks["tail_dominates_g"] = _check_g(spec, log_g)
        if not spec.checks["tail_dominates_g"]:
            spec.violations.append("tail_dominates_g")


def _check_g(spec: CounterexampleSpec, log_g, points: int = 400) -> bool:
    """Pr{Z >= g(m)} >= 1/m on a log grid of m over the float-representable tail."""
    Z = spec.offspring()
    hi = min(Z.xs[-1], 700.0)
    for lm in [hi * k / points for k in range(1, points + 1)]:
        lg = float(log_g(lm))
        if Z.log_survival_cont(lg) < -lm - 1e-9 * max(1.0, lm):
            return False
    return True


def haste_variant(spec: CounterexampleSpec, log_s) -> CounterexampleSpec:
    """Rebuild with m_i also at least the largest s(n) over the period, so that f >= s."""
    return build_counterexample(spec.n_seq, log_s=log_s)


def dominates(spec: CounterexampleSpec, log_s, upto: int | None = None) -> bool:
    upto = upto or min(int(spec.N[-1]), 10**5)
    for n in range(1, upto + 1):
        lf = spec.log_f(n)
        ls = mpf(log_s(n)) if callable(log_s) else (mpf(log_s[n - 1]) if n <= len(log_s) else None)
        if lf is None or ls is None:
            break
        if lf < ls:
            return False
    return True


# ---------------------------------------------------------------------------
# The goodspeed sequence
# ---------------------------------------------------------------------------


def double_exponential_log_speed(n) -> mpf:
    """log f(n) for the plump control f(n) = 2^(2^n)."""
    return mpf(2) ** n * LN2


def sqrt_omega(n):
    return mpmath.sqrt(n)


@dataclass
class SuffcondResult:
    indices: list
    values: list  # log(2^n f(n) f(ceil(n/omega(n)))^(-n/2))
    passed: bool
    truncated_at: int | None
    threshold: float

    def to_dict(self) -> dict:
        return {"indices": [str(i) for i in self.indices], "values": [_s(v) for v in self.values],
                "passed": self.passed, "truncated_at": self.truncated_at, "threshold": self.threshold}


def _log_f_getter(target):
    if isinstance(target, CounterexampleSpec):
        return target.log_f
    if isinstance(target, SpeedSeq):
        vals = target.values

        def get(n):
            n = int(n)
            return mpf(vals[n]) if 0 <= n < len(vals) and math.isfinite(vals[n]) else None
        return get
    if callable(target):
        return lambda n: mpf(target(n))
    raise TypeError("target must be a spec, a SpeedSeq or a callable returning log f(n)")


def goodspeed_value(log_f, n, omega) -> mpf | None:
    k = mpmath.ceil(mpf(n) / omega(mpf(n)))
    lfn, lfk = log_f(n), log_f(int(k))
    if lfn is None or lfk is None:
        return None
    return n * LN2 + lfn - mpf(n) / 2 * lfk


def verify_suffcond(target, omega: Callable = sqrt_omega, indices: Sequence[int] | int | None = None,
                    threshold: float = -100.0) -> SuffcondResult:
    """The log goodspeed sequence along ``indices``.

    Passes when the values strictly decrease and the last one is below
    ``threshold``.  For a spec the default indices are its n_i.
    """
    log_f = _log_f_getter(target)
    if indices is None:
        if isinstance(target, CounterexampleSpec):
            indices = list(target.n_seq)
        elif isinstance(target, SpeedSeq):
            indices = list(range(1, len(target.values)))
        else:
            raise ValueError("indices are required for a callable speed")
    elif isinstance(indices, int):
        indices = list(range(1, indices + 1))
    vals, used, truncated = [], [], None
    with mpmath.workdps(60):
        for n in indices:
            v = goodspeed_value(log_f, n, omega)
            if v is None or abs(v) > LOG_LIMIT:
                truncated = n
                break
            vals.append(v)
            used.append(n)
    decreasing = len(vals) >= 2 and all(b < a for a, b in zip(vals, vals[1:]))
    passed = bool(decreasing and vals[-1] < threshold)
    return SuffcondResult(used, vals, passed, truncated, threshold)


# ---------------------------------------------------------------------------
# The weight law that is min-summable but not explosive
# ---------------------------------------------------------------------------


@dataclass
class BadWeight:
    periods: list  # selected period indices i_j (1-based)
    log_beta: list  # log beta_{i_j}, beta = sqrt(omega(n_i))
    k: list  # evaluation indices ceil(n_i / omega(n_i))
    log_f_k: list  # log f(k_j)
    atoms: list  # (log position, log mass, log Pr{W <= position}), ascending positions
    lumped: bool  # final remainder placed at half the last position

    def log_position(self, j: int) -> mpf:
        """log of 1 / (beta_{i_j} k_j) for the j-th selected period (1-based)."""
        return -(self.log_beta[j - 1] + mpmath.log(self.k[j - 1]))

    def quantile_log(self, log_u) -> mpf:
        """log F_W^{-1}(u): the smallest atom with Pr{W <= x} >= u."""
        for lp, _, lc in self.atoms:
            if lc >= log_u:
                return lp
        return self.atoms[-1][0]

    def total_mass(self) -> mpf:
        return mpmath.fsum(mpmath.exp(lm) for _, lm, _ in self.atoms)

    def to_weight(self) -> Atomic:
        """Floating-point copy; fails when positions or masses underflow."""
        pos = [float(mpmath.exp(lp)) for lp, _, _ in self.atoms]
        mass = [float(mpmath.exp(lm)) for _, lm, _ in self.atoms]
        if any(p == 0.0 for p in pos) or any(m == 0.0 for m in mass):
            raise OverflowError("atoms are not representable in floating point")
        return Atomic(pos, mass)

    def to_dict(self) -> dict:
        return {"periods": self.periods, "log_beta": [_s(v) for v in self.log_beta],
                "k": [str(v) for v in self.k], "log_f_k": [_s(v) for v in self.log_f_k],
                "atoms": [[_s(lp), _s(lm), _s(lc)] for lp, lm, lc in self.atoms], "lumped": self.lumped}


def select_subsequence(log_beta: Sequence) -> list:
    """Greedy earliest indices with beta_{i_j} >= 2^j."""
    chosen, j = [], 1
    for i, lb in enumerate(log_beta):
        if lb >= j * LN2:
            chosen.append(i)
            j += 1
    return chosen


def _dps_for(n: int) -> int:
    """Working digits that keep f(n) and f(n - 1) apart in log space."""
    return max(60, len(str(int(n))) + 40)


def _log_diff(a: mpf, b: mpf) -> mpf:
    """log(e^a - e^b) for a > b."""
    return a + mpmath.log(-mpmath.expm1(b - a))


def build_bad_weight(spec: CounterexampleSpec, omega: Callable = sqrt_omega) -> BadWeight:
    """Atomic weight with Pr{W < 1/(beta_{i_j} k_j)} = 1/f(k_j) along a greedy subsequence.

    Mass 1/f(k_j) - 1/f(k_{j+1}) sits at 1/(beta_{i_{j+1}} k_{j+1}), mass
    1 - 1/f(k_1) at 1, and the final 1/f(k_J) at half the last position.
    """
    with mpmath.workdps(_dps_for(spec.n_seq[-1])):
        n = [mpf(v) for v in spec.n_seq]
        log_beta_all = [mpmath.log(omega(v)) / 2 for v in n]
        sel = select_subsequence(log_beta_all)
        if len(sel) < 2:
            raise ValueError("fewer than two periods satisfy beta_{i_j} >= 2^j")
        ks, lfk = [], []
        for i in sel:
            k = int(mpmath.ceil(n[i] / omega(n[i])))
            lf = spec.log_f(k)
            if lf is None:
                raise ValueError(f"f is not evaluable at k = {k}")
            ks.append(k)
            lfk.append(lf)
        if any(b <= a for a, b in zip(lfk, lfk[1:])):
            raise ValueError("negative atom mass: f must increase along the subsequence")
        bw = BadWeight([i + 1 for i in sel], [log_beta_all[i] for i in sel], ks, lfk, [], True)
        J = len(sel)
        # cumulative masses telescope to 1/f(k_j), so they are stored exactly
        atoms = [(bw.log_position(J) - LN2, -lfk[J - 1], -lfk[J - 1])]
        for j in range(J - 1, 0, -1):
            atoms.append((bw.log_position(j + 1), _log_diff(-lfk[j - 1], -lfk[j]), -lfk[j - 1]))
        atoms.append((mpf(0), mpmath.log(-mpmath.expm1(-lfk[0])), mpf(0)))
        bw.atoms = atoms
    return bw


@dataclass
class MinsumBound:
    log_sum: mpf
    blocks: list  # (first n, last n, log term)
    log_bound: mpf  # log sum_j 1/beta_{i_j} over the audited blocks
    passed: bool  # log_sum <= 0, i.e. the sum is at most 1
    head_excluded: int  # indices n < k_1 left out

    def to_dict(self) -> dict:
        return {"log_sum": _s(self.log_sum), "sum": _s(mpmath.exp(self.log_sum)),
                "blocks": [[str(a), str(b), _s(t)] for a, b, t in self.blocks],
                "log_bound": _s(self.log_bound), "passed": self.passed, "head_excluded": self.head_excluded}


def minsum_bound(spec: CounterexampleSpec, bw: BadWeight) -> MinsumBound:
    """sum_{k_1 <= n < k_J} F_W^{-1}(1/f(n)) in log space, evaluated block by block.

    On [k_j, k_{j+1}) the term is constant because f is increasing; the
    quantile is read off the atom table at both ends of every block.
    """
    logs, blocks = [], []
    with mpmath.workdps(_dps_for(bw.k[-1])):
        for j in range(len(bw.k) - 1):
            a, b = bw.k[j], bw.k[j + 1] - 1
            ta = bw.quantile_log(-spec.log_f(a))
            tb = bw.quantile_log(-spec.log_f(b))
            if ta != tb:
                raise ArithmeticError(f"quantile not constant on block [{a}, {b}]")
            blocks.append((a, b, ta))
            logs.append(mpmath.log(b - a + 1) + ta)
        log_sum = mpmath.log(mpmath.fsum(mpmath.exp(v) for v in logs))
        log_bound = mpmath.log(mpmath.fsum(mpmath.exp(-lb) for lb in bw.log_beta[1:]))
    return MinsumBound(log_sum, blocks, log_bound, bool(log_sum <= 0), bw.k[0] - 1)


def minsum_bound_direct(spec: CounterexampleSpec, bw: BadWeight, limit: int = 10**6) -> mpf:
    """Term-by-term version of ``minsum_bound`` for small specs."""
    lo, hi = bw.k[0], bw.k[-1] - 1
    if hi - lo > limit:
        raise ValueError("range too long for direct summation")
    with mpmath.workdps(60):
        return mpmath.log(mpmath.fsum(mpmath.exp(bw.quantile_log(-spec.log_f(n))) for n in range(lo, hi + 1)))


@dataclass
class AuditLine:
    name: str
    passed: bool
    detail: str

    def __str__(self) -> str:
        return f"{'PASS' if self.passed else 'FAIL'} {self.name}: {self.detail}"


def counterexample_audit(spec: CounterexampleSpec, omega: Callable = sqrt_omega,
                         threshold: float = -100.0) -> list:
    """PASS/FAIL lines for the min-summable side, the goodspeed side and the plump control."""
    lines = []
    try:
        bw = build_bad_weight(spec, omega)
        mb = minsum_bound(spec, bw)
        lines.append(AuditLine("minsum_bound", mb.passed, f"log sum = {mpmath.nstr(mb.log_sum, 8)} (<= 0 required)"))
    except (ValueError, ArithmeticError) as exc:
        lines.append(AuditLine("minsum_bound", False, f"weight not constructible: {exc}"))
    sc = verify_suffcond(spec, omega, threshold=threshold)
    lines.append(AuditLine("goodspeed", sc.passed,
                           "values " + ", ".join(mpmath.nstr(v, 6) for v in sc.values)))
    ctrl = verify_suffcond(double_exponential_log_speed, sqrt_omega, indices=list(range(1, 31)),
                           threshold=threshold)
    lines.append(AuditLine("plump_control_fails", not ctrl.passed,
                           f"f(n)=2^(2^n) last value {mpmath.nstr(ctrl.values[-1], 6)}"))
    return lines
