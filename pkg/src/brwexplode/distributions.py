"""Offspring and weight distribution families.

Offspring laws are integer valued and expose their survival function
``S(m) = Pr{Z > m}`` both on integers and, for astronomically large
arguments, on the natural-log scale.  Weight laws are nonnegative reals
with a generalized (left-continuous) inverse.  Every family also offers a
scalar ``*_from_uniform`` map that the compiled search kernel mirrors
operation for operation.
"""

from __future__ import annotations

import functools
import math
import warnings
import zlib
from bisect import bisect_left
from typing import Any

import numpy as np
from scipy import integrate, special

LOG_MAX = math.log(np.finfo(float).max)
EXACT_LOG = math.log(2.0**53)
SNAP = 0.9999999999999  # pulls quantiles that sit a few ulps above an integer back onto it
LN2 = math.log(2.0)
COUNT_CAP = 2.0**53


class UndeterminedError(ArithmeticError):
    """A closed form is unavailable for the requested argument."""


class KSeriesError(ArithmeticError):
    def __init__(self, message: str, partial: float):
        super().__init__(message)
        self.partial = partial


# ---------------------------------------------------------------------------
# LogReal
# ---------------------------------------------------------------------------


@functools.total_ordering
class LogReal:
    """Nonnegative extended real stored as its natural log.

    ``-inf`` encodes zero and ``+inf`` encodes overflow.
    """

    __slots__ = ("log",)

    def __init__(self, log: float):
        if math.isnan(log):
            raise ValueError("LogReal cannot hold NaN")
        self.log = float(log)

    @classmethod
    def from_value(cls, x: float) -> "LogReal":
        if x < 0:
            raise ValueError("LogReal is nonnegative")
        return cls(math.log(x) if x > 0 else -math.inf)

    @property
    def state(self) -> str:
        if self.log == -math.inf:
            return "zero"
        if self.log == math.inf:
            return "overflow"
        return "finite"

    @property
    def is_zero(self) -> bool:
        return self.log == -math.inf

    @property
    def is_overflow(self) -> bool:
        return self.log == math.inf

    def value(self) -> float:
        return math.exp(self.log) if self.log < LOG_MAX else math.inf

    def __mul__(self, other: "LogReal | float") -> "LogReal":
        other = other if isinstance(other, LogReal) else LogReal.from_value(other)
        if {self.state, other.state} == {"zero", "overflow"}:
            raise ArithmeticError("zero times overflow is undefined")
        return LogReal(self.log + other.log)

    __rmul__ = __mul__

    def __truediv__(self, other: "LogReal | float") -> "LogReal":
        other = other if isinstance(other, LogReal) else LogReal.from_value(other)
        if other.is_zero or (self.is_overflow and other.is_overflow):
            raise ZeroDivisionError("undefined LogReal quotient")
        return LogReal(self.log - other.log)

    def __pow__(self, p: float) -> "LogReal":
        if p <= 0:
            raise ValueError("only positive powers are supported")
        return LogReal(self.log * p)

    def __eq__(self, other: object) -> bool:
        if isinstance(other, LogReal):
            return self.log == other.log
        if isinstance(other, (int, float)):
            return self == LogReal.from_value(other)
        return NotImplemented

    def __lt__(self, other: "LogReal | float") -> bool:
        other = other if isinstance(other, LogReal) else LogReal.from_value(other)
        return self.log < other.log

    def __hash__(self) -> int:
        return hash(self.log)

    def __repr__(self) -> str:
        if self.state != "finite":
            return f"LogReal({self.state})"
        return f"LogReal(log={self.log!r})"


ZERO = LogReal(-math.inf)
ONE = LogReal(0.0)
OVERFLOW = LogReal(math.inf)


def _split_arg(m: "int | float | LogReal") -> tuple[int | None, float]:
    """Return (exact integer or None, log value) for an offspring argument."""
    if isinstance(m, LogReal):
        lg = m.log
        if lg <= EXACT_LOG:
            v = math.exp(lg)
            r = round(v)
            if abs(v - r) <= 1e-9 * max(1.0, v):
                return int(r), lg
            return int(math.floor(v)), lg
        return None, lg
    if m < 0:
        raise ValueError("offspring argument must be nonnegative")
    if isinstance(m, int) or float(m).is_integer():
        k = int(m)
        return k, (math.log(k) if k > 0 else -math.inf)
    return int(math.floor(m)), (math.log(m) if m > 0 else -math.inf)


def _int_from_log(xlog: float, floor: int) -> float:
    """Smallest integer >= exp(xlog), snapped, as a float; or the log if huge."""
    x = math.exp(xlog)
    k = math.ceil(x * SNAP)
    return float(max(k, floor))


def open_uniform(rng: np.random.Generator, size: int | tuple | None = None) -> np.ndarray:
    """Uniform draws strictly inside (0, 1) on a 2^-52 lattice."""
    k = rng.integers(0, 2**52, size=size, dtype=np.int64)
    return (k + 0.5) * 2.0**-52


# ---------------------------------------------------------------------------
# Offspring families
# ---------------------------------------------------------------------------


class OffspringDist:
    family = "abstract"
    kernel_code = 0
    min_count = 0

    def params(self) -> dict[str, Any]:
        return {}

    def to_config(self) -> dict[str, Any]:
        return {"family": self.family, **self.params()}

    def __repr__(self) -> str:
        body = ", ".join(f"{k}={v!r}" for k, v in self.params().items())
        return f"{type(self).__name__}({body})"

    def __eq__(self, other: object) -> bool:
        return type(self) is type(other) and self.params() == other.params()

    def __hash__(self) -> int:
        return hash((self.family, repr(self.params())))

    def kernel_spec(self) -> tuple[int, float] | None:
        return None

    # survival ------------------------------------------------------------
    def log_survival_int(self, k: int) -> float:
        raise NotImplementedError

    def log_survival_cont(self, logm: float) -> float:
        raise UndeterminedError(f"{self.family} has no closed-form tail at huge m")

    def log_survival_cont_array(self, logm: np.ndarray) -> np.ndarray:
        return np.array([self.log_survival_cont(float(v)) for v in np.ravel(logm)]).reshape(np.shape(logm))

    def log_survival(self, m: "int | float | LogReal") -> float:
        k, lg = _split_arg(m)
        if k is not None:
            return self.log_survival_int(k)
        if lg == math.inf:
            raise UndeterminedError("survival at an overflowed argument")
        return self.log_survival_cont(lg)

    def log_tail_ge(self, logx: float) -> float:
        """log Pr{Z >= x} for real x > 0 given as log x."""
        if logx <= 0:
            return 0.0 if logx == -math.inf or math.exp(logx) <= self.min_count else self.log_tail_ge_int(1)
        if logx <= EXACT_LOG:
            x = math.exp(logx)
            c = math.ceil(x * SNAP)
            return self.log_tail_ge_int(int(c))
        return self.log_survival_cont(logx)

    def log_tail_ge_int(self, k: int) -> float:
        return 0.0 if k <= 0 else self.log_survival_int(k - 1)

    def survival_array(self, k: np.ndarray) -> np.ndarray:
        return np.exp(np.array([self.log_survival_int(int(i)) for i in np.ravel(k)])).reshape(np.shape(k))

    def survival_cont_array(self, y: np.ndarray) -> np.ndarray:
        """Smooth extension of S to real y >= 1, used for series remainders."""
        y = np.asarray(y, dtype=float)
        return np.exp(np.array([self.log_survival_cont(math.log(v)) for v in np.ravel(y)])).reshape(y.shape)

    # quantile ------------------------------------------------------------
    def quantile_log(self, L: float) -> float:
        """log F^{-1}(u) where L = log(1/(1-u))."""
        raise NotImplementedError

    def quantile_log_array(self, L: np.ndarray) -> np.ndarray:
        return np.vectorize(self.quantile_log, otypes=[float])(L)

    def count_from_uniform(self, u: float, cap: float = COUNT_CAP) -> tuple[float, bool]:
        lg = self.quantile_log(-math.log1p(-u))
        if lg > math.log(cap):
            return cap, True
        return (float(round(math.exp(lg))) if lg > -math.inf else 0.0), False

    def sample(self, rng: np.random.Generator, size: int, cap: float = COUNT_CAP) -> tuple[np.ndarray, np.ndarray]:
        u = open_uniform(rng, size)
        L = -np.log1p(-u)
        lg = self.quantile_log_array(L)
        trunc = lg > math.log(cap)
        with np.errstate(over="ignore"):
            vals = np.where(trunc, cap, np.round(np.exp(np.minimum(lg, LOG_MAX))))
        return vals, trunc

    # moments and generating functions ---------------------------------------
    @property
    def mean(self) -> float:
        return math.inf

    @property
    def variance(self) -> float:
        return math.inf

    def prob_zero(self) -> float:
        return 1.0 - math.exp(self.log_survival_int(0))

    def pgf(self, s: float) -> float:
        """G_Z(s) = E s^Z via 1 - (1-s) sum_k s^k S(k)."""
        if s == 1.0:
            return 1.0
        total, k, chunk = 0.0, 0, 4096
        while True:
            ks = np.arange(k, k + chunk)
            terms = np.exp(ks * math.log(s)) * self.survival_array(ks) if s > 0 else np.where(ks == 0, self.survival_array(ks), 0.0)
            total += float(terms.sum())
            if terms[-1] <= 1e-17 * max(total, 1e-300) or k > 10**8:
                break
            k += chunk
        return 1.0 - (1.0 - s) * total


class Deterministic(OffspringDist):
    family = "deterministic"
    kernel_code = 1

    def __init__(self, k: int):
        if k < 0 or int(k) != k:
            raise ValueError("k must be a nonnegative integer")
        self.k = int(k)
        self.min_count = self.k

    def params(self):
        return {"k": self.k}

    def kernel_spec(self):
        return (self.kernel_code, float(self.k))

    def log_survival_int(self, k):
        return 0.0 if k < self.k else -math.inf

    def log_survival_cont(self, logm):
        return -math.inf

    def survival_array(self, k):
        return np.where(np.asarray(k) < self.k, 1.0, 0.0)

    def survival_cont_array(self, y):
        return np.where(np.asarray(y) < self.k, 1.0, 0.0)

    def quantile_log(self, L):
        return math.log(self.k) if self.k > 0 else -math.inf

    def count_from_uniform(self, u, cap=COUNT_CAP):
        return float(self.k), False

    def sample(self, rng, size, cap=COUNT_CAP):
        return np.full(size, float(min(self.k, cap))), np.full(size, self.k > cap)

    @property
    def mean(self):
        return float(self.k)

    @property
    def variance(self):
        return 0.0

    def pgf(self, s):
        return s**self.k


class PowerTail(OffspringDist):
    """Pr{Z > m} = m^{-beta} for m >= 1, so Z >= 1."""

    family = "power_tail"
    kernel_code = 2
    min_count = 1

    def __init__(self, beta: float):
        if not beta > 0:
            raise ValueError("beta must be positive")
        self.beta = float(beta)

    def params(self):
        return {"beta": self.beta}

    def kernel_spec(self):
        return (self.kernel_code, self.beta)

    def log_survival_int(self, k):
        return 0.0 if k < 1 else -self.beta * math.log(k)

    def log_survival_cont(self, logm):
        return 0.0 if logm < 0 else -self.beta * logm

    def log_survival_cont_array(self, logm):
        logm = np.asarray(logm, dtype=float)
        return np.where(logm < 0, 0.0, -self.beta * logm)

    def survival_array(self, k):
        k = np.asarray(k, dtype=float)
        with np.errstate(divide="ignore"):
            return np.where(k >= 1, np.maximum(k, 1.0) ** -self.beta, 1.0)

    def survival_cont_array(self, y):
        return np.maximum(np.asarray(y, dtype=float), 1.0) ** -self.beta

    def quantile_log(self, L):
        xl = L / self.beta
        if xl > EXACT_LOG:
            return xl
        return math.log(_int_from_log(xl, 1))

    def quantile_log_array(self, L):
        xl = np.asarray(L, dtype=float) / self.beta
        small = xl <= EXACT_LOG
        with np.errstate(over="ignore"):
            k = np.maximum(np.ceil(np.exp(np.where(small, xl, 0.0)) * SNAP), 1.0)
        return np.where(small, np.log(k), xl)

    def count_from_uniform(self, u, cap=COUNT_CAP):
        L = -math.log1p(-u)
        xl = L / self.beta
        if xl > math.log(cap):
            return cap, True
        x = math.exp(xl)
        k = math.ceil(x * SNAP)
        return float(max(k, 1)), False

    @property
    def mean(self):
        return math.inf if self.beta <= 1 else 1.0 + float(special.zeta(self.beta))

    @property
    def variance(self):
        if self.beta <= 2:
            return math.inf
        second = 1.0 + 2.0 * float(special.zeta(self.beta - 1)) + float(special.zeta(self.beta))
        return second - self.mean**2


class LogTail(OffspringDist):
    """Pr{Z > m} = 1/log2(m) for m >= 2, so Z >= 3 and h(n+1) = 2^{h(n)}."""

    family = "log_tail"
    kernel_code = 3
    min_count = 3

    def kernel_spec(self):
        return (self.kernel_code, 0.0)

    def log_survival_int(self, k):
        return 0.0 if k < 2 else -math.log(math.log2(k))

    def log_survival_cont(self, logm):
        if logm < LN2:
            return 0.0
        return -(math.log(logm) - math.log(LN2))

    def log_survival_cont_array(self, logm):
        logm = np.asarray(logm, dtype=float)
        with np.errstate(divide="ignore", invalid="ignore"):
            return np.where(logm < LN2, 0.0, -(np.log(np.maximum(logm, LN2)) - math.log(LN2)))

    def survival_array(self, k):
        k = np.asarray(k, dtype=float)
        with np.errstate(divide="ignore"):
            return np.where(k >= 2, 1.0 / np.log2(np.maximum(k, 2.0)), 1.0)

    def survival_cont_array(self, y):
        y = np.maximum(np.asarray(y, dtype=float), 2.0)
        return 1.0 / np.log2(y)

    def quantile_log(self, L):
        if L > LOG_MAX:
            return math.inf
        xl = math.exp(L) * LN2
        if xl > EXACT_LOG:
            return xl
        return math.log(_int_from_log(xl, 3))

    def count_from_uniform(self, u, cap=COUNT_CAP):
        L = -math.log1p(-u)
        if L > 700.0:
            return cap, True
        xl = math.exp(L) * LN2
        if xl > math.log(cap):
            return cap, True
        k = math.ceil(math.exp(xl) * SNAP)
        return float(max(k, 3)), False


class Geometric(OffspringDist):
    """Pr{Z > m} = (1-q)^{m+1} on {0, 1, 2, ...}; mean (1-q)/q."""

    family = "geometric"
    kernel_code = 4

    def __init__(self, q: float):
        if not 0 < q < 1:
            raise ValueError("q must lie in (0, 1)")
        self.q = float(q)

    def params(self):
        return {"q": self.q}

    def kernel_spec(self):
        return (self.kernel_code, self.q)

    def log_survival_int(self, k):
        return (k + 1) * math.log1p(-self.q)

    def log_survival_cont(self, logm):
        return (math.exp(min(logm, LOG_MAX)) + 1.0) * math.log1p(-self.q)

    def survival_array(self, k):
        return (1.0 - self.q) ** (np.asarray(k, dtype=float) + 1.0)

    def survival_cont_array(self, y):
        return self.survival_array(y)

    def quantile_log(self, L):
        r = -math.log1p(-self.q)
        k = max(math.ceil(L / r * SNAP - 1.0), 0)
        return math.log(k) if k > 0 else -math.inf

    def count_from_uniform(self, u, cap=COUNT_CAP):
        L = -math.log1p(-u)
        r = -math.log1p(-self.q)
        k = float(max(math.ceil(L / r * SNAP - 1.0), 0))
        if k > cap:
            return cap, True
        return k, False

    def sample(self, rng, size, cap=COUNT_CAP):
        u = open_uniform(rng, size)
        r = -math.log1p(-self.q)
        k = np.maximum(np.ceil(-np.log1p(-u) / r * SNAP - 1.0), 0.0)
        trunc = k > cap
        return np.minimum(k, cap), trunc

    @property
    def mean(self):
        return (1.0 - self.q) / self.q

    @property
    def variance(self):
        return (1.0 - self.q) / self.q**2

    def pgf(self, s):
        return self.q / (1.0 - (1.0 - self.q) * s)


class PiecewiseTail(OffspringDist):
    """log S is piecewise linear in log m between breakpoints.

    Below the first breakpoint ``S = 1``; beyond the last one the final
    segment's slope (or ``tail_slope``) is extended.
    """

    family = "piecewise_tail"

    def __init__(self, log_m, log_survival, tail_slope: float | None = None):
        xs = [float(v) for v in log_m]
        ys = [float(v) for v in log_survival]
        if len(xs) != len(ys) or not xs:
            raise ValueError("breakpoint lists must be nonempty and equal length")
        if any(b < a for a, b in zip(xs, xs[1:])):
            raise ValueError("log_m must be nondecreasing")
        if any(b > a for a, b in zip(ys, ys[1:])) or ys[0] > 0 or xs[0] < 0:
            raise ValueError("log_survival must be nonincreasing and <= 0")
        if tail_slope is None:
            tail_slope = (ys[-1] - ys[-2]) / (xs[-1] - xs[-2]) if len(xs) > 1 and xs[-1] > xs[-2] else 0.0
        if tail_slope > 0:
            raise ValueError("tail slope must be nonpositive")
        self.xs, self.ys, self.tail_slope = xs, ys, float(tail_slope)

    def params(self):
        return {"log_m": list(self.xs), "log_survival": list(self.ys), "tail_slope": self.tail_slope}

    def _logS(self, x: float) -> float:
        xs, ys = self.xs, self.ys
        if x < xs[0]:
            return 0.0
        if x >= xs[-1]:
            return ys[-1] + self.tail_slope * (x - xs[-1])
        i = bisect_left(xs, x)
        if xs[i] == x:
            while i + 1 < len(xs) and xs[i + 1] == x:
                i += 1
            return ys[i]
        x0, x1, y0, y1 = xs[i - 1], xs[i], ys[i - 1], ys[i]
        return y0 + (y1 - y0) * (x - x0) / (x1 - x0)

    def log_survival_int(self, k):
        return 0.0 if k < 1 else self._logS(math.log(k))

    def log_survival_cont(self, logm):
        return self._logS(logm)

    def log_survival_cont_array(self, logm):
        return self._logS_array(np.asarray(logm, dtype=float))

    def survival_array(self, k):
        k = np.asarray(k, dtype=float)
        with np.errstate(divide="ignore"):
            lk = np.log(np.maximum(k, 1.0))
        return np.where(k >= 1, np.exp(self._logS_array(lk)), 1.0)

    def survival_cont_array(self, y):
        return np.exp(self._logS_array(np.log(np.maximum(np.asarray(y, dtype=float), 1.0))))

    def _logS_array(self, x):
        x = np.asarray(x, dtype=float)
        xs, ys = np.asarray(self.xs), np.asarray(self.ys)
        # right-continuous at repeated breakpoints, matching _logS
        i = np.clip(np.searchsorted(xs, x, side="right"), 1, len(xs) - 1)
        x0, x1, y0, y1 = xs[i - 1], xs[i], ys[i - 1], ys[i]
        with np.errstate(divide="ignore", invalid="ignore"):
            inner = np.where(x == x0, y0, y0 + (y1 - y0) * (x - x0) / (x1 - x0))
        tail = self.ys[-1] + self.tail_slope * (x - self.xs[-1])
        return np.where(x < self.xs[0], 0.0, np.where(x >= self.xs[-1], tail, inner))

    def quantile_log(self, L):
        target = -L
        xs, ys = self.xs, self.ys
        if ys[0] <= target:
            xstar = xs[0]
        else:
            xstar = None
            for i in range(1, len(xs)):
                if ys[i] <= target:
                    x0, x1, y0, y1 = xs[i - 1], xs[i], ys[i - 1], ys[i]
                    xstar = x0 + (target - y0) * (x1 - x0) / (y1 - y0)
                    break
            if xstar is None:
                if self.tail_slope == 0:
                    return math.inf
                xstar = xs[-1] + (target - ys[-1]) / self.tail_slope
        if xstar > EXACT_LOG:
            return xstar
        k = _int_from_log(xstar, 1)
        while k > 1 and self.log_survival_int(int(k) - 1) <= target:
            k -= 1.0
        return math.log(k)

    @property
    def mean(self):
        if self.tail_slope >= -1.0:
            return math.inf
        head = float(np.sum(self.survival_array(np.arange(0, 4096))))
        rest, _ = integrate.quad(lambda y: float(self.survival_cont_array(np.array([y]))[0]), 4095.5, math.inf, limit=200)
        return head + rest


class Collapsed(OffspringDist):
    """Offspring of the collapsed tree: non-zero-weight children of a zero-weight cluster."""

    family = "collapsed"

    def __init__(self, base: OffspringDist, p: float):
        if not 0 < p < 1:
            raise ValueError("p must lie in (0, 1)")
        self.base, self.p = base, float(p)

    def params(self):
        return {"base": self.base.to_config(), "p": self.p}

    def log_survival_int(self, k):
        raise UndeterminedError("collapsed offspring law has no closed-form tail")

    def quantile_log(self, L):
        raise UndeterminedError("collapsed offspring law has no closed-form quantile")

    def sample(self, rng, size, cap=COUNT_CAP):
        from .collapse import sample_zeta_batch

        zeta, _, trunc = sample_zeta_batch(self.base, self.p, rng, size, cap=cap)
        return zeta.astype(float), trunc

    def count_from_uniform(self, u, cap=COUNT_CAP):
        raise UndeterminedError("collapsed offspring is sampled by simulation only")

    @property
    def mean(self):
        h = self.base.mean * self.p
        return math.inf if h >= 1 else self.base.mean * (1 - self.p) / (1 - h)


# ---------------------------------------------------------------------------
# Weight families
# ---------------------------------------------------------------------------


def _check_u(u: np.ndarray) -> np.ndarray:
    u = np.asarray(u, dtype=float)
    if np.any((u <= 0) | (u >= 1)):
        raise ValueError("quantile level must lie in (0, 1)")
    return u


class WeightDist:
    family = "abstract"
    kernel_code = 0
    atom_at_zero = 0.0
    smooth_tail = True

    def params(self) -> dict[str, Any]:
        return {}

    def to_config(self) -> dict[str, Any]:
        return {"family": self.family, **self.params()}

    def __repr__(self) -> str:
        body = ", ".join(f"{k}={v!r}" for k, v in self.params().items())
        return f"{type(self).__name__}({body})"

    def __eq__(self, other: object) -> bool:
        return type(self) is type(other) and self.params() == other.params()

    def __hash__(self) -> int:
        return hash((self.family, repr(self.params())))

    def kernel_spec(self) -> tuple[int, float] | None:
        return None

    def cdf(self, w):
        raise NotImplementedError

    def _quantile(self, u: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    def quantile(self, u):
        out = self._quantile(_check_u(u))
        return float(out) if np.ndim(out) == 0 else out

    def weight_from_uniform(self, u: float) -> float:
        return float(self._quantile(np.asarray(u)))

    def quantile_log(self, logu: float) -> float:
        """log F^{-1}(exp(logu)); stays accurate far below double underflow."""
        u = math.exp(logu)
        if u <= 0:
            u = np.nextafter(0.0, 1.0)
        q = float(self._quantile(np.asarray(min(u, 1.0))))
        return math.log(q) if q > 0 else -math.inf

    def quantile_above_atom_log(self, logx: float) -> float:
        """log F^{-1}(p + (1-p) x) with p the atom at zero."""
        if self.atom_at_zero == 0:
            return self.quantile_log(logx)
        raise NotImplementedError

    def sample(self, rng: np.random.Generator, size: int | None = None):
        return self._quantile(open_uniform(rng, size))


class Uniform01(WeightDist):
    family = "uniform01"
    kernel_code = 1

    def kernel_spec(self):
        return (self.kernel_code, 0.0)

    def cdf(self, w):
        return np.clip(np.asarray(w, dtype=float), 0.0, 1.0)

    def _quantile(self, u):
        return np.asarray(u, dtype=float) * 1.0

    def weight_from_uniform(self, u):
        return u

    def quantile_log(self, logu):
        return min(logu, 0.0)


class Exponential(WeightDist):
    family = "exponential"
    kernel_code = 2

    def __init__(self, rate: float = 1.0):
        if not rate > 0:
            raise ValueError("rate must be positive")
        self.rate = float(rate)

    def params(self):
        return {"rate": self.rate}

    def kernel_spec(self):
        return (self.kernel_code, self.rate)

    def cdf(self, w):
        w = np.asarray(w, dtype=float)
        return np.where(w > 0, -np.expm1(-self.rate * np.maximum(w, 0.0)), 0.0)

    def _quantile(self, u):
        return -np.log1p(-np.asarray(u, dtype=float)) / self.rate

    def weight_from_uniform(self, u):
        return -math.log1p(-u) / self.rate

    def quantile_log(self, logu):
        if logu >= 0:
            return math.inf
        x = math.exp(logu)
        corr = 0.0 if x < 1e-300 else math.log(-math.log1p(-x) / x)
        return logu + corr - math.log(self.rate)


class PointMass(WeightDist):
    family = "point_mass"
    kernel_code = 3

    def __init__(self, a: float):
        if a < 0:
            raise ValueError("a must be nonnegative")
        self.a = float(a)
        self.atom_at_zero = 1.0 if self.a == 0 else 0.0

    def params(self):
        return {"a": self.a}

    def kernel_spec(self):
        return (self.kernel_code, self.a)

    def cdf(self, w):
        return np.where(np.asarray(w, dtype=float) >= self.a, 1.0, 0.0)

    def _quantile(self, u):
        return np.full(np.shape(u), self.a)

    def weight_from_uniform(self, u):
        return self.a

    def quantile_log(self, logu):
        return math.log(self.a) if self.a > 0 else -math.inf


class DoubleExpSmall(WeightDist):
    """F(w) = exp(-exp(1/w)) below ``knee``; linear from there up to ``knee + 1``."""

    family = "double_exp_small"
    kernel_code = 4

    def __init__(self, knee: float = 1.0):
        if not knee > 0:
            raise ValueError("knee must be positive")
        self.knee = float(knee)
        self.c = math.exp(-math.exp(1.0 / self.knee))

    def params(self):
        return {"knee": self.knee}

    def kernel_spec(self):
        return (self.kernel_code, self.knee)

    def cdf(self, w):
        w = np.asarray(w, dtype=float)
        with np.errstate(divide="ignore", over="ignore"):
            low = np.exp(-np.exp(1.0 / np.where(w > 0, w, 1.0)))
        lin = np.minimum(1.0, self.c + (1.0 - self.c) * (w - self.knee))
        return np.where(w <= 0, 0.0, np.where(w < self.knee, low, lin))

    def _quantile(self, u):
        u = np.asarray(u, dtype=float)
        with np.errstate(divide="ignore", invalid="ignore"):
            low = 1.0 / np.log(-np.log(np.where(u <= self.c, u, self.c)))
        return np.where(u <= self.c, low, self.knee + (u - self.c) / (1.0 - self.c))

    def weight_from_uniform(self, u):
        c = math.exp(-math.exp(1.0 / self.knee))
        if u <= c:
            return 1.0 / math.log(-math.log(u))
        return self.knee + (u - c) / (1.0 - c)

    def quantile_log(self, logu):
        if logu <= -math.exp(1.0 / self.knee):
            return -math.log(math.log(-logu))
        return math.log(self.weight_from_uniform(math.exp(logu)))


class LogInverse(WeightDist):
    """F(w) = log(1/w)^{-alpha} on (0, 1/e]."""

    family = "log_inverse"
    kernel_code = 5

    def __init__(self, alpha: float = 1.0):
        if not alpha > 0:
            raise ValueError("alpha must be positive")
        self.alpha = float(alpha)

    def params(self):
        return {"alpha": self.alpha}

    def kernel_spec(self):
        return (self.kernel_code, self.alpha)

    def cdf(self, w):
        w = np.asarray(w, dtype=float)
        with np.errstate(divide="ignore", invalid="ignore"):
            mid = (-np.log(np.clip(w, 1e-320, math.exp(-1)))) ** -self.alpha
        return np.where(w <= 0, 0.0, np.where(w >= math.exp(-1), 1.0, mid))

    def _quantile(self, u):
        return np.exp(-(np.asarray(u, dtype=float) ** (-1.0 / self.alpha)))

    def weight_from_uniform(self, u):
        return math.exp(-(u ** (-1.0 / self.alpha)))

    def quantile_log(self, logu):
        if logu >= 0:
            return -1.0
        x = -logu / self.alpha
        return -math.exp(x) if x < LOG_MAX else -math.inf


class ExpInverse(WeightDist):
    """F(w) = exp(-w^{-alpha}) for w > 0."""

    family = "exp_inverse"
    kernel_code = 6

    def __init__(self, alpha: float = 1.0):
        if not alpha > 0:
            raise ValueError("alpha must be positive")
        self.alpha = float(alpha)

    def params(self):
        return {"alpha": self.alpha}

    def kernel_spec(self):
        return (self.kernel_code, self.alpha)

    def cdf(self, w):
        w = np.asarray(w, dtype=float)
        with np.errstate(divide="ignore", over="ignore"):
            val = np.exp(-(np.where(w > 0, w, 1.0) ** -self.alpha))
        return np.where(w > 0, val, 0.0)

    def _quantile(self, u):
        return (-np.log(np.asarray(u, dtype=float))) ** (-1.0 / self.alpha)

    def weight_from_uniform(self, u):
        return (-math.log(u)) ** (-1.0 / self.alpha)

    def quantile_log(self, logu):
        if logu >= 0:
            return math.inf
        return -math.log(-logu) / self.alpha


class Atomic(WeightDist):
    family = "atomic"
    smooth_tail = False

    def __init__(self, positions, masses):
        pairs = sorted((float(x), float(m)) for x, m in zip(positions, masses) if m > 0)
        if not pairs or any(x < 0 for x, _ in pairs):
            raise ValueError("atoms need nonnegative positions and some positive mass")
        total = math.fsum(m for _, m in pairs)
        if abs(total - 1.0) > 1e-9:
            raise ValueError(f"masses sum to {total}, not 1")
        self.positions = np.array([x for x, _ in pairs])
        self.masses = np.array([m for _, m in pairs]) / total
        self.cum = np.cumsum(self.masses)
        self.cum[-1] = 1.0
        self.atom_at_zero = float(self.masses[0]) if self.positions[0] == 0 else 0.0

    def params(self):
        return {"positions": self.positions.tolist(), "masses": self.masses.tolist()}

    def cdf(self, w):
        w = np.asarray(w, dtype=float)
        idx = np.searchsorted(self.positions, w, side="right")
        return np.where(idx > 0, self.cum[np.maximum(idx - 1, 0)], 0.0)

    def _quantile(self, u):
        idx = np.searchsorted(self.cum, np.asarray(u, dtype=float), side="left")
        return self.positions[np.minimum(idx, len(self.positions) - 1)]

    def quantile_above_atom_log(self, logx):
        if self.atom_at_zero == 0:
            return self.quantile_log(logx)
        rest = Atomic(self.positions[1:], self.masses[1:] / (1.0 - self.atom_at_zero))
        return rest.quantile_log(logx)


class MixtureWithZeroAtom(WeightDist):
    """Zero with probability p, otherwise a draw from ``base``."""

    family = "mixture_zero_atom"

    def __init__(self, p: float, base: WeightDist):
        if not 0 <= p < 1:
            raise ValueError("p must lie in [0, 1)")
        self.p, self.base = float(p), base
        self.atom_at_zero = self.p + (1 - self.p) * base.atom_at_zero
        self.smooth_tail = base.smooth_tail

    def params(self):
        return {"p": self.p, "base": self.base.to_config()}

    def cdf(self, w):
        w = np.asarray(w, dtype=float)
        return np.where(w >= 0, self.p + (1 - self.p) * self.base.cdf(w), 0.0)

    def _quantile(self, u):
        u = np.asarray(u, dtype=float)
        inner = np.clip((u - self.p) / (1 - self.p), np.nextafter(0.0, 1.0), 1 - 2.0**-53)
        return np.where(u <= self.p, 0.0, self.base._quantile(inner))

    def quantile_log(self, logu):
        if logu <= math.log(self.p) if self.p > 0 else False:
            return -math.inf
        u = math.exp(logu)
        return self.base.quantile_log(math.log((u - self.p) / (1 - self.p)))

    def quantile_above_atom_log(self, logx):
        return self.base.quantile_log(logx)


class PositivePart(WeightDist):
    """W conditioned on W > 0."""

    family = "positive_part"

    def __init__(self, base: WeightDist):
        if base.atom_at_zero >= 1:
            raise ValueError("W = 0 almost surely; nothing to condition on")
        self.base = base
        self.smooth_tail = base.smooth_tail

    def params(self):
        return {"base": self.base.to_config()}

    def cdf(self, w):
        w = np.asarray(w, dtype=float)
        p = self.base.atom_at_zero
        return np.where(w > 0, (self.base.cdf(w) - p) / (1 - p), 0.0)

    def _quantile(self, u):
        p = self.base.atom_at_zero
        return self.base._quantile(p + (1 - p) * np.asarray(u, dtype=float))

    def quantile_log(self, logu):
        return self.base.quantile_above_atom_log(logu)


# ---------------------------------------------------------------------------
# Operations
# ---------------------------------------------------------------------------


def offspring_survival_log(dist: OffspringDist, m: "int | float | LogReal") -> LogReal:
    """log Pr{Z > m}."""
    return LogReal(dist.log_survival(m))


def offspring_quantile_log(dist: OffspringDist, log_inv_tail: float) -> LogReal:
    """log F_Z^{-1}(u) for log(1/(1-u)) = ``log_inv_tail``."""
    if log_inv_tail < 0:
        raise ValueError("log_inv_tail must be nonnegative")
    return LogReal(dist.quantile_log(log_inv_tail))


def sample_offspring(dist: OffspringDist, rng: np.random.Generator, cap: int) -> tuple[int, bool]:
    if cap < 1:
        raise ValueError("cap must be at least 1")
    u = float(open_uniform(rng))
    k, trunc = dist.count_from_uniform(u, float(cap))
    return int(k), trunc


def weight_quantile(dist: WeightDist, u: float) -> float:
    return dist.quantile(u)


def weight_cdf(dist: WeightDist, w: float) -> float:
    if np.any(np.asarray(w) < 0):
        raise ValueError("weights are nonnegative")
    out = dist.cdf(w)
    return float(out) if np.ndim(out) == 0 else out


def sample_weight(dist: WeightDist, rng: np.random.Generator) -> float:
    return float(dist.sample(rng))


def k_function(dist: OffspringDist, s: float, direct_terms: int = 2**17) -> float:
    """K_Z(s) = 1 - G_Z(1-s) via s * sum_{k>=0} (1-s)^k S(k).

    Terms are summed directly until they fall below 1e-16 of the running
    sum; if that needs more than ``direct_terms`` terms the remainder is
    replaced by its midpoint integral, which is accurate for the smooth
    tails offered here.
    """
    if not 0 < s <= 1:
        raise ValueError("s must lie in (0, 1]")
    s0 = math.exp(dist.log_survival_int(0))
    if s == 1:
        return s0
    logx = math.log1p(-s)
    total = s0
    k, chunk = 1, 4096
    while k < direct_terms:
        ks = np.arange(k, k + chunk, dtype=float)
        terms = np.exp(ks * logx) * dist.survival_array(ks)
        total += math.fsum(terms)
        k += chunk
        if terms[-1] < 1e-16 * total:
            return s * total
    t = -logx
    a = k - 0.5
    scale = math.exp(-t * a) / t

    def integrand(v: float) -> float:
        return math.exp(-v) * float(dist.survival_cont_array(np.array([a + v / t]))[0])

    # the survival factor bends where v/t is comparable to a
    c = a * t
    pts, x = {0.0, 1.0, 8.0, 40.0}, c / 100.0
    while x < 40.0:
        pts.add(x)
        x *= 10.0
    pts = sorted(pts)
    rem, err = 0.0, 0.0
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", integrate.IntegrationWarning)
        for lo, hi in zip(pts, pts[1:]):
            r, e = integrate.quad(integrand, lo, hi, epsabs=0.0, epsrel=1e-12, limit=200)
            rem += r
            err += e
    if not math.isfinite(rem) or err > 1e-8 * max(rem, 1e-300):
        raise KSeriesError("series remainder did not converge", s * total)
    return s * (total + scale * rem)


def _log_exprel(d: np.ndarray) -> np.ndarray:
    """log((e^d - 1)/d), stable for all d."""
    d = np.asarray(d, dtype=float)
    out = np.empty_like(d)
    small = np.abs(d) < 1e-8
    pos = (d > 0) & ~small
    neg = (d < 0) & ~small
    out[small] = 0.5 * d[small]
    out[pos] = d[pos] + np.log(-np.expm1(-d[pos])) - np.log(d[pos])
    out[neg] = np.log(-np.expm1(d[neg])) - np.log(-d[neg])
    return out


def _log_truncated_mean_segments(dist: OffspringDist, logx: float, n: int = 4097) -> float:
    # m S(m) is integrated in v = log m with log-linear interpolation, exact for power tails
    vs = np.linspace(0.0, logx, n)
    lv = np.where(vs > 0, dist.log_survival_cont_array(vs), 0.0) + vs
    h = vs[1] - vs[0]
    seg = lv[:-1] + math.log(h) + _log_exprel(lv[1:] - lv[:-1])
    integral_log = float(special.logsumexp(np.append(seg, 0.0)))  # the [0, 1] piece has S = 1
    edge = lv[-1]
    diff = 1.0 - math.exp(min(edge - integral_log, 0.0))
    return integral_log + math.log(max(diff, 1e-300))


def log_truncated_mean(dist: OffspringDist, logx: float) -> float:
    """log E[Z; Z <= x] for huge x, via the integral of S on a log scale."""
    if logx <= 0:
        return -math.inf
    if logx > 50.0:
        return _log_truncated_mean_segments(dist, logx)
    vs = np.linspace(0.0, logx, 257)
    logS = np.where(vs > 0, dist.log_survival_cont_array(vs), 0.0)
    c = float(np.max(logS + vs))

    def g(v: float) -> float:
        return math.exp(dist.log_survival_cont(v) + v - c) if v > 0 else math.exp(-c)

    body, _ = integrate.quad(g, 0.0, logx, points=list(vs[1:-1:32]), limit=400)
    integral_log = c + math.log(body + math.exp(-c))  # the [0, 1] piece has S = 1
    edge = dist.log_survival_cont(logx) + logx
    diff = 1.0 - math.exp(min(edge - integral_log, 0.0))
    return integral_log + math.log(max(diff, 1e-300))


# ---------------------------------------------------------------------------
# Seeding and configuration
# ---------------------------------------------------------------------------


def _tag_int(tag: str) -> int:
    return zlib.crc32(tag.encode("utf-8"))


def stream(seed: int, tag: str, rep: int = 0) -> np.random.Generator:
    """Independent generator for (seed, module tag, rep index)."""
    ss = np.random.SeedSequence(entropy=int(seed) & (2**64 - 1), spawn_key=(_tag_int(tag), int(rep)))
    return np.random.Generator(np.random.PCG64(ss))


def stream_key(seed: int, tag: str, rep: int = 0) -> int:
    """64-bit key for the counter-based lazy tree of one rep."""
    ss = np.random.SeedSequence(entropy=int(seed) & (2**64 - 1), spawn_key=(_tag_int(tag), int(rep)))
    return int(ss.generate_state(1, dtype=np.uint64)[0])


OFFSPRING_FAMILIES = {
    "power_tail": lambda c: PowerTail(c["beta"]),
    "log_tail": lambda c: LogTail(),
    "deterministic": lambda c: Deterministic(c["k"]),
    "geometric": lambda c: Geometric(c["q"]),
    "piecewise_tail": lambda c: PiecewiseTail(c["log_m"], c["log_survival"], c.get("tail_slope")),
}
OFFSPRING_KEYS = {
    "power_tail": {"beta"},
    "log_tail": set(),
    "deterministic": {"k"},
    "geometric": {"q"},
    "piecewise_tail": {"log_m", "log_survival", "tail_slope"},
}

WEIGHT_FAMILIES = {
    "uniform01": lambda c: Uniform01(),
    "exponential": lambda c: Exponential(c.get("rate", 1.0)),
    "point_mass": lambda c: PointMass(c["a"]),
    "double_exp_small": lambda c: DoubleExpSmall(c.get("knee", 1.0)),
    "log_inverse": lambda c: LogInverse(c.get("alpha", 1.0)),
    "exp_inverse": lambda c: ExpInverse(c.get("alpha", 1.0)),
    "atomic": lambda c: Atomic(c["positions"], c["masses"]),
    "mixture_zero_atom": lambda c: MixtureWithZeroAtom(c["p"], weight_from_config(c["base"])),
}
WEIGHT_KEYS = {
    "uniform01": set(),
    "exponential": {"rate"},
    "point_mass": {"a"},
    "double_exp_small": {"knee"},
    "log_inverse": {"alpha"},
    "exp_inverse": {"alpha"},
    "atomic": {"positions", "masses"},
    "mixture_zero_atom": {"p", "base"},
}


def _from_config(cfg: dict, table: dict, keys: dict, kind: str):
    cfg = dict(cfg)
    fam = cfg.pop("family", None)
    if fam not in table:
        raise ValueError(f"unknown {kind} family {fam!r}")
    unknown = set(cfg) - keys[fam]
    if unknown:
        raise ValueError(f"unknown keys for {kind} family {fam!r}: {sorted(unknown)}")
    return table[fam](cfg)


def offspring_from_config(cfg: dict) -> OffspringDist:
    return _from_config(cfg, OFFSPRING_FAMILIES, OFFSPRING_KEYS, "offspring")


def weight_from_config(cfg: dict) -> WeightDist:
    return _from_config(cfg, WEIGHT_FAMILIES, WEIGHT_KEYS, "weight")
