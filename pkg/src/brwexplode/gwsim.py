"""Weighted Galton-Watson tree simulation.

Two kinds of randomness are used.  Generation sizes, level minima and
trimmed trees draw from numpy generators obtained with
``distributions.stream``.  Exact minimal displacements walk the
counter-based lazy tree of ``kernels``, whose every node, child count and
edge weight is a pure function of a 64-bit key.
"""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np
from scipy.special import logsumexp

from . import kernels
from .criteria import SpeedSeq, find_plump_witness, trimming_speed
from .distributions import (
    COUNT_CAP,
    LOG_MAX,
    Deterministic,
    OffspringDist,
    WeightDist,
    log_truncated_mean,
    open_uniform,
    stream,
    stream_key,
)

TOP_K = 64


@dataclass
class SimConfig:
    seed: int = 0
    depth: int = 10
    reps: int = 100
    node_budget: int = 10**6
    offspring_cap: int = 10**6
    conditioning: str = "restart"  # or "none"
    threads: int = 1
    max_restarts: int = 1000
    backend: str | None = None

    def __post_init__(self):
        if self.depth < 1 or self.reps < 1:
            raise ValueError("depth and reps must be at least 1")
        if self.node_budget < self.depth:
            raise ValueError("node_budget must be at least depth")
        if self.offspring_cap < 1:
            raise ValueError("offspring_cap must be positive")
        if self.conditioning not in ("restart", "none"):
            raise ValueError("conditioning must be 'restart' or 'none'")


@dataclass
class RepRecord:
    rep: int
    sizes_log: list  # log Z_n for n = 0..depth (-inf extinct, nan unknown, inf overflow)
    mn: list  # M_0..M_depth (inf extinct, nan unsettled)
    truncated: list  # per level
    budget_exhausted: bool = False
    restarts: int = 0
    nodes: int = 0


@dataclass
class SimOutcome:
    config: SimConfig
    kind: str
    per_rep: list = field(default_factory=list)

    def surviving(self) -> list:
        d = self.config.depth
        if self.kind == "sizes":
            return [r for r in self.per_rep if r.sizes_log[d] > -math.inf]
        return [r for r in self.per_rep if r.mn[d] < math.inf]

    def mn_matrix(self) -> np.ndarray:
        return np.array([r.mn for r in self.per_rep], dtype=float)

    def summary(self) -> list:
        """Per-level mean and quantiles of M_n over reps with a finite value."""
        out = []
        M = self.mn_matrix() if self.kind == "displacement" else None
        S = np.array([r.sizes_log for r in self.per_rep], dtype=float)
        for lvl in range(self.config.depth + 1):
            row = {"level": lvl}
            if M is not None:
                col = M[:, lvl]
                col = col[np.isfinite(col)]
                if len(col):
                    row.update(mean=float(col.mean()), median=float(np.median(col)),
                               q10=float(np.quantile(col, 0.1)), q90=float(np.quantile(col, 0.9)), n=len(col))
            col = S[:, lvl]
            col = col[np.isfinite(col)]
            if len(col):
                row["median_log_size"] = float(np.median(col))
            out.append(row)
        return out

    def rows(self) -> list:
        """One record per (rep, level) for tabular output; unknown values are None."""
        out = []
        for r in self.per_rep:
            for lvl in range(self.config.depth + 1):
                z = r.sizes_log[lvl]
                m = r.mn[lvl]
                out.append({
                    "rep": r.rep, "level": lvl,
                    "Zn_log": None if math.isnan(z) else z,
                    "Mn": None if math.isnan(m) else m,
                    "truncated": bool(r.truncated[lvl]),
                    "budget_exhausted": bool(r.budget_exhausted),
                })
        return out


def map_reps(fn: Callable[[int], object], reps: int, threads: int = 1) -> list:
    """Run ``fn`` on every rep index; results come back in rep order."""
    if threads <= 1:
        return [fn(i) for i in range(reps)]
    with ThreadPoolExecutor(max_workers=threads) as pool:
        return list(pool.map(fn, range(reps)))


# ---------------------------------------------------------------------------
# Generation sizes
# ---------------------------------------------------------------------------


def aggregate_log_sum(Z: OffspringDist, logN: float, rng: np.random.Generator, k: int = TOP_K) -> float:
    """Approximate log of the total offspring of exp(logN) parents.

    Finite-variance laws use a normal approximation; otherwise the k largest
    counts are drawn exactly as extreme order statistics and the rest
    contributes its conditional mean N E[Z; Z <= x_k].
    """
    if isinstance(Z, Deterministic):
        return logN + math.log(Z.k) if Z.k > 0 else -math.inf
    mu, var = Z.mean, Z.variance
    if math.isfinite(var):
        xi = rng.standard_normal()
        rel = math.sqrt(var) * xi * math.exp(-0.5 * logN) / mu
        return logN + math.log(mu) + math.log1p(max(rel, -0.999999))
    gam = np.cumsum(rng.standard_exponential(k))
    L = logN - np.log(gam)
    tops = np.array([Z.quantile_log(float(x)) if x > 0 else 0.0 for x in L])
    if not np.all(np.isfinite(tops)):
        return math.inf
    bulk = logN + log_truncated_mean(Z, float(tops[-1]))
    return float(logsumexp(np.append(tops, bulk)))


def _grow_once(Z: OffspringDist, depth: int, cap: int, rng: np.random.Generator):
    """One realisation of Z_0..Z_depth; returns (log sizes, exact sizes or None, truncation flags)."""
    logs = [0.0]
    exact: list = [1]
    flags = [False]
    N: int | None = 1
    logN = 0.0
    for _ in range(depth):
        if logN == -math.inf:
            logs.append(-math.inf)
            exact.append(0)
            flags.append(flags[-1])
            continue
        if math.isinf(logN):
            logs.append(math.inf)
            exact.append(None)
            flags.append(True)
            continue
        if N is not None and N <= cap:
            counts, tr = Z.sample(rng, N)
            total = float(np.sum(counts))
            trunc = bool(np.any(tr))
            if total <= 2**53:
                N = int(total)
                logN = math.log(N) if N > 0 else -math.inf
            else:
                N = None
                logN = math.log(total)
            flag = trunc
        else:
            logN = aggregate_log_sum(Z, logN, rng)
            N = None
            flag = True
        logs.append(logN)
        exact.append(N)
        flags.append(flags[-1] or flag)
    return logs, exact, flags


def _with_restarts(config: SimConfig, rep: int, tag: str, attempt_fn, survived: Callable) -> tuple:
    restarts = 0
    while True:
        name = tag if restarts == 0 else f"{tag}/{restarts}"
        res = attempt_fn(stream(config.seed, name, rep), name)
        if config.conditioning == "none" or survived(res) or restarts >= config.max_restarts:
            return res, restarts
        restarts += 1


def grow_generations(Z: OffspringDist, config: SimConfig) -> SimOutcome:
    """Generation sizes per rep; exact up to ``offspring_cap`` parents, aggregated (flagged) above."""
    hopeless = Z.prob_zero() >= 1.0

    def one(rep: int) -> RepRecord:
        def attempt(rng, _name):
            return _grow_once(Z, config.depth, config.offspring_cap, rng)

        (logs, _, flags), restarts = _with_restarts(
            config, rep, "grow", attempt, lambda res: hopeless or res[0][-1] > -math.inf)
        # displacements are not simulated here; only extinction pins M_n down
        mn = [0.0] + [math.inf if logs[i] == -math.inf else math.nan for i in range(1, config.depth + 1)]
        return RepRecord(rep, logs, mn, flags, False, restarts)

    return SimOutcome(config, "sizes", map_reps(one, config.reps, config.threads))


# ---------------------------------------------------------------------------
# Exact minimal displacement
# ---------------------------------------------------------------------------


def displacement_root(seed: int, rep: int, restart: int = 0) -> int:
    return stream_key(seed, "mindisp" if restart == 0 else f"mindisp/{restart}", rep)


def min_displacement(Z: OffspringDist, W: WeightDist, config: SimConfig, bound: float = math.inf) -> SimOutcome:
    """Exact M_1..M_depth per rep by best-first search.

    With a finite ``bound`` only paths lighter than the bound are explored
    and ``M_n = inf`` means no level-n node is that light.
    """
    def one(rep: int) -> RepRecord:
        restarts, total_nodes = 0, 0
        while True:
            root = displacement_root(config.seed, rep, restarts)
            M, nodes, exhausted, trunc, _ = kernels.search(Z, W, root, config.depth, config.node_budget,
                                                        COUNT_CAP, bound, config.backend)
            total_nodes += nodes
            retry = (config.conditioning == "restart" and bound == math.inf and not exhausted
                     and M[-1] == math.inf and restarts < config.max_restarts and Z.prob_zero() < 1.0)
            if not retry:
                break
            restarts += 1
        sizes = [0.0] + [math.nan] * config.depth
        return RepRecord(rep, sizes, list(M), [False] + [trunc] * config.depth, exhausted, restarts, total_nodes)

    return SimOutcome(config, "displacement", map_reps(one, config.reps, config.threads))


def enumerate_min_displacement(Z: OffspringDist, W: WeightDist, root: int, depth: int,
                               cap: float = COUNT_CAP) -> list:
    """Brute-force M_0..M_depth by visiting every node of the lazy tree."""
    tree = kernels.LazyTree(kernels.Families(Z, W, cap))
    M = [0.0] + [math.inf] * depth
    frontier = [(root, 0.0)]
    for lvl in range(1, depth + 1):
        nxt = []
        for key, g in frontier:
            for _, w, ck in tree.iter_children(key):
                nxt.append((ck, g + w))
        if nxt:
            M[lvl] = min(g for _, g in nxt)
        frontier = nxt
    return M


@dataclass
class BracketRecord:
    rep: int
    lower: list  # lower bounds on M_0..M_depth
    upper: list  # upper bounds on M_0..M_depth
    exact: list  # True where the search settled the level
    nodes: int
    truncated: bool


def bracket_displacement(Z: OffspringDist, W: WeightDist, config: SimConfig, width: int = 4096) -> list:
    """Two-sided bounds on M_n when exact search cannot reach the full depth.

    The best-first search runs on the same tree as ``min_displacement``;
    levels it settles are exact.  If its budget runs out, the lightest
    unexpanded path weight bounds the remaining levels from below and a
    beam of ``width`` paths per level bounds them from above.
    """
    def one(rep: int) -> BracketRecord:
        restarts = 0
        while True:
            root = displacement_root(config.seed, rep, restarts)
            M, nodes, exhausted, trunc, frontier = kernels.search(
                Z, W, root, config.depth, config.node_budget, COUNT_CAP, math.inf, config.backend)
            retry = (config.conditioning == "restart" and not exhausted and M[-1] == math.inf
                     and restarts < config.max_restarts and Z.prob_zero() < 1.0)
            if not retry:
                break
            restarts += 1
        lower, upper, exact = list(M), list(M), [not math.isnan(m) for m in M]
        if exhausted:
            ub, tr2 = kernels.beam(Z, W, root, config.depth, width, COUNT_CAP, config.backend)
            trunc = trunc or tr2
            floor = max([m for m in M if not math.isnan(m)] + [frontier])
            for lvl, m in enumerate(M):
                if math.isnan(m):
                    lower[lvl] = floor
                    upper[lvl] = ub[lvl]
        return BracketRecord(rep, lower, upper, exact, nodes, trunc)

    return map_reps(one, config.reps, config.threads)


# ---------------------------------------------------------------------------
# Level minima
# ---------------------------------------------------------------------------


def sample_level_min(W: WeightDist, logN: float, rng: np.random.Generator) -> float:
    """Minimum of N i.i.d. weights as F_W^{-1}(1 - U^{1/N}), evaluated in log space."""
    u = float(open_uniform(rng))
    y = math.log(u) * math.exp(-logN) if logN < 700 else 0.0
    if y < -1e-10:
        lv = math.log(-math.expm1(y))
    else:
        lv = math.log(-math.log(u)) - logN
    lq = W.quantile_log(lv)
    return math.exp(lq) if lq > -math.inf else 0.0


@dataclass
class LevelMinResult:
    sums: np.ndarray
    minima: np.ndarray  # reps x depth, level minima Y_1..Y_depth (inf when extinct)
    truncated: np.ndarray  # reps x depth
    restarts: list


def level_min_sum(Z: OffspringDist, W: WeightDist, config: SimConfig) -> LevelMinResult:
    """Per-rep sums of the level minima Y_i of edge weights over the realised tree."""
    cap = config.offspring_cap
    hopeless = Z.prob_zero() >= 1.0

    def one(rep: int):
        def attempt(rng, _name):
            logs, exact, flags = _grow_once(Z, config.depth, cap, rng)
            ys, tr = [], []
            for lvl in range(1, config.depth + 1):
                N, lN = exact[lvl], logs[lvl]
                if lN == -math.inf:
                    ys.append(math.inf)
                    tr.append(flags[lvl])
                elif N is not None and N <= cap:
                    ys.append(float(np.min(W.sample(rng, N))))
                    tr.append(flags[lvl])
                else:
                    ys.append(sample_level_min(W, lN, rng))
                    tr.append(True)
            return ys, tr, logs

        (ys, tr, _), restarts = _with_restarts(config, rep, "levelmin", attempt,
                                               lambda res: hopeless or res[2][-1] > -math.inf)
        return ys, tr, restarts

    res = map_reps(one, config.reps, config.threads)
    minima = np.array([r[0] for r in res], dtype=float)
    return LevelMinResult(minima.sum(axis=1), minima, np.array([r[1] for r in res], dtype=bool),
                          [r[2] for r in res])


# ---------------------------------------------------------------------------
# Trimming and speeds
# ---------------------------------------------------------------------------


def default_trim_levels(Z: OffspringDist, W: WeightDist, depth: int) -> list:
    """a_n = F_W^{-1}(1/f(n)) with f the trimming speed of Z (f(0) = 1, f(1) = m0)."""
    wit = find_plump_witness(Z)
    if wit is None:
        raise ValueError(f"{Z!r} is not plump; supply the trimming levels explicitly")
    seq = trimming_speed(Z, wit.eps, max(wit.suggested_m0, 2), depth + 1)
    out = []
    for n in range(1, depth + 1):
        lf = seq.values[n] if n < len(seq.values) else math.inf
        out.append(math.exp(W.quantile_log(-lf)) if math.isfinite(lf) else 0.0)
    return out


@dataclass
class TrimResult:
    frequency: float
    survived: int
    reps: int
    truncated_reps: int
    path_weight_bound: float
    final_log_sizes: list


def trimmed_survival(Z: OffspringDist, W: WeightDist, a_seq: Sequence[float] | None, config: SimConfig) -> TrimResult:
    """Fraction of reps whose trimmed tree (level-n edges kept iff weight <= a_n) reaches ``depth``.

    Above ``offspring_cap`` parents only ``offspring_cap`` of them are
    followed, so the frequency is a lower bound in that case (flagged).
    """
    if a_seq is None:
        a_seq = default_trim_levels(Z, W, config.depth)
    a_seq = list(a_seq)
    if len(a_seq) < config.depth or any(not a > 0 for a in a_seq[: config.depth]):
        raise ValueError("need a positive trimming level for every generation")
    q = [1.0 if math.isinf(a) else float(W.cdf(a)) for a in a_seq[: config.depth]]
    cap = config.offspring_cap

    def one(rep: int):
        rng = stream(config.seed, "trim", rep)
        N, trunc = 1, False
        for lvl in range(config.depth):
            if N == 0:
                break
            if N > cap:
                N, trunc = cap, True
            counts, tr = Z.sample(rng, N)
            trunc |= bool(np.any(tr))
            kept = counts if q[lvl] >= 1.0 else rng.binomial(counts.astype(np.int64), q[lvl]).astype(float)
            total = float(kept.sum())
            N = int(min(total, 2.0**62))
        return N > 0, trunc, (math.log(N) if N > 0 else -math.inf)

    res = map_reps(one, config.reps, config.threads)
    surv = sum(1 for r in res if r[0])
    return TrimResult(surv / config.reps, surv, config.reps, sum(1 for r in res if r[1]),
                      float(math.fsum(a_seq[: config.depth])), [r[2] for r in res])


def speed_sandwich(Z: OffspringDist, f: SpeedSeq, a: int, b: int, config: SimConfig,
                   rel_tol: float = 1e-12) -> float:
    """Fraction of reps with Z_{floor(n/a)} <= f(n) <= Z_{bn} for all 1 <= n <= depth."""
    if a < 1 or b < 1:
        raise ValueError("a and b must be positive integers")
    n_max = min(config.depth, len(f.values) - 1)
    grow_cfg = SimConfig(**{**config.__dict__, "depth": b * n_max})
    out = grow_generations(Z, grow_cfg)
    hits = 0
    for r in out.per_rep:
        ok = True
        for n in range(1, n_max + 1):
            lf = f.values[n]
            lo, hi = r.sizes_log[n // a], r.sizes_log[b * n]
            tol = rel_tol * max(1.0, abs(lf))
            if not (lo <= lf + tol and lf <= hi + tol):
                ok = False
                break
        hits += ok
    return hits / config.reps


# ---------------------------------------------------------------------------
# Path weights near a target
# ---------------------------------------------------------------------------


@dataclass
class SpectrumResult:
    hits: list  # True / False / None (budget exhausted) per rep
    survived: list
    frequency: float  # over surviving reps with a decided outcome


def _window_dfs(tree, key: int, depth: int, lo: float, hi: float, budget: int) -> bool | None:
    """Is there a depth-level node with path weight in [lo, hi]? None if the budget ran out."""
    visits = 0
    stack = [(key, 0.0, 0, tree.iter_children(key))]
    while stack:
        _, g, lvl, it = stack[-1]
        advanced = False
        for _, w, ck in it:
            visits += 1
            if visits > budget:
                return None
            gw = g + w
            if gw > hi:
                break
            if lvl + 1 == depth:
                if gw >= lo:
                    return True
                continue
            stack.append((ck, gw, lvl + 1, tree.iter_children(ck)))
            advanced = True
            break
        if not advanced:
            stack.pop()
    return False


def path_weight_spectrum(Z: OffspringDist, W: WeightDist, a: float, eps_win: float, config: SimConfig) -> SpectrumResult:
    """Per rep, whether some generation-``depth`` path weight lies in [a, a + eps_win].

    Trees are the same lazy trees ``min_displacement`` explores for the
    same seed, so survival is read off the exact M_depth.
    """
    disp = min_displacement(Z, W, config)
    tree = kernels.LazyTree(kernels.Families(Z, W, COUNT_CAP))
    hits, survived = [], []
    for r in disp.per_rep:
        alive = r.mn[-1] < math.inf
        survived.append(alive)
        if not alive:
            hits.append(False)
            continue
        if r.budget_exhausted:
            hits.append(None)
            continue
        if r.mn[-1] > a + eps_win:
            hits.append(False)
            continue
        root = displacement_root(config.seed, r.rep, r.restarts)
        hits.append(_window_dfs(tree, root, config.depth, a, a + eps_win, config.node_budget))
    decided = [h for h, s in zip(hits, survived) if s and h is not None]
    freq = sum(decided) / len(decided) if decided else math.nan
    return SpectrumResult(hits, survived, freq)
