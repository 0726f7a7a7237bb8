"""Pure-Python twin of the compiled search kernel.

Every arithmetic step mirrors ``_kernels.pyx`` so that both back ends
return bit-identical results for the same key.
"""

from __future__ import annotations

import heapq
import math

MASK = (1 << 64) - 1
GOLDEN = 0x9E3779B97F4A7C15
C1 = 0xBF58476D1CE4E5B9
C2 = 0x94D049BB133111EB
C3 = 0x632BE59BD9B4E019
C4 = 0xD1B54A32D192ED03
ONE_MINUS = 1.0 - 2.0**-53
INV52 = 2.0**-52
SNAP = 0.9999999999999
LN2 = 0.6931471805599453


def mix64(z: int) -> int:
    z = (z + GOLDEN) & MASK
    z = ((z ^ (z >> 30)) * C1) & MASK
    z = ((z ^ (z >> 27)) * C2) & MASK
    return z ^ (z >> 31)


def unit(key: int, k: int) -> float:
    return ((mix64((key + k * C4) & MASK) >> 12) + 0.5) * INV52


def child_key(key: int, j: int) -> int:
    return mix64((mix64(key ^ C3) + j) & MASK)


def next_order_stat(prev: float, v: float, remaining: float) -> float:
    """Next ascending uniform order statistic given ``remaining`` unseen draws."""
    u = prev + (1.0 - prev) * (-math.expm1(math.log(v) / remaining))
    return u if u < ONE_MINUS else ONE_MINUS


# family scalars, coded exactly as in the kernel ------------------------------


def count_coded(code: int, par: float, u: float, cap: float) -> tuple[float, bool]:
    if code == 1:
        return (cap, True) if par > cap else (par, False)
    L = -math.log1p(-u)
    if code == 2:
        xl = L / par
        if xl > math.log(cap):
            return cap, True
        k = math.ceil(math.exp(xl) * SNAP)
        return (float(k) if k > 1 else 1.0), False
    if code == 3:
        if L > 700.0:
            return cap, True
        xl = math.exp(L) * LN2
        if xl > math.log(cap):
            return cap, True
        k = math.ceil(math.exp(xl) * SNAP)
        return (float(k) if k > 3 else 3.0), False
    if code == 4:
        r = -math.log1p(-par)
        k = math.ceil(L / r * SNAP - 1.0)
        k = float(k) if k > 0 else 0.0
        return (cap, True) if k > cap else (k, False)
    raise ValueError(f"unknown offspring code {code}")


def weight_coded(code: int, par: float, u: float) -> float:
    if code == 1:
        return u
    if code == 2:
        return -math.log1p(-u) / par
    if code == 3:
        return par
    if code == 4:
        c = math.exp(-math.exp(1.0 / par))
        if u <= c:
            return 1.0 / math.log(-math.log(u))
        return par + (u - c) / (1.0 - c)
    if code == 5:
        return math.exp(-math.pow(u, -1.0 / par))
    if code == 6:
        return math.pow(-math.log(u), -1.0 / par)
    raise ValueError(f"unknown weight code {code}")


class Families:
    """Scalar count and weight maps for one (Z, W) pair."""

    def __init__(self, Z, W, cap: float):
        self.cap = float(cap)
        zs, ws = Z.kernel_spec(), W.kernel_spec()
        if zs is not None:
            code, par = zs
            self.count = lambda u: count_coded(code, par, u, self.cap)
        else:
            self.count = lambda u: Z.count_from_uniform(u, self.cap)
        if ws is not None:
            wcode, wpar = ws
            self.weight = lambda u: weight_coded(wcode, wpar, u)
        else:
            self.weight = W.weight_from_uniform


class LazyTree:
    """Random-access view of the counter-based tree rooted at ``key``.

    Node ``key`` has ``count(key)`` children; its j-th lightest child edge
    (1-based) has weight ``weights(key)[j-1]`` and key ``child_key(key, j)``.
    """

    def __init__(self, fam: Families):
        self.fam = fam

    def count(self, key: int) -> tuple[float, bool]:
        return self.fam.count(unit(key, 0))

    def iter_children(self, key: int):
        Y, _ = self.count(key)
        U = 0.0
        j = 1
        while j <= Y:
            U = next_order_stat(U, unit(key, j), Y - j + 1.0)
            yield j, self.fam.weight(U), child_key(key, j)
            j += 1


def search(fam: Families, root: int, depth: int, budget: int, bound: float = math.inf):
    """Best-first search for the minimal path weight at every level.

    Returns ``(M, nodes, exhausted, truncated, frontier)`` where ``M[l]``
    is the minimal level-l path weight, ``inf`` when no level-l node has
    weight below ``bound`` and ``nan`` when the budget ran out first.  After
    exhaustion ``frontier`` is the lightest unexpanded weight, a lower bound
    for every unsettled level; otherwise it is ``inf``.
    """
    M = [math.nan] * (depth + 1)
    M[0] = 0.0
    truncated = False
    Y, tr = fam.count(unit(root, 0))
    truncated |= tr
    heap: list = []
    seq = 0
    if Y > 0:
        U = next_order_stat(0.0, unit(root, 1), Y)
        w = fam.weight(U)
        if w < bound:
            heap.append((w, 0, root, Y, 1, U, 0.0, 0))
            seq = 1
    settled = 0
    nodes = 0
    exhausted = False
    while heap:
        if nodes >= budget:
            exhausted = True
            break
        g, _, pkey, pY, j, U, pg, plvl = heapq.heappop(heap)
        nodes += 1
        clvl = plvl + 1
        ckey = child_key(pkey, j)
        if clvl > settled:
            M[clvl] = g
            settled = clvl
            if settled == depth:
                break
        if j < pY:
            U2 = next_order_stat(U, unit(pkey, j + 1), pY - j)
            g2 = pg + fam.weight(U2)
            if g2 < bound:
                heapq.heappush(heap, (g2, seq, pkey, pY, j + 1, U2, pg, plvl))
                seq += 1
        if clvl < depth:
            cY, tr = fam.count(unit(ckey, 0))
            truncated |= tr
            if cY > 0:
                U1 = next_order_stat(0.0, unit(ckey, 1), cY)
                g1 = g + fam.weight(U1)
                if g1 < bound:
                    heapq.heappush(heap, (g1, seq, ckey, cY, 1, U1, g, clvl))
                    seq += 1
    frontier = heap[0][0] if exhausted and heap else math.inf
    if not exhausted:
        for lvl in range(settled + 1, depth + 1):
            M[lvl] = math.inf
    return M, nodes, exhausted, truncated, frontier


def beam(fam: Families, root: int, depth: int, width: int):
    """Upper bounds on M_1..M_depth from a per-level beam of the ``width`` lightest paths.

    Each level merges the children of the current beam in increasing path
    weight and keeps the first ``width``; the lightest of them is a real
    path weight and hence bounds the level minimum from above.
    """
    U = [math.inf] * (depth + 1)
    U[0] = 0.0
    truncated = False
    level = [(0.0, root)]
    seq = 0
    for lvl in range(1, depth + 1):
        heap: list = []
        for g, key in level:
            Y, tr = fam.count(unit(key, 0))
            truncated |= tr
            if Y > 0:
                u = next_order_stat(0.0, unit(key, 1), Y)
                heap.append((g + fam.weight(u), seq, key, Y, 1, u, g))
                seq += 1
        heapq.heapify(heap)
        nxt = []
        while heap and len(nxt) < width:
            w, _, key, Y, j, u, g = heapq.heappop(heap)
            nxt.append((w, child_key(key, j)))
            if j < Y:
                u2 = next_order_stat(u, unit(key, j + 1), Y - j)
                heapq.heappush(heap, (g + fam.weight(u2), seq, key, Y, j + 1, u2, g))
                seq += 1
        if not nxt:
            break
        U[lvl] = nxt[0][0]
        level = nxt
    return U, truncated
