# cython: boundscheck=False, wraparound=False, cdivision=True
"""Compiled best-first search over the counter-based lazy tree."""

from libc.math cimport log, log1p, expm1, exp, ceil, pow, INFINITY, NAN
from libc.stdlib cimport malloc, realloc, free
from libc.stdint cimport uint64_t

cdef uint64_t GOLDEN = 0x9E3779B97F4A7C15ULL
cdef uint64_t C1 = 0xBF58476D1CE4E5B9ULL
cdef uint64_t C2 = 0x94D049BB133111EBULL
cdef uint64_t C3 = 0x632BE59BD9B4E019ULL
cdef uint64_t C4 = 0xD1B54A32D192ED03ULL
cdef double ONE_MINUS = 1.0 - 2.0 ** -53
cdef double INV52 = 2.0 ** -52
cdef double SNAP = 0.9999999999999
cdef double LN2 = 0.6931471805599453


cdef inline uint64_t mix64(uint64_t z) noexcept nogil:
    z = z + GOLDEN
    z = (z ^ (z >> 30)) * C1
    z = (z ^ (z >> 27)) * C2
    return z ^ (z >> 31)


cdef inline double unit(uint64_t key, uint64_t k) noexcept nogil:
    return (<double>(mix64(key + k * C4) >> 12) + 0.5) * INV52


cdef inline uint64_t child_key(uint64_t key, uint64_t j) noexcept nogil:
    return mix64(mix64(key ^ C3) + j)


cdef inline double next_order_stat(double prev, double v, double remaining) noexcept nogil:
    cdef double u = prev + (1.0 - prev) * (-expm1(log(v) / remaining))
    return u if u < ONE_MINUS else ONE_MINUS


cdef inline double count_coded(int code, double par, double u, double cap, bint* trunc) noexcept nogil:
    cdef double L, xl, r, k
    if code == 1:
        if par > cap:
            trunc[0] = 1
            return cap
        return par
    L = -log1p(-u)
    if code == 2:
        xl = L / par
        if xl > log(cap):
            trunc[0] = 1
            return cap
        k = ceil(exp(xl) * SNAP)
        return k if k > 1 else 1.0
    if code == 3:
        if L > 700.0:
            trunc[0] = 1
            return cap
        xl = exp(L) * LN2
        if xl > log(cap):
            trunc[0] = 1
            return cap
        k = ceil(exp(xl) * SNAP)
        return k if k > 3 else 3.0
    r = -log1p(-par)
    k = ceil(L / r * SNAP - 1.0)
    if k < 0:
        k = 0.0
    if k > cap:
        trunc[0] = 1
        return cap
    return k


cdef inline double weight_coded(int code, double par, double u) noexcept nogil:
    cdef double c
    if code == 1:
        return u
    if code == 2:
        return -log1p(-u) / par
    if code == 3:
        return par
    if code == 4:
        c = exp(-exp(1.0 / par))
        if u <= c:
            return 1.0 / log(-log(u))
        return par + (u - c) / (1.0 - c)
    if code == 5:
        return exp(-pow(u, -1.0 / par))
    return pow(-log(u), -1.0 / par)


cdef struct Entry:
    double g
    long long seq
    uint64_t pkey
    double pY
    double U
    double pg
    long long j
    int plvl


cdef inline bint less(Entry* a, Entry* b) noexcept nogil:
    return a.g < b.g or (a.g == b.g and a.seq < b.seq)


cdef struct Heap:
    Entry* data
    long long size
    long long cap


cdef int heap_push(Heap* h, Entry e) noexcept nogil:
    cdef long long i, p
    cdef Entry* grown
    if h.size == h.cap:
        grown = <Entry*> realloc(h.data, 2 * h.cap * sizeof(Entry))
        if grown == NULL:
            return -1
        h.data = grown
        h.cap = 2 * h.cap
    i = h.size
    h.size += 1
    while i > 0:
        p = (i - 1) >> 1
        if less(&e, &h.data[p]):
            h.data[i] = h.data[p]
            i = p
        else:
            break
    h.data[i] = e
    return 0


cdef Entry heap_pop(Heap* h) noexcept nogil:
    cdef Entry top = h.data[0]
    cdef Entry last
    cdef long long i = 0, c
    h.size -= 1
    if h.size > 0:
        last = h.data[h.size]
        while True:
            c = 2 * i + 1
            if c >= h.size:
                break
            if c + 1 < h.size and less(&h.data[c + 1], &h.data[c]):
                c += 1
            if less(&h.data[c], &last):
                h.data[i] = h.data[c]
                i = c
            else:
                break
        h.data[i] = last
    return top


cdef int run_search(int zc, double zp, int wc, double wp, double cap, uint64_t root,
                    int depth, long long budget, double bound, double* M,
                    long long* nodes_out, bint* exhausted_out, bint* trunc_out,
                    double* frontier_out) noexcept nogil:
    cdef Heap h
    cdef Entry e, n
    cdef double Y, U, w, g2, U2, cY, U1, g1
    cdef long long seq = 0, nodes = 0
    cdef int settled = 0, clvl, lvl
    cdef bint trunc = 0, exhausted = 0
    cdef uint64_t ckey
    h.cap = 1024
    h.size = 0
    h.data = <Entry*> malloc(h.cap * sizeof(Entry))
    if h.data == NULL:
        return -1
    M[0] = 0.0
    for lvl in range(1, depth + 1):
        M[lvl] = NAN
    Y = count_coded(zc, zp, unit(root, 0), cap, &trunc)
    if Y > 0:
        U = next_order_stat(0.0, unit(root, 1), Y)
        w = weight_coded(wc, wp, U)
        if w < bound:
            n.g = w; n.seq = 0; n.pkey = root; n.pY = Y; n.j = 1; n.U = U; n.pg = 0.0; n.plvl = 0
            heap_push(&h, n)
            seq = 1
    while h.size > 0:
        if nodes >= budget:
            exhausted = 1
            break
        e = heap_pop(&h)
        nodes += 1
        clvl = e.plvl + 1
        ckey = child_key(e.pkey, <uint64_t> e.j)
        if clvl > settled:
            M[clvl] = e.g
            settled = clvl
            if settled == depth:
                break
        if e.j < e.pY:
            U2 = next_order_stat(e.U, unit(e.pkey, <uint64_t> (e.j + 1)), e.pY - e.j)
            g2 = e.pg + weight_coded(wc, wp, U2)
            if g2 < bound:
                n.g = g2; n.seq = seq; n.pkey = e.pkey; n.pY = e.pY; n.j = e.j + 1
                n.U = U2; n.pg = e.pg; n.plvl = e.plvl
                if heap_push(&h, n) != 0:
                    free(h.data)
                    return -1
                seq += 1
        if clvl < depth:
            cY = count_coded(zc, zp, unit(ckey, 0), cap, &trunc)
            if cY > 0:
                U1 = next_order_stat(0.0, unit(ckey, 1), cY)
                g1 = e.g + weight_coded(wc, wp, U1)
                if g1 < bound:
                    n.g = g1; n.seq = seq; n.pkey = ckey; n.pY = cY; n.j = 1
                    n.U = U1; n.pg = e.g; n.plvl = clvl
                    if heap_push(&h, n) != 0:
                        free(h.data)
                        return -1
                    seq += 1
    frontier_out[0] = h.data[0].g if exhausted and h.size > 0 else INFINITY
    if not exhausted:
        for lvl in range(settled + 1, depth + 1):
            M[lvl] = INFINITY
    free(h.data)
    nodes_out[0] = nodes
    exhausted_out[0] = exhausted
    trunc_out[0] = trunc
    return 0


def search(int zc, double zp, int wc, double wp, double cap, root, int depth,
           long long budget, double bound=INFINITY):
    """Compiled counterpart of ``_fallback.search`` for coded families."""
    cdef uint64_t r = <uint64_t> root
    cdef long long nodes = 0
    cdef bint exhausted = 0, trunc = 0
    cdef double frontier = INFINITY
    cdef double* M = <double*> malloc((depth + 1) * sizeof(double))
    cdef int status
    if M == NULL:
        raise MemoryError()
    with nogil:
        status = run_search(zc, zp, wc, wp, cap, r, depth, budget, bound, M,
                            &nodes, &exhausted, &trunc, &frontier)
    if status != 0:
        free(M)
        raise MemoryError("search frontier outgrew available memory")
    out = [M[i] for i in range(depth + 1)]
    free(M)
    return out, nodes, bool(exhausted), bool(trunc), frontier


cdef int run_beam(int zc, double zp, int wc, double wp, double cap, uint64_t root,
                  int depth, long long width, double* U, bint* trunc_out) noexcept nogil:
    cdef Heap h
    cdef Entry e, n
    cdef double Y, u, u2
    cdef long long seq = 0, i, count, size = 1
    cdef int lvl
    cdef bint trunc = 0
    cdef double* g_cur = <double*> malloc(width * sizeof(double))
    cdef uint64_t* k_cur = <uint64_t*> malloc(width * sizeof(uint64_t))
    cdef double* g_nxt = <double*> malloc(width * sizeof(double))
    cdef uint64_t* k_nxt = <uint64_t*> malloc(width * sizeof(uint64_t))
    cdef double* gt
    cdef uint64_t* kt
    h.cap = 1024
    h.size = 0
    h.data = <Entry*> malloc(h.cap * sizeof(Entry))
    if g_cur == NULL or k_cur == NULL or g_nxt == NULL or k_nxt == NULL or h.data == NULL:
        free(g_cur); free(k_cur); free(g_nxt); free(k_nxt); free(h.data)
        return -1
    U[0] = 0.0
    for lvl in range(1, depth + 1):
        U[lvl] = INFINITY
    g_cur[0] = 0.0
    k_cur[0] = root
    for lvl in range(1, depth + 1):
        h.size = 0
        for i in range(size):
            Y = count_coded(zc, zp, unit(k_cur[i], 0), cap, &trunc)
            if Y > 0:
                u = next_order_stat(0.0, unit(k_cur[i], 1), Y)
                n.g = g_cur[i] + weight_coded(wc, wp, u); n.seq = seq; n.pkey = k_cur[i]; n.pY = Y
                n.j = 1; n.U = u; n.pg = g_cur[i]; n.plvl = lvl - 1
                if heap_push(&h, n) != 0:
                    free(g_cur); free(k_cur); free(g_nxt); free(k_nxt); free(h.data)
                    return -1
                seq += 1
        count = 0
        while h.size > 0 and count < width:
            e = heap_pop(&h)
            g_nxt[count] = e.g
            k_nxt[count] = child_key(e.pkey, <uint64_t> e.j)
            count += 1
            if e.j < e.pY:
                u2 = next_order_stat(e.U, unit(e.pkey, <uint64_t> (e.j + 1)), e.pY - e.j)
                n.g = e.pg + weight_coded(wc, wp, u2); n.seq = seq; n.pkey = e.pkey; n.pY = e.pY
                n.j = e.j + 1; n.U = u2; n.pg = e.pg; n.plvl = e.plvl
                if heap_push(&h, n) != 0:
                    free(g_cur); free(k_cur); free(g_nxt); free(k_nxt); free(h.data)
                    return -1
                seq += 1
        if count == 0:
            break
        U[lvl] = g_nxt[0]
        gt = g_cur; g_cur = g_nxt; g_nxt = gt
        kt = k_cur; k_cur = k_nxt; k_nxt = kt
        size = count
    free(g_cur); free(k_cur); free(g_nxt); free(k_nxt); free(h.data)
    trunc_out[0] = trunc
    return 0


def beam(int zc, double zp, int wc, double wp, double cap, root, int depth, long long width):
    """Compiled counterpart of ``_fallback.beam`` for coded families."""
    cdef uint64_t r = <uint64_t> root
    cdef bint trunc = 0
    cdef int status
    cdef double* U = <double*> malloc((depth + 1) * sizeof(double))
    if U == NULL:
        raise MemoryError()
    if width < 1:
        free(U)
        raise ValueError("width must be positive")
    with nogil:
        status = run_beam(zc, zp, wc, wp, cap, r, depth, width, U, &trunc)
    if status != 0:
        free(U)
        raise MemoryError("beam outgrew available memory")
    out = [U[i] for i in range(depth + 1)]
    free(U)
    return out, bool(trunc)


def unit_py(root, k):
    return unit(<uint64_t> root, <uint64_t> k)


def child_key_py(root, j):
    return child_key(<uint64_t> root, <uint64_t> j)
