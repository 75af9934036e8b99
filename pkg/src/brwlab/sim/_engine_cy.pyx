# cython: boundscheck=False, wraparound=False, cdivision=True, language_level=3
"""Compiled event engine.

Statement-for-statement twin of _engine_py.run_events; see that file
for the event model.  The two backends must produce bit-identical
trajectories from the same seed, so any change there lands here too.
The debug event log is not supported in this backend.
"""

import numpy as np

from ._table import EngineOutputs

from libc.math cimport floor, log1p
from libc.stdint cimport int64_t, uint64_t

cdef double INV_2_53 = 1.0 / 9007199254740992.0
cdef double NAN_VAL = float("nan")


cdef struct Xo:
    uint64_t s0
    uint64_t s1
    uint64_t s2
    uint64_t s3


cdef inline uint64_t _splitmix_next(uint64_t* st) nogil:
    st[0] = st[0] + <uint64_t>0x9E3779B97F4A7C15
    cdef uint64_t z = st[0]
    z = (z ^ (z >> 30)) * <uint64_t>0xBF58476D1CE4E5B9
    z = (z ^ (z >> 27)) * <uint64_t>0x94D049BB133111EB
    return z ^ (z >> 31)


cdef inline void _xo_init(Xo* x, uint64_t seed) nogil:
    cdef uint64_t st = seed
    x.s0 = _splitmix_next(&st)
    x.s1 = _splitmix_next(&st)
    x.s2 = _splitmix_next(&st)
    x.s3 = _splitmix_next(&st)


cdef inline uint64_t _xo_next(Xo* x) nogil:
    cdef uint64_t s0 = x.s0
    cdef uint64_t s1 = x.s1
    cdef uint64_t s2 = x.s2
    cdef uint64_t s3 = x.s3
    cdef uint64_t t = s0 + s3
    cdef uint64_t result = ((t << 23) | (t >> 41)) + s0
    t = s1 << 17
    s2 ^= s0
    s3 ^= s1
    s1 ^= s2
    s0 ^= s3
    s2 ^= t
    s3 = (s3 << 45) | (s3 >> 19)
    x.s0 = s0
    x.s1 = s1
    x.s2 = s2
    x.s3 = s3
    return result


cdef inline double _xo_double(Xo* x) nogil:
    return <double>(_xo_next(x) >> 11) * INV_2_53


def xoshiro_probe(seed, int n):
    """First n doubles of the stream; parity check against the
    pure-Python generator."""
    cdef Xo rng
    _xo_init(&rng, <uint64_t>(seed & ((1 << 64) - 1)))
    out = []
    cdef int i
    for i in range(n):
        out.append(_xo_double(&rng))
    return out


cdef inline void _tree_add(double[::1] tree, Py_ssize_t cap,
                           Py_ssize_t i, double delta) nogil:
    i += 1
    while i <= cap:
        tree[i] += delta
        i += i & (-i)


cdef inline double _tree_total(double[::1] tree, Py_ssize_t cap) nogil:
    cdef Py_ssize_t i = cap
    cdef double acc = 0.0
    while i > 0:
        acc += tree[i]
        i -= i & (-i)
    return acc


def run_events(object inp):
    table = inp.table

    cdef double[::1] graph_k = table.k
    cdef int64_t[::1] site_start = table.site_start
    cdef int64_t[::1] site_deg = table.site_deg
    cdef int64_t[::1] nbr = table.nbr
    cdef double[::1] cdf = table.cdf

    cdef Py_ssize_t p_count = len(inp.lam_ratio)
    cdef Py_ssize_t n_buckets = inp.buckets
    cdef bint use_buckets = n_buckets > 1
    cdef double lam_max = inp.lam_max
    cdef double horizon = inp.horizon
    cdef int64_t ceiling = inp.ceiling
    cdef Py_ssize_t x0 = table.x0_id

    lam_ratio_arr = np.ascontiguousarray(inp.lam_ratio, dtype=np.float64)
    cdef double[::1] lam_ratio = lam_ratio_arr
    cdef bint multi_lambda = bool(np.any(lam_ratio_arr != 1.0))
    m_cap_arr = np.ascontiguousarray(inp.m_cap, dtype=np.int64)
    cdef int64_t[::1] m_cap = m_cap_arr
    gen_sup_arr = np.ascontiguousarray(inp.gen_sup, dtype=np.int64)
    cdef int64_t[::1] gen_sup = gen_sup_arr
    birth_cap_arr = np.ascontiguousarray(inp.birth_cap, dtype=np.int64)
    cdef int64_t[::1] birth_cap = birth_cap_arr
    chain_arr = np.ascontiguousarray(inp.driver_chain, dtype=np.int64)
    cdef int64_t[::1] chain = chain_arr
    cdef Py_ssize_t chain_len = chain_arr.shape[0]
    cp_times_arr = np.ascontiguousarray(inp.cp_times, dtype=np.float64)
    cdef double[::1] cp_times = cp_times_arr
    cdef Py_ssize_t ncp = cp_times_arr.shape[0]

    dom_lo_arr = np.ascontiguousarray(inp.dom_pairs_lo, dtype=np.int64)
    dom_hi_arr = np.ascontiguousarray(inp.dom_pairs_hi, dtype=np.int64)
    eq_a_arr = np.ascontiguousarray(inp.eq_pairs_a, dtype=np.int64)
    eq_b_arr = np.ascontiguousarray(inp.eq_pairs_b, dtype=np.int64)
    cdef int64_t[::1] dom_lo = dom_lo_arr
    cdef int64_t[::1] dom_hi = dom_hi_arr
    cdef int64_t[::1] eq_a = eq_a_arr
    cdef int64_t[::1] eq_b = eq_b_arr
    cdef Py_ssize_t n_dom = dom_lo_arr.shape[0]
    cdef Py_ssize_t n_eq = eq_a_arr.shape[0]

    cdef Py_ssize_t cap = table.capacity
    counts_arr = np.zeros((p_count, cap), dtype=np.int64)
    cdef int64_t[:, ::1] counts = counts_arr
    bcounts_arr = np.zeros((p_count, cap if use_buckets else 1, n_buckets),
                           dtype=np.int64)
    cdef int64_t[:, :, ::1] bcounts = bcounts_arr

    tot_arr = np.zeros(p_count, dtype=np.int64)
    births_arr = np.zeros(p_count, dtype=np.int64)
    active_arr = np.ones(p_count, dtype=np.uint8)
    ext_arr = np.full(p_count, NAN_VAL, dtype=np.float64)
    ceil_arr = np.zeros(p_count, dtype=np.uint8)
    weak_arr = np.zeros(p_count, dtype=np.uint8)
    local_arr = np.zeros(p_count, dtype=np.uint8)
    occ_arr = np.zeros(p_count, dtype=np.uint8)
    cp_pop_arr = np.zeros((p_count, max(ncp, 1)), dtype=np.int64)
    cp_x0_arr = np.zeros((p_count, max(ncp, 1)), dtype=np.int64)
    dom_ok_arr = np.ones(max(n_dom, 1), dtype=np.uint8)
    eq_ok_arr = np.ones(max(n_eq, 1), dtype=np.uint8)
    bbb_arr = np.zeros((p_count, n_buckets), dtype=np.int64)

    cdef int64_t[::1] tot = tot_arr
    cdef int64_t[::1] births = births_arr
    cdef unsigned char[::1] active = active_arr
    cdef double[::1] extinction_time = ext_arr
    cdef unsigned char[::1] ceiling_hit = ceil_arr
    cdef unsigned char[::1] weak = weak_arr
    cdef unsigned char[::1] local_flag = local_arr
    cdef unsigned char[::1] occ = occ_arr
    cdef int64_t[:, ::1] cp_pop = cp_pop_arr
    cdef int64_t[:, ::1] cp_x0 = cp_x0_arr
    cdef unsigned char[::1] dom_ok = dom_ok_arr
    cdef unsigned char[::1] eq_ok = eq_ok_arr
    cdef int64_t[:, ::1] births_by_bucket = bbb_arr

    init_sites_arr = np.ascontiguousarray(inp.init_sites, dtype=np.int64)
    init_counts_arr = np.ascontiguousarray(inp.init_counts, dtype=np.int64)
    cdef int64_t[::1] init_sites = init_sites_arr
    cdef int64_t[::1] init_counts = init_counts_arr

    cdef Py_ssize_t idx, p, s, b, i, c2
    cdef int64_t c

    for idx in range(init_sites_arr.shape[0]):
        s = init_sites[idx]
        c = init_counts[idx]
        for p in range(p_count):
            counts[p, s] += c
            if use_buckets:
                bcounts[p, s, 0] += c
            tot[p] += c
    for p in range(p_count):
        occ[p] = 1 if counts[p, x0] > 0 else 0

    cdef Py_ssize_t chain_pos = 0
    cdef Py_ssize_t driver = chain[0]

    tree_arr = np.zeros(cap + 1, dtype=np.float64)
    cdef double[::1] tree = tree_arr
    w_site_arr = np.zeros(cap, dtype=np.float64)
    cdef double[::1] w_site = w_site_arr

    cdef double w_new
    for idx in range(init_sites_arr.shape[0]):
        s = init_sites[idx]
        w_new = counts[driver, s] * (1.0 + lam_max * graph_k[s])
        _tree_add(tree, cap, s, w_new - w_site[s])
        w_site[s] = w_new

    cdef Xo rng
    _xo_init(&rng, <uint64_t>(inp.seed & ((1 << 64) - 1)))

    cdef double t = 0.0
    cdef Py_ssize_t ci = 0
    cdef int64_t n_events = 0
    cdef Py_ssize_t n_sites = table.n_sites

    cdef double rate, u1, dt, t_next, bound, u2, v, rem, ks, r_s, off, w, u3
    cdef Py_ssize_t j, bit, nxt, tpos, lo, hi, mid, y, base, touched, pb, cb
    cdef int64_t applied
    cdef bint promote, any_active
    cdef Py_ssize_t new_cap
    cdef int64_t acc_slots

    while True:
        rate = _tree_total(tree, cap)
        if rate <= 0.0:
            break
        u1 = _xo_double(&rng)
        dt = -log1p(-u1) / rate
        t_next = t + dt
        bound = t_next if t_next < horizon else horizon
        while ci < ncp and cp_times[ci] < bound:
            for p in range(p_count):
                if active[p]:
                    cp_pop[p, ci] = tot[p]
                    cp_x0[p, ci] = counts[p, x0]
            ci += 1
        if t_next >= horizon:
            t = horizon
            break
        t = t_next
        n_events += 1

        u2 = _xo_double(&rng)
        v = u2 * rate
        # descend the rate tree: largest prefix with cumulative <= v
        tpos = 0
        bit = cap
        while bit:
            nxt = tpos + bit
            if nxt <= cap and tree[nxt] <= v:
                tpos = nxt
                v -= tree[nxt]
            bit >>= 1
        s = tpos
        rem = v
        if s >= n_sites:
            s = n_sites - 1
            rem = w_site[s]
        ks = graph_k[s]
        r_s = 1.0 + lam_max * ks
        j = <Py_ssize_t>floor(rem / r_s)
        if j >= counts[driver, s]:
            continue
        off = rem - j * r_s
        if off < 0.0:
            off = 0.0

        applied = 0
        touched = -1
        if off < 1.0:
            for p in range(p_count):
                if active[p] and counts[p, s] > j:
                    b = 0
                    if use_buckets:
                        acc_slots = 0
                        for b in range(n_buckets):
                            acc_slots += bcounts[p, s, b]
                            if acc_slots > j:
                                break
                        bcounts[p, s, b] -= 1
                    counts[p, s] -= 1
                    tot[p] -= 1
                    applied |= (<int64_t>1) << p
                    if tot[p] == 0:
                        extinction_time[p] = t
            touched = s
        else:
            if site_deg[s] < 0:
                table.expand(s)
                graph_k = table.k
                site_start = table.site_start
                site_deg = table.site_deg
                nbr = table.nbr
                cdf = table.cdf
                n_sites = table.n_sites
                new_cap = table.capacity
                if new_cap != cap:
                    counts_arr = np.concatenate(
                        [counts_arr,
                         np.zeros((p_count, new_cap - cap), dtype=np.int64)],
                        axis=1)
                    counts = counts_arr
                    if use_buckets:
                        bcounts_arr = np.concatenate(
                            [bcounts_arr,
                             np.zeros((p_count, new_cap - cap, n_buckets),
                                      dtype=np.int64)],
                            axis=1)
                        bcounts = bcounts_arr
                    w_site_arr = np.concatenate(
                        [w_site_arr, np.zeros(new_cap - cap,
                                              dtype=np.float64)])
                    w_site = w_site_arr
                    cap = new_cap
                    tree_arr = np.zeros(cap + 1, dtype=np.float64)
                    tree = tree_arr
                    for c2 in range(n_sites):
                        if w_site[c2] != 0.0:
                            _tree_add(tree, cap, c2, w_site[c2])
            w = (off - 1.0) / (lam_max * ks)
            if w >= 1.0:
                w = 0.9999999999999999
            base = site_start[s]
            lo = 0
            hi = site_deg[s]
            while lo < hi:
                mid = (lo + hi) >> 1
                if cdf[base + mid] <= w:
                    lo = mid + 1
                else:
                    hi = mid
            y = nbr[base + lo]
            u3 = _xo_double(&rng) if multi_lambda else 0.0
            for p in range(p_count):
                if not (active[p] and counts[p, s] > j and u3 < lam_ratio[p]):
                    continue
                pb = 0
                if use_buckets:
                    acc_slots = 0
                    for pb in range(n_buckets):
                        acc_slots += bcounts[p, s, pb]
                        if acc_slots > j:
                            break
                if gen_sup[p] >= 0 and pb >= gen_sup[p]:
                    continue
                if m_cap[p] >= 0 and counts[p, y] >= m_cap[p]:
                    continue
                if birth_cap[p] >= 0 and births[p] >= birth_cap[p]:
                    continue
                cb = pb + 1
                if cb > n_buckets - 1:
                    cb = n_buckets - 1
                if use_buckets:
                    bcounts[p, y, cb] += 1
                counts[p, y] += 1
                tot[p] += 1
                births[p] += 1
                births_by_bucket[p, cb] += 1
                applied |= (<int64_t>1) << p
            touched = y

        if applied == 0:
            continue

        if (applied >> driver) & 1:
            w_new = counts[driver, touched] * (1.0 + lam_max * graph_k[touched])
            _tree_add(tree, cap, touched, w_new - w_site[touched])
            w_site[touched] = w_new

        for i in range(n_dom):
            if counts[dom_lo[i], touched] > counts[dom_hi[i], touched]:
                dom_ok[i] = 0
        for i in range(n_eq):
            if ((applied >> eq_a[i]) & 1) != ((applied >> eq_b[i]) & 1):
                eq_ok[i] = 0

        if touched == x0:
            for p in range(p_count):
                if (applied >> p) & 1:
                    if occ[p] and counts[p, x0] <= 0:
                        if t > 0.5 * horizon:
                            local_flag[p] = 1
                    occ[p] = 1 if counts[p, x0] > 0 else 0

        promote = False
        for p in range(p_count):
            if active[p] and tot[p] > ceiling:
                if p == driver:
                    promote = True
                active[p] = 0
                ceiling_hit[p] = 1
                weak[p] = 1
                local_flag[p] = 1
                for i in range(ci, ncp):
                    cp_pop[p, i] = tot[p]
                    cp_x0[p, i] = counts[p, x0]
        if promote:
            while True:
                chain_pos += 1
                if chain_pos >= chain_len:
                    for p in range(p_count):
                        if active[p]:
                            active[p] = 0
                            ceiling_hit[p] = 1
                            weak[p] = 1
                            local_flag[p] = 1
                            for i in range(ci, ncp):
                                cp_pop[p, i] = tot[p]
                                cp_x0[p, i] = counts[p, x0]
                    break
                if active[chain[chain_pos]]:
                    driver = chain[chain_pos]
                    break
            any_active = False
            for p in range(p_count):
                if active[p]:
                    any_active = True
            if not any_active:
                break
            for i in range(cap + 1):
                tree[i] = 0.0
            for i in range(n_sites):
                w_site[i] = 0.0
            for i in range(n_sites):
                if counts[driver, i] > 0:
                    w_new = counts[driver, i] * (1.0 + lam_max * graph_k[i])
                    _tree_add(tree, cap, i, w_new - w_site[i])
                    w_site[i] = w_new

    while ci < ncp:
        for p in range(p_count):
            if active[p]:
                cp_pop[p, ci] = tot[p]
                cp_x0[p, ci] = counts[p, x0]
        ci += 1
    for p in range(p_count):
        if active[p]:
            if tot[p] > 0 and t >= horizon:
                weak[p] = 1
            if occ[p] and t >= horizon:
                local_flag[p] = 1

    final_counts = None
    final_vertices = []
    if inp.want_final_counts:
        final_counts = counts_arr[:, : table.n_sites].copy()
        final_vertices = list(table.verts)

    return EngineOutputs(
        births=births_arr,
        extinction_time=ext_arr,
        ceiling_hit=ceil_arr,
        weak=weak_arr,
        local=local_arr,
        cp_pop=cp_pop_arr[:, :ncp],
        cp_x0=cp_x0_arr[:, :ncp],
        dom_ok=dom_ok_arr[:n_dom],
        eq_ok=eq_ok_arr[:n_eq],
        births_by_bucket=bbb_arr,
        n_events=int(n_events),
        n_sites=table.n_sites,
        final_counts=final_counts,
        final_vertices=final_vertices,
    )
