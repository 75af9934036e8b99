"""Pure-Python event engine (reference implementation).

The compiled backend mirrors this file statement for statement; both
must produce bit-identical trajectories from the same seed.  Any
change here must be transplanted to the .pyx twin.

Event model.  The driver process (counts c_d) fixes the total rate
R = sum_s c_d(s) * r(s) with r(s) = 1 + lam_max * k(s).  Each event:

    u1 -> waiting time  dt = -log1p(-u1) / R
    u2 -> v = u2 * R decoded through the rate tree into a site s and a
          residual; the residual splits into a slot j < c_d(s) and an
          offset in [0, r(s)):  offset < 1 is a death of slot j,
          otherwise a birth proposal whose target is read from the
          site's neighbor CDF at (offset-1)/(lam_max*k(s))
    u3 -> drawn only when variants have distinct rates: variant p
          accepts the proposal iff u3 < lam_p/lam_max

Every variant p applies the event only if its own count at s exceeds
j; slots are ordered by generation bucket, so slot j resolves to a
per-variant bucket by prefix walk.  Suppression rules (site cap m,
parent bucket >= gen cap, birth counter >= birth cap) consult only the
variant's own state.  This keeps each marginal law exact and makes
configurations of rule-weaker variants dominate rule-stronger ones
pathwise, which is what the domination and monotonicity guarantees
rest on.
"""

from __future__ import annotations

import math

import numpy as np

from ..rng import xoshiro_init, xoshiro_next_double
from ._table import EngineInputs, EngineOutputs

_NAN = float("nan")


def run_events(inp: EngineInputs) -> EngineOutputs:
    table = inp.table
    graph_k = table.k
    site_start = table.site_start
    site_deg = table.site_deg
    nbr = table.nbr
    cdf = table.cdf

    p_count = len(inp.lam_ratio)
    n_buckets = inp.buckets
    lam_max = float(inp.lam_max)
    horizon = float(inp.horizon)
    ceiling = int(inp.ceiling)
    x0 = table.x0_id
    multi_lambda = any(float(r) != 1.0 for r in inp.lam_ratio)

    lam_ratio = [float(v) for v in inp.lam_ratio]
    m_cap = [int(v) for v in inp.m_cap]
    gen_sup = [int(v) for v in inp.gen_sup]
    birth_cap = [int(v) for v in inp.birth_cap]
    chain = [int(v) for v in inp.driver_chain]
    cp_times = [float(v) for v in inp.cp_times]
    ncp = len(cp_times)

    dom_lo = [int(v) for v in inp.dom_pairs_lo]
    dom_hi = [int(v) for v in inp.dom_pairs_hi]
    eq_a = [int(v) for v in inp.eq_pairs_a]
    eq_b = [int(v) for v in inp.eq_pairs_b]

    # engine-owned state, capacity-doubled alongside the table
    cap = table.capacity
    counts = [[0] * cap for _ in range(p_count)]
    bcounts = (
        [[[0] * n_buckets for _ in range(cap)] for _ in range(p_count)]
        if n_buckets > 1
        else None
    )
    tot = [0] * p_count
    births = [0] * p_count
    active = [True] * p_count
    extinction_time = [_NAN] * p_count
    ceiling_hit = [0] * p_count
    weak = [0] * p_count
    local = [0] * p_count
    occ = [False] * p_count
    cp_pop = [[0] * ncp for _ in range(p_count)]
    cp_x0 = [[0] * ncp for _ in range(p_count)]
    dom_ok = [1] * len(dom_lo)
    eq_ok = [1] * len(eq_a)
    births_by_bucket = [[0] * n_buckets for _ in range(p_count)]

    for idx in range(len(inp.init_sites)):
        s = int(inp.init_sites[idx])
        c = int(inp.init_counts[idx])
        for p in range(p_count):
            counts[p][s] += c
            if bcounts is not None:
                bcounts[p][s][0] += c
            tot[p] += c
    for p in range(p_count):
        occ[p] = counts[p][x0] > 0

    chain_pos = 0
    driver = chain[0]

    # rate tree (Fenwick) over site weights of the driver
    tree = [0.0] * (cap + 1)
    w_site = [0.0] * cap

    def tree_add(i: int, delta: float) -> None:
        i += 1
        while i <= cap:
            tree[i] += delta
            i += i & (-i)

    def tree_total() -> float:
        i = cap
        acc = 0.0
        while i > 0:
            acc += tree[i]
            i -= i & (-i)
        return acc

    def tree_find(v: float) -> tuple[int, float]:
        # largest prefix with cumulative weight <= v; returns (site, residual)
        idx = 0
        bit = cap  # capacity is a power of two
        while bit:
            nxt = idx + bit
            if nxt <= cap and tree[nxt] <= v:
                idx = nxt
                v -= tree[nxt]
            bit >>= 1
        return idx, v

    def site_weight(s: int) -> float:
        return counts[driver][s] * (1.0 + lam_max * float(graph_k[s]))

    def set_weight(s: int) -> None:
        w = site_weight(s)
        tree_add(s, w - w_site[s])
        w_site[s] = w

    def grow_engine_arrays() -> None:
        nonlocal cap, tree, w_site
        new_cap = table.capacity
        if new_cap == cap:
            return
        for p in range(p_count):
            counts[p].extend([0] * (new_cap - cap))
            if bcounts is not None:
                bcounts[p].extend([[0] * n_buckets for _ in range(new_cap - cap)])
        w_site.extend([0.0] * (new_cap - cap))
        cap = new_cap
        tree = [0.0] * (cap + 1)
        for s in range(table.n_sites):
            if w_site[s] != 0.0:
                tree_add(s, w_site[s])

    def bucket_of_slot(p: int, s: int, j: int) -> int:
        if bcounts is None:
            return 0
        row = bcounts[p][s]
        acc = 0
        for b in range(n_buckets):
            acc += row[b]
            if acc > j:
                return b
        return n_buckets - 1

    for v in inp.init_sites:
        set_weight(int(v))  # idempotent: repeated sites add a zero delta

    rng = xoshiro_init(inp.seed)

    t = 0.0
    ci = 0
    n_events = 0
    log = inp.log_lines

    def record_until(t_next: float) -> None:
        nonlocal ci
        while ci < ncp and cp_times[ci] < t_next:
            for p in range(p_count):
                if active[p]:
                    cp_pop[p][ci] = tot[p]
                    cp_x0[p][ci] = counts[p][x0]
            ci += 1

    def finalize_ceiling(p: int) -> None:
        # runaway replica: alive by fiat, frozen at abort-time state
        active[p] = False
        ceiling_hit[p] = 1
        weak[p] = 1
        local[p] = 1
        for c in range(ci, ncp):
            cp_pop[p][c] = tot[p]
            cp_x0[p][c] = counts[p][x0]

    def touch_x0(p: int, now: float) -> None:
        new_occ = counts[p][x0] > 0
        if occ[p] and not new_occ:
            if now > 0.5 * horizon:
                local[p] = 1
        occ[p] = new_occ

    while True:
        rate = tree_total()
        if rate <= 0.0:
            break
        u1 = xoshiro_next_double(rng)
        dt = -math.log1p(-u1) / rate
        t_next = t + dt
        record_until(min(t_next, horizon))
        if t_next >= horizon:
            t = horizon
            break
        t = t_next
        n_events += 1

        u2 = xoshiro_next_double(rng)
        v = u2 * rate
        s, rem = tree_find(v)
        if s >= table.n_sites:
            s = table.n_sites - 1
            rem = w_site[s]
        ks = float(graph_k[s])
        r_s = 1.0 + lam_max * ks
        j = int(math.floor(rem / r_s))
        if j >= counts[driver][s]:
            continue  # float fringe of the rate tree: no slot, no-op
        off = rem - j * r_s
        if off < 0.0:
            off = 0.0

        applied = 0
        touched = -1
        if off < 1.0:
            # death of slot j
            for p in range(p_count):
                if active[p] and counts[p][s] > j:
                    b = bucket_of_slot(p, s, j)
                    if log is not None and p == 0:
                        log.append(f"{t!r} death {s} {b}")
                    if bcounts is not None:
                        bcounts[p][s][b] -= 1
                    counts[p][s] -= 1
                    tot[p] -= 1
                    applied |= 1 << p
                    if tot[p] == 0:
                        extinction_time[p] = t
            touched = s
        else:
            if site_deg[s] < 0:
                table.expand(s)
                grow_engine_arrays()
                graph_k = table.k
                site_start = table.site_start
                site_deg = table.site_deg
                nbr = table.nbr
                cdf = table.cdf
            w = (off - 1.0) / (lam_max * ks)
            if w >= 1.0:
                w = 0.9999999999999999
            base = int(site_start[s])
            lo = 0
            hi = int(site_deg[s])
            while lo < hi:
                mid = (lo + hi) >> 1
                if float(cdf[base + mid]) <= w:
                    lo = mid + 1
                else:
                    hi = mid
            y = int(nbr[base + lo])
            u3 = xoshiro_next_double(rng) if multi_lambda else 0.0
            for p in range(p_count):
                if not (active[p] and counts[p][s] > j and u3 < lam_ratio[p]):
                    continue
                pb = bucket_of_slot(p, s, j)
                if gen_sup[p] >= 0 and pb >= gen_sup[p]:
                    continue
                if m_cap[p] >= 0 and counts[p][y] >= m_cap[p]:
                    continue
                if birth_cap[p] >= 0 and births[p] >= birth_cap[p]:
                    continue
                cb = pb + 1
                if cb > n_buckets - 1:
                    cb = n_buckets - 1
                if log is not None and p == 0:
                    log.append(f"{t!r} birth {y} {cb}")
                if bcounts is not None:
                    bcounts[p][y][cb] += 1
                counts[p][y] += 1
                tot[p] += 1
                births[p] += 1
                births_by_bucket[p][cb] += 1
                applied |= 1 << p
            touched = y

        if applied == 0:
            continue

        if (applied >> driver) & 1:
            set_weight(touched)

        for i in range(len(dom_lo)):
            if counts[dom_lo[i]][touched] > counts[dom_hi[i]][touched]:
                dom_ok[i] = 0
        for i in range(len(eq_a)):
            if ((applied >> eq_a[i]) & 1) != ((applied >> eq_b[i]) & 1):
                eq_ok[i] = 0

        if touched == x0:
            for p in range(p_count):
                if (applied >> p) & 1:
                    touch_x0(p, t)

        promote = False
        for p in range(p_count):
            if active[p] and tot[p] > ceiling:
                if p == driver:
                    promote = True
                finalize_ceiling(p)
        if promote:
            while True:
                chain_pos += 1
                if chain_pos >= len(chain):
                    for p in range(p_count):
                        if active[p]:
                            finalize_ceiling(p)
                    break
                if active[chain[chain_pos]]:
                    driver = chain[chain_pos]
                    break
            if not any(active):
                break
            # re-anchor the rate tree on the new driver
            tree = [0.0] * (cap + 1)
            for s2 in range(table.n_sites):
                w_site[s2] = 0.0
            for s2 in range(table.n_sites):
                if counts[driver][s2] > 0:
                    set_weight(s2)

    # flush checkpoints not reached before the loop ended
    while ci < ncp:
        for p in range(p_count):
            if active[p]:
                cp_pop[p][ci] = tot[p]
                cp_x0[p][ci] = counts[p][x0]
        ci += 1
    for p in range(p_count):
        if active[p]:
            if tot[p] > 0 and t >= horizon:
                weak[p] = 1
            if occ[p] and t >= horizon:
                local[p] = 1

    final_counts = None
    final_vertices: list = []
    if inp.want_final_counts:
        n = table.n_sites
        final_counts = np.zeros((p_count, n), dtype=np.int64)
        for p in range(p_count):
            row = counts[p]
            for s in range(n):
                final_counts[p, s] = row[s]
        final_vertices = list(table.verts)

    return EngineOutputs(
        births=np.array(births, dtype=np.int64),
        extinction_time=np.array(extinction_time, dtype=np.float64),
        ceiling_hit=np.array(ceiling_hit, dtype=np.uint8),
        weak=np.array(weak, dtype=np.uint8),
        local=np.array(local, dtype=np.uint8),
        cp_pop=np.array(cp_pop, dtype=np.int64).reshape(p_count, ncp),
        cp_x0=np.array(cp_x0, dtype=np.int64).reshape(p_count, ncp),
        dom_ok=np.array(dom_ok, dtype=np.uint8),
        eq_ok=np.array(eq_ok, dtype=np.uint8),
        births_by_bucket=np.array(births_by_bucket, dtype=np.int64).reshape(
            p_count, n_buckets
        ),
        n_events=n_events,
        n_sites=table.n_sites,
        final_counts=final_counts,
        final_vertices=final_vertices,
    )
