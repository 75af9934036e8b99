"""Block events, oriented percolation and the drift criterion.

The bridge from particle runs to percolation goes through block events:
start k particles in a source set, run for a fixed block time, ask
whether every target set holds at least k particles.  Tuning finds a
(block_time, k) pair whose joint success probability clears 1 - eps,
plus generation and birth budgets wide enough to be charged to the run
without spoiling it.  A field sampler then iterates tuned blocks level
by level, producing an oriented percolation whose per-cell event
streams are independent by construction, so edge sets one level apart
are one-dependent and same-level edge sets are independent.

For drifting walks on the line the exponential growth rate of expected
counts along a ray is captured by g_lambda; a positive-margin region of
the (alpha, beta) plane where it exceeds 1 yields the integer jump
sizes used by the drift block scheme.
"""

from __future__ import annotations

import math
from collections import deque
from dataclasses import dataclass, replace

import numpy as np
from scipy.special import xlogy

from .graphs import WeightedGraph
from .rng import mix64, uniform_from_key
from .sim import INF, run_cap_variants, run_process, wilson_interval
from .spectral import expected_count, truncation_ladder


class SchemeError(ValueError):
    pass


class TuningError(RuntimeError):
    pass


class DriftRegionError(TuningError):
    pass


# ---------------------------------------------------------------------------
# block schemes


@dataclass(frozen=True)
class BlockScheme:
    """Disjoint target sets indexed by integers, plus block parameters.

    blocks maps an integer index to a tuple of graph vertices; offsets
    lists the index displacements reachable in one level, so the block
    at i feeds the blocks at i + off for each off.  block_time and k
    are the block duration and the particle threshold; m, gen_cap and
    birth_cap are the truncation levels engaged by the named process
    variants (inf disables one).
    """

    graph: WeightedGraph
    blocks: dict
    offsets: tuple
    block_time: float
    k: int
    m: float = INF
    gen_cap: float = INF
    birth_cap: float = INF

    def validate(self) -> None:
        if not self.blocks:
            raise SchemeError("scheme has no blocks")
        if not self.offsets:
            raise SchemeError("scheme has no offsets")
        if len(set(self.offsets)) != len(self.offsets):
            raise SchemeError("offsets must be distinct")
        if self.block_time <= 0:
            raise SchemeError("block_time must be positive")
        if self.k < 1 or self.k != int(self.k):
            raise SchemeError("k must be a positive integer")
        seen = {}
        for i, block in self.blocks.items():
            if not block:
                raise SchemeError(f"block {i} is empty")
            for v in block:
                if v in seen:
                    raise SchemeError(
                        f"vertex {v!r} appears in blocks {seen[v]} and {i}"
                    )
                seen[v] = i

    def targets(self, source: int) -> tuple:
        """Indices fed by the block at source; all must carry blocks."""
        if source not in self.blocks:
            raise SchemeError(f"no block at index {source}")
        out = tuple(source + off for off in self.offsets)
        if not out:
            raise SchemeError(f"block {source} has no out-neighbors")
        for j in out:
            if j not in self.blocks:
                raise SchemeError(f"no block at target index {j}")
        return out


# named truncation variants: (site cap, generation cap, birth budget)
_VARIANT_CAPS = {
    "free": lambda s: (INF, INF, INF),
    "site": lambda s: (s.m, INF, INF),
    "gen": lambda s: (INF, s.gen_cap, INF),
    "site_gen": lambda s: (s.m, s.gen_cap, INF),
    "hat": lambda s: (INF, s.gen_cap, s.birth_cap),
}

_GEN_TRACK_BUCKETS = 64


def variant_caps(scheme: BlockScheme, name: str) -> tuple:
    try:
        make = _VARIANT_CAPS[name]
    except KeyError:
        raise SchemeError(
            f"unknown variant {name!r}; choose from {sorted(_VARIANT_CAPS)}"
        ) from None
    return make(scheme)


def round_robin_placement(block, k: int) -> tuple:
    """k particles cycled over the block's vertices in block order."""
    n = len(block)
    base, extra = divmod(int(k), n)
    out = []
    for pos, v in enumerate(block):
        c = base + (1 if pos < extra else 0)
        if c > 0:
            out.append((v, c))
    return tuple(out)


def _wider(a, b):
    return a == INF or (b != INF and a >= b)


def _cap_join(triples) -> tuple:
    """Componentwise most permissive cap triple (the stream driver)."""
    out = []
    for slot in range(3):
        vals = [t[slot] for t in triples]
        out.append(INF if any(v == INF for v in vals) else max(vals))
    return tuple(out)


@dataclass(frozen=True)
class TargetSuccess:
    target: int
    successes: int
    p_hat: float
    ci_lo: float
    ci_hi: float
    structural_zero: bool


@dataclass(frozen=True)
class VariantSuccess:
    variant: str
    source_fits: bool
    per_target: tuple
    joint_successes: int
    joint_p: float
    joint_ci_lo: float
    joint_ci_hi: float
    overflow: int


@dataclass(frozen=True)
class BlockSuccessEstimate:
    source: int
    lam: float
    replicas: int
    targets: tuple
    variants: dict
    births: tuple | None = None
    max_generation: tuple | None = None


def _zero_variant(name: str, targets, replicas: int, fits: bool,
                  structural) -> VariantSuccess:
    lo, hi = wilson_interval(0, replicas)
    per = tuple(
        TargetSuccess(j, 0, 0.0, lo, hi, j in structural) for j in targets
    )
    return VariantSuccess(name, fits, per, 0, 0.0, lo, hi, 0)


def estimate_block_success(
    scheme: BlockScheme,
    source: int,
    lam: float,
    variants=("free",),
    replicas: int = 400,
    seed: int = 0,
    ceiling: int = 1_000_000,
    collect: bool = False,
) -> BlockSuccessEstimate:
    """Monte-Carlo block-event probabilities for the named variants.

    One replica = one shared event stream carrying every requested
    variant at once, so success indicators of comparable variants are
    ordered pathwise, not merely in distribution.  A replica whose
    driver hits the population ceiling is counted as a failure for
    every target (and tallied in overflow).  With collect=True the
    per-replica birth totals and maximal generations of the first
    variant (which must be "free") are returned for budget tuning.
    """
    scheme.validate()
    targets = scheme.targets(source)
    names = list(variants)
    if not names:
        raise SchemeError("no variants requested")
    if replicas < 1:
        raise SchemeError("replicas must be >= 1")
    if collect and names[0] != "free":
        raise SchemeError("collect=True requires the first variant to be 'free'")
    placement = round_robin_placement(scheme.blocks[source], scheme.k)
    peak = max(c for _, c in placement)

    triples = {name: variant_caps(scheme, name) for name in names}
    structural = {
        name: frozenset(
            j for j in targets
            if triples[name][0] != INF
            and scheme.k > triples[name][0] * len(scheme.blocks[j])
        )
        for name in names
    }
    fitting = [n for n in names if _wider(triples[n][0], peak)]
    results = {}
    for name in names:
        if name not in fitting:
            results[name] = _zero_variant(
                name, targets, replicas, False, structural[name]
            )

    births = [] if collect else None
    maxgen = [] if collect else None
    if fitting:
        driver = _cap_join([triples[n] for n in fitting])
        cap_sets = [driver] + [triples[n] for n in fitting]
        buckets = _GEN_TRACK_BUCKETS if collect else None
        succ = {n: np.zeros(len(targets), dtype=np.int64) for n in fitting}
        joint = {n: 0 for n in fitting}
        over = {n: 0 for n in fitting}
        for rep in range(replicas):
            out = run_cap_variants(
                scheme.graph, lam, scheme.block_time, placement,
                seed=mix64(seed, rep), cap_sets=cap_sets,
                ceiling=ceiling, buckets=buckets,
            )
            vidx = {v: i for i, v in enumerate(out.final_vertices)}
            for pos, name in enumerate(fitting):
                p = pos + 1
                if out.ceiling_hit[p]:
                    over[name] += 1
                    continue
                counts = out.final_counts[p]
                all_ok = True
                for tj, j in enumerate(targets):
                    tot = sum(
                        int(counts[vidx[v]]) for v in scheme.blocks[j]
                        if v in vidx
                    )
                    if tot >= scheme.k:
                        succ[name][tj] += 1
                    else:
                        all_ok = False
                if all_ok:
                    joint[name] += 1
            if collect:
                births.append(int(out.births[1]))
                nz = np.nonzero(out.births_by_bucket[1])[0]
                maxgen.append(int(nz[-1]) if nz.size else 0)
        for name in fitting:
            per = []
            for tj, j in enumerate(targets):
                s = int(succ[name][tj])
                lo, hi = wilson_interval(s, replicas)
                per.append(TargetSuccess(
                    j, s, s / replicas, lo, hi, j in structural[name]
                ))
            s = joint[name]
            lo, hi = wilson_interval(s, replicas)
            results[name] = VariantSuccess(
                name, True, tuple(per), s, s / replicas, lo, hi, over[name]
            )

    return BlockSuccessEstimate(
        source=source,
        lam=lam,
        replicas=replicas,
        targets=targets,
        variants={n: results[n] for n in names},
        births=tuple(births) if collect else None,
        max_generation=tuple(maxgen) if collect else None,
    )


# ---------------------------------------------------------------------------
# tuning


@dataclass(frozen=True)
class TunedBlock:
    scheme: BlockScheme
    block_time: float
    k: int
    gen_cap: int
    birth_cap: int
    joint_p: float
    joint_ci_lo: float
    joint_ci_hi: float
    eps: float
    ladder_estimate: float
    source: int
    probes: tuple
    h_walks: int | None = None
    m_bound: int | None = None


def _support_distance(graph: WeightedGraph, sources, goals) -> int:
    """Longest of the shortest out-walk distances from sources to goals."""
    want = set(goals)
    worst = 0
    for s in sources:
        dist = {s: 0}
        queue = deque([s])
        missing = set(want)
        missing.discard(s)
        while queue and missing:
            x = queue.popleft()
            for y, _ in graph.out_neighbors(x):
                if y not in dist:
                    dist[y] = dist[x] + 1
                    missing.discard(y)
                    queue.append(y)
            if len(dist) > 2_000_000:
                raise SchemeError("target set unreachable within search budget")
        if missing:
            raise SchemeError(f"no walk from {s!r} to {sorted(map(str, missing))}")
        worst = max(worst, max(dist[g] for g in want))
    return worst


def tune_block(
    scheme: BlockScheme,
    lam: float,
    eps: float = 0.05,
    seed: int = 0,
    source: int | None = None,
    replicas: int = 200,
    t_grid=None,
    max_doublings: int = 12,
    ladder_radii=(4, 8, 12),
    ceiling: int = 1_000_000,
) -> TunedBlock:
    """Search (block_time, k) until the joint success clears 1 - eps,
    then read generation and birth budgets off the winning replicas.

    block_time candidates are the grid points at which the expected
    count of the unrestricted process exceeds 1 for every (source
    vertex, target vertex) pair; at each candidate k doubles from 1.
    The generation budget is the empirical (1-eps)-quantile of the
    maximal generation, floored at the graph distance a particle needs
    to cover; the birth budget is the same quantile of total births.
    Requires lam above the spectral ladder's last critical estimate.
    """
    scheme.validate()
    if not (0 < eps < 1):
        raise TuningError("eps must lie in (0, 1)")
    if source is None:
        keys = sorted(scheme.blocks)
        source = keys[len(keys) // 2]
    targets = scheme.targets(source)

    ladder = truncation_ladder(scheme.graph, ladder_radii)
    gate = ladder.final_estimate()
    if not lam > gate:
        raise TuningError(
            f"lam={lam} is not above the ladder estimate {gate:.6f}; "
            "block tuning needs a strictly supercritical rate"
        )

    if t_grid is None:
        t_grid = np.geomspace(0.25, 20.0, 40)
    t_grid = [float(t) for t in t_grid]
    if any(b <= a for a, b in zip(t_grid, t_grid[1:])):
        raise TuningError("t_grid must be strictly increasing")

    src_vertices = scheme.blocks[source]
    goal_vertices = []
    for j in targets:
        goal_vertices.extend(scheme.blocks[j])

    def pairs_covered(t: float) -> bool:
        for x in src_vertices:
            for y in goal_vertices:
                series = expected_count(scheme.graph, lam, t, x0=x, targets=[y])
                if not series.at(y) > 1.0:
                    return False
        return True

    candidates = [t for t in t_grid if pairs_covered(t)]
    if not candidates:
        raise TuningError(
            "no grid block_time gives expected count > 1 at every "
            "(source, target) vertex pair"
        )

    probes = []
    for ti, t in enumerate(candidates):
        k = 1
        for _ in range(max_doublings):
            trial = replace(scheme, block_time=t, k=k)
            est = estimate_block_success(
                trial, source, lam, variants=("free",),
                replicas=replicas, seed=mix64(seed, ti, k),
                ceiling=ceiling, collect=True,
            )
            free = est.variants["free"]
            probes.append((t, k, free.joint_p))
            if free.overflow:
                break
            if free.joint_p >= 1.0 - eps:
                gen_q = int(np.quantile(
                    np.array(est.max_generation), 1.0 - eps, method="higher"
                ))
                if gen_q >= _GEN_TRACK_BUCKETS - 1:
                    raise TuningError(
                        "generation quantile exceeded the tracking range; "
                        "use a smaller block_time grid"
                    )
                n0 = max(
                    gen_q,
                    _support_distance(scheme.graph, src_vertices, goal_vertices),
                    1,
                )
                nbar = max(1, int(np.quantile(
                    np.array(est.births), 1.0 - eps, method="higher"
                )))
                tuned = replace(
                    scheme, block_time=t, k=k, gen_cap=n0, birth_cap=nbar
                )
                h = walks_through_vertex(scheme.graph, n0, src_vertices[0]) \
                    if n0 <= 6 else None
                return TunedBlock(
                    scheme=tuned,
                    block_time=t,
                    k=k,
                    gen_cap=n0,
                    birth_cap=nbar,
                    joint_p=free.joint_p,
                    joint_ci_lo=free.joint_ci_lo,
                    joint_ci_hi=free.joint_ci_hi,
                    eps=eps,
                    ladder_estimate=gate,
                    source=source,
                    probes=tuple(probes),
                    h_walks=h,
                    m_bound=2 * nbar * h if h is not None else None,
                )
            k *= 2
    raise TuningError(
        "tuning budget exhausted without reaching the joint success target; "
        f"best joint probability was {max(p for _, _, p in probes):.3f}"
    )


def walks_through_vertex(graph: WeightedGraph, n0: int, x=None) -> int:
    """Number of length-n0 walks in the support graph visiting x.

    Splits each walk at its first visit to x: walks of length a ending
    at x without an earlier visit, times unrestricted walks of length
    n0 - a out of x.  Exact integer arithmetic throughout.
    """
    if n0 < 0 or n0 != int(n0):
        raise ValueError("n0 must be a nonnegative integer")
    n0 = int(n0)
    if x is None:
        x = graph.origin

    forward = {x: 1}
    out_total = [1]
    for _ in range(n0):
        nxt = {}
        for v, c in forward.items():
            for y, _ in graph.out_neighbors(v):
                nxt[y] = nxt.get(y, 0) + c
        forward = nxt
        out_total.append(sum(forward.values()))

    first_hit = [1]
    rev = {x: 1}
    for _ in range(n0):
        nxt = {}
        for v, c in rev.items():
            for u, _ in graph.in_neighbors(v):
                if u != x:
                    nxt[u] = nxt.get(u, 0) + c
        # walks ending at x whose reversal leaves x once and never returns
        first_hit.append(sum(nxt.values()))
        rev = nxt

    return sum(first_hit[a] * out_total[n0 - a] for a in range(n0 + 1))


# ---------------------------------------------------------------------------
# oriented percolation fields


@dataclass(frozen=True)
class OrientedPercolationField:
    """Open edges of a finite window of an oriented percolation.

    Edges run one level down: (i, n, j) opens (i, n) -> (j, n + 1).
    Only edges discovered while growing the cluster of (origin, 0) are
    recorded, which is exactly what survival statistics consume.
    """

    index_lo: int
    index_hi: int
    depth: int
    origin: int
    rule: str
    edges: tuple
    overflow: int = 0


@dataclass(frozen=True)
class ClusterReport:
    max_depth: int
    column_hits: int
    survived: bool


def _check_window(window) -> tuple:
    lo, hi, depth = window
    lo, hi, depth = int(lo), int(hi), int(depth)
    if lo > hi:
        raise SchemeError("window index_lo must not exceed index_hi")
    if depth < 1:
        raise SchemeError("window depth must be >= 1")
    return lo, hi, depth


def iid_oriented_percolation(
    offsets,
    p: float,
    window,
    seed: int,
    origin: int = 0,
) -> OrientedPercolationField:
    """Bernoulli field on the integer strip, grown from (origin, 0).

    Every potential edge owns one uniform addressed by (seed, i, n, j),
    so fields sampled at increasing p from one seed are nested and
    survival is monotone in p along each sample path.
    """
    offsets = tuple(int(o) for o in offsets)
    if not offsets or len(set(offsets)) != len(offsets):
        raise SchemeError("offsets must be a nonempty distinct tuple")
    if not 0.0 <= p <= 1.0:
        raise SchemeError("p must lie in [0, 1]")
    lo, hi, depth = _check_window(window)
    if not lo <= origin <= hi:
        raise SchemeError("origin must lie inside the window")
    edges = []
    level = {origin}
    for n in range(depth):
        nxt = set()
        for i in sorted(level):
            for off in offsets:
                j = i + off
                if lo <= j <= hi and uniform_from_key(seed, i, n, j) < p:
                    edges.append((i, n, j))
                    nxt.add(j)
        level = nxt
        if not level:
            break
    return OrientedPercolationField(
        index_lo=lo, index_hi=hi, depth=depth, origin=origin,
        rule="iid-bernoulli", edges=tuple(sorted(edges)),
    )


def sample_block_driven_field(
    scheme: BlockScheme,
    lam: float,
    window,
    seed: int,
    variant: str = "hat",
    origin: int = 0,
    ceiling: int = 1_000_000,
) -> OrientedPercolationField:
    """Grow an oriented percolation by running one capped block per
    occupied cell: the edge (i, n) -> (j, n+1) opens when the run
    seeded at cell (i, n) ends with at least k particles in block j.

    Each cell's run draws from a stream keyed by (seed, i, n) alone,
    so the field is invariant under the order cells are processed and
    edge sets from distinct same-level cells are independent.
    """
    scheme.validate()
    caps = variant_caps(scheme, variant)
    lo, hi, depth = _check_window(window)
    if not lo <= origin <= hi:
        raise SchemeError("origin must lie inside the window")
    m_cap, gen_cap, birth_cap = caps
    edges = []
    overflow = 0
    level = {origin}
    for n in range(depth):
        nxt = set()
        for i in sorted(level):
            targets = [
                i + off for off in scheme.offsets if lo <= i + off <= hi
            ]
            if not targets:
                continue
            for j in targets:
                if j not in scheme.blocks:
                    raise SchemeError(f"no block at target index {j}")
            placement = round_robin_placement(scheme.blocks[i], scheme.k)
            if m_cap != INF and any(c > m_cap for _, c in placement):
                continue
            out = run_process(
                scheme.graph, lam, scheme.block_time, placement,
                seed=mix64(seed, i, n),
                m=m_cap, gen_cap=gen_cap, birth_cap=birth_cap,
                ceiling=ceiling,
            )
            if out.ceiling_hit[0]:
                overflow += 1
                continue
            vidx = {v: ix for ix, v in enumerate(out.final_vertices)}
            counts = out.final_counts[0]
            for j in targets:
                tot = sum(
                    int(counts[vidx[v]]) for v in scheme.blocks[j]
                    if v in vidx
                )
                if tot >= scheme.k:
                    edges.append((i, n, j))
                    nxt.add(j)
        level = nxt
        if not level:
            break
    return OrientedPercolationField(
        index_lo=lo, index_hi=hi, depth=depth, origin=origin,
        rule="block-driven", edges=tuple(sorted(edges)), overflow=overflow,
    )


def cluster_survival(
    field: OrientedPercolationField, origin: int | None = None
) -> ClusterReport:
    """Directed reach of (origin, 0): deepest level, returns to the
    origin column at levels >= 1, and whether the window depth was hit."""
    if origin is None:
        origin = field.origin
    adj = {}
    for i, n, j in field.edges:
        adj.setdefault((i, n), []).append(j)
    level = {origin}
    max_depth = 0
    column_hits = 0
    for n in range(field.depth):
        nxt = set()
        for i in level:
            nxt.update(adj.get((i, n), ()))
        if not nxt:
            break
        level = nxt
        max_depth = n + 1
        if origin in level:
            column_hits += 1
    return ClusterReport(
        max_depth=max_depth,
        column_hits=column_hits,
        survived=max_depth == field.depth,
    )


def write_field(field: OrientedPercolationField, fh) -> None:
    """Dump: one header line "index_lo index_hi depth", then one line
    "i n j" per open edge."""
    fh.write(f"{field.index_lo} {field.index_hi} {field.depth}\n")
    for i, n, j in field.edges:
        fh.write(f"{i} {n} {j}\n")


@dataclass(frozen=True)
class KSReport:
    statistic: float
    threshold: float
    dominates: bool


def depth_cdf_dominates(deeper, shallower, alpha: float = 0.05) -> KSReport:
    """One-sided two-sample Kolmogorov-Smirnov check that `deeper` is
    stochastically at least `shallower`.

    The statistic is the largest amount by which the empirical CDF of
    `deeper` exceeds that of `shallower`; under the domination
    hypothesis it stays below sqrt(-ln(alpha)/2) * sqrt((n+m)/(nm)).
    """
    a = np.sort(np.asarray(deeper, dtype=np.float64))
    b = np.sort(np.asarray(shallower, dtype=np.float64))
    if a.size == 0 or b.size == 0:
        raise ValueError("both samples must be nonempty")
    grid = np.union1d(a, b)
    fa = np.searchsorted(a, grid, side="right") / a.size
    fb = np.searchsorted(b, grid, side="right") / b.size
    stat = float(np.max(fa - fb))
    c = math.sqrt(-0.5 * math.log(alpha))
    thr = c * math.sqrt((a.size + b.size) / (a.size * b.size))
    return KSReport(statistic=stat, threshold=thr, dominates=stat <= thr)


# ---------------------------------------------------------------------------
# the drift criterion on the line


def g_lambda(alpha: float, beta: float, p: float, q: float, lam: float) -> float:
    """Ray growth-rate factor for the (p, q) drift walk at rate lam.

    Defined for beta >= max(alpha, 0) with 1 - 2*beta + alpha >= 0;
    powers of vanishing bases extend continuously (x**x -> 1).
    Evaluated in the log domain.
    """
    _check_drift_params(p, q, lam)
    rem = 1.0 - 2.0 * beta + alpha
    if beta < 0 or beta - alpha < 0 or rem < -1e-15:
        raise ValueError("need beta >= max(alpha, 0) and beta <= (1 + alpha)/2")
    rem = max(rem, 0.0)
    s = (
        math.log(lam)
        + float(xlogy(beta, p)) - float(xlogy(beta, beta))
        + float(xlogy(beta - alpha, q)) - float(xlogy(beta - alpha, beta - alpha))
        + float(xlogy(rem, 1.0 - p - q)) - float(xlogy(rem, rem))
    )
    return math.exp(s)


def _check_drift_params(p: float, q: float, lam: float) -> None:
    if not (p > 0 and q > 0):
        raise ValueError("p and q must be positive")
    if p + q > 1.0 + 1e-12:
        raise ValueError("p + q must not exceed 1")
    if lam <= 0:
        raise ValueError("lam must be positive")


@dataclass(frozen=True)
class DriftAnalysis:
    p: float
    q: float
    lam: float
    alphas: np.ndarray
    betas: np.ndarray
    g_values: np.ndarray
    margin: float
    alpha_lo: float
    alpha_hi: float
    beta_lo: float
    beta_hi: float
    n: int
    d1: int
    d2: int
    d3: int

    def summary(self) -> dict:
        return {
            "d1": self.d1, "d2": self.d2, "d3": self.d3, "n": self.n,
            "alpha_lo": self.alpha_lo, "alpha_hi": self.alpha_hi,
            "beta_lo": self.beta_lo, "beta_hi": self.beta_hi,
        }


def drift_csv_rows(analysis: DriftAnalysis):
    """(alpha, beta, g) triples of the admissible grid cells."""
    g = analysis.g_values
    for ai, a in enumerate(analysis.alphas):
        for bj, b in enumerate(analysis.betas):
            if not math.isnan(g[ai, bj]):
                yield float(a), float(b), float(g[ai, bj])


def _grid_g(p: float, q: float, lam: float, alphas, betas):
    a = alphas[:, None]
    b = betas[None, :]
    rem = 1.0 - 2.0 * b + a
    adm = (b >= a) & (rem >= 0) & (b >= 0)
    with np.errstate(divide="ignore", invalid="ignore"):
        s = (
            math.log(lam)
            + xlogy(b, p) - xlogy(b, b)
            + xlogy(b - a, q) - xlogy(b - a, b - a)
            + xlogy(rem, 1.0 - p - q) - xlogy(rem, np.where(adm, rem, 1.0))
        )
        g = np.where(adm, np.exp(s), np.nan)
    return g, adm


def find_drift_region(
    p: float,
    q: float,
    lam: float,
    grid: int = 161,
    margin: float = 1e-3,
    n_max: int = 10_000,
) -> DriftAnalysis:
    """Certify a rectangle where g_lambda clears 1 + margin, then pick
    integers d1 < d2 (alpha side) and d3 (beta side) witnessing it.

    The rectangle grows around the admissible grid cell nearest the
    anchor (max(p - q, 0), p), keeping alpha_hi <= beta_lo so the two
    integer ranges cannot collide.  Fails when lam is too small for
    any admissible cell to pass, which is the expected outcome at
    lam <= 1.
    """
    _check_drift_params(p, q, lam)
    if grid < 3:
        raise ValueError("grid must be >= 3")
    alphas = np.linspace(0.0, 1.0, grid)
    betas = np.linspace(0.0, 1.0, grid)
    g, adm = _grid_g(p, q, lam, alphas, betas)
    passing = adm & (g > 1.0 + margin)
    if not passing.any():
        raise DriftRegionError(
            f"no admissible cell with g > 1 + {margin} at lam={lam}"
        )

    ai_idx, bj_idx = np.nonzero(passing)
    a_star, b_star = max(p - q, 0.0), p
    dist = (alphas[ai_idx] - a_star) ** 2 + (betas[bj_idx] - b_star) ** 2
    at = int(np.argmin(dist))
    ai_lo = ai_hi = int(ai_idx[at])
    bj_lo = bj_hi = int(bj_idx[at])

    def block_ok(a0, a1, b0, b1):
        if a0 < 0 or b0 < 0 or a1 >= grid or b1 >= grid:
            return False
        if alphas[a1] > betas[b0]:
            return False
        return bool(passing[a0:a1 + 1, b0:b1 + 1].all())

    moved = True
    while moved:
        moved = False
        if block_ok(ai_lo, ai_hi + 1, bj_lo, bj_hi):
            ai_hi += 1
            moved = True
        if block_ok(ai_lo - 1, ai_hi, bj_lo, bj_hi):
            ai_lo -= 1
            moved = True
        if block_ok(ai_lo, ai_hi, bj_lo, bj_hi + 1):
            bj_hi += 1
            moved = True
        if block_ok(ai_lo, ai_hi, bj_lo - 1, bj_hi):
            bj_lo -= 1
            moved = True
    if ai_hi == ai_lo:
        raise DriftRegionError(
            "certified region spans a single alpha grid line; refine the grid"
        )

    a1, a2 = float(alphas[ai_lo]), float(alphas[ai_hi])
    b1, b2 = float(betas[bj_lo]), float(betas[bj_hi])

    fuzz = 1e-9
    for n in range(2, n_max + 1):
        d1 = math.ceil(a1 * n - fuzz)
        d2 = d1 + 1
        if d2 > math.floor(a2 * n + fuzz):
            continue
        c_lo = math.ceil(b1 * n - fuzz)
        c_hi = math.floor(b2 * n + fuzz)
        if c_lo > c_hi:
            continue
        d3 = min(max((c_lo + c_hi) // 2, c_lo), c_hi)
        if d3 in (d1, d2):
            if d3 + 1 <= c_hi:
                d3 += 1
            else:
                continue
        if (
            g_lambda(d1 / n, d3 / n, p, q, lam) > 1.0
            and g_lambda(d2 / n, d3 / n, p, q, lam) > 1.0
        ):
            return DriftAnalysis(
                p=p, q=q, lam=lam,
                alphas=alphas, betas=betas, g_values=g, margin=margin,
                alpha_lo=a1, alpha_hi=a2, beta_lo=b1, beta_hi=b2,
                n=n, d1=d1, d2=d2, d3=d3,
            )
    raise DriftRegionError(f"no integer witness found with n <= {n_max}")


__all__ = [
    "BlockScheme",
    "BlockSuccessEstimate",
    "ClusterReport",
    "DriftAnalysis",
    "DriftRegionError",
    "KSReport",
    "OrientedPercolationField",
    "SchemeError",
    "TargetSuccess",
    "TunedBlock",
    "TuningError",
    "VariantSuccess",
    "cluster_survival",
    "depth_cdf_dominates",
    "drift_csv_rows",
    "estimate_block_success",
    "find_drift_region",
    "g_lambda",
    "iid_oriented_percolation",
    "round_robin_placement",
    "sample_block_driven_field",
    "tune_block",
    "variant_caps",
    "walks_through_vertex",
    "write_field",
]
