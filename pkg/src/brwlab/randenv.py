"""Bond percolation on finite graphs and spectral radii of clusters.

Keep each undirected edge with probability p, split the surviving
subgraph into connected components, and measure the critical strong
rate of a component as the reciprocal Perron root of the kernel
restricted to its open edges.  Every per-edge uniform is addressed by
(seed, edge), so sweeping p under one seed yields nested open sets and
pathwise monotone statistics.
"""

from __future__ import annotations

import hashlib
import math
from collections import deque
from dataclasses import dataclass

import numpy as np
from scipy.sparse import csr_matrix
from scipy.sparse.linalg import eigsh

from .graphs import WeightedGraph, restrict_to_edges
from .rng import mix64, uniform_from_key
from .spectral import SpectralEstimate, pf_eigenvalue


class PercolationError(ValueError):
    pass


def _vertex_list(graph: WeightedGraph, max_vertices: int = 200_000) -> list:
    explicit = getattr(graph, "vertices", None)
    if explicit is not None:
        return list(explicit)
    seen = {graph.origin}
    queue = deque(seen)
    while queue:
        x = queue.popleft()
        for y, _ in graph.out_neighbors(x):
            if y not in seen:
                if len(seen) >= max_vertices:
                    raise PercolationError(
                        "graph appears infinite; percolation needs a finite one"
                    )
                seen.add(y)
                queue.append(y)
    return sorted(seen, key=graph.vertex_to_text)


def _edge_key(tx: str, ty: str) -> int:
    digest = hashlib.blake2b(
        f"{tx}|{ty}".encode(), digest_size=8
    ).digest()
    return int.from_bytes(digest, "big")


@dataclass(frozen=True)
class PercolationSample:
    """One Bernoulli thinning of a finite non-oriented graph.

    open_edges holds canonical vertex pairs ordered by text form, the
    same convention the edge-restricted graph view uses.
    """

    graph: WeightedGraph
    p: float
    seed: int
    vertices: tuple
    open_edges: frozenset
    n_total_edges: int

    @property
    def n_open_edges(self) -> int:
        return len(self.open_edges)


def _all_edges(graph: WeightedGraph, vertices) -> list:
    text = graph.vertex_to_text
    seen = set()
    out = []
    for x in vertices:
        tx = text(x)
        for y, _ in graph.out_neighbors(x):
            ty = text(y)
            pair = (x, y) if tx <= ty else (y, x)
            key = (text(pair[0]), text(pair[1]))
            if key not in seen:
                seen.add(key)
                out.append((pair, key))
    return out


def percolate(graph: WeightedGraph, p: float, seed: int) -> PercolationSample:
    """Keep each undirected edge independently with probability p.

    Deterministic in (graph, seed): the edge's uniform is derived from
    the seed and the edge's canonical text key, never from sampling
    order, so samples at increasing p under one seed are nested.
    """
    if graph.oriented:
        raise PercolationError("percolation is defined on non-oriented graphs")
    if not 0.0 <= p <= 1.0:
        raise PercolationError("p must lie in [0, 1]")
    vertices = _vertex_list(graph)
    open_edges = set()
    n_total = 0
    for pair, key in _all_edges(graph, vertices):
        n_total += 1
        if uniform_from_key(seed, _edge_key(*key)) < p:
            open_edges.add(pair)
    return PercolationSample(
        graph=graph,
        p=float(p),
        seed=seed,
        vertices=tuple(vertices),
        open_edges=frozenset(open_edges),
        n_total_edges=n_total,
    )


@dataclass(frozen=True)
class ClusterSet:
    """Connected components of the open subgraph, largest first.

    Components with equal size are ordered by their smallest vertex
    text, so the decomposition is deterministic.
    """

    components: tuple
    sizes: tuple
    largest_index: int

    def component_of(self, vertex):
        for comp in self.components:
            if vertex in comp:
                return comp
        raise KeyError(vertex)


def clusters(sample: PercolationSample) -> ClusterSet:
    """Union-find over the open edges; isolated vertices stay as
    singleton components, so the result partitions every vertex."""
    parent = {v: v for v in sample.vertices}

    def find(v):
        root = v
        while parent[root] != root:
            root = parent[root]
        while parent[v] != root:
            parent[v], v = root, parent[v]
        return root

    for x, y in sample.open_edges:
        rx, ry = find(x), find(y)
        if rx != ry:
            parent[rx] = ry
    groups = {}
    for v in sample.vertices:
        groups.setdefault(find(v), []).append(v)
    text = sample.graph.vertex_to_text
    comps = sorted(
        (tuple(sorted(g, key=text)) for g in groups.values()),
        key=lambda c: (-len(c), text(c[0])),
    )
    return ClusterSet(
        components=tuple(comps),
        sizes=tuple(len(c) for c in comps),
        largest_index=0,
    )


@dataclass(frozen=True)
class ClusterSpectral:
    n_vertices: int
    rho: float
    lam_s: float
    estimate: SpectralEstimate


def _pf_symmetric(mat: csr_matrix) -> SpectralEstimate:
    """Top eigenvalue of a symmetric nonnegative kernel.

    Stringy clusters have nearly degenerate leading eigenvalues, where
    plain power iteration stalls; Lanczos does not care.  The start
    vector is fixed so results are reproducible."""
    n = mat.shape[0]
    if n <= 32:
        vals, vecs = np.linalg.eigh(mat.toarray())
        value, vec = float(vals[-1]), vecs[:, -1]
    else:
        v0 = np.full(n, 1.0 / math.sqrt(n))
        vals, vecs = eigsh(mat, k=1, which="LA", v0=v0)
        value, vec = float(vals[0]), vecs[:, 0]
    if vec.sum() < 0:
        vec = -vec
    residual = float(np.max(np.abs(mat @ vec - value * vec)))
    return SpectralEstimate(
        value=value, vector=vec, iterations=0, residual=residual
    )


def _spectral_over(graph: WeightedGraph, vertices) -> ClusterSpectral:
    verts = sorted(vertices, key=graph.vertex_to_text)
    index = {v: i for i, v in enumerate(verts)}
    rows, cols, vals = [], [], []
    for v in verts:
        for y, w in graph.out_neighbors(v):
            j = index.get(y)
            if j is not None and w > 0:
                rows.append(index[v])
                cols.append(j)
                vals.append(w)
    mat = csr_matrix(
        (vals, (rows, cols)), shape=(len(verts), len(verts)), dtype=np.float64
    )
    if (mat != mat.T).nnz == 0:
        est = _pf_symmetric(mat)
    else:
        est = pf_eigenvalue(mat)
    rho = est.value
    lam_s = math.inf if rho <= 0 else 1.0 / rho
    return ClusterSpectral(
        n_vertices=len(verts), rho=rho, lam_s=lam_s, estimate=est
    )


def lambda_s_on_cluster(sample: PercolationSample, cluster) -> ClusterSpectral:
    """Critical strong rate of one open component: the kernel keeps
    only open edges, and lam_s is the reciprocal of its Perron root
    (inf for a component with no open edge mass, e.g. an isolated
    vertex)."""
    if not cluster:
        raise PercolationError("cluster is empty")
    restricted = restrict_to_edges(sample.graph, sample.open_edges)
    return _spectral_over(restricted, cluster)


def graph_lambda_s(graph: WeightedGraph, vertices=None) -> ClusterSpectral:
    """lam_s of a whole finite graph; the p=1 reference the cluster
    values are compared against."""
    if vertices is None:
        vertices = _vertex_list(graph)
    return _spectral_over(graph, vertices)


@dataclass(frozen=True)
class ConvergenceRow:
    n: int
    p: float
    seed: int
    largest_size: int
    lam_largest: float
    lam_min_clusters: float
    lam_box: float

    @property
    def gap(self) -> float:
        return self.lam_largest - self.lam_box


@dataclass(frozen=True)
class ConvergenceTable:
    rows: tuple
    lam_box: float
    n_vertices: int
    residual_mass: float

    def median_gap(self, n: int) -> float:
        gaps = sorted(r.gap for r in self.rows if r.n == n)
        if not gaps:
            raise PercolationError(f"no rows at n={n}")
        mid = len(gaps) // 2
        if len(gaps) % 2:
            return gaps[mid]
        return 0.5 * (gaps[mid - 1] + gaps[mid])


def convergence_experiment(
    graph: WeightedGraph,
    p_values,
    seeds,
    levels=None,
    min_over_clusters: bool = True,
) -> ConvergenceTable:
    """Percolate at each retention level and tabulate cluster rates.

    One independent sample per (level, seed); every row reports the
    largest component's lam_s next to the full graph's, so the gap
    column shows how fast denser levels approach the p=1 value.
    levels are the labels written to the rows (defaults to 1, 2, ...);
    pass the exponents when p_values follows a 1 - 2**-n schedule.
    residual_mass = sum of (1 - p_n), the almost-sure convergence
    budget of the level sequence.
    """
    ps = [float(p) for p in p_values]
    if not ps:
        raise PercolationError("p_values is empty")
    for p in ps:
        if not 0.0 < p <= 1.0:
            raise PercolationError("retention levels must lie in (0, 1]")
    if levels is None:
        levels = range(1, len(ps) + 1)
    levels = [int(n) for n in levels]
    if len(levels) != len(ps) or len(set(levels)) != len(levels):
        raise PercolationError("levels must label each retention value once")
    vertices = _vertex_list(graph)
    box = _spectral_over(graph, vertices)
    rows = []
    for n, p in zip(levels, ps):
        for seed in seeds:
            sample = percolate(graph, p, mix64(seed, n))
            parts = clusters(sample)
            largest = parts.components[parts.largest_index]
            spec_largest = lambda_s_on_cluster(sample, largest)
            if min_over_clusters:
                lam_min = min(
                    lambda_s_on_cluster(sample, comp).lam_s
                    for comp in parts.components
                )
            else:
                lam_min = spec_largest.lam_s
            rows.append(ConvergenceRow(
                n=n,
                p=p,
                seed=seed,
                largest_size=len(largest),
                lam_largest=spec_largest.lam_s,
                lam_min_clusters=lam_min,
                lam_box=box.lam_s,
            ))
    return ConvergenceTable(
        rows=tuple(rows),
        lam_box=box.lam_s,
        n_vertices=len(vertices),
        residual_mass=float(sum(1.0 - p for p in ps)),
    )


__all__ = [
    "ClusterSet",
    "ClusterSpectral",
    "ConvergenceRow",
    "ConvergenceTable",
    "PercolationError",
    "PercolationSample",
    "clusters",
    "convergence_experiment",
    "graph_lambda_s",
    "lambda_s_on_cluster",
    "percolate",
]
