import math

import pytest

from brwlab.graphs import ExplicitGraph, finite_box
from brwlab.randenv import (
    PercolationError,
    clusters,
    convergence_experiment,
    graph_lambda_s,
    lambda_s_on_cluster,
    percolate,
)

TWO = ExplicitGraph({("a", "b"): 0.5, ("b", "a"): 0.5})


def test_percolate_trivial_levels():
    box = finite_box(2, 6)
    full = percolate(box, 1.0, seed=7)
    empty = percolate(box, 0.0, seed=7)
    assert full.n_open_edges == full.n_total_edges
    assert empty.n_open_edges == 0
    # a 6x6 grid has 2 * 6 * 5 internal edges
    assert full.n_total_edges == 60


def test_percolate_rejects_bad_input():
    with pytest.raises(PercolationError):
        percolate(ExplicitGraph({("a", "b"): 0.5}), 0.5, seed=1)
    with pytest.raises(PercolationError):
        percolate(TWO, 1.5, seed=1)
    with pytest.raises(PercolationError):
        percolate(TWO, -0.1, seed=1)


def test_open_fraction_tracks_p():
    box = finite_box(2, 12)
    for p in (0.3, 0.5, 0.8):
        counts = []
        for seed in range(5):
            s = percolate(box, p, seed=seed)
            counts.append(s.n_open_edges)
        n = s.n_total_edges * len(counts)
        frac = sum(counts) / n
        assert abs(frac - p) < 4 * math.sqrt(p * (1 - p) / n)


def test_samples_are_nested_in_p():
    box = finite_box(2, 10)
    for seed in range(4):
        opens = [
            percolate(box, p, seed=seed).open_edges
            for p in (0.2, 0.5, 0.8, 1.0)
        ]
        for lo, hi in zip(opens, opens[1:]):
            assert lo <= hi


def test_percolate_is_deterministic():
    box = finite_box(2, 8)
    assert percolate(box, 0.6, seed=3) == percolate(box, 0.6, seed=3)
    assert (
        percolate(box, 0.6, seed=3).open_edges
        != percolate(box, 0.6, seed=4).open_edges
    )


def test_clusters_partition_all_vertices():
    box = finite_box(2, 9)
    sample = percolate(box, 0.45, seed=11)
    parts = clusters(sample)
    assert sum(parts.sizes) == 81
    assert parts.sizes == tuple(sorted(parts.sizes, reverse=True))
    assert parts.largest_index == 0
    seen = set()
    for comp in parts.components:
        for v in comp:
            assert v not in seen
            seen.add(v)
    # connectivity: every component vertex reaches the others through
    # open edges only (spot-check the largest)
    comp = set(parts.components[0])
    adj = {v: set() for v in comp}
    for x, y in sample.open_edges:
        if x in comp:
            adj[x].add(y)
            adj[y].add(x)
    stack = [next(iter(comp))]
    reached = set(stack)
    while stack:
        for y in adj[stack.pop()]:
            if y not in reached:
                reached.add(y)
                stack.append(y)
    assert reached == comp


def test_two_vertex_critical_rate_oracle():
    # kernel [[0, 1/2], [1/2, 0]] has Perron root 1/2, so the critical
    # strong rate is exactly 2
    full = graph_lambda_s(TWO)
    assert abs(full.lam_s - 2.0) < 1e-8
    sample = percolate(TWO, 1.0, seed=3)
    parts = clusters(sample)
    spec = lambda_s_on_cluster(sample, parts.components[0])
    # the fully open cluster is the whole graph, bit for bit
    assert spec.lam_s == full.lam_s


def test_isolated_vertex_has_infinite_rate():
    sample = percolate(TWO, 0.0, seed=5)
    parts = clusters(sample)
    assert parts.sizes == (1, 1)
    spec = lambda_s_on_cluster(sample, parts.components[0])
    assert math.isinf(spec.lam_s)
    assert spec.rho == 0.0


def test_cluster_rate_dominates_full_box():
    # removing edges can only shrink the Perron root, so every cluster
    # rate sits at or above the full graph's
    box = finite_box(2, 10)
    full = graph_lambda_s(box)
    for seed in range(6):
        sample = percolate(box, 0.7, seed=seed)
        parts = clusters(sample)
        for comp in parts.components[:3]:
            spec = lambda_s_on_cluster(sample, comp)
            assert spec.lam_s >= full.lam_s - 1e-9


def test_min_over_clusters_at_most_largest():
    box = finite_box(2, 10)
    table = convergence_experiment(box, [0.6], seeds=[1, 2, 3])
    for row in table.rows:
        assert row.lam_min_clusters <= row.lam_largest + 1e-12


def test_convergence_gap_shrinks_with_level():
    box = finite_box(2, 12)
    table = convergence_experiment(
        box, [1 - 2**-2, 1 - 2**-10], seeds=range(8), levels=[2, 10],
    )
    assert table.median_gap(10) < table.median_gap(2)
    for row in table.rows:
        assert row.lam_largest >= row.lam_box - 1e-12
        assert row.gap == row.lam_largest - row.lam_box
    assert table.residual_mass == pytest.approx(2**-2 + 2**-10)


def test_full_retention_gap_is_exactly_zero():
    box = finite_box(2, 7)
    table = convergence_experiment(box, [1.0], seeds=[0, 1])
    for row in table.rows:
        assert row.gap == 0.0
        assert row.largest_size == 49


def test_experiment_input_validation():
    box = finite_box(2, 5)
    with pytest.raises(PercolationError):
        convergence_experiment(box, [], seeds=[1])
    with pytest.raises(PercolationError):
        convergence_experiment(box, [0.0], seeds=[1])
    with pytest.raises(PercolationError):
        convergence_experiment(box, [0.5, 0.7], seeds=[1], levels=[1])
    with pytest.raises(PercolationError):
        convergence_experiment(box, [0.5, 0.7], seeds=[1], levels=[2, 2])
