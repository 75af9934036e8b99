import io
import math

import numpy as np
import pytest

from brwlab.coupling import (
    BlockScheme,
    DriftRegionError,
    SchemeError,
    TuningError,
    cluster_survival,
    depth_cdf_dominates,
    drift_csv_rows,
    estimate_block_success,
    find_drift_region,
    g_lambda,
    iid_oriented_percolation,
    round_robin_placement,
    sample_block_driven_field,
    tune_block,
    variant_caps,
    walks_through_vertex,
    write_field,
)
from brwlab.graphs import loop_graph, simple_random_walk
from brwlab.sim import INF

Z = simple_random_walk(1)


def zline_scheme(lo, hi, **kw):
    blocks = {i: ((i,),) for i in range(lo, hi + 1)}
    args = dict(graph=Z, blocks=blocks, offsets=(0, 1), block_time=1.0, k=1)
    args.update(kw)
    return BlockScheme(**args)


# ---------------------------------------------------------------------------
# the rate function g


def g_direct(alpha, beta, p, q, lam):
    # straight transcription with plain powers; only valid away from
    # the boundary where exponents vanish
    rem = 1.0 - 2.0 * beta + alpha
    num = lam * p**beta * q ** (beta - alpha) * (1.0 - p - q) ** rem
    den = (
        beta**beta * (beta - alpha) ** (beta - alpha) * rem**rem
    )
    return num / den


def test_g_matches_direct_formula_inside_the_domain():
    rng = np.random.default_rng(12)
    for _ in range(200):
        p = rng.uniform(0.2, 0.7)
        q = rng.uniform(0.05, min(0.9 - p, 0.4))
        lam = rng.uniform(0.5, 3.0)
        alpha = rng.uniform(-0.2, 0.5)
        beta = rng.uniform(max(alpha, 0.0) + 0.01, (1 + alpha) / 2 - 0.01)
        assert g_lambda(alpha, beta, p, q, lam) == pytest.approx(
            g_direct(alpha, beta, p, q, lam), rel=1e-12
        )


def test_g_anchor_identity():
    # g(p - q, p) = lam for every admissible (p, q, lam)
    rng = np.random.default_rng(7)
    for _ in range(100):
        p = rng.uniform(0.05, 0.9)
        q = rng.uniform(0.0, 1.0 - p) * rng.uniform(0.1, 0.9)
        q = max(q, 1e-6)
        lam = rng.uniform(0.1, 5.0)
        assert abs(g_lambda(p - q, p, p, q, lam) - lam) <= 1e-12 * max(1, lam)


def test_g_handles_zero_exponents():
    # x log x extends by 0 at the corners; beta = alpha kills the
    # (beta - alpha) factor, rem = 0 kills the holding factor
    v = g_lambda(0.5, 0.5, 0.6, 0.2, 1.0)
    assert math.isfinite(v) and v > 0
    v = g_lambda(0.2, 0.6, 0.6, 0.2, 1.0)  # rem = 1 - 1.2 + 0.2 = 0
    assert math.isfinite(v) and v > 0


def test_g_entropy_bound():
    # the three-way split entropy is at most log 3
    rng = np.random.default_rng(5)
    for _ in range(300):
        p = rng.uniform(0.1, 0.8)
        q = rng.uniform(0.01, min(0.95 - p, 0.5))
        lam = rng.uniform(0.2, 2.0)
        alpha = rng.uniform(-0.3, 0.6)
        beta = rng.uniform(max(alpha, 0.0), (1 + alpha) / 2)
        assert g_lambda(alpha, beta, p, q, lam) <= 3.0 * lam + 1e-9


def test_g_rejects_bad_arguments():
    with pytest.raises(ValueError):
        g_lambda(0.5, 0.4, 0.6, 0.2, 1.0)  # beta < alpha
    with pytest.raises(ValueError):
        g_lambda(0.0, 0.9, 0.6, 0.2, 1.0)  # 1 - 2b + a < 0
    with pytest.raises(ValueError):
        g_lambda(0.1, 0.3, 0.0, 0.2, 1.0)  # p = 0
    with pytest.raises(ValueError):
        g_lambda(0.1, 0.3, 0.9, 0.2, 1.0)  # p + q > 1


# ---------------------------------------------------------------------------
# drift regions


def test_drift_region_supercritical_case():
    a = find_drift_region(0.7, 0.1, 1.05)
    # the rectangle must be ordered and sit inside the admissible cone
    assert a.alpha_lo < a.alpha_hi <= a.beta_lo < a.beta_hi
    # integer drift parameters certify g > 1 at both corners
    assert a.d1 < a.d2 <= a.alpha_hi * a.n + 1e-9
    assert a.alpha_lo * a.n - 1e-9 <= a.d1
    for d in (a.d1, a.d2):
        assert g_lambda(d / a.n, a.d3 / a.n, 0.7, 0.1, 1.05) > 1.0
    # every reported grid cell clears the margin
    for alpha, beta, g in drift_csv_rows(a):
        if a.alpha_lo <= alpha <= a.alpha_hi and a.beta_lo <= beta <= a.beta_hi:
            assert g > 1.0 + a.margin * 0.999


def test_drift_region_symmetric_walk():
    # p = q has anchor alpha = 0; a supercritical rate still yields a
    # region left of the diagonal
    a = find_drift_region(0.4, 0.4, 1.5)
    assert a.alpha_lo < a.alpha_hi <= a.beta_lo < a.beta_hi
    assert g_lambda(a.d1 / a.n, a.d3 / a.n, 0.4, 0.4, 1.5) > 1.0


def test_drift_region_subcritical_raises():
    with pytest.raises(DriftRegionError):
        find_drift_region(0.7, 0.1, 0.8)


def test_drift_region_rejects_bad_walk():
    with pytest.raises(ValueError):
        find_drift_region(0.0, 0.1, 1.2)
    with pytest.raises(ValueError):
        find_drift_region(0.7, 0.4, 1.2)  # p + q > 1


# ---------------------------------------------------------------------------
# block schemes


def test_round_robin_placement():
    block = ("a", "b", "c")
    placed = dict(round_robin_placement(block, 8))
    assert placed == {"a": 3, "b": 3, "c": 2}
    assert sum(placed.values()) == 8
    assert max(placed.values()) - min(placed.values()) <= 1
    # fewer particles than vertices: leading vertices get one each
    assert dict(round_robin_placement(block, 2)) == {"a": 1, "b": 1}


def test_scheme_validation():
    with pytest.raises(SchemeError):
        zline_scheme(0, 3, k=0).validate()
    with pytest.raises(SchemeError):
        zline_scheme(0, 3, block_time=0.0).validate()
    with pytest.raises(SchemeError):
        BlockScheme(graph=Z, blocks={0: ((0,),), 1: ((0,),)},
                    offsets=(0, 1), block_time=1.0, k=1).validate()
    with pytest.raises(SchemeError):
        BlockScheme(graph=Z, blocks={}, offsets=(0, 1), block_time=1.0,
                    k=1).validate()
    s = zline_scheme(0, 3)
    with pytest.raises(SchemeError):
        s.targets(3)  # target 4 has no block
    assert s.targets(1) == (1, 2)


def test_variant_caps_table():
    s = zline_scheme(0, 1, m=5, gen_cap=7, birth_cap=11)
    assert variant_caps(s, "free") == (INF, INF, INF)
    assert variant_caps(s, "site") == (5, INF, INF)
    assert variant_caps(s, "gen") == (INF, 7, INF)
    assert variant_caps(s, "site_gen") == (5, 7, INF)
    assert variant_caps(s, "hat") == (INF, 7, 11)
    with pytest.raises(SchemeError):
        variant_caps(s, "nosuch")


def test_block_success_variant_domination():
    # capped variants can never beat the free one on a shared stream
    scheme = zline_scheme(-5, 6, block_time=0.8, k=4, m=6, gen_cap=8,
                          birth_cap=200)
    est = estimate_block_success(
        scheme, 0, 2.5,
        variants=("free", "site", "site_gen", "hat"),
        replicas=150, seed=3,
    )
    free = est.variants["free"]
    for name in ("site", "site_gen", "hat"):
        var = est.variants[name]
        assert var.joint_successes <= free.joint_successes
        for tf, tv in zip(free.per_target, var.per_target):
            assert tv.successes <= tf.successes


def test_block_success_structural_zero():
    # k above m * |A_j| cannot be reached by the site-capped process
    scheme = zline_scheme(-3, 4, block_time=1.0, k=3, m=2)
    est = estimate_block_success(scheme, 0, 3.0, variants=("site",),
                                 replicas=50, seed=1)
    var = est.variants["site"]
    for tgt in var.per_target:
        assert tgt.structural_zero
        assert tgt.successes == 0


def test_block_success_collect_mode():
    scheme = zline_scheme(-4, 5, block_time=0.7, k=2)
    est = estimate_block_success(scheme, 0, 2.0, variants=("free",),
                                 replicas=40, seed=9, collect=True)
    assert len(est.births) == 40
    assert len(est.max_generation) == 40
    assert all(b >= 0 for b in est.births)
    assert all(0 <= g < 64 for g in est.max_generation)


# ---------------------------------------------------------------------------
# walks through a vertex


def brute_force_walks_through(n0):
    # every length-n0 walk on Z that visits 0 starts within n0 steps
    # of it; enumerate them all and keep those touching 0 at any step
    total = 0
    for start in range(-n0, n0 + 1):
        paths = [[(start,)]]
        for _ in range(n0):
            paths = [
                path + [y]
                for path in paths
                for y, _ in Z.out_neighbors(path[-1])
            ]
        total += sum(1 for path in paths if (0,) in path)
    return total


def test_walks_through_vertex_matches_brute_force():
    # the first-visit decomposition counts walks from any start that
    # pass through the marked vertex
    for n0 in (0, 1, 2, 3, 4, 5):
        assert walks_through_vertex(Z, n0) == brute_force_walks_through(n0)


def test_walks_through_vertex_on_the_loop():
    # the loop has exactly one walk of any length and it stays on x
    g = loop_graph()
    for n0 in (0, 1, 5):
        assert walks_through_vertex(g, n0) == 1


def test_walks_through_vertex_total_count():
    # splitting at the visit position bounds the count by
    # (n0 + 1) * 2^n0 on Z; the walks out of x alone give 2^n0
    for n0 in (2, 4, 6):
        h = walks_through_vertex(Z, n0)
        assert 2**n0 <= h <= (n0 + 1) * 2**n0


# ---------------------------------------------------------------------------
# iid oriented percolation


def test_iid_field_full_retention_is_the_whole_cone():
    field = iid_oriented_percolation((0, 1), 1.0, (-2, 12, 10), seed=1)
    report = cluster_survival(field)
    assert report.survived
    assert report.max_depth == 10
    # with the stay-put offset open everywhere, the origin column is
    # hit at every level below the root
    assert report.column_hits == 10
    # edge count of the full cone: level n holds n+1 cells, each with
    # two outgoing edges
    assert len(field.edges) == sum(2 * (n + 1) for n in range(10))


def test_iid_field_zero_retention_dies_at_the_root():
    field = iid_oriented_percolation((0, 1), 0.0, (-2, 12, 10), seed=1)
    assert field.edges == ()
    report = cluster_survival(field)
    assert not report.survived
    assert report.max_depth == 0


def test_iid_field_is_nested_in_p():
    for seed in range(5):
        lo = iid_oriented_percolation((0, 1), 0.4, (-2, 40, 30), seed=seed)
        hi = iid_oriented_percolation((0, 1), 0.8, (-2, 40, 30), seed=seed)
        assert set(lo.edges) <= set(hi.edges)


def test_iid_field_survival_frequencies():
    # depth 30 split point: well below threshold dies, well above lives
    alive_lo = alive_hi = 0
    for s in range(100):
        w = (-2, 40, 30)
        lo = cluster_survival(iid_oriented_percolation((0, 1), 0.4, w, s))
        hi = cluster_survival(iid_oriented_percolation((0, 1), 0.8, w, s))
        alive_lo += lo.survived
        alive_hi += hi.survived
    assert alive_lo <= 2
    assert alive_hi >= 60


def test_iid_field_window_clipping_only_removes_cells():
    wide = iid_oriented_percolation((0, 1), 0.7, (-2, 40, 12), seed=3)
    narrow = iid_oriented_percolation((0, 1), 0.7, (0, 6, 12), seed=3)
    assert set(narrow.edges) <= set(wide.edges)


def test_write_field_round_trip():
    field = iid_oriented_percolation((0, 1), 0.6, (-1, 12, 6), seed=2)
    buf = io.StringIO()
    write_field(field, buf)
    lines = buf.getvalue().splitlines()
    assert lines[0] == "-1 12 6"
    assert len(lines) == 1 + len(field.edges)
    parsed = tuple(tuple(int(t) for t in line.split()) for line in lines[1:])
    assert parsed == field.edges


# ---------------------------------------------------------------------------
# block-driven fields


def test_block_field_matches_across_windows():
    # cell decisions are keyed by (seed, i, n), so enlarging a window
    # that never clips the cluster does not change anything
    scheme = zline_scheme(-30, 30, block_time=0.8, k=8, gen_cap=8,
                          birth_cap=400)
    a = sample_block_driven_field(scheme, 2.5, (-3, 12, 8), seed=6)
    b = sample_block_driven_field(scheme, 2.5, (-8, 25, 8), seed=6)
    assert a.edges == b.edges


def test_block_field_deterministic():
    scheme = zline_scheme(-20, 20, block_time=0.8, k=8, gen_cap=8,
                          birth_cap=400)
    a = sample_block_driven_field(scheme, 2.5, (-3, 12, 6), seed=11)
    b = sample_block_driven_field(scheme, 2.5, (-3, 12, 6), seed=11)
    assert a == b


def test_depth_cdf_dominates_on_synthetic_data():
    deeper = [5, 6, 7, 8, 9, 10] * 20
    shallower = [1, 2, 3, 4] * 20
    assert depth_cdf_dominates(deeper, shallower).dominates
    rep = depth_cdf_dominates(shallower, deeper)
    assert not rep.dominates
    assert rep.statistic > rep.threshold
    # identical samples dominate themselves
    assert depth_cdf_dominates(shallower, shallower).dominates


def test_depth_cdf_threshold_value():
    rep = depth_cdf_dominates([1.0] * 100, [1.0] * 100, alpha=0.05)
    expect = math.sqrt(-0.5 * math.log(0.05)) * math.sqrt(200 / (100 * 100))
    assert rep.threshold == pytest.approx(expect, rel=1e-12)


# ---------------------------------------------------------------------------
# tuning


def test_tune_block_finds_working_parameters():
    scheme = zline_scheme(-15, 15)
    tuned = tune_block(scheme, 3.0, eps=0.2, seed=4, replicas=60,
                       t_grid=[1.0, 1.2], max_doublings=9)
    assert tuned.joint_p >= 0.8
    assert tuned.k >= 1
    assert tuned.gen_cap >= 1
    assert tuned.birth_cap >= tuned.k
    assert tuned.ladder_estimate < 3.0


def test_tune_block_rejects_subcritical_rate():
    scheme = zline_scheme(-10, 10)
    with pytest.raises(TuningError):
        tune_block(scheme, 1.0, eps=0.2, seed=1, replicas=30)


def test_tuned_budgets_scale_with_eps():
    # a stricter failure budget can only push the quantile caps up
    scheme = zline_scheme(-15, 15)
    loose = tune_block(scheme, 3.0, eps=0.3, seed=4, replicas=60,
                       t_grid=[1.2], max_doublings=9)
    tight = tune_block(scheme, 3.0, eps=0.02, seed=4, replicas=60,
                       t_grid=[1.2], max_doublings=9)
    assert tight.birth_cap >= loose.birth_cap
    assert tight.gen_cap >= loose.gen_cap
    assert tight.k >= loose.k
