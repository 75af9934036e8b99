import math
import os
import subprocess
import sys

import numpy as np
import pytest

from brwlab.graphs import loop_graph, simple_random_walk
from brwlab.sim import (
    INF,
    PlanError,
    SimulationPlan,
    coupled_run,
    estimate_survival,
    run_cap_variants,
    run_lambda_grid,
    run_m_grid,
    run_process,
    run_replica,
    run_replicas,
    scan_critical,
    wilson_interval,
)
from brwlab.sim import backend

Z = simple_random_walk(1)
LOOP = loop_graph()


def test_plan_validation():
    with pytest.raises(PlanError):
        SimulationPlan(graph=Z, lam=-1.0, horizon=1.0).validate()
    with pytest.raises(PlanError):
        SimulationPlan(graph=Z, lam=1.0, horizon=0.0).validate()
    with pytest.raises(PlanError):
        SimulationPlan(graph=Z, lam=1.0, horizon=1.0, m=0).validate()
    with pytest.raises(PlanError):
        SimulationPlan(graph=Z, lam=1.0, horizon=1.0, m=1.5).validate()
    with pytest.raises(PlanError):
        SimulationPlan(graph=Z, lam=1.0, horizon=1.0,
                       initial=(((0,), 2),), m=1).validate()
    with pytest.raises(PlanError):
        SimulationPlan(graph=Z, lam=1.0, horizon=1.0,
                       checkpoints=(2.0, 1.0)).validate()


def test_wilson_interval_endpoints():
    lo, hi = wilson_interval(0, 100)
    assert lo < 1e-12 and 0.0 < hi < 0.05
    lo, hi = wilson_interval(100, 100)
    assert 0.95 < lo < 1.0 and hi > 1.0 - 1e-12
    lo, hi = wilson_interval(50, 100)
    assert lo < 0.5 < hi


def test_single_particle_lifetime_is_exponential():
    # lam=0: the lone particle just dies; its lifetime is Exp(1)
    plan = SimulationPlan(graph=Z, lam=0.0, horizon=50.0, master_seed=9)
    times = [run_replica(plan, i).extinction_time for i in range(2000)]
    assert all(t is not None for t in times)
    mean = float(np.mean(times))
    # SE of the mean of 2000 Exp(1) draws is ~0.022
    assert abs(mean - 1.0) < 0.09
    # memorylessness at t=1: P(T > 2 | T > 1) = P(T > 1)
    t = np.array(times)
    p1 = (t > 1.0).mean()
    p2_given = (t > 2.0).sum() / max((t > 1.0).sum(), 1)
    assert abs(p1 - p2_given) < 0.05


def test_loop_population_mean_matches_exponential_growth():
    # on the loop every birth lands on the same site, so the expected
    # population is exp((lam - 1) t)
    lam, t = 1.5, 4.0
    plan = SimulationPlan(
        graph=LOOP, lam=lam, horizon=t, master_seed=21,
        checkpoints=(t,), ceiling=100_000,
    )
    pops = [
        run_replica(plan, i).checkpoint_population[-1] for i in range(3000)
    ]
    mean = float(np.mean(pops))
    target = math.exp((lam - 1.0) * t)
    se = float(np.std(pops)) / math.sqrt(len(pops))
    assert abs(mean - target) < 5 * se


def test_site_cap_is_respected_on_loop():
    # m=3 on the loop caps the whole population at 3
    out = run_process(LOOP, 3.0, 10.0, [(LOOP.origin, 1)], seed=5, m=3)
    assert out.final_counts is not None
    assert int(out.final_counts[0].max()) <= 3


def test_replica_is_deterministic():
    plan = SimulationPlan(graph=Z, lam=1.4, horizon=6.0, master_seed=3)
    a = run_replica(plan, 7)
    b = run_replica(plan, 7)
    assert a == b
    c = run_replica(plan, 8)
    assert a != c


def test_backends_agree_event_by_event():
    # the compiled engine and the reference python engine must produce
    # identical outputs for identical inputs
    _engine_cy = pytest.importorskip("brwlab.sim._engine_cy")
    plan = SimulationPlan(
        graph=Z, lam=1.6, horizon=5.0, m=2, gen_cap=6, birth_cap=50,
        master_seed=11,
    )
    from brwlab.sim import _build_inputs, _plan_variant
    from brwlab.sim import _engine_py

    for idx in range(25):
        inp = _build_inputs(plan, [_plan_variant(plan)], idx,
                            driver_chain=[0], dom_pairs=[], eq_pairs=[],
                            want_final_counts=True)
        py = _engine_py.run_events(inp)
        cy = _engine_cy.run_events(inp)
        assert py.births.tolist() == cy.births.tolist()
        assert py.weak.tolist() == cy.weak.tolist()
        assert py.cp_pop.tolist() == cy.cp_pop.tolist()
        assert np.array_equal(py.extinction_time, cy.extinction_time,
                              equal_nan=True)
        assert (py.final_counts == cy.final_counts).all()


def test_coupled_run_domination_and_equality():
    plan = SimulationPlan(
        graph=Z, lam=2.0, horizon=4.0, m=2, gen_cap=5, master_seed=17,
        ceiling=200_000,
    )
    for idx in range(50):
        res = coupled_run(plan, idx)
        assert res.domination_ok
        pops = {
            name: o.checkpoint_population[-1]
            for name, o in res.outcomes.items()
        }
        assert pops["site_gen"] <= pops["site"] <= pops["free"]
        assert pops["site_gen"] <= pops["gen"] <= pops["free"]


def test_coupled_equality_when_caps_are_slack():
    # caps far above what a short run can reach never bind, so capped
    # and free runs apply exactly the same events
    plan = SimulationPlan(
        graph=Z, lam=1.3, horizon=3.0, m=1000, gen_cap=400,
        master_seed=29, ceiling=100_000,
    )
    res = coupled_run(plan, 0)
    assert res.equal_streams[("free", "site")]
    assert res.equal_streams[("free", "gen")]
    assert res.equal_streams[("free", "site_gen")]


def test_oversized_gen_cap_is_rejected():
    plan = SimulationPlan(graph=Z, lam=1.0, horizon=1.0, gen_cap=10**6)
    with pytest.raises(PlanError):
        run_replica(plan, 0)


def test_birth_budget_equality_until_budget_spent():
    # with birth_cap >= total births the budgeted process equals the
    # free one; run_cap_variants reports both final states
    out = run_cap_variants(
        Z, 1.5, 3.0, [((0,), 1)], seed=77,
        cap_sets=[(INF, INF, INF), (INF, INF, 10**9)],
    )
    assert (out.final_counts[0] == out.final_counts[1]).all()


def test_cap_variants_reject_non_dominating_driver():
    with pytest.raises(PlanError):
        run_cap_variants(
            Z, 1.5, 1.0, [((0,), 1)], seed=1,
            cap_sets=[(2, INF, INF), (3, INF, INF)],
        )


def test_m_grid_is_monotone_pathwise():
    plan = SimulationPlan(
        graph=Z, lam=2.2, horizon=5.0, master_seed=41, ceiling=100_000,
        checkpoints=(5.0,),
    )
    for idx in range(40):
        res = run_m_grid(plan, [1, 2, 4, INF], idx)
        pops = [res[m].checkpoint_population[-1] for m in [1, 2, 4, INF]]
        assert all(a <= b for a, b in zip(pops, pops[1:]))


def test_lambda_grid_is_monotone_pathwise():
    plan = SimulationPlan(
        graph=Z, lam=1.0, horizon=5.0, master_seed=43, ceiling=100_000,
    )
    for idx in range(40):
        res = run_lambda_grid(plan, [0.5, 1.0, 2.0], idx)
        alive = [res[l].weak_alive for l in [0.5, 1.0, 2.0]]
        assert all(a <= b for a, b in zip(alive, alive[1:]))


def test_estimate_survival_loop_oracle():
    # on the loop the process is a birth-death chain: survival
    # probability from one particle is 1 - 1/lam
    plan = SimulationPlan(
        graph=LOOP, lam=2.0, horizon=20.0, master_seed=4, replicas=1500,
        ceiling=10_000,
    )
    est = estimate_survival(plan, "weak")
    assert est.ci_lo <= 0.5 <= est.ci_hi
    assert abs(est.p_hat - 0.5) < 0.05


def test_estimate_survival_lam_zero_is_zero():
    plan = SimulationPlan(graph=Z, lam=0.0, horizon=10.0, master_seed=1,
                          replicas=100)
    est = estimate_survival(plan, "weak")
    assert est.successes == 0
    assert est.p_hat == 0.0


def test_ceiling_hit_counts_as_alive():
    plan = SimulationPlan(
        graph=LOOP, lam=3.0, horizon=100.0, master_seed=2, ceiling=500,
    )
    # at lam=3 most runs explode quickly; the ceiling must flag, not
    # crash, and a flagged run reads as surviving
    outs = [run_replica(plan, i) for i in range(20)]
    hits = [o for o in outs if o.ceiling_hit]
    assert hits
    assert all(o.weak_alive for o in hits)


def test_run_replicas_order_is_by_index():
    plan = SimulationPlan(graph=Z, lam=1.2, horizon=2.0, master_seed=5,
                          replicas=12)
    outs = run_replicas(plan)
    assert [o.replica_index for o in outs] == list(range(12))


def test_thread_count_does_not_change_results():
    plan = SimulationPlan(graph=Z, lam=1.5, horizon=4.0, master_seed=31,
                          replicas=40, ceiling=50_000)
    env = os.environ.copy()
    script = (
        "from brwlab.graphs import simple_random_walk\n"
        "from brwlab.sim import SimulationPlan, estimate_survival\n"
        "p = SimulationPlan(graph=simple_random_walk(1), lam=1.5,\n"
        "                   horizon=4.0, master_seed=31, replicas=40,\n"
        "                   ceiling=50_000)\n"
        "print(estimate_survival(p, 'weak'))\n"
    )
    results = []
    for threads in ("1", "3"):
        env["BRWLAB_THREADS"] = threads
        out = subprocess.run(
            [sys.executable, "-c", script], env=env, capture_output=True,
            text=True, check=True,
        )
        results.append(out.stdout)
    assert results[0] == results[1]


def test_scan_critical_brackets_loop_threshold():
    # lam_w on the loop is 1
    plan = SimulationPlan(
        graph=LOOP, lam=1.0, horizon=60.0, master_seed=13, replicas=200,
        ceiling=5_000,
    )
    res = scan_critical(plan, "weak", (0.2, 4.0), steps=4)
    assert res.separated
    lo, hi = res.bracket
    assert lo < 1.35 and hi > 0.75


def test_scan_unseparated_bracket_reports_note():
    plan = SimulationPlan(
        graph=LOOP, lam=1.0, horizon=30.0, master_seed=14, replicas=100,
        ceiling=5_000,
    )
    res = scan_critical(plan, "weak", (2.0, 4.0), steps=3)
    assert not res.separated
    assert "not separated" in res.note


def test_checkpoint_series_is_recorded():
    plan = SimulationPlan(
        graph=Z, lam=1.5, horizon=8.0, master_seed=8,
        checkpoints=(1.0, 2.0, 4.0, 8.0),
    )
    o = run_replica(plan, 3)
    assert o.checkpoint_times == (1.0, 2.0, 4.0, 8.0)
    assert len(o.checkpoint_population) == 4
    if o.extinct:
        assert all(
            p == 0 for t, p in zip(o.checkpoint_times,
                                   o.checkpoint_population)
            if t >= o.extinction_time
        )
