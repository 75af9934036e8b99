"""Continuous-time simulation of branching walks with truncations.

Particles die at rate 1 and breed at rate lam * k(x), sending the
child to a neighbor drawn by mu(x, .)/k(x).  Births can be suppressed
by a site cap m (target already holds m particles), a generation cap
(parent's generation is already at the cap) or a global birth budget.
Proposals are always generated at the uncapped rate and suppression is
applied per process variant, so several variants can share one event
stream; that shared-stream construction is what every monotonicity
and domination statement in this package leans on.
"""

from __future__ import annotations

import math
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, replace

import numpy as np

from ..graphs import WeightedGraph
from ..rng import mix64
from . import backend
from ._table import EngineInputs, EngineOutputs, GraphTable

INF = math.inf

_Z95 = 1.959963984540054


class PlanError(ValueError):
    pass


def _cap_code(value, name: str, minimum: int) -> int:
    if value is None or value == INF:
        return -1
    v = int(value)
    if v != value or v < minimum:
        raise PlanError(f"{name} must be an integer >= {minimum} or inf")
    return v


@dataclass(frozen=True)
class SimulationPlan:
    """Everything one replica needs except its index.

    m is the per-site cap (m=1 is the contact process); gen_cap bounds
    the generation a particle may belong to, so parents already at the
    cap no longer breed (ancestors are generation 0); birth_cap is the
    global birth budget.  inf disables a cap.  checkpoints default to
    the geometric grid horizon/16 ... horizon.
    """

    graph: WeightedGraph
    lam: float
    horizon: float
    m: float = INF
    gen_cap: float = INF
    birth_cap: float = INF
    initial: tuple = ()
    x0: object = None
    master_seed: int = 0
    replicas: int = 100
    ceiling: int = 1_000_000
    checkpoints: tuple = ()

    def resolved_x0(self):
        return self.graph.origin if self.x0 is None else self.x0

    def resolved_initial(self) -> tuple:
        if self.initial:
            return tuple(self.initial)
        return ((self.resolved_x0(), 1),)

    def resolved_checkpoints(self) -> tuple:
        if self.checkpoints:
            return tuple(float(c) for c in self.checkpoints)
        return tuple(self.horizon / 2.0**i for i in range(4, -1, -1))

    def validate(self) -> None:
        if self.lam < 0:
            raise PlanError("lam must be nonnegative")
        if self.horizon <= 0:
            raise PlanError("horizon must be positive")
        _cap_code(self.m, "m", 1)
        _cap_code(self.gen_cap, "gen_cap", 0)
        _cap_code(self.birth_cap, "birth_cap", 0)
        if self.ceiling < 1:
            raise PlanError("ceiling must be >= 1")
        init = self.resolved_initial()
        if not init:
            raise PlanError("initial configuration is empty")
        total = 0
        for v, c in init:
            if c < 0 or c != int(c):
                raise PlanError("initial counts must be nonnegative integers")
            if self.m != INF and c > self.m:
                raise PlanError("initial count exceeds the site cap m")
            total += int(c)
        if total < 1:
            raise PlanError("initial configuration has no particles")
        if total > self.ceiling:
            raise PlanError("initial population exceeds the ceiling")
        cps = self.resolved_checkpoints()
        if any(b <= a for a, b in zip(cps, cps[1:])):
            raise PlanError("checkpoints must be strictly increasing")
        if cps and (cps[0] <= 0 or cps[-1] > self.horizon):
            raise PlanError("checkpoints must lie in (0, horizon]")


@dataclass(frozen=True)
class ReplicaOutcome:
    replica_index: int
    extinct: bool
    extinction_time: float | None
    total_births: int
    checkpoint_times: tuple
    checkpoint_population: tuple
    checkpoint_count_x0: tuple
    weak_alive: bool
    local_alive: bool
    ceiling_hit: bool


@dataclass(frozen=True)
class CoupledOutcome:
    outcomes: dict
    domination_ok: bool
    equal_streams: dict


@dataclass(frozen=True)
class SurvivalEstimate:
    replicas: int
    successes: int
    p_hat: float
    ci_lo: float
    ci_hi: float
    mode: str
    lam: float


def wilson_interval(successes: int, n: int, z: float = _Z95) -> tuple[float, float]:
    """95% score interval; safe at the 0 and n endpoints."""
    if n <= 0:
        raise ValueError("need at least one trial")
    phat = successes / n
    denom = 1.0 + z * z / n
    center = (phat + z * z / (2 * n)) / denom
    half = z * math.sqrt(phat * (1 - phat) / n + z * z / (4 * n * n)) / denom
    return (max(0.0, center - half), min(1.0, center + half))


# ---------------------------------------------------------------------------
# variant plumbing


@dataclass(frozen=True)
class _Variant:
    lam: float
    m: float
    gen_cap: float
    birth_cap: float


def _dominates(a: _Variant, b: _Variant) -> bool:
    """a's law pathwise dominates b's under the shared event stream."""
    def wider(cap_a, cap_b):
        return cap_a == INF or (cap_b != INF and cap_a >= cap_b)

    return (
        a.lam >= b.lam
        and wider(a.m, b.m)
        and wider(a.gen_cap, b.gen_cap)
        and wider(a.birth_cap, b.birth_cap)
    )


def _build_inputs(
    plan: SimulationPlan,
    variants: list,
    replica_index: int,
    driver_chain: list,
    dom_pairs: list,
    eq_pairs: list,
    buckets: int | None = None,
    want_final_counts: bool = False,
    log_lines: list | None = None,
) -> EngineInputs:
    plan.validate()
    lam_values = [v.lam for v in variants]
    lam_max = max(lam_values)
    if lam_max > 0:
        ratios = [lv / lam_max for lv in lam_values]
    else:
        ratios = [1.0 for _ in lam_values]
    finite_gens = [v.gen_cap for v in variants if v.gen_cap != INF]
    if buckets is None:
        buckets = int(max(finite_gens)) + 2 if finite_gens else 1
    # one int64 bucket per generation per site per variant; a huge
    # finite gen_cap would silently allocate gigabytes
    if buckets > 512:
        raise PlanError(
            "generation tracking needs one bucket per generation; "
            f"finite gen_cap gives {buckets} buckets, the limit is 512"
        )
    table = GraphTable(plan.graph, plan.resolved_x0())
    init_sites = []
    init_counts = []
    for v, c in plan.resolved_initial():
        if int(c) > 0:
            init_sites.append(table.site_id(v))
            init_counts.append(int(c))
    return EngineInputs(
        table=table,
        seed=mix64(plan.master_seed, replica_index),
        lam_max=lam_max,
        lam_ratio=np.array(ratios, dtype=np.float64),
        m_cap=np.array([_cap_code(v.m, "m", 1) for v in variants], dtype=np.int64),
        gen_sup=np.array(
            [_cap_code(v.gen_cap, "gen_cap", 0) for v in variants], dtype=np.int64
        ),
        birth_cap=np.array(
            [_cap_code(v.birth_cap, "birth_cap", 0) for v in variants],
            dtype=np.int64,
        ),
        buckets=buckets,
        driver_chain=np.array(driver_chain, dtype=np.int64),
        horizon=float(plan.horizon),
        ceiling=int(plan.ceiling),
        cp_times=np.array(plan.resolved_checkpoints(), dtype=np.float64),
        init_sites=np.array(init_sites, dtype=np.int64),
        init_counts=np.array(init_counts, dtype=np.int64),
        dom_pairs_lo=np.array([a for a, _ in dom_pairs], dtype=np.int64),
        dom_pairs_hi=np.array([b for _, b in dom_pairs], dtype=np.int64),
        eq_pairs_a=np.array([a for a, _ in eq_pairs], dtype=np.int64),
        eq_pairs_b=np.array([b for _, b in eq_pairs], dtype=np.int64),
        want_final_counts=want_final_counts,
        log_lines=log_lines,
    )


def _outcome(out: EngineOutputs, p: int, replica_index: int,
             cp_times: tuple) -> ReplicaOutcome:
    ext = float(out.extinction_time[p])
    extinct = not math.isnan(ext)
    return ReplicaOutcome(
        replica_index=replica_index,
        extinct=extinct,
        extinction_time=ext if extinct else None,
        total_births=int(out.births[p]),
        checkpoint_times=cp_times,
        checkpoint_population=tuple(int(x) for x in out.cp_pop[p]),
        checkpoint_count_x0=tuple(int(x) for x in out.cp_x0[p]),
        weak_alive=bool(out.weak[p]),
        local_alive=bool(out.local[p]),
        ceiling_hit=bool(out.ceiling_hit[p]),
    )


def _plan_variant(plan: SimulationPlan) -> _Variant:
    return _Variant(plan.lam, plan.m, plan.gen_cap, plan.birth_cap)


# ---------------------------------------------------------------------------
# public runners


def run_replica(plan: SimulationPlan, replica_index: int,
                log_lines: list | None = None) -> ReplicaOutcome:
    """One replica, one process; a pure function of (seed, index).

    log_lines, if given, receives "time kind site bucket" debug lines
    and forces the reference backend for this call.
    """
    inp = _build_inputs(
        plan,
        [_plan_variant(plan)],
        replica_index,
        driver_chain=[0],
        dom_pairs=[],
        eq_pairs=[],
        log_lines=log_lines,
    )
    if log_lines is not None:
        from . import _engine_py

        out = _engine_py.run_events(inp)
    else:
        out = backend.run_events(inp)
    return _outcome(out, 0, replica_index, plan.resolved_checkpoints())


_COUPLED_NAMES = ("free", "site", "gen", "site_gen")


def coupled_run(plan: SimulationPlan, replica_index: int) -> CoupledOutcome:
    """Run the uncapped, site-capped, generation-capped and doubly
    capped processes on one shared event stream.

    When the plan carries a finite birth_cap a fifth variant "birth"
    (birth cap alone) joins the family.  domination_ok certifies, at
    every event, the sitewise chain
        site_gen <= site <= free   and   site_gen <= gen <= free;
    equal_streams reports which variant pairs applied exactly the same
    events (equivalently: their trajectories coincide).
    """
    variants = [
        _Variant(plan.lam, INF, INF, INF),
        _Variant(plan.lam, plan.m, INF, INF),
        _Variant(plan.lam, INF, plan.gen_cap, INF),
        _Variant(plan.lam, plan.m, plan.gen_cap, INF),
    ]
    names = list(_COUPLED_NAMES)
    if plan.birth_cap != INF:
        variants.append(_Variant(plan.lam, INF, INF, plan.birth_cap))
        names.append("birth")
    dom_pairs = [(3, 1), (1, 0), (3, 2), (2, 0)]
    eq_pairs = [(a, b) for a in range(len(variants)) for b in range(a + 1,
                len(variants))]
    inp = _build_inputs(
        plan, variants, replica_index,
        driver_chain=[0], dom_pairs=dom_pairs, eq_pairs=eq_pairs,
    )
    out = backend.run_events(inp)
    cps = plan.resolved_checkpoints()
    outcomes = {
        name: _outcome(out, p, replica_index, cps) for p, name in enumerate(names)
    }
    equal = {
        (names[a], names[b]): bool(out.eq_ok[i])
        for i, (a, b) in enumerate(eq_pairs)
    }
    return CoupledOutcome(
        outcomes=outcomes,
        domination_ok=bool(out.dom_ok.all()),
        equal_streams=equal,
    )


def _grid_run(plan: SimulationPlan, variants: list, keys: list,
              replica_index: int) -> dict:
    """Shared-stream run of totally ordered variants, keyed outcomes."""
    for a in range(len(variants)):
        for b in range(len(variants)):
            if a != b and not (
                _dominates(variants[a], variants[b])
                or _dominates(variants[b], variants[a])
            ):
                raise PlanError("grid variants must form a domination chain")
    chain = sorted(
        range(len(variants)),
        key=lambda i: sum(
            _dominates(variants[i], variants[j]) for j in range(len(variants))
        ),
        reverse=True,
    )
    inp = _build_inputs(
        plan, variants, replica_index,
        driver_chain=chain, dom_pairs=[], eq_pairs=[],
    )
    out = backend.run_events(inp)
    cps = plan.resolved_checkpoints()
    return {
        keys[p]: _outcome(out, p, replica_index, cps) for p in range(len(variants))
    }


def run_m_grid(plan: SimulationPlan, m_values, replica_index: int) -> dict:
    """One shared stream, one outcome per site cap.  The largest cap
    drives the event rate; the others thin it by their own state."""
    ms = list(m_values)
    variants = [
        _Variant(plan.lam, m, plan.gen_cap, plan.birth_cap) for m in ms
    ]
    return _grid_run(plan, variants, ms, replica_index)


def run_lambda_grid(plan: SimulationPlan, lam_values, replica_index: int) -> dict:
    """One shared stream, one outcome per rate; proposals are thinned
    per variant, so survival indicators are monotone in lam pathwise."""
    ls = list(lam_values)
    variants = [
        _Variant(lam, plan.m, plan.gen_cap, plan.birth_cap) for lam in ls
    ]
    return _grid_run(plan, variants, ls, replica_index)


def run_process(
    graph: WeightedGraph,
    lam: float,
    horizon: float,
    initial,
    seed: int,
    m: float = INF,
    gen_cap: float = INF,
    birth_cap: float = INF,
    ceiling: int = 1_000_000,
    buckets: int | None = None,
    x0=None,
) -> EngineOutputs:
    """Low-level single-process run returning raw engine outputs with
    final per-site counts; seed is used as-is (already stream-keyed).
    Used by the block-coupling pipeline."""
    plan = SimulationPlan(
        graph=graph, lam=lam, horizon=horizon, m=m, gen_cap=gen_cap,
        birth_cap=birth_cap, initial=tuple(initial), x0=x0,
        master_seed=0, ceiling=ceiling, checkpoints=(horizon,),
    )
    inp = _build_inputs(
        plan, [_plan_variant(plan)], 0,
        driver_chain=[0], dom_pairs=[], eq_pairs=[],
        buckets=buckets, want_final_counts=True,
    )
    inp = replace(inp, seed=seed & ((1 << 64) - 1))
    return backend.run_events(inp)


def run_cap_variants(
    graph: WeightedGraph,
    lam: float,
    horizon: float,
    initial,
    seed: int,
    cap_sets,
    ceiling: int = 1_000_000,
    buckets: int | None = None,
    x0=None,
) -> EngineOutputs:
    """Coupled truncation variants of one intensity on a shared stream.

    cap_sets is a sequence of (m, gen_cap, birth_cap) triples; the first
    must be at least as permissive as every other one, because it drives
    the event rate.  Initial counts must respect every variant's own
    site cap (a capped process cannot start outside its state space).
    seed is used as-is.  Returns raw engine outputs with final per-site
    counts and a domination flag per non-driver variant.
    """
    variants = [_Variant(lam, *caps) for caps in cap_sets]
    for v in variants[1:]:
        if not _dominates(variants[0], v):
            raise PlanError("the first cap set must dominate the others")
    plan = SimulationPlan(
        graph=graph, lam=lam, horizon=horizon,
        m=variants[0].m, gen_cap=variants[0].gen_cap,
        birth_cap=variants[0].birth_cap,
        initial=tuple(initial), x0=x0, master_seed=0,
        ceiling=ceiling, checkpoints=(horizon,),
    )
    for v in variants:
        if v.m != INF and any(c > v.m for _, c in plan.resolved_initial()):
            raise PlanError("initial count exceeds a variant's site cap")
    dom_pairs = [(p, 0) for p in range(1, len(variants))]
    inp = _build_inputs(
        plan, variants, 0,
        driver_chain=[0], dom_pairs=dom_pairs, eq_pairs=[],
        buckets=buckets, want_final_counts=True,
    )
    inp = replace(inp, seed=seed & ((1 << 64) - 1))
    return backend.run_events(inp)


# ---------------------------------------------------------------------------
# Monte-Carlo aggregation


def thread_count() -> int:
    raw = os.environ.get("BRWLAB_THREADS", "1")
    try:
        n = int(raw)
    except ValueError:
        return 1
    return max(1, n)


def _survival_chunk(args) -> list:
    plan, mode, indices = args
    flags = []
    for i in indices:
        o = run_replica(plan, i)
        flags.append(o.local_alive if mode == "local" else o.weak_alive)
    return flags


def _replica_chunk(args) -> list:
    plan, indices = args
    return [run_replica(plan, i) for i in indices]


def _chunks(n: int, parts: int) -> list:
    step = (n + parts - 1) // parts
    return [list(range(a, min(a + step, n))) for a in range(0, n, step)]


def _parallel_map(fn, jobs: list, workers: int) -> list:
    if workers <= 1 or len(jobs) <= 1:
        return [fn(j) for j in jobs]
    with ProcessPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(fn, jobs))


def run_replicas(plan: SimulationPlan) -> list:
    """All replicas of a plan, ordered by index."""
    plan.validate()
    workers = thread_count()
    jobs = [(plan, idx) for idx in _chunks(plan.replicas, max(workers * 4, 1))]
    parts = _parallel_map(_replica_chunk, jobs, workers)
    out = []
    for part in parts:
        out.extend(part)
    return out


def estimate_survival(plan: SimulationPlan, mode: str) -> SurvivalEstimate:
    """Monte-Carlo frequency of the weak or local survival flag."""
    if mode not in ("weak", "local"):
        raise PlanError(f"unknown survival mode {mode!r}")
    plan.validate()
    if plan.replicas < 1:
        raise PlanError("replicas must be >= 1")
    workers = thread_count()
    jobs = [
        (plan, mode, idx)
        for idx in _chunks(plan.replicas, max(workers * 4, 1))
    ]
    parts = _parallel_map(_survival_chunk, jobs, workers)
    successes = sum(sum(1 for f in part if f) for part in parts)
    lo, hi = wilson_interval(successes, plan.replicas)
    return SurvivalEstimate(
        replicas=plan.replicas,
        successes=successes,
        p_hat=successes / plan.replicas,
        ci_lo=lo,
        ci_hi=hi,
        mode=mode,
        lam=plan.lam,
    )


@dataclass(frozen=True)
class ScanProbe:
    lam: float
    estimate: SurvivalEstimate


@dataclass(frozen=True)
class ScanResult:
    separated: bool
    bracket: tuple
    probes: tuple
    threshold: float
    note: str = ""


def scan_critical(
    plan: SimulationPlan,
    mode: str,
    bracket: tuple,
    steps: int = 6,
    threshold: float = 0.05,
) -> ScanResult:
    """Bisection for the rate where survival frequency crosses a
    threshold.  A finite-horizon Monte-Carlo proxy for the critical
    rate, biased upward: at any fixed horizon some subcritical runs
    are still alive.  All probes reuse the same replica streams, so
    probe frequencies are monotone in lam pathwise.
    """
    lo, hi = float(bracket[0]), float(bracket[1])
    if not (0 <= lo < hi):
        raise PlanError("bracket must satisfy 0 <= lo < hi")
    probes = []

    def probe(lam: float) -> SurvivalEstimate:
        est = estimate_survival(replace(plan, lam=lam), mode)
        probes.append(ScanProbe(lam=lam, estimate=est))
        return est

    e_lo = probe(lo)
    e_hi = probe(hi)
    if not (e_lo.p_hat < 0.05 and e_hi.p_hat > 0.2 and e_lo.ci_hi < e_hi.ci_lo):
        return ScanResult(
            separated=False,
            bracket=(lo, hi),
            probes=tuple(probes),
            threshold=threshold,
            note="bracket endpoints not separated; no bisection run",
        )
    for _ in range(steps):
        mid = 0.5 * (lo + hi)
        if probe(mid).p_hat > threshold:
            hi = mid
        else:
            lo = mid
    return ScanResult(
        separated=True,
        bracket=(lo, hi),
        probes=tuple(probes),
        threshold=threshold,
        note="finite-horizon proxy; estimates biased upward",
    )


__all__ = [
    "CoupledOutcome",
    "EngineInputs",
    "EngineOutputs",
    "GraphTable",
    "INF",
    "PlanError",
    "ReplicaOutcome",
    "ScanProbe",
    "ScanResult",
    "SimulationPlan",
    "SurvivalEstimate",
    "backend",
    "coupled_run",
    "estimate_survival",
    "run_cap_variants",
    "run_lambda_grid",
    "run_m_grid",
    "run_process",
    "run_replica",
    "run_replicas",
    "scan_critical",
    "thread_count",
    "wilson_interval",
]
