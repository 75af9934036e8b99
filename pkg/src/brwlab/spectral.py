"""Spectral side of the laboratory.

Leading eigenvalues of truncated kernels, ladders of growing balls
whose eigenvalues climb toward the kernel's spectral radius, and
expected-occupancy series for the unconstrained branching process.
The reciprocal of a ladder's top rung approximates the smallest
branching rate at which expected local counts stop dying out.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp

from .graphs import KernelMatrix, TreeSRW, WeightedGraph, ball_truncation


class SpectralError(RuntimeError):
    pass


@dataclass
class SpectralEstimate:
    value: float
    vector: np.ndarray
    iterations: int
    residual: float


def pf_eigenvalue(matrix, tol: float = 1e-10, max_iter: int = 100_000) -> SpectralEstimate:
    """Leading eigenvalue of a nonnegative matrix by power iteration.

    Iterates on (A + I) so that period-2 structure (bipartite balls)
    cannot stall convergence, then reports the Rayleigh quotient of A.
    Stops when the infinity-norm residual of the eigenpair drops below
    tol * max(1, value).
    """
    if isinstance(matrix, KernelMatrix):
        a = matrix.matrix
    else:
        a = matrix
    if not sp.issparse(a):
        a = np.asarray(a, dtype=np.float64)
        if a.ndim != 2 or a.shape[0] != a.shape[1]:
            raise SpectralError(f"matrix shape {a.shape} is not square")
        if a.size and a.min() < 0:
            raise SpectralError("matrix has negative entries")
        matvec = a.dot
        n = a.shape[0]
    else:
        a = sp.csr_matrix(a, dtype=np.float64)
        if a.shape[0] != a.shape[1]:
            raise SpectralError(f"matrix shape {a.shape} is not square")
        if a.nnz and a.data.min() < 0:
            raise SpectralError("matrix has negative entries")
        matvec = a.dot
        n = a.shape[0]
    if n == 0:
        raise SpectralError("matrix is empty")

    v = np.full(n, 1.0 / math.sqrt(n))
    for it in range(1, max_iter + 1):
        av = matvec(v)
        bv = av + v
        norm = float(np.linalg.norm(bv))
        if norm == 0.0:
            raise SpectralError("iteration vector vanished")
        v_next = bv / norm
        value = float(v_next @ matvec(v_next))
        residual = float(np.max(np.abs(matvec(v_next) - value * v_next)))
        v = v_next
        if residual <= tol * max(1.0, abs(value)):
            return SpectralEstimate(value=value, vector=v, iterations=it,
                                    residual=residual)
    raise SpectralError(
        f"power iteration did not reach residual {tol} in {max_iter} steps"
    )


# ---------------------------------------------------------------------------
# ladders of growing truncations


@dataclass
class LadderRung:
    radius: int
    ball_size: int
    eigenvalue: float
    critical_estimate: float
    iterations: int
    residual: float


@dataclass
class TruncationLadder:
    rungs: list[LadderRung]
    descriptor: dict = field(default_factory=dict)

    @property
    def radii(self) -> list[int]:
        return [r.radius for r in self.rungs]

    @property
    def eigenvalues(self) -> list[float]:
        return [r.eigenvalue for r in self.rungs]

    @property
    def estimates(self) -> list[float]:
        return [r.critical_estimate for r in self.rungs]

    def final_estimate(self) -> float:
        if not self.rungs:
            raise SpectralError("ladder has no rungs")
        return self.rungs[-1].critical_estimate


def truncation_ladder(
    graph: WeightedGraph,
    radii,
    center=None,
    tol: float = 1e-10,
    max_vertices: int = 200_000,
) -> TruncationLadder:
    """Eigenvalue ladder over balls of growing radius.

    Enlarging a ball can only raise its leading eigenvalue, so the
    rungs climb monotonically toward the kernel's spectral radius and
    the reciprocal estimates descend toward the critical rate.

    Homogeneous trees bypass the explicit ball (which grows
    exponentially) through the sphere-collapsed radial matrix.
    """
    rungs = []
    for radius in radii:
        radius = int(radius)
        if isinstance(graph, TreeSRW):
            # vertex-transitive, so the center never matters
            est = pf_eigenvalue(graph.radial_ball_matrix(radius), tol=tol)
            size = graph.ball_size(radius)
        else:
            ball = ball_truncation(
                graph,
                graph.origin if center is None else center,
                radius,
                max_vertices=max_vertices,
            )
            est = pf_eigenvalue(ball.matrix, tol=tol)
            size = ball.n
        critical = math.inf if est.value <= 0.0 else 1.0 / est.value
        rungs.append(
            LadderRung(
                radius=radius,
                ball_size=size,
                eigenvalue=est.value,
                critical_estimate=critical,
                iterations=est.iterations,
                residual=est.residual,
            )
        )
    return TruncationLadder(rungs=rungs, descriptor=graph.descriptor())


# ---------------------------------------------------------------------------
# expected occupancy of the unconstrained process


@dataclass
class OccupancySeries:
    lam: float
    t: float
    x0: object
    values: dict
    total: float
    terms: int
    tail_bound: float

    def at(self, vertex) -> float:
        return self.values.get(vertex, 0.0)


def _series_length(z: float, t: float, tol: float) -> int:
    """Smallest N with exp(-t) * sum_{n>N} z^n/n! provably below tol."""
    if z > 700.0:
        raise SpectralError(f"series argument {z:.3g} too large")
    if z == 0.0:
        return 0
    n = 0
    term = 1.0  # z^n / n!
    while True:
        n += 1
        term *= z / n
        if n + 1 > 2.0 * z:
            tail = math.exp(-t) * term * (z / (n + 1)) / (1.0 - z / (n + 2))
            if tail <= tol:
                return n
        if n > 100_000:
            raise SpectralError("series did not truncate")


def expected_count(
    graph: WeightedGraph,
    lam: float,
    t: float,
    x0=None,
    targets=None,
    tol: float = 1e-12,
    max_support: int = 2_000_000,
) -> OccupancySeries:
    """Expected particle counts of the free process at time t.

    Each particle dies at rate 1 and at rate lam * k(x) sends a child
    to a neighbor chosen with probability mu(x, .)/k(x), so expected
    counts solve dE/dt = -E + lam * M^T E and expand into the series
    exp(-t) * sum_n mu^n(x0, .) (lam t)^n / n!, truncated here with a
    certified tail bound.

    Homogeneous trees collapse to the distance-from-x0 chain; sphere
    symmetry then recovers per-vertex values.  Other graphs propagate
    sparse rows directly, guarded by max_support.
    """
    if lam < 0 or t < 0:
        raise SpectralError("lam and t must be nonnegative")
    x0 = graph.origin if x0 is None else x0
    if targets is None:
        targets = [x0]
    z_bound = lam * graph.weight_bound * t
    n_terms = _series_length(z_bound, t, tol)
    tail = 0.0
    if z_bound > 0:
        # recompute the certified bound at the chosen truncation point
        term = 1.0
        for j in range(1, n_terms + 1):
            term *= z_bound / j
        if n_terms + 1 > 2.0 * z_bound:
            tail = math.exp(-t) * term * (z_bound / (n_terms + 1)) / (
                1.0 - z_bound / (n_terms + 2)
            )

    if isinstance(graph, TreeSRW):
        values, total = _tree_series(graph, lam, t, x0, targets, n_terms)
    else:
        values, total = _row_series(graph, lam, t, x0, targets, n_terms, max_support)
    return OccupancySeries(
        lam=lam, t=t, x0=x0, values=values, total=total, terms=n_terms,
        tail_bound=tail,
    )


def _row_series(graph, lam, t, x0, targets, n_terms, max_support):
    coeff = math.exp(-t)
    row = {x0: 1.0}
    acc = {y: 0.0 for y in targets}
    total = 0.0
    for n in range(n_terms + 1):
        if n > 0:
            coeff *= lam * t / n
            nxt: dict = {}
            for v, mass in row.items():
                for y, w in graph.out_neighbors(v):
                    if w > 0.0:
                        nxt[y] = nxt.get(y, 0.0) + mass * w
            row = nxt
            if len(row) > max_support:
                raise SpectralError(
                    f"series support exceeded {max_support} vertices"
                )
        if coeff == 0.0:
            continue
        for y in acc:
            m = row.get(y)
            if m is not None:
                acc[y] += coeff * m
        total += coeff * math.fsum(row.values())
    return acc, total


def _tree_series(graph: TreeSRW, lam, t, x0, targets, n_terms):
    r = graph.r
    # distance-from-x0 chain: 0 -> 1 surely; d >= 1 -> d+1 w.p. (r-1)/r,
    # d-1 w.p. 1/r.  Spheres around x0 carry uniform mass.
    p_up = (r - 1.0) / r
    p_down = 1.0 / r
    probs = np.zeros(n_terms + 2)
    probs[0] = 1.0
    coeff = math.exp(-t)
    dists = sorted({_tree_distance(x0, y) for y in targets})
    acc_by_dist = {d: 0.0 for d in dists}
    total = 0.0
    for n in range(n_terms + 1):
        if n > 0:
            coeff *= lam * t / n
            nxt = np.zeros_like(probs)
            nxt[1] += probs[0]
            nxt[2 : n + 2] += probs[1 : n + 1] * p_up
            nxt[0 : n] += probs[1 : n + 1] * p_down
            probs = nxt
        total += coeff
        for d in dists:
            if d <= n:
                acc_by_dist[d] += coeff * probs[d]
    values = {}
    for y in targets:
        d = _tree_distance(x0, y)
        values[y] = acc_by_dist[d] / _sphere_size(r, d)
    return values, total


def _tree_distance(a: tuple, b: tuple) -> int:
    common = 0
    for ca, cb in zip(a, b):
        if ca == cb:
            common += 1
        else:
            break
    return (len(a) - common) + (len(b) - common)


def _sphere_size(r: int, d: int) -> int:
    if d == 0:
        return 1
    return r * (r - 1) ** (d - 1)


# ---------------------------------------------------------------------------
# finite-ball ODE cross-check


def occupancy_ode_solve(
    ball: KernelMatrix,
    lam: float,
    t: float,
    x0=None,
    n_steps: int | None = None,
) -> np.ndarray:
    """Expected counts on a finite truncation, killed at the boundary.

    Classic RK4 on dE/dt = -E + lam * M^T E.  Agrees with the series
    on the full graph as long as mass has not reached the boundary.
    """
    x0 = ball.center if x0 is None else x0
    i0 = ball.index[x0]
    mt = sp.csr_matrix(ball.matrix.T)
    if n_steps is None:
        kbound = float(ball.row_sums().max()) if ball.n else 0.0
        n_steps = max(400, int(80.0 * t * max(1.0, lam * kbound)))
    h = t / n_steps if n_steps else 0.0
    e = np.zeros(ball.n)
    e[i0] = 1.0

    def deriv(v):
        return lam * mt.dot(v) - v

    for _ in range(n_steps):
        k1 = deriv(e)
        k2 = deriv(e + 0.5 * h * k1)
        k3 = deriv(e + 0.5 * h * k2)
        k4 = deriv(e + h * k3)
        e = e + (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
    return e


# ---------------------------------------------------------------------------
# growth classification


@dataclass
class GrowthVerdict:
    verdict: str
    ratio: float
    rate: float
    value_at_horizon: float
    value_at_double: float
    horizon: float


def growth_classifier(
    graph: WeightedGraph,
    lam: float,
    x0=None,
    horizon: float = 12.0,
    margin: float = 0.1,
    tol: float = 1e-12,
) -> GrowthVerdict:
    """Classify the long-run trend of the expected count at x0.

    Compares E at the horizon and at twice the horizon: a ratio above
    1 + margin reads as growing, below 1 - margin as decaying, anything
    between as inconclusive.  Use a horizon large enough for the
    exponential trend to dominate polynomial corrections.
    """
    x0 = graph.origin if x0 is None else x0
    e1 = expected_count(graph, lam, horizon, x0=x0, tol=tol).at(x0)
    e2 = expected_count(graph, lam, 2.0 * horizon, x0=x0, tol=tol).at(x0)
    if e1 <= 0.0:
        raise SpectralError("expected count vanished at the horizon")
    ratio = e2 / e1
    rate = math.log(ratio) / horizon if ratio > 0 else -math.inf
    if ratio >= 1.0 + margin:
        verdict = "growing"
    elif ratio <= 1.0 - margin:
        verdict = "decaying"
    else:
        verdict = "inconclusive"
    return GrowthVerdict(
        verdict=verdict,
        ratio=ratio,
        rate=rate,
        value_at_horizon=e1,
        value_at_double=e2,
        horizon=horizon,
    )
