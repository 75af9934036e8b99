"""Flat-array graph view and engine input/output containers.

Both engine backends consume the same structures.  A GraphTable is
grown lazily by the event stream of a single replica; replicas never
share tables, because site ids are assigned in discovery order and the
rate-tree layout (hence the decoding of uniform draws) depends on that
order.  A fresh table per replica keeps every replica a pure function
of (master seed, replica index).
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np


class GraphTable:
    """Sites as dense ids, neighbor rows as CSR-ish slices with CDFs."""

    def __init__(self, graph, x0):
        self.graph = graph
        self.ids: dict = {}
        self.verts: list = []
        cap = 1024
        self.k = np.zeros(cap, dtype=np.float64)
        self.site_start = np.full(cap, -1, dtype=np.int64)
        self.site_deg = np.full(cap, -1, dtype=np.int64)  # -1 = not expanded
        self.nbr = np.zeros(4096, dtype=np.int64)
        self.cdf = np.zeros(4096, dtype=np.float64)
        self.n_sites = 0
        self.nbr_len = 0
        self.x0_id = self.site_id(x0)

    @property
    def capacity(self) -> int:
        return len(self.k)

    def site_id(self, vertex) -> int:
        sid = self.ids.get(vertex)
        if sid is None:
            sid = self._register(vertex)
        return sid

    def _register(self, vertex) -> int:
        sid = self.n_sites
        if sid == len(self.k):
            self.k = np.concatenate([self.k, np.zeros_like(self.k)])
            self.site_start = np.concatenate(
                [self.site_start, np.full_like(self.site_start, -1)]
            )
            self.site_deg = np.concatenate(
                [self.site_deg, np.full_like(self.site_deg, -1)]
            )
        self.ids[vertex] = sid
        self.verts.append(vertex)
        self.k[sid] = self.graph.k(vertex)
        self.n_sites += 1
        return sid

    def expand(self, sid: int) -> None:
        """Materialize the neighbor row of a site (at most once)."""
        if self.site_deg[sid] >= 0:
            return
        pairs = [(y, w) for y, w in self.graph.out_neighbors(self.verts[sid])
                 if w > 0.0]
        deg = len(pairs)
        while self.nbr_len + deg > len(self.nbr):
            self.nbr = np.concatenate([self.nbr, np.zeros_like(self.nbr)])
            self.cdf = np.concatenate([self.cdf, np.zeros_like(self.cdf)])
        kx = float(self.k[sid])
        acc = 0.0
        base = self.nbr_len
        for i, (y, w) in enumerate(pairs):
            tid = self.site_id(y)  # may grow the site arrays
            self.nbr[base + i] = tid
            acc += w
            self.cdf[base + i] = acc / kx
        if deg:
            self.cdf[base + deg - 1] = 1.0  # absorb float round-off
        self.site_start[sid] = base
        self.site_deg[sid] = deg
        self.nbr_len += deg


@dataclass
class EngineInputs:
    """Everything one replica run needs, backend-agnostic.

    Process variants share one event stream; each applies an event
    only by its own state (slot index below its own count, its own
    caps).  Index 0 of driver_chain is the process whose counts define
    the event rate; it must dominate every other variant (weaker
    suppression rules and maximal rate).
    """

    table: GraphTable
    seed: int                      # already replica-mixed
    lam_max: float
    lam_ratio: np.ndarray          # f8[P], lam_p / lam_max, in (0, 1]
    m_cap: np.ndarray              # i8[P], -1 = unbounded
    gen_sup: np.ndarray            # i8[P], suppress births of parents with
                                   # bucket >= this; -1 = never
    birth_cap: np.ndarray          # i8[P], -1 = unbounded
    buckets: int                   # generation buckets; 1 = untracked
    driver_chain: np.ndarray       # i8[C] process ids, successive fallbacks
    horizon: float
    ceiling: int
    cp_times: np.ndarray           # f8[ncp], increasing, in (0, horizon]
    init_sites: np.ndarray         # i8[·]
    init_counts: np.ndarray        # i8[·]
    dom_pairs_lo: np.ndarray       # i8[·] check counts[lo] <= counts[hi]
    dom_pairs_hi: np.ndarray
    eq_pairs_a: np.ndarray         # i8[·] flag when decisions diverge
    eq_pairs_b: np.ndarray
    want_final_counts: bool = False
    log_lines: list | None = None  # python backend only


@dataclass
class EngineOutputs:
    births: np.ndarray             # i8[P]
    extinction_time: np.ndarray    # f8[P], nan = never went extinct
    ceiling_hit: np.ndarray        # u1[P]
    weak: np.ndarray               # u1[P]
    local: np.ndarray              # u1[P]
    cp_pop: np.ndarray             # i8[P, ncp]
    cp_x0: np.ndarray              # i8[P, ncp]
    dom_ok: np.ndarray             # u1[npairs]
    eq_ok: np.ndarray              # u1[npairs]
    births_by_bucket: np.ndarray   # i8[P, B]
    n_events: int
    n_sites: int
    final_counts: np.ndarray | None = None  # i8[P, n_sites] when requested
    final_vertices: list = field(default_factory=list)
