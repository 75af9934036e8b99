"""Weighted graphs underlying the walks.

A graph here is a countable vertex set with nonnegative edge weights
mu(x, y), finitely many per vertex, with k(x) = sum_y mu(x, y) bounded
by a global constant.  Built-in families (integer lattices, regular
trees, drifting walks on Z, graph products) carry exact rational
weights; explicit graphs carry whatever floats they were given.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Callable, Iterable

import numpy as np
import scipy.sparse as sp
from scipy.sparse.csgraph import connected_components


def _as_fraction(v) -> Fraction:
    if isinstance(v, Fraction):
        return v
    if isinstance(v, int):
        return Fraction(v)
    if isinstance(v, str):
        return Fraction(v)
    if isinstance(v, float):
        return Fraction(v)  # exact binary value
    raise TypeError(f"cannot interpret weight {v!r}")


class GraphError(ValueError):
    pass


class WeightedGraph:
    """Base class; subclasses define the adjacency structure."""

    oriented: bool = False
    stochastic: bool = False
    degree_bound: int = 0
    weight_bound: float = 0.0

    @property
    def origin(self):
        raise NotImplementedError

    def out_neighbors_exact(self, x) -> list[tuple[object, Fraction]]:
        raise NotImplementedError

    def out_neighbors(self, x) -> list[tuple[object, float]]:
        return [(y, float(w)) for y, w in self.out_neighbors_exact(x)]

    def in_neighbors_exact(self, x) -> list[tuple[object, Fraction]]:
        if self.oriented:
            raise NotImplementedError
        return self.out_neighbors_exact(x)

    def in_neighbors(self, x) -> list[tuple[object, float]]:
        return [(y, float(w)) for y, w in self.in_neighbors_exact(x)]

    def k(self, x) -> float:
        return float(self.k_exact(x))

    def k_exact(self, x) -> Fraction:
        return sum((w for _, w in self.out_neighbors_exact(x)), Fraction(0))

    def weight(self, x, y) -> float:
        for z, w in self.out_neighbors(x):
            if z == y:
                return w
        return 0.0

    def vertex_to_text(self, x) -> str:
        raise NotImplementedError

    def vertex_from_text(self, text: str):
        raise NotImplementedError

    def descriptor(self) -> dict:
        raise NotImplementedError

    def __repr__(self):
        return f"<{type(self).__name__} {self.descriptor()}>"


# ---------------------------------------------------------------------------
# translation-invariant kernels on Z^d


class ZdStepKernel(WeightedGraph):
    """Walk on Z^d defined by a finite step distribution.

    steps: dict mapping step vectors (d-tuples of ints) to weights.
    Vertices are d-tuples of ints; text form "(a,b,...)".
    """

    def __init__(self, d: int, steps: dict):
        if d < 1:
            raise GraphError("dimension must be >= 1")
        self.d = d
        norm = {}
        for s, w in steps.items():
            s = tuple(int(c) for c in s)
            if len(s) != d:
                raise GraphError(f"step {s} has wrong dimension")
            w = _as_fraction(w)
            if w < 0:
                raise GraphError(f"negative weight for step {s}")
            if w > 0:
                norm[s] = norm.get(s, Fraction(0)) + w
        if not norm:
            raise GraphError("step distribution has empty support")
        self.steps = dict(sorted(norm.items()))
        total = sum(self.steps.values())
        self.degree_bound = len(self.steps)
        self.weight_bound = float(total)
        self.stochastic = total == 1
        self.oriented = any(
            self.steps.get(tuple(-c for c in s)) != w for s, w in self.steps.items()
        )

    @property
    def origin(self):
        return (0,) * self.d

    def out_neighbors_exact(self, x):
        return [
            (tuple(a + b for a, b in zip(x, s)), w) for s, w in self.steps.items()
        ]

    def in_neighbors_exact(self, x):
        return [
            (tuple(a - b for a, b in zip(x, s)), w) for s, w in self.steps.items()
        ]

    def k_exact(self, x):
        return sum(self.steps.values())

    def vertex_to_text(self, x):
        return "(" + ",".join(str(c) for c in x) + ")"

    def vertex_from_text(self, text):
        body = text.strip()
        if not (body.startswith("(") and body.endswith(")")):
            raise GraphError(f"bad lattice vertex {text!r}")
        parts = [p for p in body[1:-1].split(",") if p.strip() != ""]
        x = tuple(int(p) for p in parts)
        if len(x) != self.d:
            raise GraphError(f"vertex {text!r} has wrong dimension")
        return x

    def descriptor(self):
        return {
            "family": "zd",
            "d": self.d,
            "steps": {self.vertex_to_text(s): str(w) for s, w in self.steps.items()},
        }


def simple_random_walk(d: int) -> ZdStepKernel:
    """Nearest-neighbor walk on Z^d, weight 1/(2d) per direction."""
    w = Fraction(1, 2 * d)
    steps = {}
    for axis in range(d):
        for sign in (1, -1):
            s = [0] * d
            s[axis] = sign
            steps[tuple(s)] = w
    return ZdStepKernel(d, steps)


def drift_walk(p, q) -> ZdStepKernel:
    """Walk on Z stepping +1 w.p. p, -1 w.p. q, holding otherwise."""
    p = _as_fraction(p)
    q = _as_fraction(q)
    if p < 0 or q < 0:
        raise GraphError("step probabilities must be nonnegative")
    if p + q > 1:
        raise GraphError("p + q exceeds 1")
    steps = {}
    if p > 0:
        steps[(1,)] = p
    if q > 0:
        steps[(-1,)] = q
    hold = 1 - p - q
    if hold > 0:
        steps[(0,)] = hold
    return ZdStepKernel(1, steps)


# ---------------------------------------------------------------------------
# homogeneous trees


class TreeSRW(WeightedGraph):
    """Simple random walk on the degree-r homogeneous tree.

    Vertices are words: () is the root; the root has children
    (1,)..(r,); every other vertex has r-1 children extending its word
    and its parent as the remaining neighbor.  Every edge weight is 1/r.
    Text form "/1/3/2"; the root is "/".
    """

    def __init__(self, r: int):
        if r < 3:
            raise GraphError("tree degree must be >= 3")
        self.r = r
        self._w = Fraction(1, r)
        self.degree_bound = r
        self.weight_bound = 1.0
        self.stochastic = True
        self.oriented = False

    @property
    def origin(self):
        return ()

    def out_neighbors_exact(self, x):
        out = []
        if x:
            out.append((x[:-1], self._w))
            children = self.r - 1
        else:
            children = self.r
        for i in range(1, children + 1):
            out.append((x + (i,), self._w))
        return out

    def k_exact(self, x):
        return Fraction(1)

    def vertex_to_text(self, x):
        if not x:
            return "/"
        return "/" + "/".join(str(c) for c in x)

    def vertex_from_text(self, text):
        t = text.strip()
        if t == "/":
            return ()
        if not t.startswith("/"):
            raise GraphError(f"bad tree vertex {text!r}")
        word = tuple(int(p) for p in t.split("/")[1:])
        for depth, c in enumerate(word):
            if not (1 <= c <= (self.r if depth == 0 else self.r - 1)):
                raise GraphError(f"tree vertex {text!r} out of range")
        return word

    def ball_size(self, radius: int) -> int:
        if radius == 0:
            return 1
        size = 1
        shell = self.r
        for _ in range(radius):
            size += shell
            shell *= self.r - 1
        return size

    def radial_ball_matrix(self, radius: int) -> np.ndarray:
        """Collapsed kernel of the radius-n ball around the root.

        The leading eigenvector of the ball is constant on spheres
        (every root-fixing automorphism permutes a sphere), so the
        (radius+1)-point radial matrix below has the same leading
        eigenvalue as the full ball.
        """
        n = radius
        m = np.zeros((n + 1, n + 1))
        if n == 0:
            return m
        m[0, 1] = 1.0
        for i in range(1, n):
            m[i, i - 1] = 1.0 / self.r
            m[i, i + 1] = (self.r - 1.0) / self.r
        m[n, n - 1] = 1.0 / self.r
        return m

    def descriptor(self):
        return {"family": "tree", "r": self.r}


# ---------------------------------------------------------------------------
# explicit finite graphs


class ExplicitGraph(WeightedGraph):
    """Finite graph given by an edge-weight table; vertices are strings."""

    def __init__(self, edges: dict):
        adj: dict[str, dict[str, Fraction]] = {}
        radj: dict[str, dict[str, Fraction]] = {}
        verts = set()
        for (x, y), w in edges.items():
            w = _as_fraction(w)
            if w < 0:
                raise GraphError(f"negative weight on edge {x}->{y}")
            verts.add(x)
            verts.add(y)
            if w > 0:
                adj.setdefault(x, {})[y] = adj.get(x, {}).get(y, Fraction(0)) + w
                radj.setdefault(y, {})[x] = radj.get(y, {}).get(x, Fraction(0)) + w
        if not verts:
            raise GraphError("graph has no vertices")
        self._adj = {v: dict(sorted(adj.get(v, {}).items())) for v in verts}
        self._radj = {v: dict(sorted(radj.get(v, {}).items())) for v in verts}
        self.vertices = sorted(verts)
        self.degree_bound = max((len(a) for a in self._adj.values()), default=0)
        ks = [sum(a.values(), Fraction(0)) for a in self._adj.values()]
        self.weight_bound = float(max(ks)) if ks else 0.0
        self.stochastic = all(k == 1 for k in ks)
        self.oriented = any(
            self._adj.get(y, {}).get(x) != w
            for x, a in self._adj.items()
            for y, w in a.items()
        )

    @property
    def origin(self):
        return self.vertices[0]

    def out_neighbors_exact(self, x):
        return list(self._adj[x].items())

    def in_neighbors_exact(self, x):
        return list(self._radj[x].items())

    def vertex_to_text(self, x):
        return x

    def vertex_from_text(self, text):
        t = text.strip()
        if t not in self._adj:
            raise GraphError(f"unknown vertex {text!r}")
        return t

    def descriptor(self):
        return {
            "family": "explicit",
            "edges": {
                f"{x}>{y}": str(w)
                for x, a in sorted(self._adj.items())
                for y, w in a.items()
            },
        }


def loop_graph() -> ExplicitGraph:
    """One vertex with a unit self-loop: pure birth-death dynamics."""
    return ExplicitGraph({("o", "o"): 1})


# ---------------------------------------------------------------------------
# products


class CrossProduct(WeightedGraph):
    """Tensor product: step both coordinates, weights multiply."""

    def __init__(self, left: WeightedGraph, right: WeightedGraph):
        self.left = left
        self.right = right
        self.degree_bound = left.degree_bound * right.degree_bound
        self.weight_bound = left.weight_bound * right.weight_bound
        self.stochastic = left.stochastic and right.stochastic
        self.oriented = left.oriented or right.oriented

    @property
    def origin(self):
        return (self.left.origin, self.right.origin)

    def out_neighbors_exact(self, x):
        xl, xr = x
        out = []
        for yl, wl in self.left.out_neighbors_exact(xl):
            for yr, wr in self.right.out_neighbors_exact(xr):
                out.append(((yl, yr), wl * wr))
        return out

    def in_neighbors_exact(self, x):
        xl, xr = x
        out = []
        for yl, wl in self.left.in_neighbors_exact(xl):
            for yr, wr in self.right.in_neighbors_exact(xr):
                out.append(((yl, yr), wl * wr))
        return out

    def k_exact(self, x):
        return self.left.k_exact(x[0]) * self.right.k_exact(x[1])

    def vertex_to_text(self, x):
        return f"[{self.left.vertex_to_text(x[0])}|{self.right.vertex_to_text(x[1])}]"

    def vertex_from_text(self, text):
        l, r = _split_product_text(text)
        return (self.left.vertex_from_text(l), self.right.vertex_from_text(r))

    def descriptor(self):
        return {
            "family": "cross",
            "left": self.left.descriptor(),
            "right": self.right.descriptor(),
        }


class BoxProduct(WeightedGraph):
    """Cartesian product: step one coordinate, keep the other."""

    def __init__(self, left: WeightedGraph, right: WeightedGraph):
        self.left = left
        self.right = right
        self.degree_bound = left.degree_bound + right.degree_bound
        self.weight_bound = left.weight_bound + right.weight_bound
        self.stochastic = False
        self.oriented = left.oriented or right.oriented

    @property
    def origin(self):
        return (self.left.origin, self.right.origin)

    def _merge(self, pairs):
        acc = {}
        for y, w in pairs:
            acc[y] = acc.get(y, Fraction(0)) + w
        return list(acc.items())

    def out_neighbors_exact(self, x):
        xl, xr = x
        pairs = [((yl, xr), w) for yl, w in self.left.out_neighbors_exact(xl)]
        pairs += [((xl, yr), w) for yr, w in self.right.out_neighbors_exact(xr)]
        return self._merge(pairs)

    def in_neighbors_exact(self, x):
        xl, xr = x
        pairs = [((yl, xr), w) for yl, w in self.left.in_neighbors_exact(xl)]
        pairs += [((xl, yr), w) for yr, w in self.right.in_neighbors_exact(xr)]
        return self._merge(pairs)

    def k_exact(self, x):
        return self.left.k_exact(x[0]) + self.right.k_exact(x[1])

    def vertex_to_text(self, x):
        return f"[{self.left.vertex_to_text(x[0])}|{self.right.vertex_to_text(x[1])}]"

    def vertex_from_text(self, text):
        l, r = _split_product_text(text)
        return (self.left.vertex_from_text(l), self.right.vertex_from_text(r))

    def descriptor(self):
        return {
            "family": "box",
            "left": self.left.descriptor(),
            "right": self.right.descriptor(),
        }


def _split_product_text(text: str) -> tuple[str, str]:
    t = text.strip()
    if not (t.startswith("[") and t.endswith("]")):
        raise GraphError(f"bad product vertex {text!r}")
    depth = 0
    for i, c in enumerate(t):
        if c == "[":
            depth += 1
        elif c == "]":
            depth -= 1
        elif c == "|" and depth == 1:
            return t[1:i], t[i + 1 : -1]
    raise GraphError(f"bad product vertex {text!r}")


# ---------------------------------------------------------------------------
# edge restriction (used by percolation)


class RestrictedGraph(WeightedGraph):
    """A non-oriented graph with all but a set of edges deleted.

    open_edges holds canonical vertex pairs (ordered by text form);
    both directions of each open edge keep their original weight.
    Self-loops use the pair (x, x).
    """

    def __init__(self, parent: WeightedGraph, open_edges: Iterable[tuple]):
        if parent.oriented:
            raise GraphError("edge restriction requires a non-oriented graph")
        self.parent = parent
        canon = set()
        for x, y in open_edges:
            if parent.weight(x, y) == 0.0:
                raise GraphError(
                    f"edge {parent.vertex_to_text(x)}-{parent.vertex_to_text(y)}"
                    " not in parent graph"
                )
            canon.add(self._canon(x, y))
        self.open_edges = frozenset(canon)
        self.degree_bound = parent.degree_bound
        self.weight_bound = parent.weight_bound
        self.stochastic = False
        self.oriented = False

    def _canon(self, x, y):
        tx, ty = self.parent.vertex_to_text(x), self.parent.vertex_to_text(y)
        return (x, y) if tx <= ty else (y, x)

    @property
    def origin(self):
        return self.parent.origin

    def out_neighbors_exact(self, x):
        return [
            (y, w)
            for y, w in self.parent.out_neighbors_exact(x)
            if self._canon(x, y) in self.open_edges
        ]

    def vertex_to_text(self, x):
        return self.parent.vertex_to_text(x)

    def vertex_from_text(self, text):
        return self.parent.vertex_from_text(text)

    def descriptor(self):
        return {
            "family": "restricted",
            "parent": self.parent.descriptor(),
            "open_edges": len(self.open_edges),
        }


def finite_box(d: int, side: int) -> ExplicitGraph:
    """Box {0..side-1}^d with the Z^d walk weights 1/(2d) kept as-is.

    Boundary vertices simply lose the outgoing mass of deleted
    neighbors, matching a ball truncation of the full lattice.
    """
    if side < 1:
        raise GraphError("side must be >= 1")
    w = Fraction(1, 2 * d)
    edges = {}
    for x in itertools.product(range(side), repeat=d):
        for axis in range(d):
            for sign in (1, -1):
                y = list(x)
                y[axis] += sign
                if 0 <= y[axis] < side:
                    edges[(_box_text(x), _box_text(tuple(y)))] = w
    return ExplicitGraph(edges)


def _box_text(x: tuple) -> str:
    return "(" + ",".join(str(c) for c in x) + ")"


# ---------------------------------------------------------------------------
# family construction from descriptors


def make_family(spec) -> WeightedGraph:
    """Build a graph from a descriptor dict or a compact text spec.

    Text examples:
        "zd-srw d=2"             "tree r=3"
        "drift p=0.7 q=0.1"      "loop"
        "zd d=1 steps=(1):0.5;(-1):0.5"
        "explicit edges=a>b:0.5;b>a:0.5"
        "cross(zd-srw d=1, zd-srw d=1)"
        "box(tree r=3, zd-srw d=1)"
    """
    if isinstance(spec, str):
        return _parse_family_text(spec)
    if isinstance(spec, dict):
        return _family_from_dict(spec)
    raise GraphError(f"cannot build a graph from {spec!r}")


def _family_from_dict(d: dict) -> WeightedGraph:
    kind = d.get("family")
    if kind == "zd-srw":
        return simple_random_walk(int(d["d"]))
    if kind == "zd":
        steps = {}
        for key, w in d["steps"].items():
            vec = tuple(int(p) for p in key.strip("()").split(",") if p.strip())
            steps[vec] = _as_fraction(w)
        return ZdStepKernel(int(d["d"]), steps)
    if kind == "tree":
        return TreeSRW(int(d["r"]))
    if kind == "drift":
        return drift_walk(d["p"], d["q"])
    if kind == "loop":
        return loop_graph()
    if kind == "explicit":
        edges = {}
        for key, w in d["edges"].items():
            x, y = key.split(">")
            edges[(x, y)] = _as_fraction(w)
        return ExplicitGraph(edges)
    if kind == "cross":
        return CrossProduct(_family_from_dict(d["left"]), _family_from_dict(d["right"]))
    if kind == "box":
        return BoxProduct(_family_from_dict(d["left"]), _family_from_dict(d["right"]))
    raise GraphError(f"unknown family {kind!r}")


def _parse_family_text(text: str) -> WeightedGraph:
    t = text.strip()
    for prod, cls in (("cross", CrossProduct), ("box", BoxProduct)):
        if t.startswith(prod + "(") and t.endswith(")"):
            inner = t[len(prod) + 1 : -1]
            depth = 0
            for i, c in enumerate(inner):
                if c == "(":
                    depth += 1
                elif c == ")":
                    depth -= 1
                elif c == "," and depth == 0:
                    return cls(
                        _parse_family_text(inner[:i]),
                        _parse_family_text(inner[i + 1 :]),
                    )
            raise GraphError(f"bad product spec {text!r}")
    tokens = t.split()
    if not tokens:
        raise GraphError("empty graph spec")
    kind, kv = tokens[0], {}
    for tok in tokens[1:]:
        if "=" not in tok:
            raise GraphError(f"bad token {tok!r} in graph spec")
        key, val = tok.split("=", 1)
        kv[key] = val
    if kind == "zd-srw":
        return simple_random_walk(int(kv["d"]))
    if kind == "tree":
        return TreeSRW(int(kv["r"]))
    if kind == "drift":
        return drift_walk(kv["p"], kv["q"])
    if kind == "loop":
        return loop_graph()
    if kind == "zd":
        steps = {}
        for part in kv["steps"].split(";"):
            vec_text, w = part.rsplit(":", 1)
            vec = tuple(int(p) for p in vec_text.strip("()").split(",") if p.strip())
            steps[vec] = Fraction(w)
        return ZdStepKernel(int(kv["d"]), steps)
    if kind == "explicit":
        edges = {}
        for part in kv["edges"].split(";"):
            arc, w = part.rsplit(":", 1)
            x, y = arc.split(">")
            edges[(x, y)] = Fraction(w)
        return ExplicitGraph(edges)
    raise GraphError(f"unknown family {kind!r}")


# ---------------------------------------------------------------------------
# ball truncations


@dataclass
class KernelMatrix:
    """A finite chunk of a graph kernel with frozen vertex order."""

    vertices: list
    matrix: sp.csr_matrix
    graph: WeightedGraph | None = None
    center: object = None
    radius: int | None = None
    index: dict = field(default_factory=dict)

    def __post_init__(self):
        if not self.index:
            self.index = {v: i for i, v in enumerate(self.vertices)}

    @property
    def n(self) -> int:
        return len(self.vertices)

    def dense(self) -> np.ndarray:
        return self.matrix.toarray()

    def row_sums(self) -> np.ndarray:
        return np.asarray(self.matrix.sum(axis=1)).ravel()

    def strongly_connected(self) -> bool:
        if self.n == 0:
            return False
        ncomp, _ = connected_components(
            self.matrix, directed=True, connection="strong"
        )
        return ncomp == 1

    def submatrix(self, vertices: list) -> "KernelMatrix":
        idx = [self.index[v] for v in vertices]
        sub = self.matrix[np.ix_(idx, idx)] if len(idx) else self.matrix[:0, :0]
        return KernelMatrix(
            vertices=list(vertices),
            matrix=sp.csr_matrix(sub),
            graph=self.graph,
            center=self.center,
            radius=self.radius,
        )


def ball_truncation(
    graph: WeightedGraph, center, radius: int, max_vertices: int = 200_000
) -> KernelMatrix:
    """Kernel restricted to the radius-n ball around a center.

    A vertex belongs to the ball when the center reaches it within n
    directed steps and it reaches the center within n directed steps
    (the two conditions coincide on non-oriented graphs).  Entries are
    copied unchanged from the parent kernel; no renormalization.
    """
    if radius < 0:
        raise GraphError("radius must be >= 0")
    dist_out = _bfs_distances(graph, center, radius, graph.out_neighbors_exact,
                              max_vertices)
    if graph.oriented:
        dist_in = _bfs_distances(graph, center, radius, graph.in_neighbors_exact,
                                 max_vertices)
        keep = {v for v in dist_out if v in dist_in}
    else:
        keep = set(dist_out)
    vertices = sorted(keep, key=lambda v: (dist_out[v], graph.vertex_to_text(v)))
    index = {v: i for i, v in enumerate(vertices)}
    rows, cols, vals = [], [], []
    for v in vertices:
        i = index[v]
        for y, w in graph.out_neighbors(v):
            j = index.get(y)
            if j is not None and w > 0.0:
                rows.append(i)
                cols.append(j)
                vals.append(w)
    mat = sp.csr_matrix(
        (vals, (rows, cols)), shape=(len(vertices), len(vertices)), dtype=np.float64
    )
    return KernelMatrix(
        vertices=vertices, matrix=mat, graph=graph, center=center, radius=radius,
        index=index,
    )


def _bfs_distances(graph, center, radius, neighbor_fn, max_vertices):
    dist = {center: 0}
    frontier = [center]
    for depth in range(1, radius + 1):
        nxt = []
        for x in frontier:
            for y, w in neighbor_fn(x):
                if w > 0 and y not in dist:
                    dist[y] = depth
                    nxt.append(y)
                    if len(dist) > max_vertices:
                        raise GraphError(
                            f"ball exceeds {max_vertices} vertices; "
                            "use a smaller radius or a reduced representation"
                        )
        frontier = nxt
    return dist


def restrict_to_edges(graph: WeightedGraph, open_edges) -> RestrictedGraph:
    return RestrictedGraph(graph, open_edges)


# ---------------------------------------------------------------------------
# exact kernel powers and local isomorphisms


def exact_power_row(graph: WeightedGraph, x, n: int) -> dict:
    """Row of the n-step kernel power from x, as exact fractions."""
    row = {x: Fraction(1)}
    for _ in range(n):
        nxt: dict = {}
        for v, mass in row.items():
            for y, w in graph.out_neighbors_exact(v):
                if w > 0:
                    nxt[y] = nxt.get(y, Fraction(0)) + mass * w
        row = nxt
    return row


@dataclass
class LocalIsomorphism:
    """A projection f with sum_{z: f(z)=i} mu(x, z) = nu(f(x), i).

    The defining identity propagates to all kernel powers; verify_power
    checks it exactly with rational arithmetic.
    """

    source: WeightedGraph
    target: WeightedGraph
    map_vertex: Callable
    description: str = ""

    def verify_power(self, x, n: int) -> bool:
        row = exact_power_row(self.source, x, n)
        projected: dict = {}
        for z, mass in row.items():
            i = self.map_vertex(z)
            projected[i] = projected.get(i, Fraction(0)) + mass
        target_row = exact_power_row(self.target, self.map_vertex(x), n)
        keys = set(projected) | set(target_row)
        return all(
            projected.get(k, Fraction(0)) == target_row.get(k, Fraction(0))
            for k in keys
        )


def horocycle_map(tree: TreeSRW) -> LocalIsomorphism:
    """Project the tree walk onto integer horocycle heights.

    Heights follow the end reached by always taking child 1; the root
    sits at height 0, stepping away from that end raises the height.
    The projected walk gains +1 w.p. 1-1/r and -1 w.p. 1/r.
    """
    r = tree.r
    target = drift_walk(Fraction(r - 1, r), Fraction(1, r))

    def height(word):
        lead = 0
        for c in word:
            if c == 1:
                lead += 1
            else:
                break
        return (len(word) - 2 * lead,)

    return LocalIsomorphism(
        source=tree,
        target=target,
        map_vertex=height,
        description=f"horocycle height on the degree-{r} tree",
    )


def coordinate_projection(kernel: ZdStepKernel, axis: int) -> LocalIsomorphism:
    """Project a Z^d kernel onto one coordinate axis (0-based).

    Only supported when every step moves the chosen coordinate by at
    most one, so the marginal is again a nearest-neighbor walk.
    """
    if not (0 <= axis < kernel.d):
        raise GraphError(f"axis {axis} out of range for d={kernel.d}")
    p = Fraction(0)
    q = Fraction(0)
    hold = Fraction(0)
    for s, w in kernel.steps.items():
        c = s[axis]
        if c == 1:
            p += w
        elif c == -1:
            q += w
        elif c == 0:
            hold += w
        else:
            raise GraphError(
                f"step {s} moves axis {axis} by {c}; projection undefined"
            )
    total = p + q + hold
    if total != 1:
        raise GraphError("coordinate projection requires a stochastic kernel")
    target = drift_walk(p, q)
    return LocalIsomorphism(
        source=kernel,
        target=target,
        map_vertex=lambda x: (x[axis],),
        description=f"axis-{axis} marginal of a Z^{kernel.d} kernel",
    )
