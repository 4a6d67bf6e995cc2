"""Finite graphs, balls with coherent enumerations, and the graph families
used in the experiments (half-lines, trees, glued trees, the girth-gluing
counterexample, cages, random regular graphs).

Truncations of infinite graphs remember where they were cut: builders set
``Graph.boundary`` to the vertices whose infinite-graph neighbourhood is
incomplete.  Spectral certification refuses balls that reach it.
"""
from __future__ import annotations

import json
import os
import random
from collections import deque
from dataclasses import dataclass, field
from functools import cached_property
from importlib import resources
from pathlib import Path

ACYCLIC = "acyclic"

_CAGE_NAMES = ("k4", "petersen", "heawood", "mcgee", "tutte_coxeter")

# leaf evaluations allowed in the per-layer tie-break search
_SEARCH_BUDGET = 4096


@dataclass(frozen=True)
class Graph:
    """Simple undirected graph on vertices ``0..n-1``.

    Parameters
    ----------
    n : int
        Number of vertices.
    edges : iterable of pairs
        Undirected edges; normalised to sorted ``(u, v)`` with ``u < v``.
    boundary : iterable of int, optional
        Truncation boundary (vertices with missing infinite-graph neighbours).
    """

    n: int
    edges: tuple = ()
    boundary: frozenset = field(default_factory=frozenset)

    def __post_init__(self):
        if self.n < 0:
            raise ValueError("vertex count must be non-negative")
        norm = set()
        for u, v in self.edges:
            u, v = int(u), int(v)
            if u == v:
                raise ValueError(f"self-loop at {u}")
            if not (0 <= u < self.n and 0 <= v < self.n):
                raise ValueError(f"edge ({u}, {v}) out of range")
            e = (u, v) if u < v else (v, u)
            if e in norm:
                raise ValueError(f"duplicate edge {e}")
            norm.add(e)
        object.__setattr__(self, "edges", tuple(sorted(norm)))
        object.__setattr__(self, "boundary", frozenset(int(b) for b in self.boundary))

    @cached_property
    def adjacency(self) -> tuple:
        adj = [[] for _ in range(self.n)]
        for u, v in self.edges:
            adj[u].append(v)
            adj[v].append(u)
        return tuple(tuple(sorted(a)) for a in adj)

    @cached_property
    def edge_set(self) -> frozenset:
        return frozenset(self.edges)

    def degree(self, v: int) -> int:
        return len(self.adjacency[v])

    def degrees(self) -> list:
        return [len(a) for a in self.adjacency]

    def has_edge(self, u: int, v: int) -> bool:
        return ((u, v) if u < v else (v, u)) in self.edge_set

    def connected(self) -> bool:
        if self.n == 0:
            return True
        return len(bfs_distances(self, 0)) == self.n

    def to_json(self) -> dict:
        out = {"n": self.n, "edges": [list(e) for e in self.edges]}
        if self.boundary:
            out["boundary"] = sorted(self.boundary)
        return out

    @classmethod
    def from_json(cls, data: dict) -> "Graph":
        return cls(int(data["n"]), tuple(tuple(e) for e in data["edges"]),
                   frozenset(data.get("boundary", ())))


@dataclass(frozen=True)
class RootedBall:
    """Ball ``B_r(center)`` with a coherent canonical enumeration.

    ``vertices[i]`` is the graph vertex at position ``i``; ``layer[i]`` its
    distance from the center; ``induced_edges`` are position pairs.
    """

    center: int
    radius: int
    vertices: tuple
    induced_edges: tuple
    layer: tuple

    @property
    def size(self) -> int:
        return len(self.vertices)

    def prefix_size(self, r: int) -> int:
        """Number of positions within distance ``r`` of the center."""
        return sum(1 for ell in self.layer if ell <= r)

    @cached_property
    def code(self) -> tuple:
        return (self.layer, self.induced_edges)

    def position(self) -> dict:
        return {v: i for i, v in enumerate(self.vertices)}

    def as_graph(self) -> Graph:
        """The induced ball as an abstract graph labelled by position."""
        return Graph(self.size, self.induced_edges)


@dataclass(frozen=True)
class PathToInfinity:
    """Finite prefix ``v_0, v_1, ...`` of a path to infinity.

    Consecutive vertices are adjacent and ``dist(v_j, v_0)`` is strictly
    increasing, which forces ``dist(v_j, v_0) = j``.
    """

    graph: Graph
    vertices: tuple

    def __post_init__(self):
        verts = tuple(int(v) for v in self.vertices)
        object.__setattr__(self, "vertices", verts)
        if not verts:
            raise ValueError("empty path")
        for v in verts:
            if not 0 <= v < self.graph.n:
                raise ValueError(f"vertex {v} out of range")
        dist = bfs_distances(self.graph, verts[0])
        for j in range(1, len(verts)):
            if not self.graph.has_edge(verts[j - 1], verts[j]):
                raise ValueError(f"path vertices {verts[j - 1]} and {verts[j]} are not adjacent")
            if dist.get(verts[j], -1) <= dist[verts[j - 1]]:
                raise ValueError(f"distance from v_0 not strictly increasing at index {j}")

    def __len__(self):
        return len(self.vertices)

    def __getitem__(self, i):
        return self.vertices[i]


@dataclass(frozen=True)
class GluingSpec:
    """Parameters for the counterexample graph.

    ``blocks`` holds ``(G, u1, u2)`` triples; block ``i`` replaces the
    half-line edge ``(anchors[i], anchors[i] + 1)``.
    """

    degree: int
    blocks: tuple
    anchors: tuple
    halfline_length: int

    def __post_init__(self):
        d = self.degree
        if d < 3:
            raise ValueError("degree must be at least 3")
        if len(self.blocks) != len(self.anchors):
            raise ValueError("one anchor per block required")
        for i, (g, u1, u2) in enumerate(self.blocks):
            if any(deg != d for deg in g.degrees()):
                raise ValueError(f"block {i} is not {d}-regular")
            if not g.connected():
                raise ValueError(f"block {i} is not connected")
            if u1 == u2 or not (0 <= u1 < g.n and 0 <= u2 < g.n):
                raise ValueError(f"block {i}: marked vertices must be distinct and in range")
        ks = list(self.anchors)
        for i in range(1, len(ks)):
            if ks[i] - ks[i - 1] < 2:
                raise ValueError("overlapping anchor intervals")
            if i >= 2 and ks[i] - ks[i - 1] < ks[i - 1] - ks[i - 2]:
                raise ValueError("anchor gaps must be non-decreasing")
        if ks and (ks[0] < 0 or ks[-1] + 1 >= self.halfline_length):
            raise ValueError("anchors must lie inside the half-line")


# ---------------------------------------------------------------- metrics


def bfs_distances(g: Graph, source: int, limit: int | None = None) -> dict:
    """Hop distances from ``source``; unreachable vertices are absent."""
    if not 0 <= source < g.n:
        raise ValueError(f"source {source} out of range")
    adj = g.adjacency
    dist = {source: 0}
    queue = deque([source])
    while queue:
        u = queue.popleft()
        du = dist[u]
        if limit is not None and du >= limit:
            continue
        for w in adj[u]:
            if w not in dist:
                dist[w] = du + 1
                queue.append(w)
    return dist


def girth(g: Graph):
    """Length of a shortest cycle, or ``"acyclic"`` for forests."""
    best = None
    adj = g.adjacency
    for s in range(g.n):
        dist = {s: 0}
        parent = {s: -1}
        queue = deque([s])
        while queue:
            u = queue.popleft()
            if best is not None and 2 * dist[u] + 1 >= best:
                break
            for w in adj[u]:
                if w not in dist:
                    dist[w] = dist[u] + 1
                    parent[w] = u
                    queue.append(w)
                elif parent[u] != w:
                    cyc = dist[u] + dist[w] + 1
                    if best is None or cyc < best:
                        best = cyc
    return ACYCLIC if best is None else best


def diameter_pair(g: Graph) -> tuple:
    """Lexicographically smallest ``(u, v, dist)`` realising the diameter."""
    if g.n == 0 or not g.connected():
        raise ValueError("diameter_pair needs a connected, non-empty graph")
    best = (0, 0, 0)
    for u in range(g.n):
        dist = bfs_distances(g, u)
        for v in range(u + 1, g.n):
            if dist[v] > best[2]:
                best = (u, v, dist[v])
    return best


# ------------------------------------------------------- canonical enumeration


def _rank(signatures: dict) -> dict:
    order = {s: i for i, s in enumerate(sorted(set(signatures.values())))}
    return {u: order[s] for u, s in signatures.items()}


def _refine(layer_vs, nbrs, colors):
    """Colour refinement on one layer; neighbours outside it are fixed."""
    colors = dict(colors)
    ncells = len(set(colors.values()))
    while True:
        sig = {u: (colors[u], tuple(sorted(colors[w] for w in nbrs[u]))) for u in layer_vs}
        colors = _rank(sig)
        m = len(set(colors.values()))
        if m == ncells:
            return colors
        ncells = m


def _order_layer(layer_vs, parents, same_layer, budget):
    """Order one BFS layer canonically.

    ``parents[u]`` are positions of ``u``'s neighbours in earlier layers and
    ``same_layer[u]`` its neighbours within the layer.  Ties surviving
    refinement are broken by individualisation with a search minimising the
    layer certificate; twins never branch.
    """
    init = _rank({u: (parents[u],) for u in layer_vs})
    colors = _refine(layer_vs, same_layer, init)
    leaves = [0]

    def certificate(order):
        pos = {u: i for i, u in enumerate(order)}
        return tuple(sorted((pos[u], pos[w]) for u in order for w in same_layer[u] if pos[u] < pos[w]))

    def cells_of(colors):
        cells = {}
        for u in layer_vs:
            cells.setdefault(colors[u], []).append(u)
        return cells

    def is_twin_cell(cell):
        members = set(cell)
        if any(w in members for u in cell for w in same_layer[u]):
            return False
        return len({frozenset(same_layer[u]) for u in cell}) == 1

    def split_by_id(colors, cellkeys):
        # (colour, id) ranks keep every other cell in place
        return _rank({u: (c, u if c in cellkeys else -1) for u, c in colors.items()})

    def search(colors):
        while True:
            cells = cells_of(colors)
            open_cells = [k for k in sorted(cells) if len(cells[k]) > 1]
            if not open_cells:
                order = [cells[k][0] for k in sorted(cells)]
                leaves[0] += 1
                return certificate(order), order
            if leaves[0] >= budget:
                colors = split_by_id(colors, set(open_cells))
                continue
            twin = {k for k in open_cells if is_twin_cell(cells[k])}
            if not twin:
                break
            colors = _refine(layer_vs, same_layer, split_by_id(colors, twin))
        target = open_cells[0]
        best = None
        for x in sorted(cells[target]):
            trial = {u: 2 * c + (0 if u == x else 1) if c == target else 2 * c + 1
                     for u, c in colors.items()}
            result = search(_refine(layer_vs, same_layer, _rank(trial)))
            if best is None or result[0] < best[0]:
                best = result
        return best

    return search(colors)[1]


def canonical_enumeration(g: Graph, v: int, r: int) -> list:
    """Coherent canonical ordering of ``B_r(v)``.

    Vertices are listed by BFS layer.  Layer ``k`` is ordered using only the
    structure of ``B_k(v)`` (parent positions, then colour refinement within
    the layer, then an individualisation search), so the ordering at a
    smaller radius is always a prefix of the ordering at a larger one.
    Vertex ids decide only between vertices that remain interchangeable.
    """
    if not 0 <= v < g.n:
        raise ValueError(f"center {v} out of range")
    if r < 0:
        raise ValueError("radius must be non-negative")
    dist = bfs_distances(g, v, limit=r)
    adj = g.adjacency
    layers = [[] for _ in range(r + 1)]
    for u, du in dist.items():
        layers[du].append(u)
    order = [v]
    pos = {v: 0}
    for k in range(1, r + 1):
        layer_vs = sorted(layers[k])
        if not layer_vs:
            break
        parents = {u: tuple(sorted(pos[w] for w in adj[u] if dist.get(w) == k - 1)) for u in layer_vs}
        same = {u: [w for w in adj[u] if dist.get(w) == k] for u in layer_vs}
        for u in _order_layer(layer_vs, parents, same, _SEARCH_BUDGET):
            pos[u] = len(order)
            order.append(u)
    return order


def _rooted_ball(g, v, r, order, dist):
    pos = {u: i for i, u in enumerate(order)}
    edges = []
    for u in order:
        for w in g.adjacency[u]:
            if w in pos and pos[u] < pos[w]:
                edges.append((pos[u], pos[w]))
    return RootedBall(v, r, tuple(order), tuple(sorted(edges)), tuple(dist[u] for u in order))


def ball(g: Graph, v: int, r: int) -> RootedBall:
    """``B_r(v)`` in the coherent canonical enumeration."""
    order = canonical_enumeration(g, v, r)
    return _rooted_ball(g, v, r, order, bfs_distances(g, v, limit=r))


def _tree_form(adj, v, dist, members):
    # AHU encoding; equal codes mean isomorphic rooted subtrees
    children = {u: [w for w in adj[u] if w in members and dist[w] == dist[u] + 1] for u in members}
    code = {}
    for u in sorted(members, key=lambda x: -dist[x]):
        code[u] = "(" + "".join(sorted(code[w] for w in children[u])) + ")"
    order = [v]
    i = 0
    while i < len(order):
        u = order[i]
        order.extend(sorted(children[u], key=lambda w: (code[w], w)))
        i += 1
    return order


def _graph_form(adj, v, dist, members, budget):
    verts = sorted(members)
    nbrs = {u: [w for w in adj[u] if w in members] for u in verts}
    colors = _rank({u: (dist[u], 0 if u == v else 1) for u in verts})
    leaves = [0]
    best = [None, None]

    def refine(colors):
        ncells = len(set(colors.values()))
        while True:
            colors = _rank({u: (colors[u], tuple(sorted(colors[w] for w in nbrs[u]))) for u in verts})
            m = len(set(colors.values()))
            if m == ncells:
                return colors
            ncells = m

    def twin_cell(cell):
        closed = {frozenset(nbrs[u]) | {u} for u in cell}
        opened = {frozenset(nbrs[u]) for u in cell}
        return len(opened) == 1 or len(closed) == 1

    def search(colors):
        while True:
            cells = {}
            for u in verts:
                cells.setdefault(colors[u], []).append(u)
            open_cells = [k for k in sorted(cells) if len(cells[k]) > 1]
            if not open_cells:
                order = [cells[k][0] for k in sorted(cells)]
                pos = {u: i for i, u in enumerate(order)}
                cert = tuple(sorted((pos[u], pos[w]) for u in order for w in nbrs[u] if pos[u] < pos[w]))
                leaves[0] += 1
                if best[0] is None or cert < best[0]:
                    best[0], best[1] = cert, order
                return
            twins = {k for k in open_cells if twin_cell(cells[k])}
            if leaves[0] >= budget:
                twins = set(open_cells)
            if not twins:
                break
            colors = refine(_rank({u: (c, u if c in twins else -1) for u, c in colors.items()}))
        target = open_cells[0]
        for x in sorted(cells[target]):
            search(refine(_rank({u: (c, 0 if u == x else 1) for u, c in colors.items()})))

    search(refine(colors))
    return best[1]


def canonical_form(g: Graph, v: int, r: int) -> RootedBall:
    """``B_r(v)`` enumerated so that its code is a label-invariant certificate.

    The ordering is layered (center first, BFS layers in order), so for a
    fixed ``r`` its prefixes form a coherent family for all smaller radii.
    Unlike :func:`ball`, the ordering of ``B_r`` need not extend the one of
    ``B_{r-1}``.  Trees use AHU codes; other balls use colour refinement
    seeded by layer with an individualisation search on stable cells.
    """
    if not 0 <= v < g.n:
        raise ValueError(f"center {v} out of range")
    dist = bfs_distances(g, v, limit=r)
    members = set(dist)
    n_edges = sum(1 for u in members for w in g.adjacency[u] if w in members) // 2
    if n_edges == len(members) - 1:
        order = _tree_form(g.adjacency, v, dist, members)
    else:
        order = _graph_form(g.adjacency, v, dist, members, _SEARCH_BUDGET)
    return _rooted_ball(g, v, r, order, dist)


def canonical_code(g: Graph, v: int, r: int) -> tuple:
    """Label-invariant code of the rooted ball ``B_r(v)``."""
    return canonical_form(g, v, r).code


def is_clipped(g: Graph, v: int, r: int) -> bool:
    """True if some truncation-boundary vertex lies within distance ``r``."""
    if not g.boundary:
        return False
    dist = bfs_distances(g, v, limit=r)
    return any(b in dist for b in g.boundary)


# --------------------------------------------------------------- builders


def build_half_line(m: int) -> Graph:
    """``P_m`` standing in for the half-line; vertex 0 is the origin."""
    if m < 1:
        raise ValueError("m must be at least 1")
    return Graph(m, tuple((i, i + 1) for i in range(m - 1)), frozenset({m - 1}))


def build_line_segment(m: int) -> Graph:
    """``P_m`` standing in for the whole line; both ends are boundary."""
    if m < 1:
        raise ValueError("m must be at least 1")
    return Graph(m, tuple((i, i + 1) for i in range(m - 1)), frozenset({0, m - 1}))


def tree_size(d: int, depth: int) -> int:
    return 1 + sum(d * (d - 1) ** (k - 1) for k in range(1, depth + 1))


def build_regular_tree(d: int, depth: int) -> Graph:
    """Ball of radius ``depth`` around the root 0 of the ``d``-regular tree.

    Vertices are numbered breadth first; the leaves form the boundary.
    """
    if d < 3:
        raise ValueError("d must be at least 3")
    if depth < 0:
        raise ValueError("depth must be non-negative")
    edges = []
    frontier = [0]
    nxt = 1
    for k in range(depth):
        new = []
        for u in frontier:
            for _ in range(d if k == 0 else d - 1):
                edges.append((u, nxt))
                new.append(nxt)
                nxt += 1
        frontier = new
    boundary = frozenset(frontier)
    return Graph(nxt, tuple(edges), boundary)


def build_glued_tree(d: int, depth: int, tail_length: int) -> Graph:
    """Tree ball of radius ``depth`` with a path of ``tail_length`` hung at the root."""
    if tail_length < 0:
        raise ValueError("tail_length must be non-negative")
    tree = build_regular_tree(d, depth)
    n0 = tree.n
    edges = list(tree.edges)
    prev = 0
    for t in range(tail_length):
        edges.append((prev, n0 + t))
        prev = n0 + t
    boundary = set(tree.boundary)
    if tail_length:
        boundary.add(n0 + tail_length - 1)
    return Graph(n0 + tail_length, tuple(edges), frozenset(boundary))


def build_counterexample(spec: GluingSpec):
    """Half-line with block ``i`` spliced into the edge ``(k_i, k_i + 1)``.

    Returns ``(graph, metadata)``.  The half-line occupies vertices
    ``0..halfline_length-1``; blocks follow in order.  ``metadata`` has the
    per-block vertex ``ranges``, global marked vertices and anchors.
    """
    m = spec.halfline_length
    removed = {(k, k + 1) for k in spec.anchors}
    edges = [(i, i + 1) for i in range(m - 1) if (i, i + 1) not in removed]
    offset = m
    ranges, marked = [], []
    for (g, u1, u2), k in zip(spec.blocks, spec.anchors):
        edges.extend((offset + a, offset + b) for a, b in g.edges)
        edges.append((k, offset + u1))
        edges.append((offset + u2, k + 1))
        ranges.append((offset, offset + g.n))
        marked.append((offset + u1, offset + u2))
        offset += g.n
    graph = Graph(offset, tuple(edges), frozenset({m - 1}))
    meta = {
        "ranges": ranges,
        "marked": marked,
        "anchors": list(spec.anchors),
        "block_sizes": [g.n for g, _, _ in spec.blocks],
        "marked_distances": [bfs_distances(g, u1)[u2] for g, u1, u2 in spec.blocks],
        "halfline_length": m,
    }
    return graph, meta


def default_anchors(count: int, base: int) -> list:
    """``k_1 = base``, gaps ``2^i * base``: the gaps grow without bound."""
    ks = []
    k = base
    for i in range(count):
        ks.append(k)
        k += base * 2 ** (i + 1)
    return ks


# ------------------------------------------------------------ cage blocks


def _data_dir():
    env = os.environ.get("SPECTRA_DATA_DIR")
    if env:
        return Path(env)
    return resources.files("rlimits") / "data"


def load_graph_json(path) -> Graph:
    with open(path, encoding="utf-8") as fh:
        return Graph.from_json(json.load(fh))


def save_graph_json(g: Graph, path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(g.to_json(), fh)
        fh.write("\n")


def cage_blocks(d: int, count: int, generator=None) -> list:
    """Girth-increasing ``d``-regular blocks with a diameter pair marked.

    For ``d = 3`` the shipped table is K4, Petersen, Heawood, McGee and
    Tutte-Coxeter (girths 3, 5, 6, 7, 8).  Other degrees, or more blocks,
    need ``generator(d, i)`` returning a graph for slot ``i``.
    """
    graphs = []
    if d == 3:
        base = _data_dir()
        for name in _CAGE_NAMES[:count]:
            with (base / f"{name}.json").open(encoding="utf-8") as fh:
                graphs.append(Graph.from_json(json.load(fh)))
    while len(graphs) < count:
        if generator is None:
            raise ValueError(f"no shipped cages for d={d} beyond {len(graphs)} blocks and no generator")
        graphs.append(generator(d, len(graphs)))
    out = []
    for g in graphs:
        u, v, _ = diameter_pair(g)
        out.append((g, u, v))
    return out


def random_regular_with_girth(d: int, n: int, g_min: int, seed: int, max_attempts: int = 2000) -> Graph:
    """Seeded pairing-model sample of a ``d``-regular graph with girth >= ``g_min``.

    Raises ``RuntimeError`` once ``max_attempts`` pairings were rejected.
    """
    if (d * n) % 2:
        raise ValueError("d * n must be even")
    if g_min < 3:
        raise ValueError("g_min must be at least 3")
    if not 0 < d < n:
        raise ValueError("need 0 < d < n")
    rng = random.Random(seed)
    stubs = [v for v in range(n) for _ in range(d)]
    for _ in range(max_attempts):
        rng.shuffle(stubs)
        edges = set()
        ok = True
        for a, b in zip(stubs[::2], stubs[1::2]):
            e = (a, b) if a < b else (b, a)
            if a == b or e in edges:
                ok = False
                break
            edges.add(e)
        if not ok:
            continue
        g = Graph(n, tuple(edges))
        gi = girth(g)
        if gi == ACYCLIC or gi >= g_min:
            return g
    raise RuntimeError(f"no {d}-regular graph on {n} vertices with girth >= {g_min} "
                       f"after {max_attempts} attempts")
