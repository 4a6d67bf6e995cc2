import json
import shutil

import networkx as nx
import pytest
from hypothesis import given
from hypothesis import strategies as st

from _helpers import graphs, relabel, to_nx
from rlimits import graph_core as gc
from rlimits.graph_core import ACYCLIC, Graph, GluingSpec, PathToInfinity


def cycle(n):
    return Graph(n, tuple((i, (i + 1) % n) for i in range(n)))


def petersen():
    return gc.cage_blocks(3, 2)[1][0]


# ------------------------------------------------------------ Graph


def test_graph_rejects_self_loops_and_duplicates():
    with pytest.raises(ValueError):
        Graph(3, ((1, 1),))
    with pytest.raises(ValueError):
        Graph(3, ((0, 1), (1, 0)))
    with pytest.raises(ValueError):
        Graph(3, ((0, 3),))
    with pytest.raises(ValueError):
        Graph(-1)


def test_graph_edges_are_normalised():
    g = Graph(3, ((2, 1), (1, 0)))
    assert g.edges == ((0, 1), (1, 2))
    assert g.adjacency == ((1,), (0, 2), (1,))


def test_connected_predicate():
    assert Graph(3, ((0, 1), (1, 2))).connected()
    assert not Graph(3, ((0, 1),)).connected()


def test_json_roundtrip_keeps_boundary(tmp_path):
    g = gc.build_half_line(6)
    p = tmp_path / "g.json"
    gc.save_graph_json(g, p)
    h = gc.load_graph_json(p)
    assert h.edges == g.edges and h.boundary == g.boundary


def test_json_layout():
    assert Graph(3, ((1, 2), (0, 1))).to_json() == {"n": 3, "edges": [[0, 1], [1, 2]]}


# ------------------------------------------------------------ metrics


def test_bfs_examples():
    p3 = Graph(3, ((0, 1), (1, 2)))
    assert gc.bfs_distances(p3, 0) == {0: 0, 1: 1, 2: 2}
    assert gc.bfs_distances(Graph(1), 0) == {0: 0}
    with pytest.raises(ValueError):
        gc.bfs_distances(p3, 3)


def test_bfs_unreachable_absent():
    assert gc.bfs_distances(Graph(3, ((0, 1),)), 0) == {0: 0, 1: 1}


def test_petersen_distances_at_most_two():
    g = petersen()
    for s in range(g.n):
        assert max(gc.bfs_distances(g, s).values()) == 2


@given(graphs(connected=False))
def test_bfs_matches_networkx(g):
    G = to_nx(g)
    for s in range(g.n):
        assert gc.bfs_distances(g, s) == nx.single_source_shortest_path_length(G, s)


def test_girth_examples():
    assert gc.girth(cycle(5)) == 5
    assert gc.girth(gc.build_regular_tree(3, 3)) == ACYCLIC
    assert gc.girth(petersen()) == 5
    assert gc.girth(Graph(0)) == ACYCLIC


@given(graphs(connected=False))
def test_girth_matches_networkx(g):
    expected = nx.girth(to_nx(g))
    got = gc.girth(g)
    assert got == (ACYCLIC if expected == float("inf") else expected)


def test_diameter_pair_examples():
    assert gc.diameter_pair(gc.build_line_segment(5)) == (0, 4, 4)
    assert gc.diameter_pair(cycle(6))[2] == 3
    assert gc.diameter_pair(petersen())[2] == 2
    with pytest.raises(ValueError):
        gc.diameter_pair(Graph(2))


@given(graphs(min_n=2))
def test_diameter_pair_matches_networkx(g):
    u, v, d = gc.diameter_pair(g)
    assert d == nx.diameter(to_nx(g))
    assert gc.bfs_distances(g, u)[v] == d


# ------------------------------------------------------------ balls


def test_ball_examples():
    p3 = Graph(3, ((0, 1), (1, 2)))
    b = gc.ball(p3, 1, 1)
    assert b.size == 3 and b.layer == (0, 1, 1)
    assert gc.ball(gc.build_regular_tree(3, 4), 0, 2).size == 10
    b0 = gc.ball(petersen(), 3, 0)
    assert b0.vertices == (3,) and b0.induced_edges == ()
    with pytest.raises(ValueError):
        gc.ball(p3, 5, 1)
    with pytest.raises(ValueError):
        gc.ball(p3, 0, -1)


def test_canonical_enumeration_examples():
    star = Graph(4, ((0, 1), (0, 2), (0, 3)))
    order = gc.canonical_enumeration(star, 0, 1)
    assert order[0] == 0 and sorted(order[1:]) == [1, 2, 3]
    assert gc.canonical_enumeration(Graph(3, ((0, 1), (1, 2))), 0, 2) == [0, 1, 2]


@given(graphs(), st.data())
def test_ball_is_coherent(g, data):
    v = data.draw(st.integers(0, g.n - 1))
    r = data.draw(st.integers(0, 5))
    big = gc.ball(g, v, r)
    assert big.vertices[0] == v
    assert list(big.layer) == sorted(big.layer)
    for s in range(r + 1):
        small = gc.ball(g, v, s)
        k = big.prefix_size(s)
        assert small.vertices == big.vertices[:k]
        assert small.induced_edges == tuple(e for e in big.induced_edges if max(e) < k)


@given(graphs(), st.data())
def test_ball_members_are_the_metric_ball(g, data):
    v = data.draw(st.integers(0, g.n - 1))
    r = data.draw(st.integers(0, 4))
    dist = nx.single_source_shortest_path_length(to_nx(g), v, cutoff=r)
    b = gc.ball(g, v, r)
    assert sorted(b.vertices) == sorted(dist)
    assert all(dist[u] == ell for u, ell in zip(b.vertices, b.layer))


@given(graphs(), st.data())
def test_canonical_code_is_label_invariant(g, data):
    v = data.draw(st.integers(0, g.n - 1))
    r = data.draw(st.integers(0, 4))
    perm = data.draw(st.permutations(range(g.n)))
    assert gc.canonical_code(g, v, r) == gc.canonical_code(relabel(g, perm), perm[v], r)


def _rooted_nx(g, v, r):
    b = gc.ball(g, v, r)
    G = nx.Graph()
    G.add_nodes_from(range(b.size))
    G.add_edges_from(b.induced_edges)
    nx.set_node_attributes(G, {0: True}, "root")
    return G


@given(graphs(max_n=9), graphs(max_n=9), st.integers(1, 3))
def test_canonical_code_separates_non_isomorphic(g, h, r):
    same = nx.is_isomorphic(_rooted_nx(g, 0, r), _rooted_nx(h, 0, r),
                            node_match=lambda a, b: a.get("root") == b.get("root"))
    assert (gc.canonical_code(g, 0, r) == gc.canonical_code(h, 0, r)) == same


@pytest.mark.parametrize("index", [1, 2, 3, 4])
def test_cage_ball_codes_survive_relabeling(index):
    g = gc.cage_blocks(3, 5)[index][0]
    perm = list(range(g.n))[::-1]
    perm = perm[1:] + perm[:1]
    for v in (0, 7):
        for r in (2, 3):
            assert gc.canonical_code(g, v, r) == gc.canonical_code(relabel(g, perm), perm[v], r)


def test_canonical_form_prefixes_are_layers():
    g = gc.cage_blocks(3, 4)[3][0]
    b = gc.canonical_form(g, 0, 3)
    assert b.vertices[0] == 0
    assert list(b.layer) == sorted(b.layer)


def test_is_clipped():
    g = gc.build_half_line(10)
    assert not gc.is_clipped(g, 0, 8)
    assert gc.is_clipped(g, 0, 9)
    assert not gc.is_clipped(petersen(), 0, 5)


def test_rooted_ball_as_graph():
    b = gc.ball(gc.build_regular_tree(3, 3), 0, 2)
    h = b.as_graph()
    assert h.n == 10 and len(h.edges) == 9


# ------------------------------------------------------------ paths


def test_path_to_infinity_validation():
    g = gc.build_half_line(6)
    PathToInfinity(g, (0, 1, 2, 3))
    with pytest.raises(ValueError):
        PathToInfinity(g, (0, 2))
    with pytest.raises(ValueError):
        PathToInfinity(g, (1, 2, 1))
    with pytest.raises(ValueError):
        PathToInfinity(g, ())
    with pytest.raises(ValueError):
        PathToInfinity(g, (0, 9))


def test_path_distance_must_increase_strictly():
    # 0-1-2-0 triangle plus tail: 0,1,2 has dist(2, 0) = 1 = dist(1, 0)
    g = Graph(4, ((0, 1), (1, 2), (0, 2), (2, 3)))
    with pytest.raises(ValueError):
        PathToInfinity(g, (0, 1, 2))
    assert len(PathToInfinity(g, (0, 2, 3))) == 3


# ------------------------------------------------------------ builders


def test_builder_examples():
    t = gc.build_regular_tree(3, 2)
    assert t.n == 10
    glued = gc.build_glued_tree(3, 1, 2)
    assert glued.n == 6 and glued.degree(0) == 4
    p5 = gc.build_half_line(5)
    assert p5.edges == ((0, 1), (1, 2), (2, 3), (3, 4))
    assert gc.build_line_segment(1).n == 1
    with pytest.raises(ValueError):
        gc.build_half_line(0)
    with pytest.raises(ValueError):
        gc.build_regular_tree(2, 3)


@pytest.mark.parametrize("d", [3, 4, 5])
@pytest.mark.parametrize("R", [0, 1, 2, 4])
def test_regular_tree_size(d, R):
    t = gc.build_regular_tree(d, R)
    assert t.n == gc.tree_size(d, R) == 1 + d * ((d - 1) ** R - 1) // (d - 2)
    assert gc.girth(t) == ACYCLIC
    dist = gc.bfs_distances(t, 0)
    for v in range(t.n):
        if dist[v] < R:
            assert t.degree(v) == d
        else:
            assert t.degree(v) == (1 if R else 0)
    assert t.boundary == frozenset(v for v in range(t.n) if dist[v] == R)


def test_glued_tree_structure():
    g = gc.build_glued_tree(3, 3, 5)
    n0 = gc.tree_size(3, 3)
    assert g.n == n0 + 5
    assert g.has_edge(0, n0)
    assert [g.degree(n0 + t) for t in range(4)] == [2, 2, 2, 2]
    assert n0 + 4 in g.boundary


def test_counterexample_k4_example():
    k4 = gc.cage_blocks(3, 1)[0]
    g, meta = gc.build_counterexample(GluingSpec(3, (k4,), (2,), 5))
    assert g.connected()
    lo, hi = meta["ranges"][0]
    assert hi - lo == 4
    for u in meta["marked"][0]:
        assert g.degree(u) == 4
    assert not g.has_edge(2, 3)


def test_counterexample_petersen_heawood():
    blocks = gc.cage_blocks(3, 3)[1:]
    g, meta = gc.build_counterexample(GluingSpec(3, tuple(blocks), (3, 8), 20))
    (a, b), (c, e) = meta["ranges"]
    assert b <= c
    assert [gc.girth(blk[0]) for blk in blocks] == [5, 6]


def test_counterexample_empty_blocks_is_half_line():
    g, _ = gc.build_counterexample(GluingSpec(3, (), (), 7))
    assert g.edges == gc.build_half_line(7).edges


def test_counterexample_degree_audit():
    blocks = tuple(gc.cage_blocks(3, 5)[1:])
    anchors = gc.default_anchors(4, 6)
    g, meta = gc.build_counterexample(GluingSpec(3, blocks, tuple(anchors), anchors[-1] + 20))
    marked = {u for pair in meta["marked"] for u in pair}
    for v in range(g.n):
        deg = g.degree(v)
        assert deg in (1, 2, 3, 4)
        assert (deg == 4) == (v in marked)
        # the origin and the truncated far end
        assert (deg == 1) == (v in (0, meta["halfline_length"] - 1))
    assert g.connected()


def test_gluing_spec_errors():
    k4, pet = gc.cage_blocks(3, 2)
    with pytest.raises(ValueError):
        GluingSpec(3, (k4, pet), (2, 3), 20)
    with pytest.raises(ValueError):
        GluingSpec(3, (k4,), (2, 3), 20)
    c5 = Graph(5, tuple((i, (i + 1) % 5) for i in range(5)))
    with pytest.raises(ValueError):
        GluingSpec(3, ((c5, 0, 2),), (2,), 20)
    with pytest.raises(ValueError):
        GluingSpec(3, ((k4[0], 0, 0),), (2,), 20)
    with pytest.raises(ValueError):
        GluingSpec(3, (k4,), (19,), 20)


def test_default_anchor_gaps_grow():
    ks = gc.default_anchors(5, 3)
    gaps = [b - a for a, b in zip(ks, ks[1:])]
    assert ks[0] == 3 and gaps == [6, 12, 24, 48]


# ------------------------------------------------------------ cages and random graphs


def test_cage_blocks_examples():
    two = gc.cage_blocks(3, 2)
    assert [b[0].n for b in two] == [4, 10]
    five = gc.cage_blocks(3, 5)
    assert [gc.girth(b[0]) for b in five] == [3, 5, 6, 7, 8]
    assert [b[0].n for b in five] == [4, 10, 14, 24, 30]
    with pytest.raises(ValueError):
        gc.cage_blocks(4, 1)


def test_cage_blocks_are_cubic_with_diameter_pairs():
    for g, u, v in gc.cage_blocks(3, 5):
        assert set(g.degrees()) == {3} and g.connected()
        assert gc.bfs_distances(g, u)[v] == nx.diameter(to_nx(g))


def test_cage_data_matches_networkx_named_graphs():
    named = [nx.complete_graph(4), nx.petersen_graph(), nx.heawood_graph(),
             nx.LCF_graph(24, [12, 7, -7], 8), nx.LCF_graph(30, [-13, -9, 7, -7, 9, 13], 5)]
    ours = [to_nx(b[0]) for b in gc.cage_blocks(3, 5)]
    for a, b in zip(ours, named):
        assert nx.is_isomorphic(a, b)


def test_cage_blocks_generator():
    gen = lambda d, i: gc.random_regular_with_girth(d, 12, 3, seed=i)
    blocks = gc.cage_blocks(4, 2, generator=gen)
    assert all(set(b[0].degrees()) == {4} for b in blocks)


def test_data_dir_override(tmp_path, monkeypatch):
    src = gc._data_dir()
    for name in ("k4", "petersen"):
        shutil.copy(str(src / f"{name}.json"), tmp_path / f"{name}.json")
    # replace Petersen by a relabelled copy
    data = json.loads((tmp_path / "petersen.json").read_text())
    data["edges"] = sorted(sorted([9 - u, 9 - v]) for u, v in data["edges"])
    (tmp_path / "petersen.json").write_text(json.dumps(data))
    monkeypatch.setenv("SPECTRA_DATA_DIR", str(tmp_path))
    pet = gc.cage_blocks(3, 2)[1][0]
    assert [list(e) for e in pet.edges] == data["edges"]
    assert gc.girth(pet) == 5


def test_random_regular_examples():
    g = gc.random_regular_with_girth(3, 10, 3, seed=1)
    assert set(g.degrees()) == {3}
    with pytest.raises(RuntimeError):
        gc.random_regular_with_girth(3, 4, 4, seed=0, max_attempts=200)
    with pytest.raises(ValueError):
        gc.random_regular_with_girth(3, 5, 3, seed=0)


@given(st.integers(0, 10_000))
def test_random_regular_is_seeded_and_respects_girth(seed):
    g = gc.random_regular_with_girth(3, 16, 4, seed)
    h = gc.random_regular_with_girth(3, 16, 4, seed)
    assert g.edges == h.edges
    assert set(g.degrees()) == {3}
    gi = gc.girth(g)
    assert gi == ACYCLIC or gi >= 4
