import json

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from cliqueopf.chordal import (
    EntryKind,
    SparsityGraph,
    assign_coordinators,
    build_graph,
    decompose,
    decomposition_to_json,
    fill_in,
    is_chordal,
    is_perfect_elimination_order,
    maximal_cliques,
    mcs_order,
)
from cliqueopf.netcase import build_cost_matrix
from cliqueopf.problem import OpfProblem
from oracles import (
    brute_force_maximal_cliques,
    random_connected_edges,
    random_tree_edges,
    ring5_case,
    star_case,
)


def _graph(n, edges):
    return SparsityGraph(n, frozenset(edges))


def _matrix(n, edges, rng=None):
    rng = rng or np.random.default_rng(0)
    M = np.diag(rng.uniform(1, 2, n)).astype(complex)
    for i, k in edges:
        M[i, k] = complex(*rng.uniform(0.5, 1.5, 2))
        M[k, i] = np.conj(M[i, k])
    return M


# --- graph -------------------------------------------------------------------

def test_graph_star():
    n = 6
    g = build_graph(build_cost_matrix(star_case(n)))
    assert g.edges == {(l, n - 1) for l in range(n - 1)}


def test_graph_diagonal():
    assert build_graph(np.diag([1.0, 2.0, 3.0])).edges == frozenset()


def test_graph_ring5():
    g = build_graph(build_cost_matrix(ring5_case()))
    assert g.edges == {(0, 1), (0, 2), (1, 3), (2, 3), (3, 4)}


def test_graph_threshold():
    M = np.eye(3, dtype=complex)
    M[0, 1] = M[1, 0] = 1e-13
    M[1, 2] = M[2, 1] = 1e-11
    assert build_graph(M).edges == {(1, 2)}


def test_graph_rejects_bad_edges():
    with pytest.raises(ValueError):
        SparsityGraph(3, frozenset({(1, 1)}))
    with pytest.raises(ValueError):
        SparsityGraph(3, frozenset({(0, 3)}))


# --- ordering and fill ---------------------------------------------------------

def test_mcs_path_is_permutation_and_deterministic():
    g = _graph(3, [(0, 1), (1, 2)])
    order = mcs_order(g)
    assert sorted(order) == [0, 1, 2]
    assert mcs_order(g) == order
    assert is_perfect_elimination_order(g, order)


def test_mcs_ties_lowest_index():
    # every vertex ties at first; the visit starts at 0 and so is eliminated last
    g = _graph(4, [(0, 1), (1, 2), (2, 3)])
    assert mcs_order(g)[-1] == 0


@pytest.mark.parametrize("seed", range(10))
def test_tree_no_fill(seed):
    rng = np.random.default_rng(seed)
    n = int(rng.integers(2, 30))
    g = _graph(n, random_tree_edges(rng, n))
    c = fill_in(g, mcs_order(g))
    assert c.fill_edges == frozenset()


def test_ring_single_fill():
    g = build_graph(build_cost_matrix(ring5_case()))
    c = fill_in(g, mcs_order(g))
    assert len(c.fill_edges) == 1
    assert c.fill_edges <= {(1, 2), (0, 3)}


def test_chordal_with_peo_no_fill():
    # two triangles sharing an edge
    g = _graph(4, [(0, 1), (0, 2), (1, 2), (1, 3), (2, 3)])
    assert is_chordal(g)
    assert fill_in(g, mcs_order(g)).fill_edges == frozenset()


def test_fill_in_rejects_non_permutation():
    with pytest.raises(ValueError):
        fill_in(_graph(3, [(0, 1)]), (0, 0, 1))


def test_peo_checker_rejects_cycle():
    g = _graph(4, [(0, 1), (1, 2), (2, 3), (0, 3)])
    assert not is_chordal(g)
    assert not is_perfect_elimination_order(g, (0, 1, 2, 3))


@given(seed=st.integers(0, 2**31 - 1), n=st.integers(2, 15), extra=st.integers(0, 20))
def test_fill_in_is_chordal(seed, n, extra):
    rng = np.random.default_rng(seed)
    g = _graph(n, random_connected_edges(rng, n, extra))
    c = fill_in(g, mcs_order(g))
    assert is_chordal(c.graph)
    assert is_perfect_elimination_order(c.graph, c.order)
    assert not (c.fill_edges & g.edges)


@given(seed=st.integers(0, 2**31 - 1), n=st.integers(2, 15), extra=st.integers(0, 20))
def test_fill_in_under_random_order_is_chordal(seed, n, extra):
    rng = np.random.default_rng(seed)
    g = _graph(n, random_connected_edges(rng, n, extra))
    order = tuple(rng.permutation(n).tolist())
    c = fill_in(g, order)
    assert is_perfect_elimination_order(c.graph, order)


# --- cliques -------------------------------------------------------------------

@pytest.mark.parametrize("n", range(2, 51))
def test_tree_cliques(n):
    for seed in range(3):
        rng = np.random.default_rng(1000 * n + seed)
        edges = random_tree_edges(rng, n)
        d = decompose(_matrix(n, edges, rng))
        assert len(d.cliques) == n - 1
        assert sorted(d.cliques) == sorted(tuple(sorted(e)) for e in edges)


def test_star_cliques_and_classification():
    n = 6
    d = decompose(build_cost_matrix(star_case(n)))
    hub = n - 1
    assert d.cliques == tuple((l, hub) for l in range(n - 1))
    assert d.shared_entries() == [(hub, hub)]
    assert d.omega[(hub, hub)] == tuple(range(n - 1))
    for l in range(n - 1):
        assert d.kind(l, l) is EntryKind.UNIQUE
        assert d.kind(l, hub) is EntryKind.UNIQUE
        assert d.unique_entries(l) == [(l, l), (l, hub)]
    assert d.kind(0, 1) is EntryKind.IGNORED


def test_ring5_cliques_paper_fill():
    case = ring5_case()
    M = build_cost_matrix(case)
    # force the fill edge (2,3) in 1-based ids by eliminating bus 1 first
    d = decompose(M, order=(0, 4, 1, 2, 3))
    assert d.fill_edges == {(1, 2)}
    assert d.cliques == ((0, 1, 2), (1, 2, 3), (3, 4))
    assert d.shared_entries() == [(1, 1), (1, 2), (2, 2), (3, 3)]
    assert d.is_fill(2, 1)


def test_ring5_cliques_default_order():
    d = decompose(build_cost_matrix(ring5_case()))
    sizes = sorted(len(q) for q in d.cliques)
    assert sizes == [2, 3, 3]
    assert (3, 4) in d.cliques
    assert len(d.fill_edges) == 1


@given(seed=st.integers(0, 2**31 - 1), n=st.integers(2, 10), extra=st.integers(0, 12))
def test_cliques_match_brute_force(seed, n, extra):
    rng = np.random.default_rng(seed)
    edges = random_connected_edges(rng, n, extra)
    d = decompose(_matrix(n, edges, rng))
    expect = brute_force_maximal_cliques(n, d.completion.graph.edges)
    assert {frozenset(q) for q in d.cliques} == expect
    assert len(d.cliques) == len(expect)


@given(seed=st.integers(0, 2**31 - 1), n=st.integers(2, 12), extra=st.integers(0, 12))
def test_classification_partition_and_cover(seed, n, extra):
    rng = np.random.default_rng(seed)
    edges = random_connected_edges(rng, n, extra)
    M = _matrix(n, edges, rng)
    d = decompose(M)
    for i in range(n):
        for k in range(i, n):
            kind = d.kind(i, k)
            inside = any(i in q and k in q for q in d.cliques)
            if M[i, k] != 0 or i == k:
                assert inside
            assert (kind is EntryKind.IGNORED) == (not inside)
            if inside:
                om = d.omega[(i, k)]
                assert list(om) == sorted(om)
                assert (kind is EntryKind.UNIQUE) == (len(om) == 1)
    # clique order: smallest member, then size
    keys = [(q[0], len(q), q) for q in d.cliques]
    assert keys == sorted(keys)
    # pairwise non-contained
    for a in d.cliques:
        for b in d.cliques:
            assert a == b or not set(a) <= set(b)


@pytest.mark.parametrize("seed", range(10))
def test_tree_omega_is_degree(seed):
    rng = np.random.default_rng(seed)
    n = 12
    edges = random_tree_edges(rng, n)
    d = decompose(_matrix(n, edges, rng))
    deg = np.zeros(n, dtype=int)
    for i, k in edges:
        deg[i] += 1
        deg[k] += 1
    for i in range(n):
        assert len(d.omega[(i, i)]) == deg[i]


def test_layouts_cover_clique():
    d = decompose(build_cost_matrix(ring5_case()), order=(0, 4, 1, 2, 3))
    q, pos, unique, shared = d.layouts[1]
    assert q == (1, 2, 3)
    assert set(shared) == {(1, 1), (1, 2), (2, 2), (3, 3)}
    assert set(unique) == {(1, 3), (2, 3)}
    assert len(unique) + len(shared) == 3 * 4 // 2


# --- coordination ----------------------------------------------------------------

def test_coordinators_star():
    n = 5
    p = OpfProblem.from_case(star_case(n))
    assert p.coord.coordinator == {(n - 1, n - 1): n - 1}
    assert p.coord.solver == tuple(range(n - 1))


def test_coordinators_ring5():
    case = ring5_case()
    p = OpfProblem.from_case(case, order=(0, 4, 1, 2, 3))
    c = p.coord.coordinator
    assert c[(1, 1)] == 1 and c[(1, 2)] == 1 and c[(3, 3)] == 3
    assert c[(2, 2)] == 2  # diagonal entries are coordinated at their own bus
    # bus 1 solves C1, bus 4 (closest to the coordinators) solves C2, bus 5 solves C3
    assert p.coord.solver == (0, 3, 4)


def test_coordinators_single_clique():
    M = np.ones((3, 3))
    d = decompose(M)
    assert len(d.cliques) == 1
    c = assign_coordinators(d)
    assert c.coordinator == {}
    assert c.solver == (0,)


def test_json_dump_one_based():
    p = OpfProblem.from_case(ring5_case(), order=(0, 4, 1, 2, 3))
    data = json.loads(decomposition_to_json(p.decomp, p.coord))
    assert data["cliques"] == [[1, 2, 3], [2, 3, 4], [4, 5]]
    assert data["fill_edges"] == [[2, 3]]
    kinds = {tuple(e["entry"]): e["kind"] for e in data["entries"]}
    assert kinds[(2, 3)] == "shared" and kinds[(1, 2)] == "unique"
    assert data["solver_bus"] == [1, 4, 5]
