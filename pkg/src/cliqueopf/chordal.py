"""Sparsity graph, chordal completion and maximal-clique decomposition.

Vertices are 0-based bus indices.  Entries ``(i, k)`` are stored with
``i <= k``; the lower triangle is implied by Hermitian symmetry.
"""

from __future__ import annotations

import enum
import json
from collections import deque
from dataclasses import dataclass, field
from functools import cached_property

import numpy as np

__all__ = [
    "ZERO_TOL",
    "SparsityGraph",
    "ChordalCompletion",
    "CliqueDecomposition",
    "EntryKind",
    "Coordination",
    "build_graph",
    "mcs_order",
    "fill_in",
    "is_perfect_elimination_order",
    "is_chordal",
    "maximal_cliques",
    "decompose",
    "assign_coordinators",
    "hop_distances",
    "decomposition_to_json",
]

ZERO_TOL = 1e-12


def _key(i, k):
    return (i, k) if i <= k else (k, i)


@dataclass(frozen=True)
class SparsityGraph:
    n: int
    edges: frozenset

    def __post_init__(self):
        edges = frozenset(_key(int(i), int(k)) for i, k in self.edges)
        for i, k in edges:
            if i == k:
                raise ValueError(f"self-loop at vertex {i}")
            if not (0 <= i < self.n and 0 <= k < self.n):
                raise ValueError(f"edge {(i, k)} outside 0..{self.n - 1}")
        object.__setattr__(self, "edges", edges)

    def adjacency(self) -> list[set]:
        adj = [set() for _ in range(self.n)]
        for i, k in self.edges:
            adj[i].add(k)
            adj[k].add(i)
        return adj


@dataclass(frozen=True)
class ChordalCompletion:
    base: SparsityGraph
    fill_edges: frozenset
    order: tuple  # elimination order: order[0] is eliminated first

    @property
    def graph(self) -> SparsityGraph:
        return SparsityGraph(self.base.n, self.base.edges | self.fill_edges)


class EntryKind(str, enum.Enum):
    IGNORED = "ignored"
    UNIQUE = "unique"
    SHARED = "shared"


@dataclass(frozen=True, eq=False)
class CliqueDecomposition:
    """Maximal cliques of a chordal completion and the entry classification.

    ``omega[(i, k)]`` lists, in increasing order, the indices of the cliques
    containing both ``i`` and ``k``; pairs absent from ``omega`` are ignored.
    """

    completion: ChordalCompletion
    cliques: tuple
    omega: dict = field(repr=False)

    @property
    def n(self) -> int:
        return self.completion.base.n

    @property
    def fill_edges(self) -> frozenset:
        return self.completion.fill_edges

    def kind(self, i: int, k: int) -> EntryKind:
        om = self.omega.get(_key(i, k))
        if not om:
            return EntryKind.IGNORED
        return EntryKind.UNIQUE if len(om) == 1 else EntryKind.SHARED

    def classification(self) -> dict:
        """``(i, k) -> (EntryKind, owner)``; owner is the clique for unique entries."""
        out = {}
        for key, om in self.omega.items():
            if len(om) == 1:
                out[key] = (EntryKind.UNIQUE, om[0])
            else:
                out[key] = (EntryKind.SHARED, None)
        return out

    def shared_entries(self) -> list[tuple[int, int]]:
        return sorted(k for k, om in self.omega.items() if len(om) >= 2)

    def unique_entries(self, l: int) -> list[tuple[int, int]]:
        return sorted(k for k, om in self.omega.items() if om == (l,))

    def is_fill(self, i: int, k: int) -> bool:
        return _key(i, k) in self.completion.fill_edges

    @cached_property
    def layouts(self) -> tuple:
        """Per clique: ``(members, position map, unique entries, shared entries)``."""
        out = []
        for l, q in enumerate(self.cliques):
            pos = {v: a for a, v in enumerate(q)}
            unique, shared = [], []
            for a_idx, a in enumerate(q):
                for b in q[a_idx:]:
                    (unique if self.omega[(a, b)] == (l,) else shared).append((a, b))
            out.append((q, pos, tuple(unique), tuple(shared)))
        return tuple(out)


def build_graph(M: np.ndarray, tol: float = ZERO_TOL) -> SparsityGraph:
    """Edge ``(i, k)`` for every off-diagonal ``|M_ik| > tol``."""
    M = np.asarray(M)
    n = M.shape[0]
    mask = np.abs(M) > tol
    mask = mask | mask.T
    ii, kk = np.nonzero(np.triu(mask, 1))
    return SparsityGraph(n, frozenset(zip(ii.tolist(), kk.tolist())))


def mcs_order(g: SparsityGraph) -> tuple:
    """Maximum cardinality search; returns the elimination order.

    Vertices are visited by largest number of visited neighbours, ties going
    to the lowest index.  The elimination order is the reverse of the visit
    order, which is a perfect elimination ordering whenever ``g`` is chordal.
    """
    adj = g.adjacency()
    weight = [0] * g.n
    visited = [False] * g.n
    visit = []
    for _ in range(g.n):
        best = -1
        for v in range(g.n):
            if not visited[v] and (best < 0 or weight[v] > weight[best]):
                best = v
        visited[best] = True
        visit.append(best)
        for w in adj[best]:
            if not visited[w]:
                weight[w] += 1
    return tuple(reversed(visit))


def fill_in(g: SparsityGraph, order) -> ChordalCompletion:
    """Elimination game: eliminating ``v`` makes its later neighbours a clique."""
    order = tuple(int(v) for v in order)
    if sorted(order) != list(range(g.n)):
        raise ValueError("order is not a permutation of the vertices")
    adj = g.adjacency()
    eliminated = [False] * g.n
    fill = set()
    for v in order:
        later = sorted(w for w in adj[v] if not eliminated[w])
        for a_idx, a in enumerate(later):
            for b in later[a_idx + 1:]:
                if b not in adj[a]:
                    adj[a].add(b)
                    adj[b].add(a)
                    fill.add(_key(a, b))
        eliminated[v] = True
    return ChordalCompletion(g, frozenset(fill), order)


def is_perfect_elimination_order(g: SparsityGraph, order) -> bool:
    """True if the later neighbours of every vertex form a clique."""
    adj = g.adjacency()
    pos = {v: p for p, v in enumerate(order)}
    for v in order:
        later = [w for w in adj[v] if pos[w] > pos[v]]
        for a_idx, a in enumerate(later):
            for b in later[a_idx + 1:]:
                if b not in adj[a]:
                    return False
    return True


def is_chordal(g: SparsityGraph) -> bool:
    return is_perfect_elimination_order(g, mcs_order(g))


def _bron_kerbosch(adj, n):
    out = []

    def expand(R, P, X):
        if not P and not X:
            out.append(tuple(sorted(R)))
            return
        # pivot: vertex of P | X with most neighbours in P, lowest index on ties
        pivot = min(P | X, key=lambda u: (-len(adj[u] & P), u))
        for v in sorted(P - adj[pivot]):
            expand(R | {v}, P & adj[v], X & adj[v])
            P = P - {v}
            X = X | {v}

    expand(set(), set(range(n)), set())
    return out


def maximal_cliques(c: ChordalCompletion) -> CliqueDecomposition:
    """Enumerate maximal cliques (Bron-Kerbosch with pivoting) and classify entries.

    Cliques are sorted by smallest member, then size, then lexicographically.
    """
    g = c.graph
    adj = g.adjacency()
    cliques = _bron_kerbosch(adj, g.n)
    cliques.sort(key=lambda q: (q[0], len(q), q))
    omega = {}
    for l, q in enumerate(cliques):
        for a_idx, a in enumerate(q):
            for b in q[a_idx:]:
                omega.setdefault((a, b), []).append(l)
    omega = {k: tuple(v) for k, v in omega.items()}
    return CliqueDecomposition(c, tuple(cliques), omega)


def decompose(M: np.ndarray, order=None) -> CliqueDecomposition:
    """Full pipeline: graph, MCS (unless ``order`` is given), fill-in, cliques."""
    g = build_graph(M)
    if order is None:
        order = mcs_order(g)
    return maximal_cliques(fill_in(g, order))


# --- coordination --------------------------------------------------------

def hop_distances(adj, src: int) -> list:
    dist = [-1] * len(adj)
    dist[src] = 0
    q = deque([src])
    while q:
        v = q.popleft()
        for w in sorted(adj[v]):
            if dist[w] < 0:
                dist[w] = dist[v] + 1
                q.append(w)
    return dist


@dataclass(frozen=True)
class Coordination:
    """Bus roles: ``coordinator[(i, k)]`` owns a shared entry and ``solver[l]``
    solves clique ``l``."""

    coordinator: dict
    solver: tuple


def assign_coordinators(d: CliqueDecomposition, adjacency=None) -> Coordination:
    """Assign a coordinator bus to every shared entry and a solver bus per clique.

    Shared entry ``(i, k)`` (``i <= k``) is coordinated at bus ``i``.  Each
    clique is solved at its lowest-index member that coordinates nothing; if
    every member is a coordinator, at the member closest (in hops over
    ``adjacency``, default: the base sparsity graph) to the farthest
    coordinator the clique talks to, lowest index on ties.
    """
    coord = {e: e[0] for e in d.shared_entries()}
    coordinators = set(coord.values())
    adj = adjacency if adjacency is not None else d.completion.base.adjacency()
    solver = []
    for l, q in enumerate(d.cliques):
        free = [v for v in q if v not in coordinators]
        if free:
            solver.append(free[0])
            continue
        talks = sorted({coord[(a, b)] for a_idx, a in enumerate(q) for b in q[a_idx:]
                        if (a, b) in coord})
        best = None
        for v in q:
            dist = hop_distances(adj, v)
            score = max((dist[c] for c in talks), default=0)
            if best is None or score < best[0]:
                best = (score, v)
        solver.append(best[1])
    return Coordination(coord, tuple(solver))


def decomposition_to_json(d: CliqueDecomposition, coordination: Coordination | None = None) -> str:
    """Debug dump with 1-based bus ids."""
    one = lambda e: [e[0] + 1, e[1] + 1]
    data = {
        "n": d.n,
        "elimination_order": [v + 1 for v in d.completion.order],
        "fill_edges": sorted(one(e) for e in d.fill_edges),
        "cliques": [[v + 1 for v in q] for q in d.cliques],
        "entries": [
            {"entry": one(k), "kind": d.kind(*k).value, "cliques": [l + 1 for l in om]}
            for k, om in sorted(d.omega.items())
        ],
    }
    if coordination is not None:
        data["coordinators"] = [{"entry": one(e), "bus": b + 1}
                                for e, b in sorted(coordination.coordinator.items())]
        data["solver_bus"] = [b + 1 for b in coordination.solver]
    return json.dumps(data, indent=2) + "\n"
