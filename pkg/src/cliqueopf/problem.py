"""The decomposed relaxation shared by both coordination algorithms."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import hsdp
from .chordal import (
    CliqueDecomposition,
    Coordination,
    SparsityGraph,
    assign_coordinators,
    build_graph,
    fill_in,
    maximal_cliques,
    mcs_order,
)
from .netcase import PowerCase, build_cost_matrix

__all__ = ["OpfProblem", "centralized_sdp", "re_selector", "im_selector", "entry_value"]


@dataclass(frozen=True)
class OpfProblem:
    """``minimize Tr(M W)`` over ``lo <= diag(W) <= hi``, ``W >= 0``, split by cliques."""

    case: PowerCase
    M: np.ndarray
    lo: np.ndarray
    hi: np.ndarray
    decomp: CliqueDecomposition
    coord: Coordination

    @classmethod
    def from_case(cls, case: PowerCase, costs=None, order=None) -> "OpfProblem":
        M = build_cost_matrix(case, costs)
        return cls.from_matrix(case, M, order=order)

    @classmethod
    def from_matrix(cls, case: PowerCase, M: np.ndarray, order=None) -> "OpfProblem":
        # the sparsity pattern of M is a subgraph of the line graph; lines
        # whose M entry cancels are kept so recovery can still walk them
        g = build_graph(M)
        edges = set(g.edges) | set(case.edges())
        g = SparsityGraph(case.n, frozenset(edges))
        if order is None:
            order = mcs_order(g)
        d = maximal_cliques(fill_in(g, order))
        lo, hi = case.w_bounds
        return cls(case, M, lo, hi, d, assign_coordinators(d, case.adjacency()))

    def with_costs(self, costs) -> "OpfProblem":
        """Same decomposition, new linear costs."""
        return OpfProblem(self.case, build_cost_matrix(self.case, costs),
                          self.lo, self.hi, self.decomp, self.coord)

    @property
    def n(self) -> int:
        return self.case.n

    @property
    def cliques(self) -> tuple:
        return self.decomp.cliques

    def objective(self, W: np.ndarray) -> float:
        return float(np.real(np.sum(self.M * W.T)))


def re_selector(m: int, a: int, b: int) -> np.ndarray:
    """Hermitian ``A`` with ``Tr(A X) = Re X[a, b]``."""
    A = np.zeros((m, m), dtype=complex)
    A[a, b] = A[b, a] = 0.5
    return A


def im_selector(m: int, a: int, b: int) -> np.ndarray:
    """Hermitian ``A`` with ``Tr(A X) = Im X[a, b]``."""
    A = np.zeros((m, m), dtype=complex)
    A[a, b] = 0.5j
    A[b, a] = -0.5j
    return A


def entry_value(X: np.ndarray, a: int, b: int):
    return X[a, a].real if a == b else X[a, b]


def centralized_sdp(problem: OpfProblem) -> hsdp.HermitianSdp:
    boxes = [(i, problem.lo[i], problem.hi[i]) for i in range(problem.n)]
    return hsdp.HermitianSdp(problem.M, [], boxes)
