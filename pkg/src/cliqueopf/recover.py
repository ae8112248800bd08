"""Voltage recovery, rank diagnostics and assembly of clique solutions."""

from __future__ import annotations

import math
import warnings
from collections import deque
from dataclasses import dataclass, field

import numpy as np

from .netcase import PowerCase

__all__ = [
    "VoltageSolution",
    "RankDiagnostic",
    "AssembledW",
    "RecoveryError",
    "RecoveryWarning",
    "reference_bus",
    "rank_check",
    "recover_voltages",
    "assemble_W",
    "TREE_RANK_TOL",
    "LOOSE_RANK_TOL",
]

TREE_RANK_TOL = 1e-5
LOOSE_RANK_TOL = 1e-2
EDGE_TOL = 1e-10
CYCLE_TOL = 1e-4


class RecoveryError(ValueError):
    pass


class RecoveryWarning(UserWarning):
    pass


@dataclass
class RankDiagnostic:
    sigma1: float
    sigma2: float

    @property
    def ratio(self) -> float:
        return 0.0 if self.sigma1 == 0.0 else self.sigma2 / self.sigma1

    def to_dict(self) -> dict:
        return {"sigma1": self.sigma1, "sigma2": self.sigma2, "ratio": self.ratio}


@dataclass
class VoltageSolution:
    magnitudes: np.ndarray
    angles: np.ndarray
    injections: np.ndarray
    reference: int
    method: str = "propagation"
    warnings: list = field(default_factory=list)

    @property
    def v(self) -> np.ndarray:
        return self.magnitudes * np.exp(1j * self.angles)

    def to_dict(self) -> dict:
        return {
            "reference_bus": self.reference + 1,
            "method": self.method,
            "magnitude": self.magnitudes.tolist(),
            "angle": self.angles.tolist(),
            "injection": self.injections.tolist(),
            "warnings": list(self.warnings),
        }


def reference_bus(case: PowerCase) -> int:
    """Lowest-index bus with a positive linear cost (a generator), else bus 0."""
    for k, b in enumerate(case.buses):
        if b.c1 > 0:
            return k
    return 0


def rank_check(W: np.ndarray) -> RankDiagnostic:
    s = np.linalg.svd(np.asarray(W), compute_uv=False)
    s1 = float(s[0]) if len(s) else 0.0
    s2 = float(s[1]) if len(s) > 1 else 0.0
    return RankDiagnostic(s1, s2)


def _injections(W, case):
    Y = case._Y
    return np.real(np.sum(W * Y.conj(), axis=1))


def recover_voltages(W: np.ndarray, case: PowerCase, reference: int | None = None) -> VoltageSolution:
    """Bus voltages from ``W``.

    Magnitudes are ``sqrt(W_ii)``; angles are propagated breadth-first over the
    lines from the reference bus with ``theta_k = theta_i - arg W_ik``.  When
    ``W`` is not numerically rank one (``sigma2/sigma1 > 1e-5``), the scaled
    top eigenvector is used instead and a warning is attached.
    """
    W = np.asarray(W, dtype=complex)
    W = 0.5 * (W + W.conj().T)
    n = case.n
    ref = reference_bus(case) if reference is None else int(reference)
    notes = []
    for i, k in case.edges():
        if abs(W[i, k]) < EDGE_TOL:
            raise RecoveryError(f"line {i + 1}-{k + 1}: |W_ik| = {abs(W[i, k]):.2e}, angle undefined")
    rank = rank_check(W)
    if rank.ratio > TREE_RANK_TOL:
        msg = (f"relaxation not tight: sigma2/sigma1 = {rank.ratio:.3e}; "
               "voltages taken from the top eigenvector")
        if rank.ratio > LOOSE_RANK_TOL:
            msg += " (far from rank one; the voltages are indicative only)"
        warnings.warn(msg, RecoveryWarning, stacklevel=2)
        notes.append(msg)
        w, U = np.linalg.eigh(W)
        v = math.sqrt(max(w[-1], 0.0)) * U[:, -1]
        v = v * np.exp(-1j * np.angle(v[ref]))
        v[ref] = abs(v[ref])
        P = _injections(np.outer(v, v.conj()), case)
        return VoltageSolution(np.abs(v), np.angle(v), P, ref, "eigenvector", notes)

    mag = np.sqrt(np.clip(W.diagonal().real, 0.0, None))
    theta = np.full(n, np.nan)
    theta[ref] = 0.0
    adj = case.adjacency()
    q = deque([ref])
    while q:
        i = q.popleft()
        for k in sorted(adj[i]):
            if np.isnan(theta[k]):
                theta[k] = theta[i] - np.angle(W[i, k])
                q.append(k)
    worst = 0.0
    for i, k in case.edges():
        r = theta[i] - theta[k] - np.angle(W[i, k])
        worst = max(worst, abs(math.remainder(r, 2 * math.pi)))
    if worst > CYCLE_TOL:
        msg = f"angle cycle inconsistency {worst:.3e} rad"
        warnings.warn(msg, RecoveryWarning, stacklevel=2)
        notes.append(msg)
    theta = np.array([math.remainder(t, 2 * math.pi) for t in theta])
    return VoltageSolution(mag, theta, _injections(W, case), ref, "propagation", notes)


@dataclass
class AssembledW:
    W: np.ndarray
    completed: bool
    max_conflict: float
    flags: list = field(default_factory=list)


def assemble_W(decomp, blocks: dict, shared: dict | None = None,
               conflict_tol: float = 1e-6) -> AssembledW:
    """Full matrix from clique blocks.

    Shared entries come from ``shared`` when given, otherwise from the average
    of the block copies.  Entries outside every clique get the rank-one
    completion when every block is numerically rank one, else stay zero.
    """
    n = decomp.n
    W = np.zeros((n, n), dtype=complex)
    flags = []
    conflict = 0.0
    acc = {}
    for l, (q, pos, unique, sh) in enumerate(decomp.layouts):
        X = blocks[l]
        for i, k in unique:
            W[i, k] = X[pos[i], pos[k]]
            W[k, i] = X[pos[k], pos[i]]
        for key in sh:
            acc.setdefault(key, []).append(X[pos[key[0]], pos[key[1]]])
    for key, vals in sorted(acc.items()):
        i, k = key
        conflict = max(conflict, float(max(abs(v - vals[0]) for v in vals)))
        v = shared[key] if shared is not None else sum(vals) / len(vals)
        W[i, k] = v
        W[k, i] = np.conj(v)
    if shared is None and conflict > conflict_tol:
        flags.append(f"shared copies disagree by {conflict:.3e}; averaged")
    upper = np.triu(W, 1)
    W = upper + upper.conj().T + np.diag(W.diagonal().real)

    completed = True
    for l in range(len(decomp.cliques)):
        if rank_check(blocks[l]).ratio > TREE_RANK_TOL:
            completed = False
    if completed:
        W = _rank_one_complete(W, decomp)
    else:
        flags.append("blocks not rank one; entries outside cliques left at zero")
    return AssembledW(W, completed, conflict, flags)


def _rank_one_complete(W, decomp):
    n = decomp.n
    inside = np.zeros((n, n), dtype=bool)
    for q in decomp.cliques:
        inside[np.ix_(q, q)] = True
    if inside.all():
        return W
    adj = decomp.completion.graph.adjacency()
    mag = np.sqrt(np.clip(W.diagonal().real, 0.0, None))
    theta = np.full(n, np.nan)
    theta[0] = 0.0
    q = deque([0])
    while q:
        i = q.popleft()
        for k in sorted(adj[i]):
            if np.isnan(theta[k]):
                theta[k] = theta[i] - np.angle(W[i, k])
                q.append(k)
    v = mag * np.exp(1j * np.nan_to_num(theta))
    W = np.where(inside, W, np.outer(v, v.conj()))
    # mirror the upper triangle so the result is Hermitian bit for bit
    upper = np.triu(W, 1)
    return upper + upper.conj().T + np.diag(W.diagonal().real)
