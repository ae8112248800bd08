"""Primal (resource-allocation) coordination.

Shared entries of ``W`` are fixed by their coordinator buses; every clique
solves its own SDP over the unique entries with the shared ones pinned, and
returns the multipliers of the pinning equalities.  Since ``d value / d b``
equals the multiplier under the :mod:`cliqueopf.hsdp` convention, the master
subgradient for a shared diagonal is ``sum_l lam_l + M_ii`` and for the real
and imaginary parts of a shared edge ``sum_l lam_l + 2 Re/Im M_ik`` (fill-in
edges have ``M_ik = 0``).  Diagonals are projected onto their boxes.
"""

from __future__ import annotations

import math
import time
from dataclasses import dataclass, field

import numpy as np

from . import hsdp
from .network import MessageKind
from .problem import OpfProblem, im_selector, re_selector

__all__ = [
    "PrimalState",
    "PrimalRecord",
    "SubResult",
    "initial_state",
    "build_subproblem",
    "solve_subproblem",
    "entry_gradient",
    "update_entry",
    "master_update",
    "shared_term",
    "primal_iterate",
    "MAX_BACKTRACK",
]

MAX_BACKTRACK = 10


@dataclass
class PrimalState:
    shared: dict  # (i, k) -> float for i == k, complex otherwise
    t: int = 0
    step: float = 1.0
    multipliers: dict = field(default_factory=dict)  # (l, entry) -> float | complex
    pending: dict = field(default_factory=dict)  # entry -> (old value, gradient, alpha)
    blocks: dict = field(default_factory=dict)  # l -> latest clique matrix
    solved: dict = field(default_factory=dict)  # allocation the blocks were solved at


@dataclass
class PrimalRecord:
    t: int
    alpha: float
    objective: float
    solve_times: list
    backtracks: int = 0
    frozen: list = field(default_factory=list)
    statuses: list = field(default_factory=list)


@dataclass
class SubResult:
    X: np.ndarray
    multipliers: dict  # entry -> float (diagonal) or complex (Re + j Im)
    value: float
    status: hsdp.SdpStatus
    seconds: float


def initial_state(problem: OpfProblem, step: float = 1.0) -> PrimalState:
    """Shared diagonals at the box midpoint, shared edges at zero."""
    shared = {}
    for i, k in problem.decomp.shared_entries():
        shared[(i, k)] = 0.5 * (problem.lo[i] + problem.hi[i]) if i == k else 0j
    return PrimalState(shared=shared, step=float(step))


def _layout(decomp, l):
    return decomp.layouts[l]


def build_subproblem(problem: OpfProblem, shared_values: dict, l: int):
    """Clique ``l`` subproblem and the keys of its equality rows.

    Returns ``(sdp, rows)`` where ``rows[j]`` is ``(entry, part)`` with part
    ``"d"`` (diagonal), ``"re"`` or ``"im"``.
    """
    q, pos, unique, shared = _layout(problem.decomp, l)
    m = len(q)
    A0 = np.zeros((m, m), dtype=complex)
    boxes = []
    for i, k in unique:
        a, b = pos[i], pos[k]
        A0[a, b] = problem.M[i, k]
        A0[b, a] = problem.M[k, i]
        if i == k:
            boxes.append((a, problem.lo[i], problem.hi[i]))
    eqs, rows = [], []
    for key in shared:
        if key not in shared_values:
            raise KeyError(f"no value for shared entry {key} of clique {l}")
        i, k = key
        a, b = pos[i], pos[k]
        v = shared_values[key]
        if i == k:
            E = np.zeros((m, m), dtype=complex)
            E[a, a] = 1.0
            eqs.append((E, float(np.real(v))))
            rows.append((key, "d"))
        else:
            eqs.append((re_selector(m, a, b), float(np.real(v))))
            rows.append((key, "re"))
            eqs.append((im_selector(m, a, b), float(np.imag(v))))
            rows.append((key, "im"))
    return hsdp.HermitianSdp(A0, eqs, boxes), rows


def solve_subproblem(problem: OpfProblem, shared_values: dict, l: int,
                     tol: float = 1e-8, backend=None) -> SubResult:
    sdp, rows = build_subproblem(problem, shared_values, l)
    t0 = time.thread_time()
    sol = hsdp.solve(sdp, tol=tol, backend=backend)
    dt = time.thread_time() - t0
    lam = {}
    for (key, part), y in zip(rows, sol.eq_multipliers):
        if part == "d":
            lam[key] = float(y)
        elif part == "re":
            lam[key] = complex(y, 0.0) + lam.get(key, 0j)
        else:
            lam[key] = lam.get(key, 0j) + complex(0.0, y)
    return SubResult(sol.X, lam, sol.objective_value, sol.status, dt)


def shared_term(problem: OpfProblem, key, value) -> float:
    """Contribution of a shared entry (and its mirror) to ``Tr(M W)``."""
    i, k = key
    if i == k:
        return float(problem.M[i, i].real * np.real(value))
    return float(2.0 * np.real(np.conj(problem.M[i, k]) * value))


def entry_gradient(problem: OpfProblem, key, lams):
    """Master subgradient from the multipliers of every clique sharing ``key``.

    ``lams`` must be in increasing clique order so every transport sums in
    the same order.
    """
    i, k = key
    if i == k:
        g = 0.0
        for lam in lams:
            g += lam
        return g + float(problem.M[i, i].real)
    g = 0j
    for lam in lams:
        g += lam
    return g + 2.0 * complex(problem.M[i, k])


def update_entry(problem: OpfProblem, key, value, grad, alpha):
    i, k = key
    if i == k:
        return min(max(value - alpha * grad, problem.lo[i]), problem.hi[i])
    return complex(value.real - alpha * grad.real, value.imag - alpha * grad.imag)


def master_update(problem: OpfProblem, shared: dict, multipliers: dict, alpha: float) -> dict:
    """Synchronous projected subgradient step on every shared entry."""
    out = {}
    for key, value in shared.items():
        lams = [multipliers[(l, key)] for l in problem.decomp.omega[key]]
        out[key] = update_entry(problem, key, value, entry_gradient(problem, key, lams), alpha)
    return out


def _solve_round(problem, values, cliques, transport, tol, backend):
    coord, solver = problem.coord.coordinator, problem.coord.solver
    for l in cliques:
        for key in _layout(problem.decomp, l)[3]:
            transport.post(coord[key], solver[l], MessageKind.ALLOCATION, (key, l), values[key])
    transport.flush()
    out = {}
    for l in cliques:
        local = {key: transport.take(solver[l], MessageKind.ALLOCATION, (key, l))
                 for key in _layout(problem.decomp, l)[3]}
        out[l] = solve_subproblem(problem, local, l, tol, backend)
    return out


def primal_iterate(problem: OpfProblem, state: PrimalState, transport,
                   tol: float = 1e-8, backend=None) -> tuple[PrimalState, PrimalRecord]:
    """Solve all cliques at the current allocation, then update it once.

    Cliques reported infeasible trigger a step-back on the entries they
    share that moved in the previous update: the step is halved up to
    ``MAX_BACKTRACK`` times, after which those entries keep their previous
    value for this iteration.
    """
    d = problem.decomp
    ncl = len(d.cliques)
    values = dict(state.shared)
    res = _solve_round(problem, values, range(ncl), transport, tol, backend)
    times = [r.seconds for _, r in sorted(res.items())]
    backtracks = 0
    frozen = []
    bad = [l for l in range(ncl) if res[l].status is hsdp.SdpStatus.INFEASIBLE]
    retry = 0
    while bad and state.pending:
        moved = sorted({key for l in bad for key in _layout(d, l)[3] if key in state.pending})
        if not moved:
            break
        retry += 1
        backtracks += 1
        for key in moved:
            old, grad, alpha = state.pending[key]
            if retry > MAX_BACKTRACK:
                values[key] = old
                frozen.append(key)
            else:
                values[key] = update_entry(problem, key, old, grad, alpha * 0.5 ** retry)
        again = sorted({l for key in moved for l in d.omega[key]})
        redo = _solve_round(problem, values, again, transport, tol, backend)
        for l, r in redo.items():
            res[l] = r
            times[l] += r.seconds
        bad = [l for l in range(ncl) if res[l].status is hsdp.SdpStatus.INFEASIBLE]
        if retry > MAX_BACKTRACK:
            break

    coord, solver = problem.coord.coordinator, problem.coord.solver
    for l in range(ncl):
        for key in _layout(d, l)[3]:
            transport.post(solver[l], coord[key], MessageKind.MULTIPLIER, (key, l),
                           res[l].multipliers[key])
    transport.flush()
    multipliers = {}
    for key in sorted(values):
        for l in d.omega[key]:
            multipliers[(l, key)] = transport.take(coord[key], MessageKind.MULTIPLIER, (key, l))

    objective = sum(r.value for _, r in sorted(res.items()))
    for key in sorted(values):
        objective += shared_term(problem, key, values[key])
    if bad:
        objective = math.inf

    alpha = state.step
    pending = {}
    new_shared = {}
    for key in sorted(values):
        lams = [multipliers[(l, key)] for l in d.omega[key]]
        grad = entry_gradient(problem, key, lams)
        new_shared[key] = update_entry(problem, key, values[key], grad, alpha)
        pending[key] = (values[key], grad, alpha)
    t = state.t + 1
    new_state = PrimalState(
        shared=new_shared, t=t, step=alpha / t, multipliers=multipliers,
        pending=pending, blocks={l: r.X for l, r in res.items()}, solved=values,
    )
    record = PrimalRecord(
        t=state.t, alpha=alpha, objective=float(objective), solve_times=times,
        backtracks=backtracks, frozen=frozen,
        statuses=[res[l].status.value for l in range(ncl)],
    )
    return new_state, record
