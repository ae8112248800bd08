"""Dual (price-consensus) coordination.

Each clique keeps a private slack copy ``X_{ik,l}`` of every shared entry.
The copies of an entry are tied by ``|Omega_ik| - 1`` pairwise equalities
``X_{ik,left} = X_{ik,right}``, each priced by ``upsilon``.  A clique sees the
aggregate price ``sum(upsilon where it is left) - sum(upsilon where it is
right)`` added to ``M_ik / |Omega_ik|``; prices move by
``upsilon <- upsilon - alpha (X_right - X_left)``.

Averaging the copies gives a feasible point.  Plain averaging can break the
PSD-ness of a clique block when its diagonal copy moves, so each block is
rescaled by the congruence ``D X D`` with ``D = diag(sqrt(W_ii / X_ii))``,
which keeps it PSD (and rank-1 if it was) while matching the averaged
diagonal exactly.
"""

from __future__ import annotations

import enum
import math
import time
from dataclasses import dataclass, field

import numpy as np

from . import hsdp
from .network import MessageKind
from .problem import OpfProblem

__all__ = [
    "ChainScheme",
    "DualState",
    "DualRecord",
    "AsyncSchedule",
    "build_chains",
    "aggregate_price",
    "aggregate_prices",
    "build_dual_subproblem",
    "price_update",
    "initial_state",
    "average_feasible",
    "FeasiblePoint",
    "dual_iterate",
    "DRIFT_TOL",
]

# averaged diagonals may leave their box by solver noise only
DRIFT_TOL = 1e-7


class ChainScheme(str, enum.Enum):
    CHAIN = "chain"
    STAR = "star"


def build_chains(decomp, scheme=ChainScheme.CHAIN) -> dict:
    """Equalities ``(left, right)`` for every shared entry.

    ``chain`` links consecutive cliques of the sorted ``Omega``; ``star`` links
    the first clique to every other one.
    """
    scheme = ChainScheme(scheme)
    out = {}
    for key in decomp.shared_entries():
        om = decomp.omega[key]
        if scheme is ChainScheme.CHAIN:
            out[key] = tuple(zip(om[:-1], om[1:]))
        else:
            out[key] = tuple((om[0], l) for l in om[1:])
    return out


def aggregate_price(pairs, prices, l):
    """``sum(upsilon_r : left_r == l) - sum(upsilon_r : right_r == l)`` in r order."""
    acc = 0.0 * prices[0] if prices else 0.0
    for (left, right), u in zip(pairs, prices):
        if left == l:
            acc = acc + u
        elif right == l:
            acc = acc - u
    return acc


def aggregate_prices(chains: dict, prices: dict) -> dict:
    """``(l, entry) -> aggregate price`` for every copy."""
    out = {}
    for key, pairs in chains.items():
        cl = sorted({l for pr in pairs for l in pr})
        for l in cl:
            out[(l, key)] = aggregate_price(pairs, prices[key], l)
    return out


def price_update(u, x_left, x_right, alpha):
    """``u - alpha (x_right - x_left)``; complex prices update Re and Im alike."""
    return u - alpha * (x_right - x_left)


def build_dual_subproblem(problem: OpfProblem, agg: dict, l: int) -> hsdp.HermitianSdp:
    """Clique ``l`` with price-shifted shared coefficients; every diagonal boxed."""
    q, pos, unique, shared = problem.decomp.layouts[l]
    m = len(q)
    A0 = np.zeros((m, m), dtype=complex)
    for i, k in unique:
        a, b = pos[i], pos[k]
        A0[a, b] = problem.M[i, k]
        A0[b, a] = problem.M[k, i]
    for key in shared:
        i, k = key
        a, b = pos[i], pos[k]
        w = len(problem.decomp.omega[key])
        u = agg[(l, key)]
        if i == k:
            A0[a, a] = problem.M[i, i].real / w + float(np.real(u))
        else:
            v = problem.M[i, k] / w + complex(u)
            A0[a, b] = v
            A0[b, a] = np.conj(v)
    boxes = [(pos[i], problem.lo[i], problem.hi[i]) for i in q]
    return hsdp.HermitianSdp(A0, [], boxes)


@dataclass
class AsyncSchedule:
    """Round-robin activation of ``ceil(|C| / 2)`` cliques per iteration.

    ``delays[l] = k`` makes the results of clique ``l`` arrive ``k``
    iterations after it starts solving; a clique with a result in flight is
    not restarted.
    """

    fraction: float = 0.5
    delays: dict = field(default_factory=dict)

    def active(self, t: int, ncl: int) -> list:
        s = max(1, math.ceil(self.fraction * ncl))
        start = (t * s) % ncl
        return sorted({(start + j) % ncl for j in range(s)})


@dataclass
class DualState:
    chains: dict
    prices: dict  # entry -> list of prices, one per equality
    t: int = 0
    step: float = 1.0
    slack: dict = field(default_factory=dict)  # (l, entry) -> latest copy
    stamps: dict = field(default_factory=dict)  # l -> iteration its latest result started
    used: dict = field(default_factory=dict)  # (entry, r) -> (left stamp, right stamp)
    blocks: dict = field(default_factory=dict)  # l -> latest clique matrix
    values: dict = field(default_factory=dict)  # l -> latest subproblem optimum
    in_flight: list = field(default_factory=list)  # (arrival, l, started, X, value)


@dataclass
class DualRecord:
    t: int
    alpha: float
    objective: float  # feasible averaged objective
    dual_value: float  # sum of subproblem optima
    residuals: dict
    solve_times: list
    min_block_eig: float = math.nan
    flags: list = field(default_factory=list)


def initial_state(problem: OpfProblem, scheme=ChainScheme.CHAIN, step: float = 1.0) -> DualState:
    chains = build_chains(problem.decomp, scheme)
    prices = {}
    for key, pairs in chains.items():
        zero = 0.0 if key[0] == key[1] else 0j
        prices[key] = [zero] * len(pairs)
    return DualState(chains=chains, prices=prices, step=float(step))


@dataclass
class FeasiblePoint:
    blocks: dict  # l -> repaired clique matrix
    shared: dict  # entry -> averaged value
    objective: float
    min_block_eig: float
    flags: list


def _copy(X, pos, key):
    i, k = key
    return X[pos[i], pos[i]].real if i == k else complex(X[pos[i], pos[k]])


def average_feasible(problem: OpfProblem, blocks: dict) -> FeasiblePoint:
    """Average the copies of every shared entry and repair each clique block.

    Blocks are rescaled by a congruence to the averaged shared diagonal and
    to unique diagonals clipped into their boxes; averaged
    shared edges are then written in and, if that breaks PSD-ness, the
    block's remaining off-diagonal entries are shrunk toward zero by
    bisection.
    """
    d = problem.decomp
    ncl = len(d.cliques)
    missing = [l for l in range(ncl) if l not in blocks]
    if missing:
        raise KeyError(f"no solution for cliques {missing}")
    flags = []
    avg = {}
    for key in d.shared_entries():
        om = d.omega[key]
        i, k = key
        if i == k:
            acc = 0.0
            for l in om:
                acc += blocks[l][d.layouts[l][1][i], d.layouts[l][1][i]].real
            v = acc / len(om)
            lo, hi = problem.lo[i], problem.hi[i]
            drift = max(lo - v, v - hi, 0.0)
            if drift > DRIFT_TOL * max(1.0, hi):
                raise ValueError(f"averaged W[{i},{i}] = {v} leaves [{lo}, {hi}]")
            avg[key] = min(max(v, lo), hi)
    for key in d.shared_entries():
        i, k = key
        if i == k:
            continue
        acc = 0j
        om = d.omega[key]
        for l in om:
            X, pos = blocks[l], d.layouts[l][1]
            s = math.sqrt(avg[(i, i)] / X[pos[i], pos[i]].real) * math.sqrt(avg[(k, k)] / X[pos[k], pos[k]].real)
            acc += s * X[pos[i], pos[k]]
        avg[key] = acc / len(om)

    out = {}
    min_eig = math.inf
    for l in range(ncl):
        q, pos, unique, shared = d.layouts[l]
        X = np.array(blocks[l], dtype=complex)
        dg = np.ones(len(q))
        diag = X.diagonal().real.copy()
        for i in q:
            x = X[pos[i], pos[i]].real
            # unique diagonals only carry solver noise outside their box
            target = avg[(i, i)] if (i, i) in avg else min(max(x, problem.lo[i]), problem.hi[i])
            if target != x:
                dg[pos[i]] = math.sqrt(target / max(x, 1e-300))
            diag[pos[i]] = target
        X = dg[:, None] * X * dg[None, :]
        # the square roots are off by an ulp; write the targets back exactly
        X[np.diag_indices(len(q))] = diag
        edges = [key for key in shared if key[0] != key[1]]
        if edges:
            mask = np.ones(X.shape, dtype=bool)
            np.fill_diagonal(mask, False)
            for i, k in edges:
                a, b = pos[i], pos[k]
                X[a, b] = avg[(i, k)]
                X[b, a] = np.conj(avg[(i, k)])
                mask[a, b] = mask[b, a] = False
            X = _shrink_to_psd(X, mask, l, flags)
        X = 0.5 * (X + X.conj().T)
        min_eig = min(min_eig, float(np.linalg.eigvalsh(X)[0]))
        out[l] = X
    obj = 0.0
    for l in range(ncl):
        q, pos, unique, shared = d.layouts[l]
        X = out[l]
        for i, k in unique:
            a, b = pos[i], pos[k]
            if i == k:
                obj += problem.M[i, i].real * X[a, a].real
            else:
                obj += 2.0 * float(np.real(np.conj(problem.M[i, k]) * X[a, b]))
    for key, v in sorted(avg.items()):
        i, k = key
        obj += problem.M[i, i].real * v if i == k else 2.0 * float(np.real(np.conj(problem.M[i, k]) * v))
    return FeasiblePoint(out, avg, float(obj), min_eig, flags)


def _shrink_to_psd(X, mask, l, flags, tol=1e-12):
    def ok(s):
        Y = np.where(mask, s * X, X)
        return np.linalg.eigvalsh(0.5 * (Y + Y.conj().T))[0] >= -tol * max(1.0, np.abs(np.diag(Y)).max())

    if ok(1.0):
        return X
    if not ok(0.0):
        flags.append(f"clique {l}: averaged shared entries are not PSD-completable")
        return X
    lo, hi = 0.0, 1.0
    for _ in range(50):
        mid = 0.5 * (lo + hi)
        lo, hi = (mid, hi) if ok(mid) else (lo, mid)
    flags.append(f"clique {l}: off-diagonal entries shrunk by {lo:.6f}")
    return np.where(mask, lo * X, X)


def _solve(problem, agg, l, tol, backend):
    sdp = build_dual_subproblem(problem, agg, l)
    t0 = time.thread_time()
    sol = hsdp.solve(sdp, tol=tol, backend=backend)
    return sol, time.thread_time() - t0


def dual_iterate(problem: OpfProblem, state: DualState, transport, tol: float = 1e-8,
                 backend=None, schedule: AsyncSchedule | None = None) -> tuple[DualState, DualRecord]:
    """One round: publish prices, solve cliques, collect copies, move prices.

    Without a schedule every clique solves and every price moves
    (synchronous).  With an :class:`AsyncSchedule` only the active cliques
    solve, results may arrive late, and an equality updates as soon as both
    of its copies are newer than at its previous update.
    """
    d = problem.decomp
    ncl = len(d.cliques)
    coord, solver = problem.coord.coordinator, problem.coord.solver
    t = state.t
    busy = {l for _, l, *_ in state.in_flight}
    if schedule is None:
        active = list(range(ncl))
    else:
        active = [l for l in schedule.active(t, ncl) if l not in busy]

    agg = aggregate_prices(state.chains, state.prices)
    for l in active:
        for key in d.layouts[l][3]:
            transport.post(coord[key], solver[l], MessageKind.PRICE, (key, l), agg[(l, key)])
    transport.flush()
    times = [0.0] * ncl
    in_flight = list(state.in_flight)
    for l in active:
        local = {(l, key): transport.take(solver[l], MessageKind.PRICE, (key, l))
                 for key in d.layouts[l][3]}
        sol, dt = _solve(problem, local, l, tol, backend)
        times[l] = dt
        delay = 0 if schedule is None else int(schedule.delays.get(l, 0))
        in_flight.append((t + delay, l, t, sol.X, sol.objective_value, sol.status))

    arrived = sorted((x for x in in_flight if x[0] <= t), key=lambda x: x[1])
    in_flight = [x for x in in_flight if x[0] > t]
    slack = dict(state.slack)
    stamps = dict(state.stamps)
    blocks = dict(state.blocks)
    values = dict(state.values)
    flags = []
    for _, l, started, X, value, status in arrived:
        if status is not hsdp.SdpStatus.OPTIMAL:
            flags.append(f"clique {l}: solver status {status.value}")
        q, pos, _, shared = d.layouts[l]
        for key in shared:
            transport.post(solver[l], coord[key], MessageKind.SLACK, (key, l), _copy(X, pos, key))
        blocks[l], values[l], stamps[l] = X, value, started
    transport.flush()
    for _, l, *_ in arrived:
        for key in d.layouts[l][3]:
            slack[(l, key)] = transport.take(coord[key], MessageKind.SLACK, (key, l))

    alpha = state.step
    prices = {key: list(v) for key, v in state.prices.items()}
    used = dict(state.used)
    residuals = {}
    for key in sorted(state.chains):
        for r, (left, right) in enumerate(state.chains[key]):
            if left not in stamps or right not in stamps:
                continue
            sl, sr = stamps[left], stamps[right]
            prev = used.get((key, r))
            xl, xr = slack[(left, key)], slack[(right, key)]
            residuals[(key, r)] = abs(xr - xl)
            if prev is not None and (sl <= prev[0] or sr <= prev[1]):
                continue
            prices[key][r] = price_update(prices[key][r], xl, xr, alpha)
            used[(key, r)] = (sl, sr)

    if len(blocks) == ncl:
        fp = average_feasible(problem, blocks)
        objective, min_eig = fp.objective, fp.min_block_eig
        flags.extend(fp.flags)
        dual_value = float(sum(values[l] for l in range(ncl)))
    else:
        objective = min_eig = dual_value = math.nan

    t1 = t + 1
    new_state = DualState(
        chains=state.chains, prices=prices, t=t1, step=alpha / t1, slack=slack,
        stamps=stamps, used=used, blocks=blocks, values=values, in_flight=in_flight,
    )
    record = DualRecord(
        t=t, alpha=alpha, objective=float(objective), dual_value=dual_value,
        residuals={f"{k[0][0]},{k[0][1]}:{k[1]}": float(v) for k, v in residuals.items()},
        solve_times=times, min_block_eig=float(min_eig), flags=flags,
    )
    return new_state, record
