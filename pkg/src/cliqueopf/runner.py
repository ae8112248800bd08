"""End-to-end solves, timing and message accounting, scaling benchmark."""

from __future__ import annotations

import csv
import enum
import json
import math
import time
import warnings
from dataclasses import asdict, dataclass, field

import numpy as np

from . import dual_decomp, hsdp, primal_decomp
from .network import LocalTransport, MessageKind, SimNetwork
from .netcase import PowerCase, generate_radial
from .problem import OpfProblem, centralized_sdp
from .quadcost import InnerResult, QuadraticCostSpec, centralized_inner, outer_loop
from .recover import (
    RankDiagnostic,
    RecoveryError,
    VoltageSolution,
    assemble_W,
    rank_check,
    recover_voltages,
)

__all__ = [
    "SCHEMA_VERSION",
    "Mode",
    "StopRule",
    "RunConfig",
    "RunReport",
    "solve_centralized",
    "run",
    "benchmark_scaling",
    "write_scaling_csv",
    "linear_fit_r2",
]

SCHEMA_VERSION = "1.0"


class Mode(str, enum.Enum):
    CENTRALIZED = "centralized"
    CUMULATIVE_PRIMAL = "cumulative-primal"
    CUMULATIVE_DUAL = "cumulative-dual"
    DISTRIBUTED_PRIMAL = "distributed-primal"
    DISTRIBUTED_DUAL = "distributed-dual"

    @property
    def algorithm(self) -> str | None:
        if self is Mode.CENTRALIZED:
            return None
        return self.value.split("-")[1]

    @property
    def distributed(self) -> bool:
        return self.value.startswith("distributed")


class StopRule(str, enum.Enum):
    REFERENCE = "reference"
    RESIDUAL = "residual"


@dataclass
class RunConfig:
    """Run parameters.

    ``delays`` maps a clique index to the number of iterations its results
    arrive late (async dual only).  When ``async_mode`` is set and no delays
    are given, ``seed`` picks one clique delayed by ``default_delay``.
    """

    mode: Mode = Mode.CENTRALIZED
    max_iters: int = 100
    rel_tol: float = 1e-2
    step: float = 1.0
    chain: str = "chain"
    async_mode: bool = False
    async_fraction: float = 0.5
    delays: dict | None = None
    default_delay: int = 1
    seed: int = 0
    sdp_tol: float = 1e-8
    stop: StopRule = StopRule.REFERENCE
    residual_tol: float = 1e-6
    reference_bus: int | None = None
    quadratic: bool | None = None  # None: whenever some c2 > 0
    max_outer: int = 50
    backend: str | None = None
    keep_iterates: bool = False

    def __post_init__(self):
        self.mode = Mode(self.mode)
        self.stop = StopRule(self.stop)
        self.chain = dual_decomp.ChainScheme(self.chain).value
        if self.max_iters < 1:
            raise ValueError(f"max_iters must be >= 1, got {self.max_iters}")
        if not self.rel_tol > 0:
            raise ValueError(f"rel_tol must be > 0, got {self.rel_tol}")
        if not self.step > 0:
            raise ValueError(f"step must be > 0, got {self.step}")
        if not 0 < self.async_fraction <= 1:
            raise ValueError(f"async_fraction must be in (0, 1], got {self.async_fraction}")
        if self.async_mode and self.mode.algorithm != "dual":
            raise ValueError("async mode is only defined for the dual algorithm")

    def to_dict(self) -> dict:
        d = asdict(self)
        d["mode"] = self.mode.value
        d["stop"] = self.stop.value
        if self.delays is not None:
            d["delays"] = {str(k): v for k, v in sorted(self.delays.items())}
        return d


@dataclass
class RunReport:
    mode: str
    config: dict
    n: int
    cliques: list
    reference_objective: float | None
    objective: float
    converged: bool
    n_iterations: int
    iterations: list = field(default_factory=list)
    timing: dict = field(default_factory=dict)
    messages: dict = field(default_factory=dict)
    voltages: VoltageSolution | None = None
    rank: RankDiagnostic | None = None
    status: str = "ok"
    warnings: list = field(default_factory=list)
    outer: list | None = None
    W: np.ndarray | None = field(default=None, repr=False)
    iterates: list | None = field(default=None, repr=False)

    def to_dict(self, timing: bool = True) -> dict:
        d = {
            "schema_version": SCHEMA_VERSION,
            "mode": self.mode,
            "config": self.config,
            "n": self.n,
            "cliques": [[v + 1 for v in q] for q in self.cliques],
            "status": self.status,
            "converged": self.converged,
            "n_iterations": self.n_iterations,
            "reference_objective": _num(self.reference_objective),
            "objective": _num(self.objective),
            "iterations": self.iterations,
            "messages": self.messages,
            "voltages": None if self.voltages is None else self.voltages.to_dict(),
            "rank": None if self.rank is None else self.rank.to_dict(),
            "warnings": list(self.warnings),
        }
        if self.outer is not None:
            d["outer"] = self.outer
        if timing:
            d["timing"] = self.timing
        return d

    def to_json(self, timing: bool = True) -> str:
        return json.dumps(self.to_dict(timing), indent=2) + "\n"


def _num(x):
    if x is None:
        return None
    x = float(x)
    return x if math.isfinite(x) else str(x)


def _rel(obj, ref):
    return abs(obj - ref) / max(abs(ref), 1e-12)


# --- centralized ---------------------------------------------------------

def _centralized(problem, config):
    t0 = time.thread_time()
    sol = hsdp.solve(centralized_sdp(problem), tol=config.sdp_tol, backend=config.backend)
    return sol, time.thread_time() - t0


def _finish(report, W, case, config):
    """Attach voltages and rank diagnostics for a finite solution."""
    report.W = W
    report.rank = rank_check(W)
    with warnings.catch_warnings(record=True) as caught:
        warnings.simplefilter("always")
        try:
            report.voltages = recover_voltages(W, case, config.reference_bus)
        except RecoveryError as exc:
            report.warnings.append(f"voltage recovery failed: {exc}")
    report.warnings.extend(str(w.message) for w in caught)


def solve_centralized(case: PowerCase, config: RunConfig | None = None) -> RunReport:
    """One full-size SDP; its objective is the reference for decomposed runs."""
    config = config or RunConfig()
    problem = OpfProblem.from_case(case)
    quadratic = _is_quadratic(case, config)
    outer = None
    if quadratic:
        t0 = time.thread_time()
        res = outer_loop(QuadraticCostSpec.from_case(case),
                         centralized_inner(problem, config.sdp_tol, config.backend),
                         max_outer=config.max_outer)
        dt = time.thread_time() - t0
        W, obj, status = res.W, res.objective, "ok" if res.converged else "outer_not_converged"
        outer = res.trace
    else:
        sol, dt = _centralized(problem, config)
        W, obj, status = sol.X, sol.objective_value, sol.status.value
        if sol.status is not hsdp.SdpStatus.OPTIMAL:
            raise RuntimeError(f"centralized solve failed: {sol.status.value}")
    report = RunReport(
        mode=Mode.CENTRALIZED.value, config=config.to_dict(), n=case.n,
        cliques=[list(q) for q in problem.cliques], reference_objective=obj,
        objective=obj, converged=status in ("ok", "optimal"), n_iterations=1,
        iterations=[{"t": 0, "objective": obj}],
        timing={"centralized_s": dt, "cumulative_s": dt, "distributed_s": dt},
        messages={"total": 0, "by_kind": {}, "one_hop_fraction": 1.0},
        status=status, outer=outer,
    )
    _finish(report, W, case, config)
    return report


def _is_quadratic(case, config):
    if config.quadratic is not None:
        return bool(config.quadratic)
    return bool(np.any(case.c2 > 0))


# --- decomposed ------------------------------------------------------------

def _send_case_data(problem, transport, algorithm):
    """Members ship their bus and line data to the clique's solver bus."""
    d = problem.decomp
    solver = problem.coord.solver
    for l, (q, pos, unique, shared) in enumerate(d.layouts):
        if algorithm == "primal":
            needed = sorted({v for e in unique for v in e})
        else:
            needed = list(q)
        for v in needed:
            transport.post(v, solver[l], MessageKind.CASE_DATA, (v, l), v)
    transport.flush()
    for l, (q, pos, unique, shared) in enumerate(d.layouts):
        needed = sorted({v for e in unique for v in e}) if algorithm == "primal" else list(q)
        for v in needed:
            transport.take(solver[l], MessageKind.CASE_DATA, (v, l))


def _schedule(problem, config):
    if not config.async_mode:
        return None
    delays = config.delays
    if delays is None:
        rng = np.random.default_rng(config.seed)
        delays = {int(rng.integers(len(problem.cliques))): config.default_delay}
    return dual_decomp.AsyncSchedule(config.async_fraction, dict(delays))


@dataclass
class _Outcome:
    converged: bool
    objective: float
    iterations: list
    cumulative: float
    distributed: float
    W: np.ndarray | None
    flags: list
    iterates: list | None
    lower: float  # dual value for the dual algorithm, else the objective


class _Decomposed:
    """Inner-loop driver; keeps its state between calls for warm starts."""

    def __init__(self, problem, config, transport):
        self.problem = problem
        self.config = config
        self.transport = transport
        self.algorithm = config.mode.algorithm
        self.schedule = _schedule(problem, config)
        self.state = None

    def _fresh(self, problem):
        c = self.config
        if self.algorithm == "primal":
            if self.state is None:
                return primal_decomp.initial_state(problem, c.step)
            s = self.state
            return primal_decomp.PrimalState(shared=dict(s.shared), step=c.step)
        if self.state is None:
            return dual_decomp.initial_state(problem, c.chain, c.step)
        s = self.state
        return dual_decomp.DualState(chains=s.chains, prices={k: list(v) for k, v in s.prices.items()},
                                     step=c.step)

    def solve(self, problem, reference) -> _Outcome:
        c = self.config
        state = self._fresh(problem)
        records, iterates, flags = [], [] if c.keep_iterates else None, []
        cumulative = distributed = 0.0
        converged = False
        best = None
        for _ in range(c.max_iters):
            if self.algorithm == "primal":
                prev = dict(state.shared)
                state, rec = primal_decomp.primal_iterate(problem, state, self.transport,
                                                          c.sdp_tol, c.backend)
                residual = max((abs(state.shared[k] - prev[k]) for k in prev), default=0.0)
                entry = {"t": rec.t, "alpha": rec.alpha, "objective": _num(rec.objective),
                         "residual": residual, "backtracks": rec.backtracks}
                lower = rec.objective
                if iterates is not None:
                    iterates.append({"shared": dict(state.shared), "objective": rec.objective})
            else:
                state, rec = dual_decomp.dual_iterate(problem, state, self.transport,
                                                      c.sdp_tol, c.backend, self.schedule)
                residual = max(rec.residuals.values(), default=0.0)
                entry = {"t": rec.t, "alpha": rec.alpha, "objective": _num(rec.objective),
                         "dual_value": _num(rec.dual_value), "residual": residual,
                         "min_block_eig": _num(rec.min_block_eig)}
                lower = rec.dual_value
                flags.extend(rec.flags)
                if iterates is not None:
                    iterates.append({"prices": {k: list(v) for k, v in state.prices.items()},
                                     "objective": rec.objective})
            cumulative += sum(rec.solve_times)
            distributed += max(rec.solve_times, default=0.0)
            obj = rec.objective
            if reference is not None and math.isfinite(obj):
                entry["rel_error"] = _rel(obj, reference)
            records.append(entry)
            if math.isfinite(obj):
                best = (state, obj, lower)
            if c.stop is StopRule.REFERENCE:
                done = math.isfinite(obj) and _rel(obj, reference) <= c.rel_tol
            else:
                done = math.isfinite(obj) and len(records) > 1 and residual <= c.residual_tol
            if done:
                converged = True
                break
        self.state = state
        W = None
        obj = lower = math.nan
        if best is not None:
            st, obj, lower = best
            W = self._assemble(problem, st, flags)
        return _Outcome(converged, obj, records, cumulative, distributed, W, flags, iterates, lower)

    def _assemble(self, problem, state, flags):
        d = problem.decomp
        if self.algorithm == "primal":
            a = assemble_W(d, state.blocks, state.solved)
        else:
            fp = dual_decomp.average_feasible(problem, state.blocks)
            a = assemble_W(d, fp.blocks, fp.shared)
        flags.extend(a.flags)
        return a.W


def run(case: PowerCase, config: RunConfig) -> RunReport:
    """Solve ``case`` in ``config.mode``.

    Decomposed modes iterate until the assembled feasible objective is within
    ``rel_tol`` of the centralized reference (or, with the residual rule,
    until the consensus residual falls below ``residual_tol``) or
    ``max_iters`` is reached.  Non-convergence is reported, not raised.
    """
    if config.mode is Mode.CENTRALIZED:
        return solve_centralized(case, config)
    problem = OpfProblem.from_case(case)
    distributed = config.mode.distributed
    transport = SimNetwork(case.adjacency()) if distributed else LocalTransport()
    _send_case_data(problem, transport, config.mode.algorithm)
    driver = _Decomposed(problem, config, transport)
    quadratic = _is_quadratic(case, config)
    use_reference = config.stop is StopRule.REFERENCE

    warn = []
    outer = None
    t_central = 0.0
    if not quadratic:
        reference = None
        if use_reference:
            sol, t_central = _centralized(problem, config)
            reference = sol.objective_value
        out = driver.solve(problem, reference)
        cumulative, dist = out.cumulative, out.distributed
        records, converged, objective, W = out.iterations, out.converged, out.objective, out.W
        warn.extend(out.flags)
        iterates = out.iterates
        n_iter = len(records)
    else:
        spec = QuadraticCostSpec.from_case(case)
        acc = {"cum": 0.0, "dist": 0.0, "central": 0.0, "iters": 0, "ok": True}
        records, iterates = [], [] if config.keep_iterates else None

        def inner(costs):
            p = problem.with_costs(costs)
            ref = None
            if use_reference:
                sol, dt = _centralized(p, config)
                acc["central"] += dt
                ref = sol.objective_value
            o = driver.solve(p, ref)
            acc["cum"] += o.cumulative
            acc["dist"] += o.distributed
            acc["iters"] += len(o.iterations)
            acc["ok"] &= o.converged
            records.extend(o.iterations)
            if iterates is not None:
                iterates.extend(o.iterates)
            warn.extend(o.flags)
            return InnerResult(o.lower, o.W, o.converged and o.W is not None, len(o.iterations))

        reference = None
        if use_reference:
            cref = solve_centralized(case, RunConfig(sdp_tol=config.sdp_tol, backend=config.backend,
                                                     max_outer=config.max_outer))
            reference = cref.objective
            t_central = cref.timing["centralized_s"]
        res = outer_loop(spec, inner, max_outer=config.max_outer, gap_tol=config.rel_tol)
        outer = res.trace
        W, objective = res.W, res.objective
        cumulative, dist = acc["cum"], acc["dist"]
        n_iter = acc["iters"]
        converged = res.converged and res.aborted is None
        if use_reference and reference is not None:
            converged = converged and _rel(objective, reference) <= config.rel_tol
        if res.aborted:
            warn.append(f"outer loop aborted: {res.aborted}")
        if res.degenerate:
            warn.append("inner optimum not unique; objective from combined inner solutions")

    messages = {
        "total": transport.total,
        "by_kind": dict(sorted(transport.counts.items())),
        "one_hop_fraction": transport.one_hop_fraction(),
    }
    report = RunReport(
        mode=config.mode.value, config=config.to_dict(), n=case.n,
        cliques=[list(q) for q in problem.cliques], reference_objective=reference,
        objective=objective, converged=converged, n_iterations=n_iter, iterations=records,
        timing={"centralized_s": t_central, "cumulative_s": cumulative, "distributed_s": dist},
        messages=messages, status="converged" if converged else "not_converged",
        warnings=warn, outer=outer, iterates=iterates,
    )
    if W is not None and np.all(np.isfinite(W)):
        _finish(report, W, case, config)
    return report


# --- scaling benchmark ---------------------------------------------------

def benchmark_scaling(sizes, seeds_per_size: int, config: RunConfig, tree: bool = False) -> list[dict]:
    """Mean cumulative and distributed solver time and success rate per size.

    Instances are ``generate_radial(n, seed)`` for ``seed < seeds_per_size``.
    """
    rows = []
    if seeds_per_size <= 0:
        return rows
    for n in sizes:
        if n < 2:
            raise ValueError(f"sizes must be >= 2, got {n}")
        cum, dist, conv = [], [], []
        for seed in range(seeds_per_size):
            r = run(generate_radial(n, seed, tree=tree), config)
            cum.append(r.timing["cumulative_s"])
            dist.append(r.timing["distributed_s"])
            conv.append(r.converged)
        conv = np.array(conv)
        ok_cum = np.array(cum)[conv]
        ok_dist = np.array(dist)[conv]
        rows.append({
            "n": n, "mode": config.mode.value,
            "mean_cumulative_s": float(np.mean(cum)),
            "mean_distributed_s": float(np.mean(dist)),
            "success_rate": float(conv.mean()),
            # informational: means over converged runs only
            "converged_mean_cumulative_s": float(ok_cum.mean()) if conv.any() else math.nan,
            "converged_mean_distributed_s": float(ok_dist.mean()) if conv.any() else math.nan,
        })
    return rows


CSV_COLUMNS = ["n", "mode", "mean_cumulative_s", "mean_distributed_s", "success_rate"]


def write_scaling_csv(rows: list[dict], path) -> None:
    """CSV table plus ``<path>.plot.json`` with one series per column."""
    with open(path, "w", newline="") as f:
        w = csv.DictWriter(f, fieldnames=CSV_COLUMNS, extrasaction="ignore")
        w.writeheader()
        for row in rows:
            w.writerow(row)
    series = [c for c in (rows[0] if rows else {}) if c not in ("n", "mode")]
    plot = {"x": "n", "series": {c: [_num(row[c]) for row in rows] for c in series},
            "n": [row["n"] for row in rows], "mode": rows[0]["mode"] if rows else None}
    with open(f"{path}.plot.json", "w") as f:
        json.dump(plot, f, indent=2)
        f.write("\n")


def linear_fit_r2(x, y) -> float:
    """Coefficient of determination of the least-squares line through ``(x, y)``."""
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    A = np.vstack([x, np.ones_like(x)]).T
    coef, *_ = np.linalg.lstsq(A, y, rcond=None)
    ss_res = float(np.sum((y - A @ coef) ** 2))
    ss_tot = float(np.sum((y - y.mean()) ** 2))
    return 1.0 if ss_tot == 0 else 1.0 - ss_res / ss_tot
