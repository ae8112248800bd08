"""Outer gradient loop for quadratic generation costs.

With ``P_i = Tr(A_i W)`` the cost ``c2 P^2 + c1 P`` equals
``max_z (c1 - 2 sqrt(c2) z) P - z^2``, so the quadratic problem is
``max_z J(z)`` with

    J(z) = min_W  sum_i (c1_i - 2 sqrt(c2_i) z_i) Tr(A_i W)  -  |z|^2

where the inner minimum is the linear-cost relaxation with shifted costs.
``J`` is concave and its (super)gradient is
``-2 sqrt(c2_i) Tr(A_i W*) - 2 z_i``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable

import numpy as np
from scipy import optimize

from . import hsdp
from .netcase import PowerCase, injection_matrix
from .problem import OpfProblem, centralized_sdp
from .recover import TREE_RANK_TOL, rank_check

__all__ = [
    "QuadraticCostSpec",
    "ZIterate",
    "InnerResult",
    "OuterResult",
    "shifted_costs",
    "grad_J",
    "centralized_inner",
    "outer_loop",
]


@dataclass(frozen=True)
class QuadraticCostSpec:
    c1: np.ndarray
    c2: np.ndarray
    A: tuple  # injection matrices A_i

    def __post_init__(self):
        c1 = np.asarray(self.c1, dtype=float)
        c2 = np.asarray(self.c2, dtype=float)
        if c1.shape != c2.shape or c1.ndim != 1:
            raise ValueError("c1 and c2 must be vectors of equal length")
        if np.any(c2 < 0):
            i = int(np.argmax(c2 < 0))
            raise ValueError(f"c2[{i}] = {c2[i]} is negative")
        if len(self.A) != len(c1):
            raise ValueError("one injection matrix per bus is required")
        object.__setattr__(self, "c1", c1)
        object.__setattr__(self, "c2", c2)

    @classmethod
    def from_case(cls, case: PowerCase) -> "QuadraticCostSpec":
        return cls(case.c1, case.c2, tuple(injection_matrix(case, i) for i in range(case.n)))

    @property
    def n(self) -> int:
        return len(self.c1)

    def injections(self, W: np.ndarray) -> np.ndarray:
        return np.array([float(np.real(np.vdot(A.conj().T, W))) for A in self.A])

    def cost(self, W: np.ndarray) -> float:
        P = self.injections(W)
        return float(np.sum(self.c2 * P * P + self.c1 * P))


@dataclass
class InnerResult:
    value: float  # optimal linear-cost objective
    W: np.ndarray
    converged: bool = True
    iterations: int = 1


@dataclass
class ZIterate:
    z: np.ndarray
    value: float  # J(z)
    gradient: np.ndarray
    W: np.ndarray


@dataclass
class OuterResult:
    iterate: ZIterate
    W: np.ndarray  # recovered primal point
    objective: float  # quadratic cost at W
    converged: bool
    outer_iterations: int
    trace: list = field(default_factory=list)  # dicts: z, J, grad_inf, upper, gap
    degenerate: bool = False
    aborted: str | None = None


def shifted_costs(spec: QuadraticCostSpec, z: np.ndarray) -> np.ndarray:
    return spec.c1 - 2.0 * np.sqrt(spec.c2) * np.asarray(z, dtype=float)


def grad_J(spec: QuadraticCostSpec, z: np.ndarray, W: np.ndarray) -> np.ndarray:
    return -2.0 * np.sqrt(spec.c2) * spec.injections(W) - 2.0 * np.asarray(z, dtype=float)


def centralized_inner(problem: OpfProblem, tol: float = 1e-8,
                      backend: str | None = None) -> Callable[[np.ndarray], InnerResult]:
    """Inner solver: one full-size SDP per cost vector."""

    def inner(costs):
        p = problem.with_costs(costs)
        sol = hsdp.solve(centralized_sdp(p), tol=tol, backend=backend)
        ok = sol.status is hsdp.SdpStatus.OPTIMAL
        return InnerResult(sol.objective_value, sol.X, ok)

    return inner


def _evaluate(spec, inner, z):
    r = inner(shifted_costs(spec, z))
    J = r.value - float(z @ z)
    return ZIterate(z.copy(), J, grad_J(spec, z, r.W), r.W), r


def _hull_weights(spec, P):
    """Simplex weights minimizing the quadratic cost of ``sum_t w_t P_t``."""
    k = P.shape[0]
    if k == 1:
        return np.ones(1)

    def f(w):
        p = w @ P
        return float(np.sum(spec.c2 * p * p + spec.c1 * p))

    def df(w):
        p = w @ P
        return P @ (2.0 * spec.c2 * p + spec.c1)

    w0 = np.zeros(k)
    w0[-1] = 1.0
    res = optimize.minimize(
        f, w0, jac=df, method="SLSQP", bounds=[(0.0, 1.0)] * k,
        constraints=[{"type": "eq", "fun": lambda w: w.sum() - 1.0,
                      "jac": lambda w: np.ones_like(w)}],
        options={"ftol": 1e-15, "maxiter": 500},
    )
    w = np.clip(res.x, 0.0, None)
    w /= w.sum()
    return w if f(w) <= f(w0) else w0


def outer_loop(spec: QuadraticCostSpec, inner: Callable[[np.ndarray], InnerResult],
               z0=None, tol_z: float = 1e-4, max_outer: int = 50,
               gap_tol: float = 1e-7) -> OuterResult:
    """Supergradient ascent on ``J`` with primal recovery.

    Every inner solution ``W_t`` is a feasible point, so the cheapest convex
    combination ``W_hat`` of those seen so far bounds the optimum from above
    while ``J(z_t)`` bounds it from below.  The next iterate is
    ``z = -sqrt(c2) * P(W_hat)``: a step of ``1/2`` (the inverse curvature of
    ``-|z|^2``) along the aggregated supergradient ``sum_t w_t g_t``.  When
    ``W*(z)`` is unique this is the plain gradient step; at kinks of ``J``
    the aggregation is what lets the iteration settle.

    Stops when ``|g|_inf <= tol_z`` or the bound gap is at most
    ``gap_tol * max(1, |cost(W_hat)|)``; ``converged`` is False after
    ``max_outer`` iterations.
    """
    z = np.zeros(spec.n) if z0 is None else np.asarray(z0, dtype=float).copy()
    trace = []
    Ws, Ps = [], []
    best_J = -math.inf
    cur = None
    converged = False
    aborted = None
    W_hat = None
    it = 0
    while True:
        cur, r = _evaluate(spec, inner, z)
        if not r.converged:
            aborted = "inner solve did not converge"
            break
        best_J = max(best_J, cur.value)
        Ws.append(cur.W)
        Ps.append(spec.injections(cur.W))
        w = _hull_weights(spec, np.array(Ps))
        keep = w > 1e-12
        Ws = [W for W, k in zip(Ws, keep) if k]
        Ps = [p for p, k in zip(Ps, keep) if k]
        w = w[keep]
        W_hat = sum(wt * W for wt, W in zip(w, Ws))
        upper = spec.cost(W_hat)
        gap = upper - best_J
        gmax = float(np.max(np.abs(cur.gradient))) if spec.n else 0.0
        trace.append({"z": cur.z.tolist(), "J": cur.value, "grad_inf": gmax,
                      "upper": upper, "gap": gap})
        if gmax <= tol_z or gap <= gap_tol * max(1.0, abs(upper)):
            converged = True
            break
        if it >= max_outer:
            break
        z = -np.sqrt(spec.c2) * (w @ np.array(Ps))
        it += 1
    if W_hat is None:
        W_hat = cur.W
    degenerate = len(Ws) > 1 or rank_check(cur.W).ratio > TREE_RANK_TOL
    return OuterResult(cur, W_hat, spec.cost(W_hat), converged, it, trace, degenerate, aborted)
