"""Small dense complex-Hermitian SDPs.

A :class:`HermitianSdp` is

    minimize    Tr(A0 X)
    subject to  Tr(Aj X) = bj            for each equality j
                lo_i <= X_ii <= hi_i      for each diagonal box
                X Hermitian PSD

and is solved on its real symmetric embedding

    H  ->  [[Re H, -Im H],
            [Im H,  Re H]]

for which Tr(emb(A) emb(X)) = 2 Tr(AX).  Every embedded trace is therefore
halved before being handed to the conic kernel, so objective values and
multipliers come back in the units of the Hermitian problem.

Multiplier convention: the Lagrangian is

    Tr(A0 X) + sum_j lam_j (b_j - Tr(Aj X))
             + sum_i lam_lo_i (lo_i - X_ii) + lam_hi_i (X_ii - hi_i)

so ``d value / d b_j = +lam_j`` and ``lam_lo, lam_hi >= 0``.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass, field

import numpy as np

from . import _backend

__all__ = [
    "HermitianSdp",
    "SdpSolution",
    "SdpStatus",
    "KKTResiduals",
    "EmbeddedSdp",
    "embed",
    "unembed",
    "embed_real",
    "solve",
    "kkt_residuals",
]


class SdpStatus(str, enum.Enum):
    OPTIMAL = "optimal"
    INFEASIBLE = "infeasible"
    UNBOUNDED = "unbounded"
    MAX_ITER = "max_iter"


_STATUS = {
    0: SdpStatus.OPTIMAL,
    1: SdpStatus.INFEASIBLE,
    2: SdpStatus.UNBOUNDED,
    3: SdpStatus.MAX_ITER,
    4: SdpStatus.MAX_ITER,
}


@dataclass
class HermitianSdp:
    objective: np.ndarray
    equalities: list = field(default_factory=list)
    diag_boxes: list = field(default_factory=list)

    def __post_init__(self):
        self.objective = np.asarray(self.objective, dtype=complex)
        m = self.objective.shape[0]
        if self.objective.shape != (m, m) or m < 1:
            raise ValueError("objective must be a non-empty square matrix")
        if not np.allclose(self.objective, self.objective.conj().T, atol=1e-12):
            raise ValueError("objective is not Hermitian")
        eqs = []
        for j, (A, bj) in enumerate(self.equalities):
            A = np.asarray(A, dtype=complex)
            if A.shape != (m, m):
                raise ValueError(f"equality {j}: shape {A.shape} != {(m, m)}")
            if not np.allclose(A, A.conj().T, atol=1e-12):
                raise ValueError(f"equality {j}: matrix is not Hermitian")
            eqs.append((A, float(bj)))
        self.equalities = eqs
        boxes = []
        for i, lo, hi in self.diag_boxes:
            if not 0 <= i < m:
                raise ValueError(f"box index {i} out of range")
            if lo > hi:
                raise ValueError(f"box {i}: lower {lo} > upper {hi}")
            boxes.append((int(i), float(lo), float(hi)))
        self.diag_boxes = boxes

    @property
    def m(self) -> int:
        return self.objective.shape[0]


@dataclass
class SdpSolution:
    X: np.ndarray
    eq_multipliers: np.ndarray
    box_multipliers: np.ndarray  # shape (k, 2): (lam_hi, lam_lo) per box
    objective_value: float
    status: SdpStatus
    iterations: int = 0


@dataclass
class KKTResiduals:
    primal: float
    dual: float
    complementarity: float

    def max(self) -> float:
        return max(self.primal, self.dual, self.complementarity)


def embed(H: np.ndarray) -> np.ndarray:
    """Real symmetric embedding of a Hermitian matrix."""
    H = np.asarray(H)
    re, im = H.real, H.imag
    return np.block([[re, -im], [im, re]])


def unembed(Z: np.ndarray) -> np.ndarray:
    """Inverse of :func:`embed`, averaging the two redundant copies."""
    m = Z.shape[0] // 2
    re = 0.5 * (Z[:m, :m] + Z[m:, m:])
    im = 0.5 * (Z[m:, :m] - Z[:m, m:])
    X = re + 1j * im
    return 0.5 * (X + X.conj().T)


@dataclass
class EmbeddedSdp:
    """Real conic data for the kernels (already halved).

    Row kinds: ``("eq", j)``, ``("lo", k)``, ``("hi", k)`` or ``("fix", k)``
    where ``k`` indexes ``diag_boxes``.
    """

    m: int
    C: np.ndarray
    a_ptr: np.ndarray
    a_row: np.ndarray
    a_col: np.ndarray
    a_val: np.ndarray
    L: np.ndarray
    c_lp: np.ndarray
    b: np.ndarray
    rows: list


def _coo(Z):
    r, c = np.nonzero(Z)
    return r, c, Z[r, c]


def embed_real(p: HermitianSdp) -> EmbeddedSdp:
    """Embed ``p`` as a real symmetric SDP of dimension 2m.

    The embedded objective ``emb(A0)`` evaluates to twice ``Tr(A0 X)``; the
    returned data carries the factor 1/2 on the objective and on every
    constraint row so the embedded optimum equals the Hermitian one.
    """
    m = p.m
    rows_r, rows_c, rows_v, ptr, b, kinds = [], [], [], [0], [], []
    lp_cols = []  # (row index, coefficient)

    def push(Z, rhs, kind):
        r, c, v = _coo(Z)
        rows_r.append(r)
        rows_c.append(c)
        rows_v.append(0.5 * v)
        ptr.append(ptr[-1] + len(r))
        b.append(rhs)
        kinds.append(kind)

    for j, (A, bj) in enumerate(p.equalities):
        push(embed(A), bj, ("eq", j))
    for k, (i, lo, hi) in enumerate(p.diag_boxes):
        D = np.zeros((2 * m, 2 * m))
        D[i, i] = D[i + m, i + m] = 1.0
        if lo == hi:
            push(D, lo, ("fix", k))
            continue
        if np.isfinite(lo):
            lp_cols.append((len(b), -1.0))
            push(D, lo, ("lo", k))
        if np.isfinite(hi):
            lp_cols.append((len(b), 1.0))
            push(D, hi, ("hi", k))

    nrow = len(b)
    L = np.zeros((nrow, len(lp_cols)))
    for col, (row, coef) in enumerate(lp_cols):
        L[row, col] = coef
    cat = lambda xs, dt: np.concatenate(xs).astype(dt) if xs else np.zeros(0, dt)
    return EmbeddedSdp(
        m=m,
        C=0.5 * embed(p.objective),
        a_ptr=np.asarray(ptr, dtype=np.intp),
        a_row=cat(rows_r, np.intp),
        a_col=cat(rows_c, np.intp),
        a_val=cat(rows_v, float),
        L=L,
        c_lp=np.zeros(len(lp_cols)),
        b=np.asarray(b, dtype=float),
        rows=kinds,
    )


def solve(p: HermitianSdp, tol: float = 1e-8, max_iter: int = 200,
          backend: str | None = None) -> SdpSolution:
    """Solve ``p`` with the dense interior-point kernel.

    ``tol`` bounds the relative KKT residuals reported by
    :func:`kkt_residuals` for an ``OPTIMAL`` result; the kernel itself is run
    two decades tighter, and a stalled kernel run is still reported optimal
    when its best iterate meets ``tol``.
    """
    e = embed_real(p)
    kern = _backend.get(backend)
    status, Z, _u, y, _S, _z, it = kern(
        e.C, e.a_ptr, e.a_row, e.a_col, e.a_val, e.L, e.c_lp, e.b,
        tol * 0.01, max_iter)
    st = _STATUS[int(status)]
    X = unembed(Z)
    lam = np.zeros(len(p.equalities))
    box = np.zeros((len(p.diag_boxes), 2))
    for (kind, k), yk in zip(e.rows, y):
        if kind == "eq":
            lam[k] = yk
        elif kind == "lo":
            box[k, 1] = max(yk, 0.0)
        elif kind == "hi":
            box[k, 0] = max(-yk, 0.0)
        else:
            box[k, 1] = max(yk, 0.0)
            box[k, 0] = max(-yk, 0.0)
    value = float(np.real(np.vdot(p.objective.conj().T, X)))
    sol = SdpSolution(X=X, eq_multipliers=lam, box_multipliers=box,
                      objective_value=value, status=st, iterations=int(it))
    if st is SdpStatus.MAX_ITER and kkt_residuals(p, sol).max() <= tol:
        # the kernel stalled short of its own (tighter) target, but the
        # returned best iterate already meets the caller's tolerance
        sol.status = SdpStatus.OPTIMAL
    elif st is not SdpStatus.OPTIMAL:
        sol.objective_value = {SdpStatus.INFEASIBLE: np.inf,
                               SdpStatus.UNBOUNDED: -np.inf}.get(st, value)
    return sol


def dual_slack(p: HermitianSdp, s: SdpSolution) -> np.ndarray:
    S = p.objective.copy()
    for (A, _), lam in zip(p.equalities, s.eq_multipliers):
        S -= lam * A
    for (i, _, _), (lhi, llo) in zip(p.diag_boxes, s.box_multipliers):
        S[i, i] -= llo - lhi
    return 0.5 * (S + S.conj().T)


def kkt_residuals(p: HermitianSdp, s: SdpSolution) -> KKTResiduals:
    """Relative KKT residuals of ``s``.

    primal: worst equality/box violation over ``max(1, |b|_inf)``;
    dual: most negative eigenvalue of the dual slack over ``max(1, |A0|_F)``;
    complementarity: ``|Tr(XS)| + sum of box products`` over
    ``max(1, |A0|_F) * max(1, |X|_F)``.
    """
    X = s.X
    scale_b = 1.0
    viol = 0.0
    for (A, bj) in p.equalities:
        viol = max(viol, abs(np.real(np.vdot(A.conj().T, X)) - bj))
        scale_b = max(scale_b, abs(bj))
    comp_box = 0.0
    for (i, lo, hi), (lhi, llo) in zip(p.diag_boxes, s.box_multipliers):
        xi = X[i, i].real
        if np.isfinite(lo):
            viol = max(viol, lo - xi)
            scale_b = max(scale_b, abs(lo))
            comp_box += llo * abs(xi - lo)
        if np.isfinite(hi):
            viol = max(viol, xi - hi)
            scale_b = max(scale_b, abs(hi))
            comp_box += lhi * abs(hi - xi)
    S = dual_slack(p, s)
    lmin = np.linalg.eigvalsh(S)[0]
    nA = max(1.0, np.linalg.norm(p.objective))
    nX = max(1.0, np.linalg.norm(X))
    neg_mult = max(0.0, -float(np.min(s.box_multipliers, initial=0.0)))
    comp = abs(np.real(np.vdot(X, S))) + comp_box
    return KKTResiduals(
        primal=max(viol, 0.0) / scale_b,
        dual=(max(0.0, -lmin) + neg_mult) / nA,
        complementarity=comp / (nA * nX),
    )
