"""Pure-Python real conic interior-point kernel.

Solves the pair

    minimize   <C, X> + c_lp' u          maximize   b' y
    subject to A(X) + L u = b            subject to C - A*(y) = S >= 0
               X >= 0 (PSD), u >= 0                 c_lp - L' y = z >= 0

with a homogeneous self-dual embedding, HKM search directions and a
Mehrotra predictor-corrector.  The PSD part of the constraint operator is
stored row-compressed: entries ``a_ptr[j]:a_ptr[j+1]`` of ``a_row``,
``a_col``, ``a_val`` hold every nonzero of the symmetric matrix A_j (both
triangles listed).

The compiled kernel in ``_ipm_ext.pyx`` implements the same iteration; both
return ``(status, X, u, y, S, z, iterations)``.
"""

import numpy as np
import scipy.linalg as sla

OPTIMAL = 0
PRIMAL_INFEASIBLE = 1
DUAL_INFEASIBLE = 2
MAX_ITER = 3
NUMERICAL = 4

STEP_FRACTION = 0.98
STALL_ITERS = 5
# stagnated runs are accepted when the best iterate is this close to tol
ACCEPT_FACTOR = 10.0


def _max_step_psd(X, dX):
    try:
        L = np.linalg.cholesky(X)
    except np.linalg.LinAlgError:
        return 0.0
    T = sla.solve_triangular(L, dX, lower=True)
    T = sla.solve_triangular(L, T.T, lower=True)
    lmin = np.linalg.eigvalsh(0.5 * (T + T.T))[0]
    if lmin >= 0.0:
        return np.inf
    return -1.0 / lmin


def _max_step_lp(x, dx):
    neg = dx < 0.0
    if not np.any(neg):
        return np.inf
    return float(np.min(-x[neg] / dx[neg]))


class _Operator:
    """Sparse constraint operator A(X) + L u and its adjoint."""

    def __init__(self, n, a_ptr, a_row, a_col, a_val, L):
        self.n = n
        self.p = len(a_ptr) - 1
        self.row = np.asarray(a_row, dtype=np.intp)
        self.col = np.asarray(a_col, dtype=np.intp)
        self.val = np.asarray(a_val, dtype=float)
        self.own = np.repeat(np.arange(self.p), np.diff(a_ptr))
        self.flat = self.row * n + self.col
        self.L = L
        # pair bookkeeping for the Schur complement
        nnz = len(self.val)
        self.pair_idx = (self.own[:, None] * self.p + self.own[None, :]).ravel()
        self.vv = np.outer(self.val, self.val)
        self.nnz = nnz

    def apply(self, X, u):
        out = np.bincount(self.own, weights=self.val * X[self.row, self.col],
                          minlength=self.p)
        if self.L.shape[1]:
            out = out + self.L @ u
        return out

    def adjoint(self, y):
        w = self.val * y[self.own]
        M = np.bincount(self.flat, weights=w, minlength=self.n * self.n)
        return M.reshape(self.n, self.n), self.L.T @ y

    def schur(self, X, Sinv, dlp):
        p = self.p
        if self.nnz:
            P = self.vv * X[np.ix_(self.row, self.row)] * Sinv[np.ix_(self.col, self.col)].T
            M = np.bincount(self.pair_idx, weights=P.ravel(),
                            minlength=p * p).reshape(p, p)
        else:
            M = np.zeros((p, p))
        if self.L.shape[1]:
            M += (self.L * dlp) @ self.L.T
        return 0.5 * (M + M.T)


def solve_conic(C, a_ptr, a_row, a_col, a_val, L, c_lp, b,
                tol=1e-9, max_iter=200):
    C = np.asarray(C, dtype=float)
    n = C.shape[0]
    b = np.asarray(b, dtype=float)
    L = np.asarray(L, dtype=float)
    if L.ndim != 2:
        L = L.reshape(len(b), 0)
    c_lp = np.asarray(c_lp, dtype=float)
    q = L.shape[1]
    p = len(b)
    nu = n + q

    # data scaling; undone on return
    sc = max(1.0, float(np.max(np.abs(C), initial=0.0)),
             float(np.max(np.abs(c_lp), initial=0.0)))
    sb = max(1.0, float(np.max(np.abs(b), initial=0.0)))
    Cs, cls, bs = C / sc, c_lp / sc, b / sb

    op = _Operator(n, a_ptr, a_row, a_col, a_val, L)
    nb = 1.0 + np.linalg.norm(bs)
    nc = 1.0 + np.sqrt(np.sum(Cs * Cs) + cls @ cls)

    X = np.eye(n)
    S = np.eye(n)
    u = np.ones(q)
    z = np.ones(q)
    y = np.zeros(p)
    tau = kap = 1.0
    status = MAX_ITER
    it = 0
    best_err, best_it, best = np.inf, 0, None

    for it in range(1, max_iter + 1):
        AX = op.apply(X, u)
        ATy, LTy = op.adjoint(y)
        R1 = AX - bs * tau
        R2m = -ATy - S + Cs * tau
        R2l = -LTy - z + cls * tau
        cx = np.sum(Cs * X) + cls @ u
        by = bs @ y
        R3 = by - cx - kap
        mu = (np.sum(X * S) + u @ z + tau * kap) / (nu + 1)

        pres = np.linalg.norm(R1) / tau / nb
        dres = np.sqrt(np.sum(R2m * R2m) + R2l @ R2l) / tau / nc
        gap = abs(cx - by) / tau / (1.0 + abs(cx / tau))
        err = max(pres, dres, gap)
        if err <= tol:
            status = OPTIMAL
            break
        if err < best_err:
            best_err, best_it = err, it
            best = (X.copy(), u.copy(), y.copy(), S.copy(), z.copy(), tau)
        elif kap < 1e-3 * tau and (err > 100.0 * best_err
                                   or it - best_it >= STALL_ITERS):
            # lost accuracy near the boundary: fall back to the best iterate
            status = NUMERICAL
            break
        if by > 0:
            cert = np.sqrt(np.sum((ATy + S) ** 2) + np.sum((LTy + z) ** 2)) / by
            if cert <= tol and tau < 1e-3 * kap:
                status = PRIMAL_INFEASIBLE
                break
        if cx < 0:
            cert = np.linalg.norm(AX) / (-cx)
            if cert <= tol and tau < 1e-3 * kap:
                status = DUAL_INFEASIBLE
                break
        if mu < 1e-15 and tau < 1e-12 * kap:
            status = NUMERICAL
            break

        try:
            Ls = np.linalg.cholesky(S)
        except np.linalg.LinAlgError:
            status = NUMERICAL
            break
        Li = sla.solve_triangular(Ls, np.eye(n), lower=True)
        Sinv = Li.T @ Li
        dlp = u / z

        M = op.schur(X, Sinv, dlp)
        try:
            cf = sla.cho_factor(M, lower=True) if p else None
        except np.linalg.LinAlgError:
            M = M + (1e-14 * max(1.0, np.max(np.abs(np.diag(M))))) * np.eye(p)
            try:
                cf = sla.cho_factor(M, lower=True)
            except np.linalg.LinAlgError:
                status = NUMERICAL
                break

        def msolve(r):
            if p == 0:
                return np.zeros(0)
            return sla.cho_solve(cf, r)

        def H(Vm, Vl):
            T = X @ Vm @ Sinv
            return 0.5 * (T + T.T), dlp * Vl

        HCm, HCl = H(Cs, cls)
        AHc = op.apply(HCm, HCl)
        cHc = np.sum(Cs * HCm) + cls @ HCl
        g = AHc + bs
        h = bs - AHc
        p2 = msolve(g)
        den_base = h @ p2 + cHc + kap / tau

        def direction(eta, Rcm, Rcl, Rk):
            HR2m, HR2l = H(R2m, R2l)
            f1 = -eta * R1 - op.apply(Rcm, Rcl) + eta * op.apply(HR2m, HR2l)
            p1 = msolve(f1)
            rhs3 = (-eta * R3 + np.sum(Cs * Rcm) + cls @ Rcl
                    - eta * (np.sum(Cs * HR2m) + cls @ HR2l) + Rk)
            dtau = (rhs3 - h @ p1) / den_base
            dy = p1 + dtau * p2
            ATdy, LTdy = op.adjoint(dy)
            dSm = -ATdy + Cs * dtau + eta * R2m
            dSl = -LTdy + cls * dtau + eta * R2l
            HdSm, HdSl = H(dSm, dSl)
            dXm = Rcm - HdSm
            dXl = Rcl - HdSl
            dkap = Rk - (kap / tau) * dtau
            return dXm, dXl, dy, dSm, dSl, dtau, dkap

        def steplen(d):
            dXm, dXl, _, dSm, dSl, dtau, dkap = d
            a = min(_max_step_psd(X, dXm), _max_step_psd(S, dSm),
                    _max_step_lp(u, dXl), _max_step_lp(z, dSl))
            if dtau < 0:
                a = min(a, -tau / dtau)
            if dkap < 0:
                a = min(a, -kap / dkap)
            return a

        # predictor
        da = direction(1.0, -X, -u, -kap)
        a_aff = min(1.0, steplen(da))
        dXm, dXl, _, dSm, dSl, dtau, dkap = da
        mu_aff = (np.sum((X + a_aff * dXm) * (S + a_aff * dSm))
                  + (u + a_aff * dXl) @ (z + a_aff * dSl)
                  + (tau + a_aff * dtau) * (kap + a_aff * dkap)) / (nu + 1)
        sigma = min(1.0, max(0.0, mu_aff / mu)) ** 3

        # corrector
        T = dXm @ dSm @ Sinv
        Rcm = sigma * mu * Sinv - X - 0.5 * (T + T.T)
        Rcl = sigma * mu / z - u - dXl * dSl / z
        Rk = sigma * mu / tau - kap - dtau * dkap / tau
        d = direction(1.0 - sigma, Rcm, Rcl, Rk)
        a = min(1.0, STEP_FRACTION * steplen(d))
        if a <= 0.0:
            status = NUMERICAL
            break
        dXm, dXl, dy, dSm, dSl, dtau, dkap = d
        X = X + a * dXm
        X = 0.5 * (X + X.T)
        S = S + a * dSm
        S = 0.5 * (S + S.T)
        u = u + a * dXl
        z = z + a * dSl
        y = y + a * dy
        tau = tau + a * dtau
        kap = kap + a * dkap

    if status in (MAX_ITER, NUMERICAL) and best is not None:
        X, u, y, S, z, tau = best
        if best_err <= ACCEPT_FACTOR * tol:
            status = OPTIMAL
    if status in (OPTIMAL, MAX_ITER, NUMERICAL):
        X = X / tau * sb
        u = u / tau * sb
        y = y / tau * sc
        S = S / tau * sc
        z = z / tau * sc
    return status, X, u, y, S, z, it
