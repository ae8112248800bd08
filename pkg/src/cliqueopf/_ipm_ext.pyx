# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled real conic interior-point kernel.

Same iteration as ``_ipm_py.solve_conic`` (homogeneous self-dual embedding,
HKM directions, Mehrotra predictor-corrector, best-iterate fallback) written
against scipy's BLAS/LAPACK so that tiny problems avoid numpy call overhead.

Buffers are row-major.  A symmetric row-major matrix is its own
column-major transpose, so it goes to LAPACK unchanged; the column-major
lower triangle LAPACK works on is the row-major upper triangle.
"""

import numpy as np
cimport numpy as cnp
from libc.math cimport sqrt, fabs, INFINITY
from libc.string cimport memcpy, memset
from scipy.linalg.cython_blas cimport dgemm, dtrsm
from scipy.linalg.cython_lapack cimport dpotrf, dpotri, dpotrs, dsyev

cnp.import_array()

cdef double STEP_FRACTION = 0.98
cdef int STALL_ITERS = 5
cdef double ACCEPT_FACTOR = 10.0

cdef enum:
    OPTIMAL = 0
    PRIMAL_INFEASIBLE = 1
    DUAL_INFEASIBLE = 2
    MAX_ITER = 3
    NUMERICAL = 4


cdef inline void matmul(int n, double* A, double* B, double* C) noexcept nogil:
    # row-major C = A B
    cdef double one = 1.0, zero = 0.0
    cdef char tr = b'N'
    dgemm(&tr, &tr, &n, &n, &n, &one, B, &n, A, &n, &zero, C, &n)


cdef inline void hsym(int n, double* X, double* V, double* Sinv, double* tmp,
                      double* out) noexcept nogil:
    # out = sym(X V Sinv)
    cdef int i, j
    cdef double a
    if n == 0:
        return
    matmul(n, X, V, tmp)
    matmul(n, tmp, Sinv, out)
    for i in range(n):
        for j in range(i + 1, n):
            a = 0.5 * (out[i * n + j] + out[j * n + i])
            out[i * n + j] = a
            out[j * n + i] = a


cdef inline double dot(int m, double* a, double* b) noexcept nogil:
    cdef int i
    cdef double s = 0.0
    for i in range(m):
        s += a[i] * b[i]
    return s


cdef inline double nrm2(int m, double* a) noexcept nogil:
    return sqrt(dot(m, a, a))


cdef class _Op:
    cdef int n, p, q, nnz
    cdef long[::1] own, row, col
    cdef double[::1] val
    cdef double[::1] L  # p x q, row-major

    def __init__(self, int n, a_ptr, a_row, a_col, a_val, L):
        self.n = n
        self.p = len(a_ptr) - 1
        self.q = L.shape[1]
        self.nnz = len(a_val)
        ptr = np.asarray(a_ptr, dtype=np.int64)
        self.own = np.ascontiguousarray(np.repeat(np.arange(self.p, dtype=np.int64), np.diff(ptr)))
        self.row = np.ascontiguousarray(a_row, dtype=np.int64)
        self.col = np.ascontiguousarray(a_col, dtype=np.int64)
        self.val = np.ascontiguousarray(a_val, dtype=float)
        self.L = np.ascontiguousarray(L, dtype=float).ravel() if self.p * self.q else np.zeros(1)

    cdef void apply(self, double* X, double* u, double* out) noexcept:
        cdef int j, e, k
        cdef int n = self.n, q = self.q
        for j in range(self.p):
            out[j] = 0.0
        for e in range(self.nnz):
            out[self.own[e]] += self.val[e] * X[self.row[e] * n + self.col[e]]
        for j in range(self.p):
            for k in range(q):
                out[j] += self.L[j * q + k] * u[k]

    cdef void adjoint(self, double* y, double* Mout, double* lout) noexcept:
        cdef int e, j, k
        cdef int n = self.n, q = self.q
        memset(Mout, 0, n * n * sizeof(double))
        for e in range(self.nnz):
            Mout[self.row[e] * n + self.col[e]] += self.val[e] * y[self.own[e]]
        for k in range(q):
            lout[k] = 0.0
            for j in range(self.p):
                lout[k] += self.L[j * q + k] * y[j]

    cdef void schur(self, double* X, double* Sinv, double* dlp, double* M) noexcept:
        cdef int e, f, j, k, i
        cdef int n = self.n, p = self.p, q = self.q
        cdef double ve, a
        memset(M, 0, p * p * sizeof(double))
        for e in range(self.nnz):
            ve = self.val[e]
            for f in range(self.nnz):
                M[self.own[e] * p + self.own[f]] += (
                    ve * self.val[f] * X[self.row[e] * n + self.row[f]]
                    * Sinv[self.col[f] * n + self.col[e]])
        for i in range(p):
            for j in range(p):
                a = 0.0
                for k in range(q):
                    a += self.L[i * q + k] * dlp[k] * self.L[j * q + k]
                M[i * p + j] += a
        for i in range(p):
            for j in range(i + 1, p):
                a = 0.5 * (M[i * p + j] + M[j * p + i])
                M[i * p + j] = a
                M[j * p + i] = a


cdef double max_step_psd(int n, double* X, double* dX, double* A, double* B,
                         double* w, double* lw, int lwork) noexcept nogil:
    cdef int info = 0
    cdef char lo = b'L', left = b'L', right = b'R', no = b'N', tr = b'T'
    cdef double one = 1.0
    if n == 0:
        return INFINITY
    memcpy(A, X, n * n * sizeof(double))
    dpotrf(&lo, &n, A, &n, &info)
    if info != 0:
        return 0.0
    memcpy(B, dX, n * n * sizeof(double))
    dtrsm(&left, &lo, &no, &no, &n, &n, &one, A, &n, B, &n)
    dtrsm(&right, &lo, &tr, &no, &n, &n, &one, A, &n, B, &n)
    dsyev(&no, &lo, &n, B, &n, w, lw, &lwork, &info)
    if info != 0:
        return 0.0
    if w[0] >= 0.0:
        return INFINITY
    return -1.0 / w[0]


cdef inline double max_step_lp(int q, double* x, double* dx) noexcept nogil:
    cdef int i
    cdef double a = INFINITY, r
    for i in range(q):
        if dx[i] < 0.0:
            r = -x[i] / dx[i]
            if r < a:
                a = r
    return a


cdef int factor_schur(int p, double* M, double* backup) noexcept nogil:
    # in-place Cholesky; one retry with a tiny diagonal shift
    cdef int info = 0, i
    cdef char lo = b'L'
    cdef double dmax = 1.0
    if p == 0:
        return 0
    memcpy(backup, M, p * p * sizeof(double))
    dpotrf(&lo, &p, M, &p, &info)
    if info == 0:
        return 0
    memcpy(M, backup, p * p * sizeof(double))
    for i in range(p):
        if fabs(M[i * p + i]) > dmax:
            dmax = fabs(M[i * p + i])
    for i in range(p):
        M[i * p + i] += 1e-14 * dmax
    info = 0
    dpotrf(&lo, &p, M, &p, &info)
    return info


cdef inline void chol_solve(int p, double* Mch, double* r, double* out) noexcept nogil:
    cdef int info = 0, one = 1
    cdef char lo = b'L'
    if p == 0:
        return
    memcpy(out, r, p * sizeof(double))
    dpotrs(&lo, &p, &one, Mch, &p, out, &p, &info)


cdef class _State:
    cdef int n, p, q, nn, lwork
    cdef _Op op
    cdef double tau, kap, dtau, dkap, den_base
    cdef double[::1] Cs, cls, bs, X, S, u, z, y
    cdef double[::1] Sinv, dlp, Mch, Mbak, HCm, HCl, AHc, g, h, p2, tmp
    cdef double[::1] R1, R2m, R2l, AX, ATy, LTy
    cdef double[::1] dXm, dXl, dy, dSm, dSl, Rcm, Rcl
    cdef double[::1] HR2m, HR2l, f1, p1, Ap, ATdy, LTdy, HdSm, t1
    cdef double[::1] wa, wb, ww, wl

    def __init__(self, _Op op, Cs, cls, bs):
        cdef int n = op.n, p = op.p, q = op.q
        cdef int nn = n * n
        self.op = op
        self.n, self.p, self.q, self.nn = n, p, q, nn
        vec = lambda k: np.zeros(max(1, k))
        self.Cs = np.ascontiguousarray(Cs, dtype=float).ravel() if nn else vec(1)
        self.cls = np.ascontiguousarray(cls, dtype=float) if q else vec(1)
        self.bs = np.ascontiguousarray(bs, dtype=float) if p else vec(1)
        self.X = np.eye(n).ravel() if n else vec(1)
        self.S = np.eye(n).ravel() if n else vec(1)
        self.u = np.ones(max(1, q))
        self.z = np.ones(max(1, q))
        self.y = vec(p)
        self.tau = 1.0
        self.kap = 1.0
        self.Sinv, self.HCm, self.tmp, self.R2m, self.ATy = vec(nn), vec(nn), vec(nn), vec(nn), vec(nn)
        self.dXm, self.dSm, self.Rcm, self.HR2m, self.ATdy = vec(nn), vec(nn), vec(nn), vec(nn), vec(nn)
        self.HdSm, self.t1 = vec(nn), vec(nn)
        self.dlp, self.HCl, self.R2l, self.LTy, self.dXl = vec(q), vec(q), vec(q), vec(q), vec(q)
        self.dSl, self.Rcl, self.HR2l, self.LTdy = vec(q), vec(q), vec(q), vec(q)
        self.AHc, self.g, self.h, self.p2, self.R1 = vec(p), vec(p), vec(p), vec(p), vec(p)
        self.AX, self.dy, self.f1, self.p1, self.Ap = vec(p), vec(p), vec(p), vec(p), vec(p)
        self.Mch, self.Mbak = vec(p * p), vec(p * p)
        self.lwork = max(1, 3 * n + 8)
        self.wa, self.wb, self.ww, self.wl = vec(nn), vec(nn), vec(n), vec(self.lwork)


cdef void direction(_State s, double eta, double Rk, double R3) noexcept:
    # solve the Newton system for right-hand sides (R1, R2, R3) scaled by
    # eta and complementarity residuals (s.Rcm, s.Rcl, Rk)
    cdef int n = s.n, p = s.p, q = s.q, nn = s.nn, i
    cdef double rhs3
    cdef _Op op = s.op
    cdef double* X = &s.X[0]
    cdef double* Sinv = &s.Sinv[0]
    hsym(n, X, &s.R2m[0], Sinv, &s.tmp[0], &s.HR2m[0])
    for i in range(q):
        s.HR2l[i] = s.dlp[i] * s.R2l[i]
    op.apply(&s.Rcm[0], &s.Rcl[0], &s.f1[0])
    op.apply(&s.HR2m[0], &s.HR2l[0], &s.Ap[0])
    for i in range(p):
        s.f1[i] = -eta * s.R1[i] - s.f1[i] + eta * s.Ap[i]
    chol_solve(p, &s.Mch[0], &s.f1[0], &s.p1[0])
    rhs3 = (-eta * R3 + dot(nn, &s.Cs[0], &s.Rcm[0]) + dot(q, &s.cls[0], &s.Rcl[0])
            - eta * (dot(nn, &s.Cs[0], &s.HR2m[0]) + dot(q, &s.cls[0], &s.HR2l[0])) + Rk)
    s.dtau = (rhs3 - dot(p, &s.h[0], &s.p1[0])) / s.den_base
    for i in range(p):
        s.dy[i] = s.p1[i] + s.dtau * s.p2[i]
    op.adjoint(&s.dy[0], &s.ATdy[0], &s.LTdy[0])
    for i in range(nn):
        s.dSm[i] = -s.ATdy[i] + s.Cs[i] * s.dtau + eta * s.R2m[i]
    for i in range(q):
        s.dSl[i] = -s.LTdy[i] + s.cls[i] * s.dtau + eta * s.R2l[i]
    hsym(n, X, &s.dSm[0], Sinv, &s.tmp[0], &s.HdSm[0])
    for i in range(nn):
        s.dXm[i] = s.Rcm[i] - s.HdSm[i]
    for i in range(q):
        s.dXl[i] = s.Rcl[i] - s.dlp[i] * s.dSl[i]
    s.dkap = Rk - (s.kap / s.tau) * s.dtau


cdef double steplen(_State s) noexcept:
    cdef double a, b
    a = max_step_psd(s.n, &s.X[0], &s.dXm[0], &s.wa[0], &s.wb[0], &s.ww[0], &s.wl[0], s.lwork)
    b = max_step_psd(s.n, &s.S[0], &s.dSm[0], &s.wa[0], &s.wb[0], &s.ww[0], &s.wl[0], s.lwork)
    if b < a:
        a = b
    b = max_step_lp(s.q, &s.u[0], &s.dXl[0])
    if b < a:
        a = b
    b = max_step_lp(s.q, &s.z[0], &s.dSl[0])
    if b < a:
        a = b
    if s.dtau < 0 and -s.tau / s.dtau < a:
        a = -s.tau / s.dtau
    if s.dkap < 0 and -s.kap / s.dkap < a:
        a = -s.kap / s.dkap
    return a


cdef tuple _run(_State s, double tol, int max_iter):
    cdef int n = s.n, p = s.p, q = s.q, nn = s.nn, nu = s.n + s.q
    cdef int i, j, info, it = 0, status = MAX_ITER, best_it = 0
    cdef double nb, nc, cx, by, R3, mu, pres, dres, gap, err, best_err = INFINITY
    cdef double a_aff, mu_aff, sigma, a, cert, Rk, best_tau = 1.0, v
    cdef char lo = b'L'
    cdef _Op op = s.op
    cdef double* X = &s.X[0]
    cdef double* S = &s.S[0]
    cdef bint have_best = False
    cdef double[::1] bX = np.zeros(max(1, nn)), bS = np.zeros(max(1, nn))
    cdef double[::1] bu = np.zeros(max(1, q)), bz = np.zeros(max(1, q))
    cdef double[::1] byv = np.zeros(max(1, p))

    nb = 1.0 + nrm2(p, &s.bs[0])
    nc = 1.0 + sqrt(dot(nn, &s.Cs[0], &s.Cs[0]) + dot(q, &s.cls[0], &s.cls[0]))

    for it in range(1, max_iter + 1):
        op.apply(X, &s.u[0], &s.AX[0])
        op.adjoint(&s.y[0], &s.ATy[0], &s.LTy[0])
        for i in range(p):
            s.R1[i] = s.AX[i] - s.bs[i] * s.tau
        for i in range(nn):
            s.R2m[i] = -s.ATy[i] - S[i] + s.Cs[i] * s.tau
        for i in range(q):
            s.R2l[i] = -s.LTy[i] - s.z[i] + s.cls[i] * s.tau
        cx = dot(nn, &s.Cs[0], X) + dot(q, &s.cls[0], &s.u[0])
        by = dot(p, &s.bs[0], &s.y[0])
        R3 = by - cx - s.kap
        mu = (dot(nn, X, S) + dot(q, &s.u[0], &s.z[0]) + s.tau * s.kap) / (nu + 1)

        pres = nrm2(p, &s.R1[0]) / s.tau / nb
        dres = sqrt(dot(nn, &s.R2m[0], &s.R2m[0]) + dot(q, &s.R2l[0], &s.R2l[0])) / s.tau / nc
        gap = fabs(cx - by) / s.tau / (1.0 + fabs(cx / s.tau))
        err = max(pres, max(dres, gap))
        if err <= tol:
            status = OPTIMAL
            break
        if err < best_err:
            best_err = err
            best_it = it
            memcpy(&bX[0], X, nn * sizeof(double))
            memcpy(&bS[0], S, nn * sizeof(double))
            memcpy(&bu[0], &s.u[0], q * sizeof(double))
            memcpy(&bz[0], &s.z[0], q * sizeof(double))
            memcpy(&byv[0], &s.y[0], p * sizeof(double))
            best_tau = s.tau
            have_best = True
        elif s.kap < 1e-3 * s.tau and (err > 100.0 * best_err or it - best_it >= STALL_ITERS):
            # lost accuracy near the boundary: fall back to the best iterate
            status = NUMERICAL
            break
        if by > 0:
            cert = 0.0
            for i in range(nn):
                cert += (s.ATy[i] + S[i]) * (s.ATy[i] + S[i])
            for i in range(q):
                cert += (s.LTy[i] + s.z[i]) * (s.LTy[i] + s.z[i])
            cert = sqrt(cert) / by
            if cert <= tol and s.tau < 1e-3 * s.kap:
                status = PRIMAL_INFEASIBLE
                break
        if cx < 0:
            cert = nrm2(p, &s.AX[0]) / (-cx)
            if cert <= tol and s.tau < 1e-3 * s.kap:
                status = DUAL_INFEASIBLE
                break
        if mu < 1e-15 and s.tau < 1e-12 * s.kap:
            status = NUMERICAL
            break

        info = 0
        if n:
            memcpy(&s.Sinv[0], S, nn * sizeof(double))
            dpotrf(&lo, &n, &s.Sinv[0], &n, &info)
            if info == 0:
                dpotri(&lo, &n, &s.Sinv[0], &n, &info)
        if info != 0:
            status = NUMERICAL
            break
        for i in range(n):
            for j in range(i + 1, n):
                s.Sinv[j * n + i] = s.Sinv[i * n + j]
        for i in range(q):
            s.dlp[i] = s.u[i] / s.z[i]

        op.schur(X, &s.Sinv[0], &s.dlp[0], &s.Mch[0])
        if factor_schur(p, &s.Mch[0], &s.Mbak[0]) != 0:
            status = NUMERICAL
            break

        hsym(n, X, &s.Cs[0], &s.Sinv[0], &s.tmp[0], &s.HCm[0])
        for i in range(q):
            s.HCl[i] = s.dlp[i] * s.cls[i]
        op.apply(&s.HCm[0], &s.HCl[0], &s.AHc[0])
        v = dot(nn, &s.Cs[0], &s.HCm[0]) + dot(q, &s.cls[0], &s.HCl[0])
        for i in range(p):
            s.g[i] = s.AHc[i] + s.bs[i]
            s.h[i] = s.bs[i] - s.AHc[i]
        chol_solve(p, &s.Mch[0], &s.g[0], &s.p2[0])
        s.den_base = dot(p, &s.h[0], &s.p2[0]) + v + s.kap / s.tau

        # predictor
        for i in range(nn):
            s.Rcm[i] = -X[i]
        for i in range(q):
            s.Rcl[i] = -s.u[i]
        direction(s, 1.0, -s.kap, R3)
        a_aff = min(1.0, steplen(s))
        mu_aff = 0.0
        for i in range(nn):
            mu_aff += (X[i] + a_aff * s.dXm[i]) * (S[i] + a_aff * s.dSm[i])
        for i in range(q):
            mu_aff += (s.u[i] + a_aff * s.dXl[i]) * (s.z[i] + a_aff * s.dSl[i])
        mu_aff += (s.tau + a_aff * s.dtau) * (s.kap + a_aff * s.dkap)
        mu_aff /= (nu + 1)
        sigma = min(1.0, max(0.0, mu_aff / mu))
        sigma = sigma * sigma * sigma

        # corrector
        hsym(n, &s.dXm[0], &s.dSm[0], &s.Sinv[0], &s.tmp[0], &s.t1[0])
        for i in range(nn):
            s.Rcm[i] = sigma * mu * s.Sinv[i] - X[i] - s.t1[i]
        for i in range(q):
            s.Rcl[i] = sigma * mu / s.z[i] - s.u[i] - s.dXl[i] * s.dSl[i] / s.z[i]
        Rk = sigma * mu / s.tau - s.kap - s.dtau * s.dkap / s.tau
        direction(s, 1.0 - sigma, Rk, R3)
        a = min(1.0, STEP_FRACTION * steplen(s))
        if a <= 0.0:
            status = NUMERICAL
            break
        for i in range(nn):
            X[i] += a * s.dXm[i]
            S[i] += a * s.dSm[i]
        for i in range(n):
            for j in range(i + 1, n):
                v = 0.5 * (X[i * n + j] + X[j * n + i])
                X[i * n + j] = v
                X[j * n + i] = v
                v = 0.5 * (S[i * n + j] + S[j * n + i])
                S[i * n + j] = v
                S[j * n + i] = v
        for i in range(q):
            s.u[i] += a * s.dXl[i]
            s.z[i] += a * s.dSl[i]
        for i in range(p):
            s.y[i] += a * s.dy[i]
        s.tau += a * s.dtau
        s.kap += a * s.dkap

    if (status == MAX_ITER or status == NUMERICAL) and have_best:
        memcpy(X, &bX[0], nn * sizeof(double))
        memcpy(S, &bS[0], nn * sizeof(double))
        memcpy(&s.u[0], &bu[0], q * sizeof(double))
        memcpy(&s.z[0], &bz[0], q * sizeof(double))
        memcpy(&s.y[0], &byv[0], p * sizeof(double))
        s.tau = best_tau
        if best_err <= ACCEPT_FACTOR * tol:
            status = OPTIMAL
    return status, it


def solve_conic(C, a_ptr, a_row, a_col, a_val, L, c_lp, b, double tol=1e-9, int max_iter=200):
    C = np.ascontiguousarray(C, dtype=float)
    cdef int n = C.shape[0]
    b = np.asarray(b, dtype=float)
    L = np.asarray(L, dtype=float)
    if L.ndim != 2:
        L = L.reshape(len(b), 0)
    c_lp = np.asarray(c_lp, dtype=float)
    cdef int q = L.shape[1]
    cdef int p = len(b)
    # data scaling; undone on return
    cdef double sc = max(1.0, float(np.max(np.abs(C), initial=0.0)),
                         float(np.max(np.abs(c_lp), initial=0.0)))
    cdef double sb = max(1.0, float(np.max(np.abs(b), initial=0.0)))
    cdef _Op op = _Op(n, a_ptr, a_row, a_col, a_val, L)
    cdef _State s = _State(op, C / sc, c_lp / sc, b / sb)
    status, it = _run(s, tol, max_iter)
    X = np.asarray(s.X)[:n * n].reshape(n, n).copy()
    S = np.asarray(s.S)[:n * n].reshape(n, n).copy()
    u = np.asarray(s.u)[:q].copy()
    z = np.asarray(s.z)[:q].copy()
    y = np.asarray(s.y)[:p].copy()
    if status in (OPTIMAL, MAX_ITER, NUMERICAL):
        X *= sb / s.tau
        u *= sb / s.tau
        y *= sc / s.tau
        S *= sc / s.tau
        z *= sc / s.tau
    return status, X, u, y, S, z, it
