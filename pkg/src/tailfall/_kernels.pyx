# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled hot loops: tailed-body forward dynamics, RK4 step, rollout and
finite-difference linearization.

State layout (flat, length 7 + nj + 6 + nj):
    [p(3), quat xyzw(4), q_tail(nj), v(3), omega_body(3), qd_tail(nj)]
Tangent layout (length 12 + 2 nj):
    [dp(3), dtheta(3), dq_tail(nj), dv(3), domega(3), dqd_tail(nj)]
Parameter vector:
    [m_b, Ixx, Iyy, Izz, m_t, mount_x, mount_y, mount_z, g, ell_fixed]
"""

from libc.math cimport sin, cos, sqrt, atan2, fabs

import numpy as np

cdef enum:
    MAXV = 9
    MAXX = 19
    MAXT = 18


cdef inline void _cross(const double* a, const double* b, double* out) noexcept nogil:
    out[0] = a[1] * b[2] - a[2] * b[1]
    out[1] = a[2] * b[0] - a[0] * b[2]
    out[2] = a[0] * b[1] - a[1] * b[0]


cdef inline void _rot(const double* q, double* R) noexcept nogil:
    cdef double x = q[0], y = q[1], z = q[2], w = q[3]
    R[0] = 1 - 2 * (y * y + z * z)
    R[1] = 2 * (x * y - z * w)
    R[2] = 2 * (x * z + y * w)
    R[3] = 2 * (x * y + z * w)
    R[4] = 1 - 2 * (x * x + z * z)
    R[5] = 2 * (y * z - x * w)
    R[6] = 2 * (x * z - y * w)
    R[7] = 2 * (y * z + x * w)
    R[8] = 1 - 2 * (x * x + y * y)


cdef inline void _qmul(const double* a, const double* b, double* out) noexcept nogil:
    out[0] = a[3] * b[0] + a[0] * b[3] + a[1] * b[2] - a[2] * b[1]
    out[1] = a[3] * b[1] - a[0] * b[2] + a[1] * b[3] + a[2] * b[0]
    out[2] = a[3] * b[2] + a[0] * b[1] - a[1] * b[0] + a[2] * b[3]
    out[3] = a[3] * b[3] - a[0] * b[0] - a[1] * b[1] - a[2] * b[2]


cdef inline void _qexp(const double* v, double* out) noexcept nogil:
    cdef double th = sqrt(v[0] * v[0] + v[1] * v[1] + v[2] * v[2])
    cdef double k
    if th < 1e-8:
        k = 0.5 - th * th / 48.0
    else:
        k = sin(0.5 * th) / th
    out[0] = k * v[0]
    out[1] = k * v[1]
    out[2] = k * v[2]
    out[3] = cos(0.5 * th)


cdef inline void _qlog(const double* q, double* out) noexcept nogil:
    cdef double x = q[0], y = q[1], z = q[2], w = q[3]
    cdef double s, ang
    if w < 0:
        x = -x
        y = -y
        z = -z
        w = -w
    s = sqrt(x * x + y * y + z * z)
    if s < 1e-8:
        out[0] = 2 * x / w
        out[1] = 2 * y / w
        out[2] = 2 * z / w
        return
    ang = 2.0 * atan2(s, w) / s
    out[0] = x * ang
    out[1] = y * ang
    out[2] = z * ang


cdef inline void _qboxplus(const double* q, const double* d, double* out) noexcept nogil:
    cdef double e[4]
    cdef double n
    _qexp(d, e)
    _qmul(q, e, out)
    n = sqrt(out[0] * out[0] + out[1] * out[1] + out[2] * out[2] + out[3] * out[3])
    out[0] /= n
    out[1] /= n
    out[2] /= n
    out[3] /= n


cdef inline void _qboxminus(const double* q, const double* qref, double* out) noexcept nogil:
    cdef double c[4]
    cdef double t[4]
    c[0] = -qref[0]
    c[1] = -qref[1]
    c[2] = -qref[2]
    c[3] = qref[3]
    _qmul(c, q, t)
    _qlog(t, out)


cdef inline void _jr_inv(const double* phi, const double* w, double* out) noexcept nogil:
    # out = Jr^-1(phi) w = w + 1/2 phi x w + c phi x (phi x w)
    cdef double th2 = phi[0] * phi[0] + phi[1] * phi[1] + phi[2] * phi[2]
    cdef double th, c
    cdef double a[3]
    cdef double b[3]
    if th2 < 1e-10:
        c = 1.0 / 12.0 + th2 / 720.0
    else:
        th = sqrt(th2)
        c = 1.0 / th2 - (1.0 + cos(th)) / (2.0 * th * sin(th))
    _cross(phi, w, a)
    _cross(phi, a, b)
    out[0] = w[0] + 0.5 * a[0] + c * b[0]
    out[1] = w[1] + 0.5 * a[1] + c * b[1]
    out[2] = w[2] + 0.5 * a[2] + c * b[2]


cdef int _cholesky_solve(double* M, double* b, int n) noexcept nogil:
    # in-place Cholesky of symmetric M (row-major n x n), then solve M x = b into b
    cdef int i, j, k
    cdef double s
    for j in range(n):
        s = M[j * n + j]
        for k in range(j):
            s -= M[j * n + k] * M[j * n + k]
        if s <= 0.0:
            return -1
        M[j * n + j] = sqrt(s)
        for i in range(j + 1, n):
            s = M[i * n + j]
            for k in range(j):
                s -= M[i * n + k] * M[j * n + k]
            M[i * n + j] = s / M[j * n + j]
    for i in range(n):
        s = b[i]
        for k in range(i):
            s -= M[i * n + k] * b[k]
        b[i] = s / M[i * n + i]
    for i in range(n - 1, -1, -1):
        s = b[i]
        for k in range(i + 1, n):
            s -= M[k * n + i] * b[k]
        b[i] = s / M[i * n + i]
    return 0


cdef int _fwd_dyn(const double* P, int nj, const double* x, const double* tau,
                  const double* gext, double* udot) noexcept nogil:
    cdef int nv = 6 + nj
    cdef const double* q = x + 3
    cdef const double* qj = x + 7
    cdef const double* v = x + 7 + nj
    cdef const double* w = x + 10 + nj
    cdef const double* qjd = x + 13 + nj
    cdef double mb = P[0], mt = P[4], g = P[8]
    cdef double R[9]
    cdef double d[3]
    cdef double da[3]
    cdef double db[3]
    cdef double dab[3]
    cdef double dbb[3]
    cdef double r[3]
    cdef double J[3][3]
    cdef double vrel[3]
    cdef double crel[3]
    cdef double tmp[3]
    cdef double tmp2[3]
    cdef double yb[3]
    cdef double Iw[3]
    cdef double RJ[3][3]
    cdef double M[MAXV * MAXV]
    cdef double rhs[MAXV]
    cdef double a = qj[0], b = qj[1]
    cdef double ca = cos(a), sa = sin(a), cb = cos(b), sb = sin(b)
    cdef double ell, elld = 0.0, ad = qjd[0], bd = qjd[1]
    cdef double mtot = mb + mt
    cdef int i, j, k
    if nj == 3:
        ell = qj[2]
        elld = qjd[2]
    else:
        ell = P[9]
    _rot(q, R)
    d[0] = -ca * cb
    d[1] = -ca * sb
    d[2] = -sa
    da[0] = sa * cb
    da[1] = sa * sb
    da[2] = -ca
    db[0] = ca * sb
    db[1] = -ca * cb
    db[2] = 0.0
    dab[0] = -sa * sb
    dab[1] = sa * cb
    dab[2] = 0.0
    dbb[0] = ca * cb
    dbb[1] = ca * sb
    dbb[2] = 0.0
    for i in range(3):
        r[i] = P[5 + i] + ell * d[i]
        J[i][0] = ell * da[i]
        J[i][1] = ell * db[i]
        J[i][2] = d[i]
        vrel[i] = J[i][0] * ad + J[i][1] * bd + d[i] * elld
        # d_aa = -d
        crel[i] = ell * (-d[i] * ad * ad + 2.0 * dab[i] * ad * bd + dbb[i] * bd * bd) \
            + 2.0 * elld * (da[i] * ad + db[i] * bd)
    # bias = w x (w x r) + 2 w x vrel + crel + g R^T e_z
    _cross(w, r, tmp)
    _cross(w, tmp, tmp2)
    _cross(w, vrel, tmp)
    for i in range(3):
        yb[i] = tmp2[i] + 2.0 * tmp[i] + crel[i] + g * R[6 + i]
    for i in range(nv * nv):
        M[i] = 0.0
    for i in range(3):
        M[i * nv + i] = mtot
    # M_vw = -mt R [r]x, column k built from r x e_k
    for k in range(3):
        tmp[0] = 0.0
        tmp[1] = 0.0
        tmp[2] = 0.0
        tmp[k] = 1.0
        _cross(r, tmp, tmp2)
        for i in range(3):
            M[i * nv + 3 + k] = -mt * (R[3 * i] * tmp2[0] + R[3 * i + 1] * tmp2[1] + R[3 * i + 2] * tmp2[2])
            M[(3 + k) * nv + i] = M[i * nv + 3 + k]
    for j in range(nj):
        for i in range(3):
            RJ[i][j] = R[3 * i] * J[0][j] + R[3 * i + 1] * J[1][j] + R[3 * i + 2] * J[2][j]
            M[i * nv + 6 + j] = mt * RJ[i][j]
            M[(6 + j) * nv + i] = mt * RJ[i][j]
        tmp[0] = J[0][j]
        tmp[1] = J[1][j]
        tmp[2] = J[2][j]
        _cross(r, tmp, tmp2)
        for i in range(3):
            M[(3 + i) * nv + 6 + j] = mt * tmp2[i]
            M[(6 + j) * nv + 3 + i] = mt * tmp2[i]
    # M_ww = I_b - mt [r]x^2 = I_b + mt (|r|^2 I - r r^T)
    cdef double rr = r[0] * r[0] + r[1] * r[1] + r[2] * r[2]
    for i in range(3):
        for k in range(3):
            M[(3 + i) * nv + 3 + k] = -mt * r[i] * r[k]
        M[(3 + i) * nv + 3 + i] += P[1 + i] + mt * rr
    for j in range(nj):
        for k in range(nj):
            M[(6 + j) * nv + 6 + k] = mt * (J[0][j] * J[0][k] + J[1][j] * J[1][k] + J[2][j] * J[2][k])
    # rhs = S^T tau + gext - h
    for i in range(3):
        rhs[i] = gext[i] - mt * (R[3 * i] * yb[0] + R[3 * i + 1] * yb[1] + R[3 * i + 2] * yb[2])
    rhs[2] -= mb * g
    for i in range(3):
        Iw[i] = P[1 + i] * w[i]
    _cross(w, Iw, tmp)
    _cross(r, yb, tmp2)
    for i in range(3):
        rhs[3 + i] = gext[3 + i] - tmp[i] - mt * tmp2[i]
    for j in range(nj):
        rhs[6 + j] = gext[6 + j] + tau[j] - mt * (J[0][j] * yb[0] + J[1][j] * yb[1] + J[2][j] * yb[2])
    if mt <= 0.0:
        for j in range(nj):
            for k in range(nv):
                M[(6 + j) * nv + k] = 0.0
                M[k * nv + 6 + j] = 0.0
            M[(6 + j) * nv + 6 + j] = 1.0
            rhs[6 + j] = 0.0
    if _cholesky_solve(M, rhs, nv) != 0:
        return -1
    for i in range(nv):
        udot[i] = rhs[i]
    return 0


cdef int _deriv(const double* P, int nj, const double* x, const double* tau,
                const double* gext, double* out) noexcept nogil:
    # tangent-space time derivative [v, omega, qd, udot]
    cdef int nv = 6 + nj
    cdef int i
    for i in range(nv):
        out[i] = x[7 + nj + i]
    return _fwd_dyn(P, nj, x, tau, gext, out + nv)


cdef void _retract(int nj, const double* x, const double* dx, double* out) noexcept nogil:
    # out = x (+) dx
    cdef int nv = 6 + nj
    cdef int i
    for i in range(3):
        out[i] = x[i] + dx[i]
    _qboxplus(x + 3, dx + 3, out + 3)
    for i in range(nj):
        out[7 + i] = x[7 + i] + dx[6 + i]
    for i in range(nv):
        out[7 + nj + i] = x[7 + nj + i] + dx[nv + i]


cdef void _difference(int nj, const double* y, const double* x, double* out) noexcept nogil:
    # out = y (-) x
    cdef int nv = 6 + nj
    cdef int i
    for i in range(3):
        out[i] = y[i] - x[i]
    _qboxminus(y + 3, x + 3, out + 3)
    for i in range(nj):
        out[6 + i] = y[7 + i] - x[7 + i]
    for i in range(nv):
        out[nv + i] = y[7 + nj + i] - x[7 + nj + i]


cdef int _rk4(const double* P, int nj, const double* x, const double* tau,
              const double* gext, double h, double* out) noexcept nogil:
    cdef int nv = 6 + nj
    cdef int nt = 2 * nv
    cdef double k1[MAXT]
    cdef double k2[MAXT]
    cdef double k3[MAXT]
    cdef double k4[MAXT]
    cdef double dx[MAXT]
    cdef double xs[MAXX]
    cdef double corr[3]
    cdef int i
    if _deriv(P, nj, x, tau, gext, k1) != 0:
        return -1
    for i in range(nt):
        dx[i] = 0.5 * h * k1[i]
    _retract(nj, x, dx, xs)
    if _deriv(P, nj, xs, tau, gext, k2) != 0:
        return -1
    _jr_inv(dx + 3, k2 + 3, corr)
    k2[3] = corr[0]
    k2[4] = corr[1]
    k2[5] = corr[2]
    for i in range(nt):
        dx[i] = 0.5 * h * k2[i]
    _retract(nj, x, dx, xs)
    if _deriv(P, nj, xs, tau, gext, k3) != 0:
        return -1
    _jr_inv(dx + 3, k3 + 3, corr)
    k3[3] = corr[0]
    k3[4] = corr[1]
    k3[5] = corr[2]
    for i in range(nt):
        dx[i] = h * k3[i]
    _retract(nj, x, dx, xs)
    if _deriv(P, nj, xs, tau, gext, k4) != 0:
        return -1
    _jr_inv(dx + 3, k4 + 3, corr)
    k4[3] = corr[0]
    k4[4] = corr[1]
    k4[5] = corr[2]
    for i in range(nt):
        dx[i] = h / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i])
    _retract(nj, x, dx, out)
    return 0


def _check(int nj, Py_ssize_t nx):
    if nj != 2 and nj != 3:
        raise ValueError("nj must be 2 or 3")
    if nx != 13 + 2 * nj:
        raise ValueError(f"state has length {nx}, expected {13 + 2 * nj}")


def forward_dynamics(const double[::1] params, int nj, const double[::1] x,
                     const double[::1] tau, gen_ext=None):
    """Generalized accelerations ``[v_dot, omega_dot, qdd_tail]``."""
    _check(nj, x.shape[0])
    cdef double[::1] ext
    cdef double[::1] out = np.empty(6 + nj)
    if gen_ext is None:
        ext = np.zeros(6 + nj)
    else:
        ext = np.ascontiguousarray(gen_ext, dtype=float)
    if _fwd_dyn(&params[0], nj, &x[0], &tau[0], &ext[0], &out[0]) != 0:
        raise FloatingPointError("mass matrix is not positive definite")
    return np.asarray(out)


def rk4_step(const double[::1] params, int nj, const double[::1] x,
             const double[::1] tau, double dt, gen_ext=None):
    _check(nj, x.shape[0])
    cdef double[::1] ext
    cdef double[::1] out = np.empty(x.shape[0])
    if gen_ext is None:
        ext = np.zeros(6 + nj)
    else:
        ext = np.ascontiguousarray(gen_ext, dtype=float)
    if _rk4(&params[0], nj, &x[0], &tau[0], &ext[0], dt, &out[0]) != 0:
        raise FloatingPointError("mass matrix is not positive definite")
    return np.asarray(out)


def rollout(const double[::1] params, int nj, const double[::1] x0,
            const double[:, ::1] U, double dt):
    """States ``x_0 .. x_N`` obtained by stepping ``x0`` through the controls ``U``."""
    _check(nj, x0.shape[0])
    cdef Py_ssize_t N = U.shape[0], nx = x0.shape[0], k, i
    cdef double[:, ::1] X = np.empty((N + 1, nx))
    cdef double zero[MAXV]
    cdef int bad = 0
    for i in range(MAXV):
        zero[i] = 0.0
    for i in range(nx):
        X[0, i] = x0[i]
    with nogil:
        for k in range(N):
            if _rk4(&params[0], nj, &X[k, 0], &U[k, 0], zero, dt, &X[k + 1, 0]) != 0:
                bad = 1
                break
    if bad:
        raise FloatingPointError(f"mass matrix is not positive definite at knot {k}")
    return np.asarray(X)


def linearize(const double[::1] params, int nj, const double[:, ::1] X,
              const double[:, ::1] U, double dt, double rel_step=1e-6):
    """Central-difference Jacobians of the RK4 step in tangent coordinates.

    Returns ``(A, B)`` with shapes ``(N, nt, nt)`` and ``(N, nt, nj)``. The
    step for tangent coordinate ``i`` is ``rel_step * max(1, |x_i|)``; the
    rotation coordinates use ``rel_step``.
    """
    cdef Py_ssize_t N = U.shape[0], k
    cdef int nv = 6 + nj, nt = 12 + 2 * nj, nx = 13 + 2 * nj
    cdef int i, j, col, bad = 0
    cdef double[:, :, ::1] A = np.empty((N, nt, nt))
    cdef double[:, :, ::1] B = np.empty((N, nt, nj))
    cdef double zero[MAXV]
    cdef double dx[MAXT]
    cdef double xp[MAXX]
    cdef double xm[MAXX]
    cdef double yp[MAXX]
    cdef double ym[MAXX]
    cdef double ybar[MAXX]
    cdef double ep[MAXT]
    cdef double em[MAXT]
    cdef double up[3]
    cdef double um[3]
    cdef double h, val
    _check(nj, X.shape[1])
    for i in range(MAXV):
        zero[i] = 0.0
    with nogil:
        for k in range(N):
            if _rk4(&params[0], nj, &X[k, 0], &U[k, 0], zero, dt, ybar) != 0:
                bad = 1
                break
            for col in range(nt):
                if 3 <= col < 6:
                    h = rel_step
                else:
                    val = X[k, col] if col < 3 else X[k, col + 1]
                    h = rel_step * (fabs(val) if fabs(val) > 1.0 else 1.0)
                for i in range(nt):
                    dx[i] = 0.0
                dx[col] = h
                _retract(nj, &X[k, 0], dx, xp)
                dx[col] = -h
                _retract(nj, &X[k, 0], dx, xm)
                if _rk4(&params[0], nj, xp, &U[k, 0], zero, dt, yp) != 0:
                    bad = 1
                    break
                if _rk4(&params[0], nj, xm, &U[k, 0], zero, dt, ym) != 0:
                    bad = 1
                    break
                _difference(nj, yp, ybar, ep)
                _difference(nj, ym, ybar, em)
                for i in range(nt):
                    A[k, i, col] = (ep[i] - em[i]) / (2.0 * h)
            if bad:
                break
            for col in range(nj):
                for j in range(nj):
                    up[j] = U[k, j]
                    um[j] = U[k, j]
                val = U[k, col]
                h = rel_step * (fabs(val) if fabs(val) > 1.0 else 1.0)
                up[col] += h
                um[col] -= h
                if _rk4(&params[0], nj, &X[k, 0], up, zero, dt, yp) != 0:
                    bad = 1
                    break
                if _rk4(&params[0], nj, &X[k, 0], um, zero, dt, ym) != 0:
                    bad = 1
                    break
                _difference(nj, yp, ybar, ep)
                _difference(nj, ym, ybar, em)
                for i in range(nt):
                    B[k, i, col] = (ep[i] - em[i]) / (2.0 * h)
            if bad:
                break
    if bad:
        raise FloatingPointError(f"mass matrix is not positive definite at knot {k}")
    return np.asarray(A), np.asarray(B)


def retract(int nj, const double[::1] x, const double[::1] dx):
    cdef double[::1] out = np.empty(x.shape[0])
    _retract(nj, &x[0], &dx[0], &out[0])
    return np.asarray(out)


def difference(int nj, const double[::1] y, const double[::1] x):
    cdef double[::1] out = np.empty(12 + 2 * nj)
    _difference(nj, &y[0], &x[0], &out[0])
    return np.asarray(out)


# ----------------------------------------------------------------------------
# drop-simulation plant: 9-DoF body/tail, massless legs, penalty ground
#
# Plant vector C:
#   [L0, hips(12), half_extents(3), ell_lo, ell_hi, k_ground, c_ground, mu,
#    c_tangential, k_leg, c_leg, c_angular, f_leg_max, k_stop, c_stop,
#    rate_bracket, n_bisect, pitch_limit, k_pitch_stop, c_pitch_stop]

cdef enum:
    C_L0 = 0
    C_HIPS = 1
    C_EXT = 13
    C_ELL = 16
    C_GROUND = 18
    C_LEG = 22
    C_STOP = 26
    C_BRACKET = 28
    C_NBIS = 29
    C_PITCH = 30
    C_SIZE = 33


cdef inline void _ground(const double* pos, const double* vel, const double* C, double* F) noexcept nogil:
    cdef double pen = -pos[2]
    cdef double N, fx, fy, mag, cap, s
    if pen <= 0.0:
        F[0] = 0.0
        F[1] = 0.0
        F[2] = 0.0
        return
    N = C[C_GROUND] * pen - C[C_GROUND + 1] * vel[2]
    if N < 0.0:
        N = 0.0
    fx = -C[C_GROUND + 3] * vel[0]
    fy = -C[C_GROUND + 3] * vel[1]
    mag = sqrt(fx * fx + fy * fy)
    cap = C[C_GROUND + 2] * N
    s = 1.0
    if mag > cap:
        s = cap / mag if mag > 0.0 else 0.0
    F[0] = fx * s
    F[1] = fy * s
    F[2] = N


cdef inline double _leg_residual(const double* fpos, const double* bvel, const double* axis,
                                 double spring, double ld, const double* C, double* G) noexcept nogil:
    cdef double fv[3]
    cdef double leg
    fv[0] = bvel[0] + ld * axis[0]
    fv[1] = bvel[1] + ld * axis[1]
    fv[2] = bvel[2] + ld * axis[2]
    _ground(fpos, fv, C, G)
    leg = spring - C[C_LEG + 1] * ld
    if leg < 0.0:
        leg = 0.0
    elif leg > C[C_LEG + 3]:
        leg = C[C_LEG + 3]
    return -(G[0] * axis[0] + G[1] * axis[1] + G[2] * axis[2]) - leg


cdef void _legs(const double* C, const double* x, const double* R, const double* L, int stance,
                double* Ld, double* G, double* fpos) noexcept nogil:
    cdef const double* p = x
    cdef const double* v = x + 10
    cdef const double* w = x + 13
    cdef double axis[3]
    cdef double pts[3]
    cdef double wp[3]
    cdef double bvel[3]
    cdef double wh[3]
    cdef double spring, ang, lo, hi, mid, r
    cdef double L0 = C[C_L0]
    cdef int i, j, it
    cdef int nbis = <int>C[C_NBIS]
    axis[0] = -R[2]
    axis[1] = -R[5]
    axis[2] = -R[8]
    for i in range(4):
        pts[0] = C[C_HIPS + 3 * i]
        pts[1] = C[C_HIPS + 3 * i + 1]
        pts[2] = C[C_HIPS + 3 * i + 2] - L[i]
        _cross(w, pts, wp)
        for j in range(3):
            fpos[3 * i + j] = p[j] + R[3 * j] * pts[0] + R[3 * j + 1] * pts[1] + R[3 * j + 2] * pts[2]
            bvel[j] = v[j] + R[3 * j] * wp[0] + R[3 * j + 1] * wp[1] + R[3 * j + 2] * wp[2]
        ang = 0.0
        if stance:
            _cross(w, C + C_HIPS + 3 * i, wh)
            ang = -C[C_LEG + 2] * wh[2]
        spring = C[C_LEG] * (L0 - L[i]) + ang
        if fpos[3 * i + 2] >= 0.0:
            Ld[i] = (spring if spring > 0.0 else 0.0) / C[C_LEG + 1]
        else:
            lo = -C[C_BRACKET]
            hi = C[C_BRACKET]
            for it in range(nbis):
                mid = 0.5 * (lo + hi)
                r = _leg_residual(fpos + 3 * i, bvel, axis, spring, mid, C, G + 3 * i)
                if r > 0.0:
                    hi = mid
                else:
                    lo = mid
            Ld[i] = 0.5 * (lo + hi)
        if L[i] >= L0 and Ld[i] > 0.0:
            Ld[i] = 0.0
        _leg_residual(fpos + 3 * i, bvel, axis, spring, Ld[i], C, G + 3 * i)


cdef int _plant_deriv(const double* P, const double* C, const double* x, const double* L,
                      const double* tau, int stance, double* dx, double* Ld,
                      double* G, double* fpos, double* body_pen) noexcept nogil:
    cdef double R[9]
    cdef double gen[9]
    cdef double arm[3]
    cdef double ab[3]
    cdef double fb[3]
    cdef double t3[3]
    cdef double c[3]
    cdef double cp_[3]
    cdef double cv[3]
    cdef double F[3]
    cdef double d[3]
    cdef double dp[3]
    cdef double dy[3]
    cdef double r[3]
    cdef double vrel[3]
    cdef double tpos[3]
    cdef double tvel[3]
    cdef const double* w = x + 13
    cdef double cpi, spi, cya, sya, ell, depth
    cdef int i, j, k, sx, sy, sz
    _rot(x + 3, R)
    for i in range(9):
        gen[i] = 0.0
    body_pen[0] = 0.0
    _legs(C, x, R, L, stance, Ld, G, fpos)
    for i in range(4):
        for j in range(3):
            gen[j] += G[3 * i + j]
            arm[j] = fpos[3 * i + j] - x[j]
        for j in range(3):
            ab[j] = R[j] * arm[0] + R[3 + j] * arm[1] + R[6 + j] * arm[2]
            fb[j] = R[j] * G[3 * i] + R[3 + j] * G[3 * i + 1] + R[6 + j] * G[3 * i + 2]
        _cross(ab, fb, t3)
        for j in range(3):
            gen[3 + j] += t3[j]
    # body box corners
    for k in range(8):
        sx = 1 if (k & 4) else -1
        sy = 1 if (k & 2) else -1
        sz = 1 if (k & 1) else -1
        c[0] = sx * C[C_EXT]
        c[1] = sy * C[C_EXT + 1]
        c[2] = sz * C[C_EXT + 2]
        cp_[2] = x[2] + R[6] * c[0] + R[7] * c[1] + R[8] * c[2]
        if cp_[2] < 0.0:
            if -cp_[2] > body_pen[0]:
                body_pen[0] = -cp_[2]
            _cross(w, c, t3)
            for j in range(3):
                cp_[j] = x[j] + R[3 * j] * c[0] + R[3 * j + 1] * c[1] + R[3 * j + 2] * c[2]
                cv[j] = x[10 + j] + R[3 * j] * t3[0] + R[3 * j + 1] * t3[1] + R[3 * j + 2] * t3[2]
            _ground(cp_, cv, C, F)
            for j in range(3):
                gen[j] += F[j]
                fb[j] = R[j] * F[0] + R[3 + j] * F[1] + R[6 + j] * F[2]
            _cross(c, fb, t3)
            for j in range(3):
                gen[3 + j] += t3[j]
    # tail point mass
    if P[4] > 0.0:
        cpi = cos(x[7])
        spi = sin(x[7])
        cya = cos(x[8])
        sya = sin(x[8])
        ell = x[9]
        d[0] = -cpi * cya
        d[1] = -cpi * sya
        d[2] = -spi
        dp[0] = spi * cya
        dp[1] = spi * sya
        dp[2] = -cpi
        dy[0] = cpi * sya
        dy[1] = -cpi * cya
        dy[2] = 0.0
        for j in range(3):
            r[j] = P[5 + j] + ell * d[j]
            vrel[j] = ell * (dp[j] * x[16] + dy[j] * x[17]) + d[j] * x[18]
        tpos[2] = x[2] + R[6] * r[0] + R[7] * r[1] + R[8] * r[2]
        if tpos[2] < 0.0:
            if -tpos[2] > body_pen[0]:
                body_pen[0] = -tpos[2]
            _cross(w, r, t3)
            for j in range(3):
                t3[j] += vrel[j]
            for j in range(3):
                tpos[j] = x[j] + R[3 * j] * r[0] + R[3 * j + 1] * r[1] + R[3 * j + 2] * r[2]
                tvel[j] = x[10 + j] + R[3 * j] * t3[0] + R[3 * j + 1] * t3[1] + R[3 * j + 2] * t3[2]
            _ground(tpos, tvel, C, F)
            for j in range(3):
                gen[j] += F[j]
                fb[j] = R[j] * F[0] + R[3 + j] * F[1] + R[6 + j] * F[2]
            _cross(r, fb, t3)
            for j in range(3):
                gen[3 + j] += t3[j]
            gen[6] += ell * (dp[0] * fb[0] + dp[1] * fb[1] + dp[2] * fb[2])
            gen[7] += ell * (dy[0] * fb[0] + dy[1] * fb[1] + dy[2] * fb[2])
            gen[8] += d[0] * fb[0] + d[1] * fb[1] + d[2] * fb[2]
    # prismatic end stops
    if x[9] > C[C_ELL + 1]:
        gen[8] -= C[C_STOP] * (x[9] - C[C_ELL + 1]) + C[C_STOP + 1] * (x[18] if x[18] > 0.0 else 0.0)
    elif x[9] < C[C_ELL]:
        gen[8] += C[C_STOP] * (C[C_ELL] - x[9]) - C[C_STOP + 1] * (x[18] if x[18] < 0.0 else 0.0)
    # tail pitch stops keep the gimbal away from its singularity
    if x[7] > C[C_PITCH]:
        gen[6] -= C[C_PITCH + 1] * (x[7] - C[C_PITCH]) + C[C_PITCH + 2] * (x[16] if x[16] > 0.0 else 0.0)
    elif x[7] < -C[C_PITCH]:
        gen[6] += C[C_PITCH + 1] * (-C[C_PITCH] - x[7]) - C[C_PITCH + 2] * (x[16] if x[16] < 0.0 else 0.0)
    return _deriv(P, 3, x, tau, gen, dx)


cdef int _plant_rk4(const double* P, const double* C, const double* x, const double* L,
                    const double* tau, int stance, double h, double* xo, double* Lo) noexcept nogil:
    cdef double k[4][18]
    cdef double l[4][4]
    cdef double dx[18]
    cdef double xs[19]
    cdef double Ls[4]
    cdef double corr[3]
    cdef double G[12]
    cdef double fpos[12]
    cdef double pen
    cdef double cs[3]
    cdef int s, i
    cs[0] = 0.5
    cs[1] = 0.5
    cs[2] = 1.0
    if _plant_deriv(P, C, x, L, tau, stance, k[0], l[0], G, fpos, &pen) != 0:
        return -1
    for s in range(3):
        for i in range(18):
            dx[i] = cs[s] * h * k[s][i]
        for i in range(4):
            Ls[i] = L[i] + cs[s] * h * l[s][i]
        _retract(3, x, dx, xs)
        if _plant_deriv(P, C, xs, Ls, tau, stance, k[s + 1], l[s + 1], G, fpos, &pen) != 0:
            return -1
        _jr_inv(dx + 3, k[s + 1] + 3, corr)
        k[s + 1][3] = corr[0]
        k[s + 1][4] = corr[1]
        k[s + 1][5] = corr[2]
    for i in range(18):
        dx[i] = h / 6.0 * (k[0][i] + 2.0 * k[1][i] + 2.0 * k[2][i] + k[3][i])
    _retract(3, x, dx, xo)
    for i in range(4):
        Lo[i] = L[i] + h / 6.0 * (l[0][i] + 2.0 * l[1][i] + 2.0 * l[2][i] + l[3][i])
        if Lo[i] > C[C_L0]:
            Lo[i] = C[C_L0]
    return 0


def _check_plant(const double[::1] C, const double[::1] x, const double[::1] L):
    if C.shape[0] != C_SIZE:
        raise ValueError(f"plant vector must have {C_SIZE} entries")
    if x.shape[0] != 19 or L.shape[0] != 4:
        raise ValueError("plant needs a 19-entry state and 4 leg lengths")


def plant_step(const double[::1] params, const double[::1] C, const double[::1] x,
               const double[::1] L, const double[::1] tau, double dt, bint stance):
    """One RK4 step of the drop plant; returns ``(x_next, L_next)``."""
    _check_plant(C, x, L)
    cdef double[::1] xo = np.empty(19)
    cdef double[::1] Lo = np.empty(4)
    if _plant_rk4(&params[0], &C[0], &x[0], &L[0], &tau[0], stance, dt, &xo[0], &Lo[0]) != 0:
        raise FloatingPointError("mass matrix is not positive definite")
    return np.asarray(xo), np.asarray(Lo)


def plant_contacts(const double[::1] params, const double[::1] C, const double[::1] x,
                   const double[::1] L, bint stance):
    """Leg rates, foot ground forces (4, 3), foot positions (4, 3) and non-foot penetration."""
    _check_plant(C, x, L)
    cdef double[::1] dx = np.empty(18)
    cdef double[::1] Ld = np.empty(4)
    cdef double[:, ::1] G = np.empty((4, 3))
    cdef double[:, ::1] fpos = np.empty((4, 3))
    cdef double[::1] tau = np.zeros(3)
    cdef double pen = 0.0
    if _plant_deriv(&params[0], &C[0], &x[0], &L[0], &tau[0], stance, &dx[0], &Ld[0], &G[0, 0], &fpos[0, 0], &pen) != 0:
        raise FloatingPointError("mass matrix is not positive definite")
    return np.asarray(Ld), np.asarray(G), np.asarray(fpos), pen
