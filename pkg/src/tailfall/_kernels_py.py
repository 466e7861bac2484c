"""Pure-numpy twin of the compiled ``_kernels`` module.

Same functions, same layouts, same numbers (to rounding). Everything below
broadcasts over leading axes so :func:`linearize` can push every perturbed
state of every knot through one batched RK4 step.
"""

from __future__ import annotations

import numpy as np


def _cross(a, b):
    return np.cross(a, b)


def _rot(q):
    x, y, z, w = q[..., 0], q[..., 1], q[..., 2], q[..., 3]
    R = np.empty(q.shape[:-1] + (3, 3))
    R[..., 0, 0] = 1 - 2 * (y * y + z * z)
    R[..., 0, 1] = 2 * (x * y - z * w)
    R[..., 0, 2] = 2 * (x * z + y * w)
    R[..., 1, 0] = 2 * (x * y + z * w)
    R[..., 1, 1] = 1 - 2 * (x * x + z * z)
    R[..., 1, 2] = 2 * (y * z - x * w)
    R[..., 2, 0] = 2 * (x * z - y * w)
    R[..., 2, 1] = 2 * (y * z + x * w)
    R[..., 2, 2] = 1 - 2 * (x * x + y * y)
    return R


def _qmul(a, b):
    ax, ay, az, aw = (a[..., i] for i in range(4))
    bx, by, bz, bw = (b[..., i] for i in range(4))
    return np.stack(
        [
            aw * bx + ax * bw + ay * bz - az * by,
            aw * by - ax * bz + ay * bw + az * bx,
            aw * bz + ax * by - ay * bx + az * bw,
            aw * bw - ax * bx - ay * by - az * bz,
        ],
        axis=-1,
    )


def _qexp(v):
    th = np.sqrt(np.sum(v * v, axis=-1))
    small = th < 1e-8
    safe = np.where(small, 1.0, th)
    k = np.where(small, 0.5 - th * th / 48.0, np.sin(0.5 * safe) / safe)
    return np.concatenate([k[..., None] * v, np.cos(0.5 * th)[..., None]], axis=-1)


def _qlog(q):
    sign = np.where(q[..., 3:4] < 0, -1.0, 1.0)
    q = q * sign
    s = np.sqrt(np.sum(q[..., :3] ** 2, axis=-1))
    small = s < 1e-8
    safe = np.where(small, 1.0, s)
    k = np.where(small, 2.0 / q[..., 3], 2.0 * np.arctan2(s, q[..., 3]) / safe)
    return q[..., :3] * k[..., None]


def _qconj(q):
    return q * np.array([-1.0, -1.0, -1.0, 1.0])


def _jr_inv(phi, w):
    th2 = np.sum(phi * phi, axis=-1)
    small = th2 < 1e-10
    th = np.sqrt(np.where(small, 1.0, th2))
    c = np.where(
        small,
        1.0 / 12.0 + th2 / 720.0,
        1.0 / np.where(small, 1.0, th2) - (1.0 + np.cos(th)) / (2.0 * th * np.sin(th)),
    )
    a = _cross(phi, w)
    return w + 0.5 * a + c[..., None] * _cross(phi, a)


def _split(x, nj):
    return (
        x[..., 0:3],
        x[..., 3:7],
        x[..., 7 : 7 + nj],
        x[..., 7 + nj : 10 + nj],
        x[..., 10 + nj : 13 + nj],
        x[..., 13 + nj : 13 + 2 * nj],
    )


def _fwd_dyn(P, nj, x, tau, gext):
    mb, Ib, mt, mount, g = P[0], P[1:4], P[4], P[5:8], P[8]
    _, q, qj, v, w, qjd = _split(x, nj)
    a, b = qj[..., 0], qj[..., 1]
    ad, bd = qjd[..., 0], qjd[..., 1]
    if nj == 3:
        ell, elld = qj[..., 2], qjd[..., 2]
    else:
        ell = np.full(a.shape, P[9])
        elld = np.zeros(a.shape)
    ca, sa, cb, sb = np.cos(a), np.sin(a), np.cos(b), np.sin(b)
    zero = np.zeros_like(a)
    d = np.stack([-ca * cb, -ca * sb, -sa], axis=-1)
    da = np.stack([sa * cb, sa * sb, -ca], axis=-1)
    db = np.stack([ca * sb, -ca * cb, zero], axis=-1)
    dab = np.stack([-sa * sb, sa * cb, zero], axis=-1)
    dbb = np.stack([ca * cb, ca * sb, zero], axis=-1)
    e = ell[..., None]
    r = mount + e * d
    cols = [e * da, e * db, d][:nj]
    J = np.stack(cols, axis=-1)  # (..., 3, nj)
    vrel = np.einsum("...ij,...j->...i", J, qjd)
    crel = e * (
        -d * (ad * ad)[..., None] + 2.0 * dab * (ad * bd)[..., None] + dbb * (bd * bd)[..., None]
    ) + 2.0 * elld[..., None] * (da * ad[..., None] + db * bd[..., None])
    R = _rot(q)
    yb = _cross(w, _cross(w, r)) + 2.0 * _cross(w, vrel) + crel + g * R[..., 2, :]

    nv = 6 + nj
    shape = a.shape
    M = np.zeros(shape + (nv, nv))
    eye3 = np.eye(3)
    M[..., 0:3, 0:3] = (mb + mt) * eye3
    rx = np.zeros(shape + (3, 3))
    rx[..., 0, 1], rx[..., 0, 2] = -r[..., 2], r[..., 1]
    rx[..., 1, 0], rx[..., 1, 2] = r[..., 2], -r[..., 0]
    rx[..., 2, 0], rx[..., 2, 1] = -r[..., 1], r[..., 0]
    Mvw = -mt * R @ rx
    M[..., 0:3, 3:6] = Mvw
    M[..., 3:6, 0:3] = np.swapaxes(Mvw, -1, -2)
    RJ = mt * R @ J
    M[..., 0:3, 6:] = RJ
    M[..., 6:, 0:3] = np.swapaxes(RJ, -1, -2)
    rJ = mt * rx @ J
    M[..., 3:6, 6:] = rJ
    M[..., 6:, 3:6] = np.swapaxes(rJ, -1, -2)
    rr = np.sum(r * r, axis=-1)[..., None, None]
    M[..., 3:6, 3:6] = np.diag(Ib) + mt * (rr * eye3 - r[..., :, None] * r[..., None, :])
    M[..., 6:, 6:] = mt * np.swapaxes(J, -1, -2) @ J

    rhs = np.array(np.broadcast_to(gext, shape + (nv,)), dtype=float)
    rhs[..., 0:3] -= mt * np.einsum("...ij,...j->...i", R, yb)
    rhs[..., 2] -= mb * g
    rhs[..., 3:6] -= _cross(w, Ib * w) + mt * _cross(r, yb)
    rhs[..., 6:] += tau - mt * np.einsum("...ij,...i->...j", J, yb)
    if mt <= 0.0:
        M[..., 6:, :] = 0.0
        M[..., :, 6:] = 0.0
        M[..., 6:, 6:] = np.eye(nj)
        rhs[..., 6:] = 0.0
    return np.linalg.solve(M, rhs[..., None])[..., 0]


def _deriv(P, nj, x, tau, gext):
    nv = 6 + nj
    return np.concatenate([x[..., 7 + nj : 7 + nj + nv], _fwd_dyn(P, nj, x, tau, gext)], axis=-1)


def _retract(nj, x, dx):
    nv = 6 + nj
    out = np.empty(np.broadcast_shapes(x.shape, dx.shape[:-1] + (x.shape[-1],)))
    out[..., 0:3] = x[..., 0:3] + dx[..., 0:3]
    qn = _qmul(x[..., 3:7], _qexp(dx[..., 3:6]))
    out[..., 3:7] = qn / np.linalg.norm(qn, axis=-1, keepdims=True)
    out[..., 7 : 7 + nj] = x[..., 7 : 7 + nj] + dx[..., 6 : 6 + nj]
    out[..., 7 + nj :] = x[..., 7 + nj :] + dx[..., nv:]
    return out


def _difference(nj, y, x):
    nv = 6 + nj
    out = np.empty(np.broadcast_shapes(y.shape, x.shape)[:-1] + (2 * nv,))
    out[..., 0:3] = y[..., 0:3] - x[..., 0:3]
    out[..., 3:6] = _qlog(_qmul(_qconj(x[..., 3:7]), y[..., 3:7]))
    out[..., 6 : 6 + nj] = y[..., 7 : 7 + nj] - x[..., 7 : 7 + nj]
    out[..., nv:] = y[..., 7 + nj :] - x[..., 7 + nj :]
    return out


def _rk4(P, nj, x, tau, gext, h):
    k1 = _deriv(P, nj, x, tau, gext)
    dx = 0.5 * h * k1
    k2 = _deriv(P, nj, _retract(nj, x, dx), tau, gext)
    k2[..., 3:6] = _jr_inv(dx[..., 3:6], k2[..., 3:6])
    dx = 0.5 * h * k2
    k3 = _deriv(P, nj, _retract(nj, x, dx), tau, gext)
    k3[..., 3:6] = _jr_inv(dx[..., 3:6], k3[..., 3:6])
    dx = h * k3
    k4 = _deriv(P, nj, _retract(nj, x, dx), tau, gext)
    k4[..., 3:6] = _jr_inv(dx[..., 3:6], k4[..., 3:6])
    return _retract(nj, x, h / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4))


def _check(nj, nx):
    if nj not in (2, 3):
        raise ValueError("nj must be 2 or 3")
    if nx != 13 + 2 * nj:
        raise ValueError(f"state has length {nx}, expected {13 + 2 * nj}")


def _ext(nj, gen_ext):
    return np.zeros(6 + nj) if gen_ext is None else np.asarray(gen_ext, dtype=float)


def forward_dynamics(params, nj, x, tau, gen_ext=None):
    """Generalized accelerations ``[v_dot, omega_dot, qdd_tail]``."""
    x = np.asarray(x, dtype=float)
    _check(nj, x.shape[-1])
    return _fwd_dyn(np.asarray(params), nj, x, np.asarray(tau, dtype=float), _ext(nj, gen_ext))


def rk4_step(params, nj, x, tau, dt, gen_ext=None):
    x = np.asarray(x, dtype=float)
    _check(nj, x.shape[-1])
    return _rk4(np.asarray(params), nj, x, np.asarray(tau, dtype=float), _ext(nj, gen_ext), dt)


def rollout(params, nj, x0, U, dt):
    """States ``x_0 .. x_N`` obtained by stepping ``x0`` through the controls ``U``."""
    x0 = np.asarray(x0, dtype=float)
    _check(nj, x0.shape[-1])
    P = np.asarray(params)
    U = np.asarray(U, dtype=float)
    X = np.empty((U.shape[0] + 1, x0.shape[0]))
    X[0] = x0
    ext = np.zeros(6 + nj)
    for k in range(U.shape[0]):
        X[k + 1] = _rk4(P, nj, X[k], U[k], ext, dt)
    return X


def linearize(params, nj, X, U, dt, rel_step=1e-6):
    """Central-difference Jacobians of the RK4 step in tangent coordinates."""
    X = np.asarray(X, dtype=float)
    U = np.asarray(U, dtype=float)
    _check(nj, X.shape[-1])
    P = np.asarray(params)
    N = U.shape[0]
    nt = 12 + 2 * nj
    Xk = X[:N]
    ext = np.zeros(6 + nj)

    vals = np.concatenate([Xk[:, :3], np.zeros((N, 3)), Xk[:, 7:]], axis=1)
    hx = rel_step * np.maximum(1.0, np.abs(vals))
    hx[:, 3:6] = rel_step
    hu = rel_step * np.maximum(1.0, np.abs(U))

    # perturbed batch per knot: +x dirs, -x dirs, +u dirs, -u dirs
    dxs = np.zeros((N, 2 * nt, nt))
    idx = np.arange(nt)
    dxs[:, idx, idx] = hx
    dxs[:, nt + idx, idx] = -hx
    xs = _retract(nj, Xk[:, None, :], dxs)
    us = np.repeat(U[:, None, :], 2 * nt, axis=1)
    xu = np.repeat(Xk[:, None, :], 2 * nj, axis=1)
    uu = np.repeat(U[:, None, :], 2 * nj, axis=1)
    jdx = np.arange(nj)
    uu[:, jdx, jdx] += hu
    uu[:, nj + jdx, jdx] -= hu

    xa = np.concatenate([Xk[:, None, :], xs, xu], axis=1)
    ua = np.concatenate([U[:, None, :], us, uu], axis=1)
    ya = _rk4(P, nj, xa, ua, ext, dt)
    ybar = ya[:, :1, :]
    e = _difference(nj, ya[:, 1:, :], ybar)
    A = (e[:, :nt] - e[:, nt : 2 * nt]) / (2.0 * hx[:, :, None])
    A = np.swapaxes(A, 1, 2)
    eu = e[:, 2 * nt :]
    B = (eu[:, :nj] - eu[:, nj:]) / (2.0 * hu[:, :, None])
    B = np.swapaxes(B, 1, 2)
    return np.ascontiguousarray(A), np.ascontiguousarray(B)


def retract(nj, x, dx):
    return _retract(nj, np.asarray(x, dtype=float), np.asarray(dx, dtype=float))


def difference(nj, y, x):
    return _difference(nj, np.asarray(y, dtype=float), np.asarray(x, dtype=float))


# ----------------------------------------------------------------------------
# drop-simulation plant (see the compiled module for the plant vector layout)

_C_SIZE = 33


def _ground(pos, vel, C):
    pen = -pos[2]
    if pen <= 0.0:
        return np.zeros(3)
    N = max(0.0, C[18] * pen - C[19] * vel[2])
    fx, fy = -C[21] * vel[0], -C[21] * vel[1]
    mag = np.hypot(fx, fy)
    cap = C[20] * N
    s = 1.0
    if mag > cap:
        s = cap / mag if mag > 0.0 else 0.0
    return np.array([fx * s, fy * s, N])


def _leg_residual(fpos, bvel, axis, spring, ld, C):
    G = _ground(fpos, bvel + ld * axis, C)
    leg = min(max(spring - C[23] * ld, 0.0), C[25])
    return -(G @ axis) - leg, G


def _legs(C, x, R, L, stance):
    L0 = C[0]
    hips = C[1:13].reshape(4, 3)
    w = x[13:16]
    axis = -R[:, 2]
    Ld = np.empty(4)
    G = np.empty((4, 3))
    fpos = np.empty((4, 3))
    for i in range(4):
        pts = hips[i] - np.array([0.0, 0.0, L[i]])
        fpos[i] = x[0:3] + R @ pts
        bvel = x[10:13] + R @ np.cross(w, pts)
        ang = -C[24] * np.cross(w, hips[i])[2] if stance else 0.0
        spring = C[22] * (L0 - L[i]) + ang
        if fpos[i, 2] >= 0.0:
            Ld[i] = max(spring, 0.0) / C[23]
        else:
            lo, hi = -C[28], C[28]
            for _ in range(int(C[29])):
                mid = 0.5 * (lo + hi)
                r, _ = _leg_residual(fpos[i], bvel, axis, spring, mid, C)
                if r > 0.0:
                    hi = mid
                else:
                    lo = mid
            Ld[i] = 0.5 * (lo + hi)
        if L[i] >= L0 and Ld[i] > 0.0:
            Ld[i] = 0.0
        _, G[i] = _leg_residual(fpos[i], bvel, axis, spring, Ld[i], C)
    return Ld, G, fpos


def _plant_deriv(P, C, x, L, tau, stance):
    R = _rot(x[3:7])
    w = x[13:16]
    gen = np.zeros(9)
    pen = 0.0
    Ld, G, fpos = _legs(C, x, R, L, stance)
    for i in range(4):
        gen[0:3] += G[i]
        gen[3:6] += np.cross(R.T @ (fpos[i] - x[0:3]), R.T @ G[i])
    ext = C[13:16]
    for k in range(8):
        c = np.array([1 if k & 4 else -1, 1 if k & 2 else -1, 1 if k & 1 else -1]) * ext
        cz = x[2] + R[2] @ c
        if cz < 0.0:
            pen = max(pen, -cz)
            F = _ground(x[0:3] + R @ c, x[10:13] + R @ np.cross(w, c), C)
            gen[0:3] += F
            gen[3:6] += np.cross(c, R.T @ F)
    if P[4] > 0.0:
        cp, sp, cy, sy = np.cos(x[7]), np.sin(x[7]), np.cos(x[8]), np.sin(x[8])
        ell = x[9]
        d = np.array([-cp * cy, -cp * sy, -sp])
        dp = np.array([sp * cy, sp * sy, -cp])
        dy = np.array([cp * sy, -cp * cy, 0.0])
        r = P[5:8] + ell * d
        tz = x[2] + R[2] @ r
        if tz < 0.0:
            pen = max(pen, -tz)
            vrel = ell * (dp * x[16] + dy * x[17]) + d * x[18]
            F = _ground(x[0:3] + R @ r, x[10:13] + R @ (np.cross(w, r) + vrel), C)
            fb = R.T @ F
            gen[0:3] += F
            gen[3:6] += np.cross(r, fb)
            gen[6] += ell * (dp @ fb)
            gen[7] += ell * (dy @ fb)
            gen[8] += d @ fb
    if x[9] > C[17]:
        gen[8] -= C[26] * (x[9] - C[17]) + C[27] * max(x[18], 0.0)
    elif x[9] < C[16]:
        gen[8] += C[26] * (C[16] - x[9]) - C[27] * min(x[18], 0.0)
    if x[7] > C[30]:
        gen[6] -= C[31] * (x[7] - C[30]) + C[32] * max(x[16], 0.0)
    elif x[7] < -C[30]:
        gen[6] += C[31] * (-C[30] - x[7]) - C[32] * min(x[16], 0.0)
    dx = _deriv(P, 3, x, tau, gen)
    return dx, Ld, G, fpos, pen


def _check_plant(C, x, L):
    if C.shape[0] != _C_SIZE:
        raise ValueError(f"plant vector must have {_C_SIZE} entries")
    if x.shape[0] != 19 or L.shape[0] != 4:
        raise ValueError("plant needs a 19-entry state and 4 leg lengths")


def plant_step(params, C, x, L, tau, dt, stance):
    """One RK4 step of the drop plant; returns ``(x_next, L_next)``."""
    P, C = np.asarray(params), np.asarray(C)
    x, L, tau = (np.asarray(a, dtype=float) for a in (x, L, tau))
    _check_plant(C, x, L)
    k1, l1, *_ = _plant_deriv(P, C, x, L, tau, stance)
    ks, ls = [k1], [l1]
    for c in (0.5, 0.5, 1.0):
        inc = c * dt * ks[-1]
        ki, li, *_ = _plant_deriv(P, C, _retract(3, x, inc), L + c * dt * ls[-1], tau, stance)
        ki[3:6] = _jr_inv(inc[3:6], ki[3:6])
        ks.append(ki)
        ls.append(li)
    xo = _retract(3, x, dt / 6.0 * (ks[0] + 2 * ks[1] + 2 * ks[2] + ks[3]))
    Lo = np.minimum(L + dt / 6.0 * (ls[0] + 2 * ls[1] + 2 * ls[2] + ls[3]), C[0])
    return xo, Lo


def plant_contacts(params, C, x, L, stance):
    """Leg rates, foot ground forces (4, 3), foot positions (4, 3) and non-foot penetration."""
    P, C = np.asarray(params), np.asarray(C)
    x, L = np.asarray(x, dtype=float), np.asarray(L, dtype=float)
    _check_plant(C, x, L)
    _, Ld, G, fpos, pen = _plant_deriv(P, C, x, L, np.zeros(3), stance)
    return Ld, G, fpos, pen
