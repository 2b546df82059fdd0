"""Numba kernels for the hot per-step loops.

All kernels advance a block of steps with plain float64 arrays, write the
visited states into preallocated output blocks (row 0 is the incoming state),
and leave the final state in the state arrays.  Per-step arithmetic is written
exactly as documented by the calling modules so that results do not depend on
how a run is split into blocks.
"""

import numba as nb
import numpy as np

BASIS_NEG_IDENTITY = 0
BASIS_IDENTITY = 1
BASIS_NEG_CUBE = 2

BASIS_IDS = {
    "neg-identity": BASIS_NEG_IDENTITY,
    "identity": BASIS_IDENTITY,
    "neg-cubic": BASIS_NEG_CUBE,
}

_JIT = dict(cache=True, nogil=True)


@nb.njit(inline="always", **_JIT)
def _basis(basis_id, x, out):
    for i in range(x.shape[0]):
        if basis_id == BASIS_NEG_IDENTITY:
            out[i] = -x[i]
        elif basis_id == BASIS_IDENTITY:
            out[i] = x[i]
        else:
            out[i] = -x[i] * x[i] * x[i]


@nb.njit(**_JIT)
def colored_additive_block(x, y, theta, g, a_mat, sigma, basis_id,
                           inv_eps, inv_eps2, h, sqrt_h, xi, xb, yb):
    d = x.shape[0]
    n = y.shape[0]
    m = sigma.shape[1]
    l = theta.shape[1]
    nsteps = xi.shape[0]
    f = np.empty(l)
    xn = np.empty(d)
    yn = np.empty(n)
    for i in range(d):
        xb[0, i] = x[i]
    for a in range(n):
        yb[0, a] = y[a]
    for k in range(nsteps):
        _basis(basis_id, x, f)
        for i in range(d):
            drift = 0.0
            for j in range(l):
                drift += theta[i, j] * f[j]
            gy = 0.0
            for a in range(n):
                gy += g[i, a] * y[a]
            xn[i] = x[i] + (drift + gy * inv_eps) * h
        for a in range(n):
            ay = 0.0
            for c in range(n):
                ay += a_mat[a, c] * y[c]
            sw = 0.0
            for c in range(m):
                sw += sigma[a, c] * xi[k, c]
            yn[a] = y[a] - ay * inv_eps2 * h + sw * inv_eps * sqrt_h
        for i in range(d):
            x[i] = xn[i]
            xb[k + 1, i] = xn[i]
        for a in range(n):
            y[a] = yn[a]
            yb[k + 1, a] = yn[a]


@nb.njit(**_JIT)
def colored_isonorm_block(x, y, theta, a_mat, sigma, kappa, beta, basis_id,
                          inv_eps, inv_eps2, h, sqrt_h, xi, xb, yb):
    d = x.shape[0]
    n = y.shape[0]
    m = sigma.shape[1]
    l = theta.shape[1]
    nsteps = xi.shape[0]
    f = np.empty(l)
    xn = np.empty(d)
    yn = np.empty(n)
    for i in range(d):
        xb[0, i] = x[i]
    for a in range(n):
        yb[0, a] = y[a]
    for k in range(nsteps):
        _basis(basis_id, x, f)
        norm2 = 0.0
        for i in range(d):
            norm2 += x[i] * x[i]
        scale = np.sqrt(kappa + beta * norm2)
        for i in range(d):
            drift = 0.0
            for j in range(l):
                drift += theta[i, j] * f[j]
            xn[i] = x[i] + (drift + scale * y[i] * inv_eps) * h
        for a in range(n):
            ay = 0.0
            for c in range(n):
                ay += a_mat[a, c] * y[c]
            sw = 0.0
            for c in range(m):
                sw += sigma[a, c] * xi[k, c]
            yn[a] = y[a] - ay * inv_eps2 * h + sw * inv_eps * sqrt_h
        for i in range(d):
            x[i] = xn[i]
            xb[k + 1, i] = xn[i]
        for a in range(n):
            y[a] = yn[a]
            yb[k + 1, a] = yn[a]


@nb.njit(**_JIT)
def limit_additive_block(x, theta, s_mat, basis_id, h, sqrt_h, xi, xb):
    d = x.shape[0]
    l = theta.shape[1]
    nsteps = xi.shape[0]
    f = np.empty(l)
    xn = np.empty(d)
    for i in range(d):
        xb[0, i] = x[i]
    for k in range(nsteps):
        _basis(basis_id, x, f)
        for i in range(d):
            drift = 0.0
            for j in range(l):
                drift += theta[i, j] * f[j]
            noise = 0.0
            for j in range(d):
                noise += s_mat[i, j] * xi[k, j]
            xn[i] = x[i] + drift * h + noise * sqrt_h
        for i in range(d):
            x[i] = xn[i]
            xb[k + 1, i] = xn[i]


@nb.njit(**_JIT)
def limit_levy_block(x, l_mat, kappa0, beta0, h, sqrt_h, xi, xb):
    d = x.shape[0]
    nsteps = xi.shape[0]
    xn = np.empty(d)
    for i in range(d):
        xb[0, i] = x[i]
    for k in range(nsteps):
        norm2 = 0.0
        for i in range(d):
            norm2 += x[i] * x[i]
        scale = np.sqrt(kappa0 + beta0 * norm2)
        for i in range(d):
            drift = 0.0
            for j in range(d):
                drift += l_mat[i, j] * x[j]
            xn[i] = x[i] - drift * h + scale * xi[k, i] * sqrt_h
        for i in range(d):
            x[i] = xn[i]
            xb[k + 1, i] = xn[i]


@nb.njit(**_JIT)
def ema_exact_block(z, decay, x, zb):
    """zb[k] = z_k, then z_{k+1} = decay z_k + (1 - decay) x_k."""
    d = z.shape[0]
    nsteps = x.shape[0]
    for k in range(nsteps):
        for i in range(d):
            zb[k, i] = z[i]
            z[i] = decay * z[i] + (1.0 - decay) * x[k, i]


@nb.njit(**_JIT)
def ema_euler_block(z, h_over_delta, x, zb):
    """zb[k] = z_k, then z_{k+1} = z_k + (h/delta) (x_k - z_k)."""
    d = z.shape[0]
    nsteps = x.shape[0]
    for k in range(nsteps):
        for i in range(d):
            zb[k, i] = z[i]
            z[i] = z[i] + h_over_delta * (x[k, i] - z[i])


@nb.njit(**_JIT)
def mle_accum_block(num, gram, dx, u, v, h):
    """num += sum_k dx_k (x) v_k and gram += sum_k u_k (x) v_k h, in step order."""
    d = num.shape[0]
    l = num.shape[1]
    nsteps = dx.shape[0]
    for k in range(nsteps):
        for i in range(d):
            for j in range(l):
                num[i, j] += dx[k, i] * v[k, j]
        for i in range(l):
            for j in range(l):
                gram[i, j] += u[k, i] * v[k, j] * h
    return nsteps


@nb.njit(**_JIT)
def sgdct_block(theta, k0, lr_a, lr_b, h, dx, fx, ff):
    """theta += xi(t_k) (dx_k - theta f(x_k) h) (x) ff_k, step by step.

    Returns the global index of the first step producing a non-finite entry,
    or -1 when the whole block is finite.
    """
    d = theta.shape[0]
    l = theta.shape[1]
    nsteps = dx.shape[0]
    innov = np.empty(d)
    for k in range(nsteps):
        t = (k0 + k) * h
        lr = lr_a / (lr_b + t)
        for i in range(d):
            pred = 0.0
            for j in range(l):
                pred += theta[i, j] * fx[k, j]
            innov[i] = dx[k, i] - pred * h
        ok = True
        for i in range(d):
            for j in range(l):
                theta[i, j] += lr * innov[i] * ff[k, j]
                if not np.isfinite(theta[i, j]):
                    ok = False
        if not ok:
            return k0 + k
    return -1


@nb.njit(**_JIT)
def sgdct_levy_block(l_est, k0, lr_a, lr_b, h, dx, x, z):
    """l_est -= xi(t_k) (l_est (x_k (x) z_k) h + dx_k (x) z_k), step by step."""
    d = l_est.shape[0]
    nsteps = dx.shape[0]
    lm = np.empty((d, d))
    for k in range(nsteps):
        t = (k0 + k) * h
        lr = lr_a / (lr_b + t)
        for i in range(d):
            for j in range(d):
                acc = 0.0
                for c in range(d):
                    acc += l_est[i, c] * x[k, c]
                lm[i, j] = acc * z[k, j]
        ok = True
        for i in range(d):
            for j in range(d):
                l_est[i, j] -= lr * (lm[i, j] * h + dx[k, i] * z[k, j])
                if not np.isfinite(l_est[i, j]):
                    ok = False
        if not ok:
            return k0 + k
    return -1
