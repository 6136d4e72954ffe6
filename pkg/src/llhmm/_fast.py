"""Compiled micro-solver kernels (HeunP on a frozen-ring box plus averaging).

These are fused versions of :func:`llhmm.micro.solve_micro` followed by
:func:`llhmm.micro.upscale`: the exchange field from each HeunP first stage
is accumulated into the kernel average, so no trajectory is stored.
Components are kept in separate arrays so the inner loops vectorize.
"""

import numpy as np
from numba import njit


@njit(cache=True, fastmath=True)
def _field_2d(mx, my, mz, ax, ay, inv, hx, hy, hz):
    n0, n1 = mx.shape
    for i in range(1, n0 - 1):
        for j in range(1, n1 - 1):
            ae = ax[i, j]
            aw = ax[i - 1, j]
            an = ay[i, j]
            as_ = ay[i, j - 1]
            v = mx[i, j]
            hx[i, j] = (ae * (mx[i + 1, j] - v) - aw * (v - mx[i - 1, j])
                        + an * (mx[i, j + 1] - v) - as_ * (v - mx[i, j - 1])) * inv
            v = my[i, j]
            hy[i, j] = (ae * (my[i + 1, j] - v) - aw * (v - my[i - 1, j])
                        + an * (my[i, j + 1] - v) - as_ * (v - my[i, j - 1])) * inv
            v = mz[i, j]
            hz[i, j] = (ae * (mz[i + 1, j] - v) - aw * (v - mz[i - 1, j])
                        + an * (mz[i, j + 1] - v) - as_ * (v - mz[i, j - 1])) * inv


@njit(cache=True, fastmath=True)
def _heun_average_2d(mx, my, mz, ax, ay, dt, n_steps, alpha, wx, wt, inv, lo, hi):
    n0, n1 = mx.shape
    hx = np.zeros_like(mx)
    hy = np.zeros_like(mx)
    hz = np.zeros_like(mx)
    kx = np.zeros_like(mx)
    ky = np.zeros_like(mx)
    kz = np.zeros_like(mx)
    px = mx.copy()
    py = my.copy()
    pz = mz.copy()
    acc = np.zeros(3)
    for s in range(n_steps + 1):
        _field_2d(mx, my, mz, ax, ay, inv, hx, hy, hz)
        w_s = wt[s]
        if w_s != 0.0:
            for i in range(lo, hi):
                sx = 0.0
                sy = 0.0
                sz = 0.0
                for j in range(lo, hi):
                    sx += wx[j] * hx[i, j]
                    sy += wx[j] * hy[i, j]
                    sz += wx[j] * hz[i, j]
                wi = w_s * wx[i]
                acc[0] += wi * sx
                acc[1] += wi * sy
                acc[2] += wi * sz
        if s == n_steps:
            break
        # first stage: k1 = f(m), predictor p = m + dt k1
        for i in range(1, n0 - 1):
            for j in range(1, n1 - 1):
                m0 = mx[i, j]
                m1 = my[i, j]
                m2 = mz[i, j]
                h0 = hx[i, j]
                h1 = hy[i, j]
                h2 = hz[i, j]
                c0 = m1 * h2 - m2 * h1
                c1 = m2 * h0 - m0 * h2
                c2 = m0 * h1 - m1 * h0
                f0 = -c0 - alpha * (m1 * c2 - m2 * c1)
                f1 = -c1 - alpha * (m2 * c0 - m0 * c2)
                f2 = -c2 - alpha * (m0 * c1 - m1 * c0)
                kx[i, j] = f0
                ky[i, j] = f1
                kz[i, j] = f2
                px[i, j] = m0 + dt * f0
                py[i, j] = m1 + dt * f1
                pz[i, j] = m2 + dt * f2
        # second stage and projection
        _field_2d(px, py, pz, ax, ay, inv, hx, hy, hz)
        for i in range(1, n0 - 1):
            for j in range(1, n1 - 1):
                m0 = px[i, j]
                m1 = py[i, j]
                m2 = pz[i, j]
                h0 = hx[i, j]
                h1 = hy[i, j]
                h2 = hz[i, j]
                c0 = m1 * h2 - m2 * h1
                c1 = m2 * h0 - m0 * h2
                c2 = m0 * h1 - m1 * h0
                x0 = mx[i, j] + 0.5 * dt * (kx[i, j] - c0 - alpha * (m1 * c2 - m2 * c1))
                x1 = my[i, j] + 0.5 * dt * (ky[i, j] - c1 - alpha * (m2 * c0 - m0 * c2))
                x2 = mz[i, j] + 0.5 * dt * (kz[i, j] - c2 - alpha * (m0 * c1 - m1 * c0))
                r = 1.0 / np.sqrt(x0 * x0 + x1 * x1 + x2 * x2)
                mx[i, j] = x0 * r
                my[i, j] = x1 * r
                mz[i, j] = x2 * r
    return acc


@njit(cache=True, fastmath=True)
def _field_1d(mx, my, mz, ax, inv, hx, hy, hz):
    n0 = mx.shape[0]
    for i in range(1, n0 - 1):
        ae = ax[i]
        aw = ax[i - 1]
        v = mx[i]
        hx[i] = (ae * (mx[i + 1] - v) - aw * (v - mx[i - 1])) * inv
        v = my[i]
        hy[i] = (ae * (my[i + 1] - v) - aw * (v - my[i - 1])) * inv
        v = mz[i]
        hz[i] = (ae * (mz[i + 1] - v) - aw * (v - mz[i - 1])) * inv


@njit(cache=True, fastmath=True)
def _heun_average_1d(mx, my, mz, ax, dt, n_steps, alpha, wx, wt, inv, lo, hi):
    n0 = mx.shape[0]
    hx = np.zeros_like(mx)
    hy = np.zeros_like(mx)
    hz = np.zeros_like(mx)
    kx = np.zeros_like(mx)
    ky = np.zeros_like(mx)
    kz = np.zeros_like(mx)
    px = mx.copy()
    py = my.copy()
    pz = mz.copy()
    acc = np.zeros(3)
    for s in range(n_steps + 1):
        _field_1d(mx, my, mz, ax, inv, hx, hy, hz)
        w_s = wt[s]
        if w_s != 0.0:
            sx = 0.0
            sy = 0.0
            sz = 0.0
            for i in range(lo, hi):
                sx += wx[i] * hx[i]
                sy += wx[i] * hy[i]
                sz += wx[i] * hz[i]
            acc[0] += w_s * sx
            acc[1] += w_s * sy
            acc[2] += w_s * sz
        if s == n_steps:
            break
        for i in range(1, n0 - 1):
            m0 = mx[i]
            m1 = my[i]
            m2 = mz[i]
            h0 = hx[i]
            h1 = hy[i]
            h2 = hz[i]
            c0 = m1 * h2 - m2 * h1
            c1 = m2 * h0 - m0 * h2
            c2 = m0 * h1 - m1 * h0
            f0 = -c0 - alpha * (m1 * c2 - m2 * c1)
            f1 = -c1 - alpha * (m2 * c0 - m0 * c2)
            f2 = -c2 - alpha * (m0 * c1 - m1 * c0)
            kx[i] = f0
            ky[i] = f1
            kz[i] = f2
            px[i] = m0 + dt * f0
            py[i] = m1 + dt * f1
            pz[i] = m2 + dt * f2
        _field_1d(px, py, pz, ax, inv, hx, hy, hz)
        for i in range(1, n0 - 1):
            m0 = px[i]
            m1 = py[i]
            m2 = pz[i]
            h0 = hx[i]
            h1 = hy[i]
            h2 = hz[i]
            c0 = m1 * h2 - m2 * h1
            c1 = m2 * h0 - m0 * h2
            c2 = m0 * h1 - m1 * h0
            x0 = mx[i] + 0.5 * dt * (kx[i] - c0 - alpha * (m1 * c2 - m2 * c1))
            x1 = my[i] + 0.5 * dt * (ky[i] - c1 - alpha * (m2 * c0 - m0 * c2))
            x2 = mz[i] + 0.5 * dt * (kz[i] - c2 - alpha * (m0 * c1 - m1 * c0))
            r = 1.0 / np.sqrt(x0 * x0 + x1 * x1 + x2 * x2)
            mx[i] = x0 * r
            my[i] = x1 * r
            mz[i] = x2 * r
    return acc


def heun_average(m0, a_half, dt, n_steps, alpha, wx, wt, dx):
    """Kernel-averaged exchange field of a HeunP micro solve; returns ``(h_avg, norm_drift)``."""
    m0 = np.asarray(m0, dtype=np.float64)
    dim = m0.ndim - 1
    mx, my, mz = (np.ascontiguousarray(m0[..., c]) for c in range(3))
    wx = np.ascontiguousarray(wx, dtype=np.float64)
    wt = np.ascontiguousarray(wt, dtype=np.float64)
    nz = np.nonzero(wx)[0]
    lo, hi = (int(nz[0]), int(nz[-1]) + 1) if len(nz) else (0, 0)
    inv = 1.0 / (dx * dx)
    if dim == 1:
        acc = _heun_average_1d(mx, my, mz, np.ascontiguousarray(a_half[0]), dt, n_steps, alpha,
                               wx, wt, inv, lo, hi)
    elif dim == 2:
        acc = _heun_average_2d(mx, my, mz, np.ascontiguousarray(a_half[0]),
                               np.ascontiguousarray(a_half[1]), dt, n_steps, alpha, wx, wt, inv, lo, hi)
    else:
        raise NotImplementedError("compiled micro solver supports d = 1, 2")
    drift = float(np.max(np.abs(np.sqrt(mx * mx + my * my + mz * mz) - 1.0)))
    return acc, drift


# -- periodic direct simulation -------------------------------------------------
# 1D lattices are handled as (n, 1) with a zero second-axis coefficient.

@njit(cache=True, fastmath=True)
def _periodic_field(m, ax, ay, inv, H):
    n0, n1 = m.shape[0], m.shape[1]
    for i in range(n0):
        ip = (i + 1) % n0
        im = (i - 1) % n0
        for j in range(n1):
            jp = (j + 1) % n1
            jm = (j - 1) % n1
            ae = ax[i, j]
            aw = ax[im, j]
            an = ay[i, j]
            as_ = ay[i, jm]
            for c in range(3):
                v = m[i, j, c]
                H[i, j, c] = (ae * (m[ip, j, c] - v) - aw * (v - m[im, j, c])
                              + an * (m[i, jp, c] - v) - as_ * (v - m[i, jm, c])) * inv


@njit(cache=True, fastmath=True)
def _mpea_periodic(m, ax, ay, inv, dt, n_steps, alpha, h1, h2):
    n0, n1 = m.shape[0], m.shape[1]
    H = np.zeros_like(m)
    w1 = 23.0 / 12.0
    w2 = -16.0 / 12.0
    w3 = 5.0 / 12.0
    for _ in range(n_steps):
        _periodic_field(m, ax, ay, inv, H)
        for i in range(n0):
            for j in range(n1):
                m0 = m[i, j, 0]
                m1 = m[i, j, 1]
                m2 = m[i, j, 2]
                # h = H + alpha m x H
                g0 = H[i, j, 0] + alpha * (m1 * H[i, j, 2] - m2 * H[i, j, 1])
                g1 = H[i, j, 1] + alpha * (m2 * H[i, j, 0] - m0 * H[i, j, 2])
                g2 = H[i, j, 2] + alpha * (m0 * H[i, j, 1] - m1 * H[i, j, 0])
                # Cayley update with w = -dt/2 (extrapolated h)
                s = -0.5 * dt
                x0 = s * (w1 * g0 + w2 * h1[i, j, 0] + w3 * h2[i, j, 0])
                x1 = s * (w1 * g1 + w2 * h1[i, j, 1] + w3 * h2[i, j, 1])
                x2 = s * (w1 * g2 + w2 * h1[i, j, 2] + w3 * h2[i, j, 2])
                b0 = m0 - (x1 * m2 - x2 * m1)
                b1 = m1 - (x2 * m0 - x0 * m2)
                b2 = m2 - (x0 * m1 - x1 * m0)
                wb = x0 * b0 + x1 * b1 + x2 * b2
                r = 1.0 / (1.0 + x0 * x0 + x1 * x1 + x2 * x2)
                m[i, j, 0] = (b0 - (x1 * b2 - x2 * b1) + wb * x0) * r
                m[i, j, 1] = (b1 - (x2 * b0 - x0 * b2) + wb * x1) * r
                m[i, j, 2] = (b2 - (x0 * b1 - x1 * b0) + wb * x2) * r
                h2[i, j, 0] = h1[i, j, 0]
                h2[i, j, 1] = h1[i, j, 1]
                h2[i, j, 2] = h1[i, j, 2]
                h1[i, j, 0] = g0
                h1[i, j, 1] = g1
                h1[i, j, 2] = g2


def mpea_periodic(m, a_half, dx, dt, n_steps, alpha, h1, h2):
    """``n_steps`` MPEA steps of ``div(a grad m)`` dynamics on a periodic 1D/2D lattice.

    ``h1``, ``h2`` are ``h(m^{j-1})`` and ``h(m^{j-2})``; all three arrays are
    returned updated.
    """
    shape = m.shape
    if m.ndim == 2:
        m, h1, h2 = (v[:, None, :] for v in (m, h1, h2))
        ax = a_half[0][:, None]
        ay = np.zeros_like(ax)
    elif m.ndim == 3:
        ax, ay = a_half
    else:
        raise NotImplementedError("compiled direct simulation supports d = 1, 2")
    m, h1, h2 = (np.ascontiguousarray(v, dtype=np.float64) for v in (m, h1, h2))
    ax, ay = np.ascontiguousarray(ax, dtype=np.float64), np.ascontiguousarray(ay, dtype=np.float64)
    _mpea_periodic(m, ax, ay, 1.0 / (dx * dx), dt, n_steps, alpha, h1, h2)
    return m.reshape(shape), h1.reshape(shape), h2.reshape(shape)
