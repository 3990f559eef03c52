"""Compiled inner loops for the integrators.

Every kernel takes the potential (or conformal exponent) as flat arrays
``(kvec, a, b, mean, kmax)`` and returns full-resolution arrays plus the index
of the first step whose energy error exceeded ``drift_tol`` (``-1`` if none).
Arrays are truncated after a failing step.
"""
import numpy as np
from numba import njit

_EPS = np.finfo(np.float64).eps


@njit(cache=True)
def fourier_eval_grad(kvec, a, b, mean, kmax, q, zr, zi, grad):
    """Return U(q) and write grad U(q) into ``grad``.

    ``zr``/``zi`` are ``(dim, kmax + 1)`` scratch arrays holding
    ``exp(i m q_d)`` built by repeated multiplication.
    """
    d = q.shape[0]
    for i in range(d):
        c = np.cos(q[i])
        s = np.sin(q[i])
        zr[i, 0] = 1.0
        zi[i, 0] = 0.0
        for m in range(1, kmax + 1):
            zr[i, m] = zr[i, m - 1] * c - zi[i, m - 1] * s
            zi[i, m] = zr[i, m - 1] * s + zi[i, m - 1] * c
    for i in range(d):
        grad[i] = 0.0
    u = mean
    for j in range(kvec.shape[0]):
        re = 1.0
        im = 0.0
        for i in range(d):
            k = kvec[j, i]
            if k >= 0:
                xr = zr[i, k]
                xi = zi[i, k]
            else:
                xr = zr[i, -k]
                xi = -zi[i, -k]
            re, im = re * xr - im * xi, re * xi + im * xr
        u += a[j] * re + b[j] * im
        w = b[j] * re - a[j] * im
        for i in range(d):
            grad[i] += kvec[j, i] * w
    return u


@njit(cache=True)
def kdk_run(kvec, a, b, mean, kmax, q0, p0, dt, n, energy0, drift_tol):
    """Kick-drift-kick for H = |p|^2 + U(q): q' = 2p, p' = -grad U."""
    d = q0.shape[0]
    Q = np.empty((n + 1, d))
    P = np.empty((n + 1, d))
    H = np.empty(n + 1)
    zr = np.empty((d, kmax + 1))
    zi = np.empty((d, kmax + 1))
    g = np.empty(d)
    q = q0.copy()
    p = p0.copy()
    u = fourier_eval_grad(kvec, a, b, mean, kmax, q, zr, zi, g)
    Q[0] = q
    P[0] = p
    H[0] = np.dot(p, p) + u
    scale = max(1.0, abs(energy0))
    half = 0.5 * dt
    for s in range(n):
        for i in range(d):
            p[i] -= half * g[i]
        for i in range(d):
            q[i] += 2.0 * dt * p[i]
        u = fourier_eval_grad(kvec, a, b, mean, kmax, q, zr, zi, g)
        for i in range(d):
            p[i] -= half * g[i]
        Q[s + 1] = q
        P[s + 1] = p
        H[s + 1] = np.dot(p, p) + u
        if not abs(H[s + 1] - energy0) <= drift_tol * scale:
            return Q[: s + 2], P[: s + 2], H[: s + 2], s + 1
    return Q, P, H, -1


@njit(cache=True)
def conformal_run(kvec, a, b, mean, kmax, q0, p0, dt, n, energy0, drift_tol):
    """Generalized leapfrog for H = exp(rho(q)) |p|^2.

    The half kick and the drift are implicit and solved by fixed-point
    iteration to roundoff; the closing half kick is explicit.
    """
    d = q0.shape[0]
    Q = np.empty((n + 1, d))
    P = np.empty((n + 1, d))
    H = np.empty(n + 1)
    zr = np.empty((d, kmax + 1))
    zi = np.empty((d, kmax + 1))
    g = np.empty(d)
    g1 = np.empty(d)
    q = q0.copy()
    p = p0.copy()
    ph = np.empty(d)
    qn = np.empty(d)
    e0 = np.exp(fourier_eval_grad(kvec, a, b, mean, kmax, q, zr, zi, g))
    Q[0] = q
    P[0] = p
    H[0] = e0 * np.dot(p, p)
    scale = max(1.0, abs(energy0))
    half = 0.5 * dt
    for s in range(n):
        # p_half = p - dt/2 * e^rho(q) |p_half|^2 grad rho(q)
        for i in range(d):
            ph[i] = p[i]
        for it in range(100):
            pp = np.dot(ph, ph)
            delta = 0.0
            for i in range(d):
                new = p[i] - half * e0 * pp * g[i]
                delta = max(delta, abs(new - ph[i]))
                ph[i] = new
            if delta <= 4.0 * _EPS * max(1.0, np.max(np.abs(ph))):
                break
        # q' = q + dt * (e^rho(q) + e^rho(q')) p_half
        for i in range(d):
            qn[i] = q[i] + 2.0 * dt * e0 * ph[i]
        e1 = e0
        for it in range(100):
            e1 = np.exp(fourier_eval_grad(kvec, a, b, mean, kmax, qn, zr, zi, g1))
            delta = 0.0
            for i in range(d):
                new = q[i] + dt * (e0 + e1) * ph[i]
                delta = max(delta, abs(new - qn[i]))
                qn[i] = new
            if delta <= 4.0 * _EPS * max(1.0, np.max(np.abs(qn))):
                break
        e1 = np.exp(fourier_eval_grad(kvec, a, b, mean, kmax, qn, zr, zi, g1))
        pp = np.dot(ph, ph)
        for i in range(d):
            q[i] = qn[i]
            p[i] = ph[i] - half * e1 * pp * g1[i]
            g[i] = g1[i]
        e0 = e1
        Q[s + 1] = q
        P[s + 1] = p
        H[s + 1] = e0 * np.dot(p, p)
        if not abs(H[s + 1] - energy0) <= drift_tol * scale:
            return Q[: s + 2], P[: s + 2], H[: s + 2], s + 1
    return Q, P, H, -1


@njit(cache=True)
def sphere_run(x0, p0, dt, n, energy0, drift_tol):
    """RATTLE for H = |p|^2 on the unit sphere, velocity v = 2p.

    Each step rotates by asin(dt |v|) in the plane of (x, v); positions are
    renormalized and velocities re-projected onto the tangent plane.
    """
    X = np.empty((n + 1, 3))
    P = np.empty((n + 1, 3))
    H = np.empty(n + 1)
    x = x0.copy()
    v = 2.0 * p0
    X[0] = x
    P[0] = 0.5 * v
    H[0] = 0.25 * np.dot(v, v)
    scale = max(1.0, abs(energy0))
    for s in range(n):
        w2 = np.dot(v, v)
        c = np.sqrt(1.0 - dt * dt * w2)
        vh = v - ((1.0 - c) / dt) * x
        xn = c * x + dt * v
        xn = xn / np.sqrt(np.dot(xn, xn))
        v = vh - np.dot(vh, xn) * xn
        x = xn
        X[s + 1] = x
        P[s + 1] = 0.5 * v
        H[s + 1] = 0.25 * np.dot(v, v)
        if not abs(H[s + 1] - energy0) <= drift_tol * scale:
            return X[: s + 2], P[: s + 2], H[: s + 2], s + 1
    return X, P, H, -1
