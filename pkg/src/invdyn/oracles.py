"""Closed-form and quadrature periods used to check detected orbits."""
import numpy as np
from scipy.integrate import quad


def pendulum_period(energy: float, eps: float) -> float:
    """Libration period of ``H = p^2 + eps cos q`` at ``-eps < energy < eps``.

    With ``x = q - pi`` and ``sin(x/2) = k sin(phi)``, ``k = sin(x0/2)`` the
    turning amplitude, the loop integral of ``dq / (2 sqrt(E - U))`` becomes
    a smooth integral over ``phi`` in ``[-pi/2, pi/2]``.
    """
    if not -eps < energy < eps:
        raise ValueError("energy must lie strictly between the well bottom and the separatrix")
    k2 = (1.0 + energy / eps) / 2.0
    leg, _ = quad(lambda phi: 1.0 / np.sqrt(1.0 - k2 * np.sin(phi) ** 2),
                  -np.pi / 2, np.pi / 2, epsabs=0.0, epsrel=1e-13, limit=200)
    # two legs at speed 2 sqrt(E - U) cancel the 2 of the substitution
    return float(2.0 * leg / np.sqrt(2.0 * eps))


def great_circle_period(energy: float) -> float:
    """Period of ``H = |p|^2`` on the unit sphere: length 2 pi at speed 2 sqrt(E)."""
    return float(np.pi / np.sqrt(energy))


def free_torus_period(p) -> float:
    """Minimal period of free motion ``q' = 2p`` on the 2 pi-torus, or inf.

    Closed iff the velocity is a real multiple of an integer vector ``m``;
    then the period is ``2 pi |m| / |2p|`` for the primitive ``m``.  Only
    ratios of small integers (denominator up to 1000) are recognized.
    """
    from fractions import Fraction
    from math import gcd

    v = 2.0 * np.asarray(p, dtype=float)
    nz = np.flatnonzero(v)
    if len(nz) == 0:
        return float("inf")
    ref = v[nz[0]]
    m = []
    for x in v / ref:
        f = Fraction(float(x)).limit_denominator(1000)
        if abs(float(f) - x) > 1e-12:
            return float("inf")
        m.append(f)
    den = 1
    for f in m:
        den = den * f.denominator // gcd(den, f.denominator)
    ints = [int(f * den) for f in m]
    g = 0
    for i in ints:
        g = gcd(g, abs(i))
    ints = np.array([i // g for i in ints], dtype=float)
    return float(2.0 * np.pi * np.linalg.norm(ints) / np.linalg.norm(v))
