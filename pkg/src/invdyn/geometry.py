"""Charts and kinematics for the flat torus and the round sphere.

Torus points are plain float arrays with trailing dimension 2 (or 3 for the
flat 3-torus); sphere points are unit 3-vectors of the standard embedding.
"""
from __future__ import annotations

import enum
from dataclasses import dataclass
from typing import Optional

import numpy as np

TWO_PI = 2.0 * np.pi
TANGENCY_TOL = 1e-10


class DomainError(ValueError):
    """Input outside the domain where an operation is defined."""


class MetricKind(str, enum.Enum):
    FLAT_TORUS_2 = "flat-torus-2"
    ROUND_SPHERE = "round-sphere"
    FLAT_TORUS_3 = "flat-torus-3"
    CONFORMAL_TORUS = "conformal-torus"


@dataclass(frozen=True)
class MetricTag:
    kind: MetricKind
    rho: Optional[object] = None  # FourierSeries2D exponent, conformal only

    def __post_init__(self):
        kind = MetricKind(self.kind)
        object.__setattr__(self, "kind", kind)
        if (kind is MetricKind.CONFORMAL_TORUS) != (self.rho is not None):
            raise ValueError("exactly the conformal-torus metric carries an exponent rho")


def wrap_to_fundamental_domain(raw) -> np.ndarray:
    """Reduce angles into ``[0, 2 pi)`` componentwise."""
    x = np.asarray(raw, dtype=float)
    if not np.all(np.isfinite(x)):
        raise DomainError("cannot wrap non-finite coordinates")
    out = np.mod(x, TWO_PI)
    # np.mod can round tiny negatives up to exactly 2 pi
    return np.where(out >= TWO_PI, 0.0, out)


def torus_displacement(a, b) -> np.ndarray:
    """Shortest representative of ``b - a`` on the flat torus.

    Each component lies in ``[-pi, pi)``; the Euclidean norm of the result is
    the flat geodesic distance.
    """
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    d = np.mod(b - a + np.pi, TWO_PI)
    d = np.where(d >= TWO_PI, 0.0, d)
    return d - np.pi


def torus_distance(a, b) -> np.ndarray:
    return np.linalg.norm(torus_displacement(a, b), axis=-1)


def jacobi_metric_factor(energy: float, u: float) -> float:
    """Conformal factor ``E - U`` of the Jacobi metric at potential value ``u``.

    Fixed-energy trajectories are geodesics of ``(E - U) <.,.>``; the factor
    vanishes on the Hill boundary ``U = E``.
    """
    if energy < u:
        raise DomainError(f"E = {energy} < U = {u}: outside the domain of possible motions")
    return float(energy - u)


def normalize_sphere(x) -> np.ndarray:
    x = np.asarray(x, dtype=float)
    return x / np.linalg.norm(x, axis=-1, keepdims=True)


def sphere_geodesic_field(x, v) -> tuple[np.ndarray, np.ndarray]:
    """Great-circle field ``(x', v') = (v, -|v|^2 x)`` on the unit sphere."""
    x = np.asarray(x, dtype=float)
    v = np.asarray(v, dtype=float)
    if abs(np.dot(x, v)) > TANGENCY_TOL * max(1.0, np.linalg.norm(v)):
        raise DomainError("velocity is not tangent to the sphere")
    return v.copy(), -np.dot(v, v) * x
