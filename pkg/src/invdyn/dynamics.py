"""Hamiltonian systems, fixed-step integration and trajectory observation.

Conventions (kept throughout the package): the kinetic term carries no 1/2,
so for ``H = |p|^2 + U(q)`` the velocity is ``2p`` and ``q'' = -2 grad U``.
"""
from __future__ import annotations

import csv
import io
from dataclasses import dataclass
from pathlib import Path
from typing import Union

import numpy as np

from . import _kernels
from .geometry import (
    TANGENCY_TOL,
    DomainError,
    MetricKind,
    MetricTag,
    normalize_sphere,
    torus_displacement,
    wrap_to_fundamental_domain,
)
from .potential import FourierSeries, evaluate, gradient

DEFAULT_DT = 1e-3
DEFAULT_CONFORMAL_DT = 1e-4
DEFAULT_DRIFT_TOL = 1e-4

EXACT = "exact"
POSITIONS_ONLY = "positions-only"
MODES = (EXACT, POSITIONS_ONLY)


class DriftError(RuntimeError):
    """Energy drift exceeded the tolerance; the step size is too large."""

    def __init__(self, step: int, time: float, drift: float, tol: float):
        self.step, self.time, self.drift, self.tol = step, time, drift, tol
        super().__init__(
            f"relative energy drift {drift:.3e} exceeds {tol:.1e} at step {step} (t = {time:g})"
        )


@dataclass(frozen=True, eq=False)
class PhaseState:
    q: np.ndarray
    p: np.ndarray

    def __post_init__(self):
        q = np.array(self.q, dtype=float)
        p = np.array(self.p, dtype=float)
        if q.shape != p.shape or q.ndim != 1:
            raise ValueError("q and p must be 1-d arrays of equal length")
        if not (np.all(np.isfinite(q)) and np.all(np.isfinite(p))):
            raise ValueError("phase state has non-finite components")
        q.setflags(write=False)
        p.setflags(write=False)
        object.__setattr__(self, "q", q)
        object.__setattr__(self, "p", p)

    @property
    def vector(self) -> np.ndarray:
        return np.concatenate([self.q, self.p])


# --------------------------------------------------------------------------
# pointwise fields

def hamiltonian(state: PhaseState, U: FourierSeries) -> float:
    """``|p|^2 + U(q)`` for the flat natural system."""
    return float(np.dot(state.p, state.p) + evaluate(U, state.q))


def vector_field(state: PhaseState, U: FourierSeries) -> tuple[np.ndarray, np.ndarray]:
    """Hamilton's equations ``(q', p') = (2p, -grad U(q))``."""
    return 2.0 * state.p, -gradient(U, state.q)


def conformal_vector_field(state: PhaseState, rho: FourierSeries) -> tuple[np.ndarray, np.ndarray]:
    """Hamilton's equations for ``H = exp(rho(q)) |p|^2``."""
    e = np.exp(evaluate(rho, state.q))
    return 2.0 * e * state.p, -e * np.dot(state.p, state.p) * gradient(rho, state.q)


# --------------------------------------------------------------------------
# systems

class NaturalSystem:
    """``H = |p|^2 + U(q)`` on the flat torus of the potential's dimension."""

    def __init__(self, potential: FourierSeries):
        self.potential = potential
        self.dim = potential.dim
        kind = MetricKind.FLAT_TORUS_2 if self.dim == 2 else MetricKind.FLAT_TORUS_3
        self.metric = MetricTag(kind)
        self._flat = _flatten(potential)

    def energy(self, q, p):
        return np.sum(np.asarray(p) ** 2, axis=-1) + evaluate(self.potential, q)

    def field(self, q, p):
        return 2.0 * np.asarray(p, dtype=float), -gradient(self.potential, q)

    def acceleration(self, q, p):
        return -2.0 * gradient(self.potential, q)

    def force_free(self) -> bool:
        return not (np.any(self.potential.cos_coef) or np.any(self.potential.sin_coef))

    def _run(self, q0, p0, dt, n, energy0, drift_tol):
        return _kernels.kdk_run(*self._flat, q0, p0, dt, n, energy0, drift_tol)

    def displacement(self, q0, p0, q, p):
        return np.concatenate([torus_displacement(q0, q), np.asarray(p) - p0], axis=-1)

    def check_state(self, state: PhaseState):
        if state.q.shape != (self.dim,):
            raise ValueError(f"state dimension {state.q.shape} does not match the {self.dim}-torus")


class ConformalSystem(NaturalSystem):
    """Geodesic flow of ``exp(rho) (dq1^2 + dq2^2)`` written as ``H = exp(rho) |p|^2``."""

    def __init__(self, rho: FourierSeries):
        self.rho = rho
        self.potential = rho
        self.dim = rho.dim
        self.metric = MetricTag(MetricKind.CONFORMAL_TORUS, rho)
        self._flat = _flatten(rho)

    def energy(self, q, p):
        return np.exp(evaluate(self.rho, q)) * np.sum(np.asarray(p) ** 2, axis=-1)

    def field(self, q, p):
        p = np.asarray(p, dtype=float)
        e = np.exp(evaluate(self.rho, q))[..., None]
        return 2.0 * e * p, -e * np.sum(p * p, axis=-1, keepdims=True) * gradient(self.rho, q)

    def acceleration(self, q, p):
        # d/dt (2 e^rho p) with rho' = grad rho . q'
        qdot, pdot = self.field(q, p)
        e = np.exp(evaluate(self.rho, q))[..., None]
        g = gradient(self.rho, q)
        rate = np.sum(g * qdot, axis=-1, keepdims=True)
        return rate * qdot + 2.0 * e * pdot

    def force_free(self) -> bool:
        return False

    def _run(self, q0, p0, dt, n, energy0, drift_tol):
        return _kernels.conformal_run(*self._flat, q0, p0, dt, n, energy0, drift_tol)


class SphereSystem:
    """Free motion ``H = |p|^2`` on the unit sphere; ``q`` is the embedded point."""

    dim = 3
    metric = MetricTag(MetricKind.ROUND_SPHERE)

    def energy(self, q, p):
        return np.sum(np.asarray(p) ** 2, axis=-1)

    def field(self, q, p):
        q = np.asarray(q, dtype=float)
        v = 2.0 * np.asarray(p, dtype=float)
        return v, -0.5 * np.sum(v * v, axis=-1, keepdims=True) * q

    def acceleration(self, q, p):
        v = 2.0 * np.asarray(p, dtype=float)
        return -np.sum(v * v, axis=-1, keepdims=True) * np.asarray(q, dtype=float)

    def force_free(self) -> bool:
        return True

    def _run(self, q0, p0, dt, n, energy0, drift_tol):
        if dt * 2.0 * np.linalg.norm(p0) >= 1.0:
            raise DomainError("sphere step too large: need dt * |v| < 1")
        return _kernels.sphere_run(q0, p0, dt, n, energy0, drift_tol)

    def displacement(self, q0, p0, q, p):
        return np.concatenate([np.asarray(q) - q0, np.asarray(p) - p0], axis=-1)

    def check_state(self, state: PhaseState):
        if state.q.shape != (3,):
            raise ValueError("sphere states live in R^3")
        if abs(np.linalg.norm(state.q) - 1.0) > 1e-12:
            raise DomainError("sphere position is not a unit vector")
        if abs(np.dot(state.q, state.p)) > TANGENCY_TOL * max(1.0, np.linalg.norm(state.p)):
            raise DomainError("sphere momentum is not tangent")


System = Union[NaturalSystem, ConformalSystem, SphereSystem]


def as_system(system) -> System:
    if isinstance(system, FourierSeries):
        return NaturalSystem(system)
    if isinstance(system, (NaturalSystem, SphereSystem)):
        return system
    raise TypeError(f"not a dynamical system: {system!r}")


def _flatten(series: FourierSeries):
    return (
        np.ascontiguousarray(series.wave_vectors, dtype=np.int64),
        np.ascontiguousarray(series.cos_coef),
        np.ascontiguousarray(series.sin_coef),
        float(series.mean),
        int(max(series.k_max, 0)),
    )


def phase_speed(system: System, state: PhaseState) -> float:
    qdot, pdot = system.field(state.q, state.p)
    return float(np.sqrt(np.sum(qdot ** 2) + np.sum(pdot ** 2)))


# --------------------------------------------------------------------------
# trajectories

@dataclass(frozen=True, eq=False)
class Trajectory:
    """Uniformly sampled solution; ``q`` is the continuous (unwrapped) lift."""

    system: System
    t: np.ndarray
    q: np.ndarray
    p: np.ndarray
    energy: np.ndarray
    dt: float
    energy0: float
    drift: float

    def __len__(self):
        return len(self.t)

    @property
    def positions(self) -> np.ndarray:
        """Configuration samples in the fundamental domain (sphere: as stored)."""
        if isinstance(self.system, SphereSystem):
            return self.q
        return wrap_to_fundamental_domain(self.q)

    def state(self, i: int) -> PhaseState:
        return PhaseState(self.q[i], self.p[i])

    @property
    def final(self) -> PhaseState:
        return self.state(-1)

    def head(self, t_final: float) -> "Trajectory":
        """Prefix up to and including time ``t_final``."""
        n = int(np.searchsorted(self.t, t_final + 0.5 * self.dt))
        return Trajectory(self.system, self.t[:n], self.q[:n], self.p[:n], self.energy[:n],
                          self.dt, self.energy0, _drift(self.energy[:n], self.energy0))

    def to_csv(self, path=None, stride: int = 1) -> str:
        """``t,q1,q2,p1,p2,energy`` rows (sphere: ``t,x,y,z,vx,vy,vz,energy``)."""
        idx = np.arange(0, len(self.t), max(1, int(stride)))
        d = self.q.shape[1]
        if isinstance(self.system, SphereSystem):
            header = ["t", "x", "y", "z", "vx", "vy", "vz", "energy"]
            cols = [self.t[idx, None], self.q[idx], 2.0 * self.p[idx], self.energy[idx, None]]
        else:
            header = ["t"] + [f"q{i + 1}" for i in range(d)] + [f"p{i + 1}" for i in range(d)] + ["energy"]
            cols = [self.t[idx, None], self.positions[idx], self.p[idx], self.energy[idx, None]]
        return write_csv(path, header, np.hstack(cols))


def _drift(energy, energy0) -> float:
    if len(energy) == 0:
        return 0.0
    return float(np.max(np.abs(energy - energy0)) / max(1.0, abs(energy0)))


def integrate(state0: PhaseState, system, dt: float = DEFAULT_DT, t_final: float = 1.0,
              drift_tol: float = DEFAULT_DRIFT_TOL) -> Trajectory:
    """Integrate with the fixed-step second-order splitting of the system.

    Raises
    ------
    DriftError
        If the relative energy error ``|H - H0| / max(1, |H0|)`` exceeds
        ``drift_tol`` at any step.
    """
    system = as_system(system)
    if not (dt > 0 and np.isfinite(dt)):
        raise ValueError("dt must be positive")
    if not t_final >= dt:
        raise ValueError("t_final must be at least dt")
    system.check_state(state0)
    n = int(round(t_final / dt))
    energy0 = float(system.energy(state0.q, state0.p))
    Q, P, H, fail = system._run(state0.q.copy(), state0.p.copy(), float(dt), n, energy0, float(drift_tol))
    if fail >= 0:
        raise DriftError(fail, fail * dt, _drift(H[-1:], energy0), drift_tol)
    t = np.arange(n + 1) * dt
    return Trajectory(system, t, Q, P, H, float(dt), energy0, _drift(H, energy0))


def advance(state: PhaseState, system, dt: float, n: int = 1) -> PhaseState:
    """State after ``n`` steps of size ``dt`` (no drift gate)."""
    system = as_system(system)
    Q, P, _, _ = system._run(state.q.copy(), state.p.copy(), float(dt), int(n), 0.0, np.inf)
    return PhaseState(Q[-1], P[-1])


def random_state_on_level(system, energy: float, rng: np.random.Generator) -> PhaseState:
    """Seeded initial condition on ``H = energy``.

    Torus systems: position uniform on the accessible part of the torus
    (rejection), momentum direction uniform.  Sphere: position uniform on the
    sphere, tangent direction uniform.
    """
    system = as_system(system)
    if isinstance(system, SphereSystem):
        x = normalize_sphere(rng.standard_normal(3))
        w = rng.standard_normal(3)
        w -= np.dot(w, x) * x
        return PhaseState(x, np.sqrt(energy) * w / np.linalg.norm(w))
    for _ in range(10_000):
        q = rng.uniform(0.0, 2.0 * np.pi, system.dim)
        direction = rng.standard_normal(system.dim) if system.dim != 2 else None
        if direction is None:
            angle = rng.uniform(0.0, 2.0 * np.pi)
            direction = np.array([np.cos(angle), np.sin(angle)])
        unit = direction / np.linalg.norm(direction)
        if isinstance(system, ConformalSystem):
            return PhaseState(q, np.sqrt(energy * np.exp(-evaluate(system.rho, q))) * unit)
        kinetic = energy - evaluate(system.potential, q)
        if kinetic > 0:
            return PhaseState(q, np.sqrt(kinetic) * unit)
    raise DomainError(f"no accessible point found at energy {energy}")


# --------------------------------------------------------------------------
# observation

@dataclass(frozen=True, eq=False)
class ObservationSeries:
    """Observed kinematics ``(t, q, q', q'')`` along a trajectory."""

    mode: str
    t: np.ndarray
    q: np.ndarray
    velocity: np.ndarray
    acceleration: np.ndarray
    dt: float

    def __len__(self):
        return len(self.t)


def observe(traj: Trajectory, mode: str = EXACT) -> ObservationSeries:
    """Read velocities and accelerations off a trajectory.

    ``exact`` evaluates the system's own field at every sample.
    ``positions-only`` differentiates the unwrapped positions: the velocity
    is the central difference of ``q`` and the acceleration the central
    difference of that velocity (stencil ``q[n+2] - 2 q[n] + q[n-2]`` over
    ``4 dt^2``), so two samples are dropped at each end.
    """
    if mode not in MODES:
        raise ValueError(f"unknown observation mode {mode!r}")
    if isinstance(traj.system, SphereSystem):
        raise ValueError("observation is defined for torus systems only")
    if mode == EXACT:
        # evaluate at the wrapped points the fit will see, not the long lift
        q = traj.positions
        qdot, _ = traj.system.field(q, traj.p)
        acc = traj.system.acceleration(q, traj.p)
        return ObservationSeries(mode, traj.t, q, qdot, acc, traj.dt)
    if len(traj) < 5:
        raise ValueError("positions-only observation needs at least 5 samples")
    h = traj.dt
    vel = (traj.q[2:] - traj.q[:-2]) / (2.0 * h)
    acc = (vel[2:] - vel[:-2]) / (2.0 * h)
    sl = slice(2, -2)
    return ObservationSeries(mode, traj.t[sl], traj.positions[sl], vel[1:-1], acc, h)


# --------------------------------------------------------------------------

def write_csv(path, header, rows) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    for row in rows:
        w.writerow([_cell(x) for x in row])
    text = buf.getvalue()
    if path is not None:
        Path(path).write_text(text)
    return text


def _cell(x) -> str:
    if isinstance(x, (int, np.integer)) and not isinstance(x, bool):
        return str(int(x))
    return format(float(x), ".17g")


def read_trajectory_csv(path) -> dict[str, np.ndarray]:
    """Columns of a trajectory CSV as float arrays keyed by header name."""
    data = np.genfromtxt(path, delimiter=",", names=True, dtype=float)
    return {name: np.atleast_1d(data[name]) for name in data.dtype.names}
