"""Transversal sections, first returns and closed-orbit detection.

Crossings are located on the sampled trajectory and refined by root finding
on a single partial step of the same integrator, so a detected period is
resolved far below the step size.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass
from itertools import combinations
from typing import Callable, Iterator, Optional, Sequence, Union

import numpy as np
from scipy.optimize import brentq

from .dynamics import (
    DEFAULT_CONFORMAL_DT,
    DEFAULT_DT,
    DEFAULT_DRIFT_TOL,
    ConformalSystem,
    DriftError,
    PhaseState,
    SphereSystem,
    advance,
    as_system,
    phase_speed,
    write_csv,
)
from .geometry import DomainError
from .potential import sup_bound_c0

logger = logging.getLogger(__name__)

DEFAULT_RADIUS = 0.1
DEFAULT_EPS_CLOSE = 1e-6
DEFAULT_T_MAX = 1e3
DEFAULT_PERIOD_FLOOR = 0.5
_CHUNK = 1 << 16


class SingularPointError(DomainError):
    """The vector field vanishes at the requested base point."""


class PeriodDetectionError(RuntimeError):
    def __init__(self, s: float):
        self.s = s
        super().__init__(f"no closed orbit detected at family parameter s = {s:g}")


def default_dt(system) -> float:
    if isinstance(system, (ConformalSystem, SphereSystem)):
        return DEFAULT_CONFORMAL_DT
    return DEFAULT_DT


def _field_vector(system, q, p) -> np.ndarray:
    qdot, pdot = system.field(q, p)
    return np.concatenate([np.ravel(qdot), np.ravel(pdot)])


@dataclass(frozen=True, eq=False)
class PoincareSection:
    base: PhaseState
    normal: np.ndarray
    radius: float
    system: object

    def offset(self, q, p) -> np.ndarray:
        """Phase-space displacement of ``(q, p)`` from the base point."""
        return self.system.displacement(self.base.q, self.base.p, q, p)

    def signed(self, q, p):
        return self.offset(q, p) @ self.normal

    def in_plane(self, q, p):
        d = self.offset(q, p)
        s = d @ self.normal
        return np.linalg.norm(d - np.multiply.outer(s, self.normal), axis=-1)


def build_section(x0: PhaseState, system, radius: float = DEFAULT_RADIUS,
                  max_halvings: int = 10) -> PoincareSection:
    """Disk through ``x0`` orthogonal to the flow, shrunk until transversal.

    Transversality is probed on a 5x5 grid in every coordinate plane of the
    disk; the radius is halved (at most ``max_halvings`` times) until the
    field has a positive component along the normal at every probe.
    """
    system = as_system(system)
    F = _field_vector(system, x0.q, x0.p)
    norm = np.linalg.norm(F)
    if norm == 0.0:
        raise SingularPointError("vector field vanishes at the section base")
    normal = F / norm
    basis = np.linalg.svd(normal[None, :])[2][1:]
    grid = np.linspace(-1.0, 1.0, 5)
    u, v = np.meshgrid(grid, grid)
    inside = u ** 2 + v ** 2 <= 1.0 + 1e-12
    u, v = u[inside], v[inside]
    d = len(x0.q)
    r = float(radius)
    for attempt in range(max_halvings + 1):
        ok = True
        for e1, e2 in combinations(basis, 2):
            pts = x0.vector + r * (np.multiply.outer(u, e1) + np.multiply.outer(v, e2))
            qdot, pdot = system.field(pts[:, :d], pts[:, d:])
            if np.any(np.hstack([qdot, pdot]) @ normal <= 0.0):
                ok = False
                break
        if ok:
            if attempt:
                logger.debug("section radius halved %d times to %g", attempt, r)
            return PoincareSection(x0, normal, r, system)
        r *= 0.5
    raise DomainError(f"flow not transversal to any disk of radius >= {r * 2:g}")


def _chunks(system, start: PhaseState, dt: float, t_max: float, drift_tol: float
            ) -> Iterator[tuple[float, np.ndarray, np.ndarray]]:
    """Integrate in blocks; block ``k`` starts where block ``k - 1`` ended."""
    n_total = int(np.ceil(t_max / dt))
    energy0 = float(system.energy(start.q, start.p))
    q, p = start.q.copy(), start.p.copy()
    done = 0
    while done < n_total:
        n = min(_CHUNK, n_total - done)
        Q, P, H, fail = system._run(q, p, dt, n, energy0, drift_tol)
        if fail >= 0:
            step = done + fail
            raise DriftError(step, step * dt, abs(H[-1] - energy0) / max(1.0, abs(energy0)), drift_tol)
        yield done * dt, Q, P
        q, p = Q[-1].copy(), P[-1].copy()
        done += n


def _flow(system, state: PhaseState, t: float, dt: float) -> PhaseState:
    """State at time ``t``: whole steps, then one partial step."""
    n = int(np.floor(t / dt))
    tau = t - n * dt
    out = advance(state, system, dt, n) if n else state
    return advance(out, system, tau, 1) if tau > 0 else out


def _refine(section: PoincareSection, system, q, p, dt):
    """Root of the signed offset on one partial step from ``(q, p)``."""
    state = PhaseState(q, p)

    def signed(tau):
        if tau == 0.0:
            return float(section.signed(state.q, state.p))
        s = advance(state, system, tau, 1)
        return float(section.signed(s.q, s.p))

    lo, hi = signed(0.0), signed(dt)
    if lo == 0.0:
        return 0.0, state
    if hi == 0.0:
        tau = dt
    else:
        tau = brentq(signed, 0.0, dt, xtol=1e-14, rtol=4 * np.finfo(float).eps, maxiter=200)
    return tau, advance(state, system, tau, 1)


def _upward_crossings(s: np.ndarray) -> np.ndarray:
    """Indices ``i`` with ``s[i-1] < 0 <= s[i]``."""
    return np.nonzero((s[:-1] < 0.0) & (s[1:] >= 0.0))[0] + 1


def first_return(section: PoincareSection, start: PhaseState, t_max: float = DEFAULT_T_MAX,
                 dt: Optional[float] = None, drift_tol: float = DEFAULT_DRIFT_TOL):
    """First upward crossing of the section disk after leaving ``start``.

    Returns ``(state, time)`` or ``None`` if the orbit does not come back
    through the disk before ``t_max``.
    """
    system = section.system
    dt = dt or default_dt(system)
    for t0, Q, P in _chunks(system, start, dt, t_max, drift_tol):
        s = section.signed(Q, P)
        for i in _upward_crossings(s):
            if min(section.in_plane(Q[i - 1], P[i - 1]), section.in_plane(Q[i], P[i])) > 2 * section.radius:
                continue
            tau, state = _refine(section, system, Q[i - 1], P[i - 1], dt)
            if section.in_plane(state.q, state.p) <= section.radius:
                return state, t0 + (i - 1) * dt + tau
    return None


@dataclass(frozen=True)
class ClosedOrbitRecord:
    initial: PhaseState
    period: float
    closure_gap: float
    returns_used: int


def _gap(system, a: PhaseState, b: PhaseState) -> float:
    return float(np.linalg.norm(system.displacement(a.q, a.p, b.q, b.p)))


def detect_closed_orbit(start: PhaseState, system, eps_close: float = DEFAULT_EPS_CLOSE,
                        t_min: Optional[float] = None, t_max: float = DEFAULT_T_MAX,
                        dt: Optional[float] = None, drift_tol: float = DEFAULT_DRIFT_TOL
                        ) -> Optional[ClosedOrbitRecord]:
    """Earliest return of ``start`` to within ``eps_close`` after ``t_min``.

    Distances use the flat torus metric on positions (Euclidean on the
    sphere embedding) and the Euclidean metric on momenta.  A candidate is
    accepted only if one further period brings the state back within
    ``2 * eps_close``.  Returns ``None`` when no closure is found.
    """
    system = as_system(system)
    dt = dt or default_dt(system)
    if t_min is None:
        t_min = minimum_period_floor(system, float(system.energy(start.q, start.p)), dt)
    if not (eps_close > 0 and 0 < t_min < t_max):
        raise ValueError("need eps_close > 0 and 0 < t_min < t_max")
    speed = phase_speed(system, start)
    if speed == 0.0:
        logger.info("start is an equilibrium; no closed orbit in the non-singular sense")
        return None
    section = PoincareSection(start, _field_vector(system, start.q, start.p) / speed, np.inf, system)
    coarse = eps_close + 4.0 * dt * speed
    returns = 0
    for t0, Q, P in _chunks(system, start, dt, t_max, drift_tol):
        s = section.signed(Q, P)
        for i in _upward_crossings(s):
            if t0 + i * dt < t_min:
                continue
            near = min(np.linalg.norm(section.offset(Q[j], P[j])) for j in (i - 1, i))
            if near > coarse:
                continue
            returns += 1
            tau, state = _refine(section, system, Q[i - 1], P[i - 1], dt)
            period = t0 + (i - 1) * dt + tau
            gap = _gap(system, start, state)
            if gap > eps_close or period < t_min:
                continue
            again = _flow(system, state, period, dt)
            if _gap(system, start, again) <= 2.0 * eps_close:
                return ClosedOrbitRecord(start, float(period), gap, returns)
            logger.debug("candidate period %g failed re-verification", period)
    return None


def minimum_period_floor(system, energy: float, dt: Optional[float] = None,
                         default: float = DEFAULT_PERIOD_FLOOR) -> float:
    """Heuristic lower bound for periods: minimum speed over maximum force.

    ``T_m = 2 sqrt(E - C0) / (2 sup|grad U|)`` with the certified bounds of
    the potential, or ``default`` for force-free systems; clamped below by
    ``10 dt`` when ``dt`` is given.
    """
    system = as_system(system)
    clamp = 10.0 * dt if dt else 0.0
    if system.force_free() or isinstance(system, ConformalSystem):
        return max(default, clamp)
    sup_u = sup_bound_c0(system.potential)
    if energy <= sup_u:
        raise DomainError(f"E = {energy:g} does not exceed sup U <= {sup_u:g}; speed not bounded below")
    force = 2.0 * system.potential.gradient_bound()
    return max(2.0 * np.sqrt(energy - sup_u) / (force + 1e-300), clamp)


@dataclass(frozen=True, eq=False)
class LipschitzReport:
    s: np.ndarray
    arc: np.ndarray
    periods: np.ndarray
    slopes: np.ndarray
    c2: float
    bound_holds: bool


def period_lipschitz_check(family: Union[Callable[[float], PhaseState], Sequence[PhaseState]],
                           s_grid: Sequence[float], system, **detect_kw) -> LipschitzReport:
    """Periods along a curve of initial conditions and their log-Lipschitz constant.

    ``slopes`` are finite differences of ``log T`` with respect to the
    accumulated phase-space arc length; ``c2`` is the largest in magnitude
    and ``bound_holds`` records ``T(s) <= T(0) exp(c2 * arc(s))`` on the grid.
    """
    system = as_system(system)
    s_grid = np.asarray(s_grid, dtype=float)
    states = [family(s) for s in s_grid] if callable(family) else list(family)
    if len(states) != len(s_grid):
        raise ValueError("family and s_grid differ in length")
    periods = np.empty(len(states))
    for i, (s, state) in enumerate(zip(s_grid, states)):
        rec = detect_closed_orbit(state, system, **detect_kw)
        if rec is None:
            raise PeriodDetectionError(float(s))
        periods[i] = rec.period
    steps = [_gap(system, a, b) for a, b in zip(states[:-1], states[1:])]
    arc = np.concatenate([[0.0], np.cumsum(steps)])
    darc = np.diff(arc)
    logT = np.log(periods)
    slopes = np.divide(np.diff(logT), darc, out=np.zeros_like(darc), where=darc > 0)
    c2 = float(np.max(np.abs(slopes))) if len(slopes) else 0.0
    bound = periods <= periods[0] * np.exp(c2 * arc) * (1.0 + 1e-12)
    return LipschitzReport(s_grid, arc, periods, slopes, c2, bool(np.all(bound)))


ORBIT_HEADER = ["seed", "q1", "q2", "p1", "p2", "closed", "period", "closure_gap"]
SPHERE_ORBIT_HEADER = ["seed", "x", "y", "z", "vx", "vy", "vz", "closed", "period", "closure_gap"]


def write_orbit_report(path, seeds, starts: Sequence[PhaseState],
                       records: Sequence[Optional[ClosedOrbitRecord]], sphere: bool = False) -> str:
    """Orbit-report CSV; open orbits get ``closed = 0`` and NaN period/gap.

    Sphere rows list the embedded position and velocity ``2p`` instead of
    torus coordinates.
    """
    rows = []
    for seed, x, rec in zip(seeds, starts, records):
        pos = x.q if sphere else np.mod(x.q, 2 * np.pi)
        mom = 2.0 * x.p if sphere else x.p
        tail = [1, rec.period, rec.closure_gap] if rec else [0, np.nan, np.nan]
        rows.append([int(seed), *pos, *mom, *tail])
    return write_csv(path, SPHERE_ORBIT_HEADER if sphere else ORBIT_HEADER, rows)
