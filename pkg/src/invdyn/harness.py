"""Scenario configs, runners and report emission."""
from __future__ import annotations

import dataclasses
import json
import logging
import math
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Optional

import numpy as np

from .dynamics import (
    EXACT,
    MODES,
    ConformalSystem,
    DriftError,
    PhaseState,
    SphereSystem,
    Trajectory,
    integrate,
    observe,
    random_state_on_level,
    write_csv,
)
from .geometry import DomainError
from .oracles import great_circle_period, pendulum_period
from .periodicity import (
    PeriodDetectionError,
    detect_closed_orbit,
    period_lipschitz_check,
    write_orbit_report,
)
from .potential import (
    FourierSeries,
    FourierSeries2D,
    FourierSeries3D,
    canonical_wave_vectors,
    evaluate,
    random_potential,
    sup_bound_c0,
)
from .reconstruction import (
    coverage_metrics,
    design_matrix,
    extract_force,
    fit_potential,
    key_set_diagnostic,
    reconstruct_conformal_factor,
    sup_norm_error,
    write_reconstruction_csv,
)

logger = logging.getLogger(__name__)

SCENARIOS = (
    "torus-reconstruct",
    "sphere-closed",
    "low-energy",
    "t3-underdetermined",
    "gronwall-check",
    "conformal-reconstruct",
)
GATED = ("torus-reconstruct",)
GOLDEN = (1.0 + math.sqrt(5.0)) / 2.0


class ConfigError(ValueError):
    """Malformed or inconsistent configuration."""

    def __init__(self, message: str, line: Optional[int] = None, name: Optional[str] = None):
        self.line, self.name, self.bare = line, name, message
        super().__init__(f"line {line}: {message}" if line is not None else message)


class GateError(ConfigError):
    """Energy below the potential's sup bound where the run requires E >= C0."""


@dataclass(frozen=True)
class ScenarioConfig:
    """Run parameters; ``None`` means "scenario default".

    Config-file keys equal the attribute names except ``T`` (``t_final``)
    and ``K_max`` (``k_max``).  Fields from ``sup_error_tol`` on are the
    pass/fail thresholds.
    """

    scenario: str
    seed: int = 1
    dt: Optional[float] = None
    t_final: Optional[float] = field(default=None, metadata={"key": "T"})
    k_max: Optional[int] = field(default=None, metadata={"key": "K_max"})
    amplitude: Optional[float] = None
    energy_factor: Optional[float] = None
    energy: Optional[float] = None
    mode: str = EXACT
    output_dir: str = "out"
    stride: int = 10
    csv_stride: int = 100
    drift_tol: float = 1e-4
    rank_tol: float = 1e-10
    eps_close: float = 1e-6
    t_max: float = 1000.0
    grid_n: int = 64
    circle_radius: float = 0.5
    count: Optional[int] = None
    comparison_energy_factor: float = 2.0
    separatrix_margin: float = 0.1
    sup_error_tol: Optional[float] = None
    coef_rel_tol: float = 1e-8
    period_rel_tol: float = 1e-6
    oracle_rel_tol: float = 0.01
    occupancy_max: float = 0.6
    condition_min: float = 1e8
    condition_max: float = 1e4
    sigma_ratio_max: float = 1e-10
    null_rel_tol: float = 1e-8
    truth_tol: float = 1e-6
    agreement_tol: float = 1e-8
    speed_law_tol: float = 1e-8

    def resolved(self) -> "ScenarioConfig":
        """Copy with every scenario default filled in, after validation."""
        if self.scenario not in SCENARIOS:
            raise ConfigError(f"unknown scenario {self.scenario!r}; choose from {', '.join(SCENARIOS)}",
                              name="scenario")
        fill = {k: v for k, v in _DEFAULTS[self.scenario].items() if getattr(self, k) is None}
        if self.sup_error_tol is None:
            fill["sup_error_tol"] = 1e-6 if self.mode == EXACT else 1e-2
        cfg = dataclasses.replace(self, **fill)
        cfg.validate()
        return cfg

    def validate(self) -> None:
        if self.mode not in MODES:
            raise ConfigError(f"mode must be one of {', '.join(MODES)}, got {self.mode!r}", name="mode")
        positive = ["dt", "t_final", "eps_close", "t_max", "circle_radius", "drift_tol", "rank_tol"]
        for name in positive:
            v = getattr(self, name)
            if v is not None and not (v > 0 and math.isfinite(v)):
                raise ConfigError(f"{config_key(name)} must be positive and finite, got {v!r}", name=name)
        for name in ("k_max", "stride", "csv_stride", "grid_n", "count"):
            v = getattr(self, name)
            if v is not None and v < 1:
                raise ConfigError(f"{config_key(name)} must be at least 1, got {v!r}", name=name)
        if self.dt is not None and self.t_final is not None and self.t_final < self.dt:
            raise ConfigError("T must be at least dt", name="t_final")
        if not 0 <= self.separatrix_margin < 0.5:
            raise ConfigError("separatrix_margin must lie in [0, 0.5)", name="separatrix_margin")
        if self.energy_factor is None:
            return
        if self.scenario == "low-energy" and not self.energy_factor < 1.0:
            raise ConfigError("low-energy requires energy_factor < 1", name="energy_factor")
        if self.scenario in GATED and self.energy_factor < 1.0:
            raise GateError(
                f"energy_factor {self.energy_factor} puts E below C0; the reconstruction guarantee "
                "needs E >= C0 (the low-energy scenario studies E < C0)", name="energy_factor")

    def to_dict(self) -> dict:
        return {config_key(f.name): getattr(self, f.name) for f in dataclasses.fields(self)}


_DEFAULTS = {
    "torus-reconstruct": dict(dt=1e-3, t_final=100.0, k_max=3, amplitude=1.0, energy_factor=2.0),
    "sphere-closed": dict(dt=1e-4, t_final=10.0, k_max=3, amplitude=0.0, energy_factor=1.0,
                          energy=1.0, count=100),
    "low-energy": dict(dt=1e-3, t_final=100.0, k_max=3, amplitude=1.0, energy_factor=0.5),
    "t3-underdetermined": dict(dt=1e-3, t_final=100.0, k_max=2, amplitude=0.0, energy_factor=1.0),
    "gronwall-check": dict(dt=1e-3, t_final=10.0, k_max=1, amplitude=1.0, energy_factor=1.0, count=20),
    "conformal-reconstruct": dict(dt=1e-4, t_final=100.0, k_max=2, amplitude=0.05, energy_factor=1.0,
                                  energy=1.0),
}


def config_key(name: str) -> str:
    f = _FIELDS[name]
    return f.metadata.get("key", f.name)


_FIELDS = {f.name: f for f in dataclasses.fields(ScenarioConfig)}
_BY_KEY = {f.metadata.get("key", f.name): f for f in dataclasses.fields(ScenarioConfig)}


def _field_type(f) -> type:
    t = str(f.type)
    return int if "int" in t else float if "float" in t else str


def parse_config(text: str, overrides: Optional[dict] = None) -> ScenarioConfig:
    """Parse ``key = value`` lines (``#`` starts a comment) into a resolved config.

    ``overrides`` maps attribute names to values applied after the file.
    """
    values: dict = {}
    lines: dict = {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        key, sep, value = (s.strip() for s in line.partition("="))
        if not sep or not key or not value:
            raise ConfigError(f"expected 'key = value', got {raw.strip()!r}", lineno)
        if key not in _BY_KEY:
            raise ConfigError(f"unknown key {key!r}", lineno)
        f = _BY_KEY[key]
        if f.name in values:
            raise ConfigError(f"duplicate key {key!r}", lineno)
        kind = _field_type(f)
        try:
            values[f.name] = kind(value)
        except ValueError:
            raise ConfigError(f"{key} expects {kind.__name__}, got {value!r}", lineno) from None
        lines[f.name] = lineno
    for name, v in (overrides or {}).items():
        if v is not None:
            values[name] = _field_type(_FIELDS[name])(v)
    if "scenario" not in values:
        raise ConfigError("missing required key 'scenario'")
    try:
        return ScenarioConfig(**values).resolved()
    except ConfigError as err:
        if err.line is None and err.name in lines:
            raise type(err)(err.bare, lines[err.name], err.name) from None
        raise


def emit_config(cfg: ScenarioConfig) -> str:
    """Inverse of :func:`parse_config`; unset keys are omitted."""
    out = []
    for f in dataclasses.fields(cfg):
        v = getattr(cfg, f.name)
        if v is None:
            continue
        out.append(f"{config_key(f.name)} = {repr(float(v)) if isinstance(v, float) else v}")
    return "\n".join(out) + "\n"


def load_config(path, overrides: Optional[dict] = None) -> ScenarioConfig:
    try:
        text = Path(path).read_text()
    except OSError as err:
        raise ConfigError(f"cannot read config {path}: {err.strerror}") from None
    return parse_config(text, overrides)


# --------------------------------------------------------------------------
# reports

@dataclass
class ScenarioReport:
    config: ScenarioConfig
    metrics: dict = field(default_factory=dict)
    checks: dict = field(default_factory=dict)
    status: str = "pass"
    message: str = ""
    duration: float = 0.0
    files: list = field(default_factory=list)

    @property
    def passed(self) -> bool:
        return self.status == "pass"

    @property
    def exit_code(self) -> int:
        return {"pass": 0, "fail": 1, "numerical-failure": 3}[self.status]

    def to_json(self) -> str:
        doc = {
            "scenario": self.config.scenario,
            "status": self.status,
            "passed": self.passed,
            "message": self.message,
            "duration_s": self.duration,
            "config": self.config.to_dict(),
            "metrics": self.metrics,
            "checks": self.checks,
            "files": self.files,
        }
        return json.dumps(jsonable(doc), indent=2) + "\n"


def jsonable(x):
    if isinstance(x, dict):
        return {str(k): jsonable(v) for k, v in x.items()}
    if isinstance(x, (list, tuple, np.ndarray)):
        return [jsonable(v) for v in x]
    if isinstance(x, (bool, np.bool_)):
        return bool(x)
    if isinstance(x, (int, np.integer)):
        return int(x)
    if isinstance(x, (float, np.floating)):
        x = float(x)
        return x if math.isfinite(x) else str(x)
    return x


class _Run:
    """Per-run output directory and file bookkeeping."""

    def __init__(self, cfg: ScenarioConfig):
        self.cfg = cfg
        self.dir = Path(cfg.output_dir)
        self.dir.mkdir(parents=True, exist_ok=True)
        self.files: list[str] = []

    def path(self, name: str) -> Path:
        self.files.append(name)
        return self.dir / name

    def rng(self, *stream: int) -> np.random.Generator:
        return np.random.default_rng([self.cfg.seed, *stream])


def run_scenario(cfg: ScenarioConfig) -> ScenarioReport:
    """Run one scenario, write its CSVs and ``summary.json``, return the report.

    Raises :class:`GateError` (before any output) when the energy gate is
    violated.  Integration drift failures are reported with status
    ``numerical-failure``.
    """
    cfg = cfg.resolved()
    runner = _RUNNERS[cfg.scenario]
    run = _Run(cfg)
    report = ScenarioReport(cfg)
    start = time.perf_counter()
    try:
        metrics, checks = runner(cfg, run)
        report.metrics, report.checks = metrics, checks
        report.status = "pass" if all(checks.values()) else "fail"
        failed = [k for k, ok in checks.items() if not ok]
        report.message = "all checks passed" if not failed else "failed: " + ", ".join(failed)
    except DriftError as err:
        report.status, report.message = "numerical-failure", str(err)
    except PeriodDetectionError as err:
        report.status, report.message = "fail", str(err)
    report.duration = time.perf_counter() - start
    report.files = list(run.files)
    (run.dir / "summary.json").write_text(report.to_json())
    return report


# --------------------------------------------------------------------------
# scenarios

def _energy_gate(cfg: ScenarioConfig, U: FourierSeries) -> dict:
    c0 = sup_bound_c0(U)
    energy = cfg.energy_factor * c0
    if energy < c0:
        raise GateError(f"E = {energy:g} is below C0 = {c0:g}", name="energy_factor")
    return {"C0_l1": c0, "C0_grid": U.grid_sup(), "energy": energy, "gate_ok": True}


def _coef_rel_error(fit: FourierSeries, truth: FourierSeries) -> float:
    band = max(fit.k_max, truth.k_max)
    a, b = fit.on_band(band).theta, truth.on_band(band).theta
    scale = np.where(b != 0.0, np.abs(b), 1.0)
    return float(np.max(np.abs(a - b) / scale))


def setup_run(cfg: ScenarioConfig, direction=None):
    """System, ground-truth series (or ``None``) and seeded start of a scenario.

    ``direction`` replaces the seeded momentum direction of 2-torus and
    sphere starts, keeping the energy.
    """
    cfg = cfg.resolved()
    rng = np.random.default_rng([cfg.seed, 1])
    sc = cfg.scenario
    if sc == "sphere-closed":
        system, truth = SphereSystem(), None
        state = random_state_on_level(system, cfg.energy, np.random.default_rng([cfg.seed, 2]))
    elif sc == "conformal-reconstruct":
        truth = random_potential(cfg.seed, cfg.k_max, cfg.amplitude)
        system = ConformalSystem(truth)
        state = random_state_on_level(system, cfg.energy, rng)
    elif sc == "low-energy":
        truth = system = single_cosine(cfg.amplitude, cfg.k_max)
        state = _axis_launch(truth, cfg.energy_factor * sup_bound_c0(truth), rng)
    elif sc == "t3-underdetermined":
        truth = system = FourierSeries3D.zeros(cfg.k_max)
        state = PhaseState(rng.uniform(0.0, 2.0 * np.pi, 3), T3_FREQUENCY / 2.0)
    elif sc == "gronwall-check":
        truth = system = single_cosine(cfg.amplitude, cfg.k_max)
        E = gronwall_energies(cfg.amplitude, cfg.count, cfg.separatrix_margin)[0]
        state = PhaseState(np.array([np.pi, 0.0]), np.array([np.sqrt(E + cfg.amplitude), 0.0]))
    else:
        truth = system = random_potential(cfg.seed, cfg.k_max, cfg.amplitude) if cfg.amplitude \
            else FourierSeries2D.zeros(cfg.k_max)
        c0 = sup_bound_c0(truth)
        energy = cfg.energy if cfg.energy is not None else cfg.energy_factor * c0 if c0 > 0 else 1.0
        if energy < c0:
            raise GateError(f"E = {energy:g} is below C0 = {c0:g}", name="energy")
        state = random_state_on_level(truth, energy, rng)
    if direction is not None:
        state = _redirect(system, state, direction)
    return system, truth, state


def _redirect(system, state: PhaseState, direction) -> PhaseState:
    d = np.asarray(direction, dtype=float)
    if d.shape != state.p.shape or not np.any(d):
        raise ConfigError(f"direction needs {len(state.p)} components, not all zero")
    if isinstance(system, SphereSystem):
        d = d - np.dot(d, state.q) * state.q
        if np.linalg.norm(d) < 1e-12:
            raise ConfigError("direction is normal to the sphere at the start point")
    return PhaseState(state.q, np.linalg.norm(state.p) * d / np.linalg.norm(d))


def _torus_reconstruct(cfg: ScenarioConfig, run: _Run):
    U = random_potential(cfg.seed, cfg.k_max, cfg.amplitude)
    metrics = _energy_gate(cfg, U)
    _, _, state0 = setup_run(dataclasses.replace(cfg, energy=None))
    traj = integrate(state0, U, cfg.dt, cfg.t_final, cfg.drift_tol)
    samples = extract_force(observe(traj, cfg.mode), cfg.stride)
    res = fit_potential(samples, cfg.k_max, cfg.rank_tol)
    key = key_set_diagnostic(samples, cfg.k_max, cfg.rank_tol)
    cov = coverage_metrics(traj, cfg.grid_n, cfg.circle_radius)
    sup_err = sup_norm_error(res.fitted, U)
    coef_rel = _coef_rel_error(res.fitted, U)
    coef_l2 = float(np.linalg.norm(res.fitted.theta - U.theta))

    U.to_csv(run.path("potential.csv"))
    traj.to_csv(run.path("trajectory.csv"), cfg.csv_stride)
    write_reconstruction_csv(run.path("reconstruction.csv"), U, res.fitted)

    metrics.update(
        drift=traj.drift, n_samples=len(samples), residual_rms=res.residual_rms,
        condition=key.condition, sigma_min=key.sigma_min, sigma_max=key.sigma_max,
        rank=key.rank, n_unknowns=key.n_unknowns, rank_deficient=res.rank_deficient,
        verdict=key.verdict, sup_error=sup_err, coef_rel_error=coef_rel, coef_l2_error=coef_l2,
        occupancy=cov.occupancy, q_star=cov.q_star, crossing_count=cov.crossing_count,
    )
    checks = {"verdict_key": key.is_key, "sup_error": sup_err <= cfg.sup_error_tol}
    if cfg.mode == EXACT:
        checks["coef_rel_error"] = coef_rel <= cfg.coef_rel_tol
    return metrics, checks


def _sphere_closed(cfg: ScenarioConfig, run: _Run):
    system = SphereSystem()
    seeds = [cfg.seed + i for i in range(cfg.count)]
    starts = [random_state_on_level(system, cfg.energy, np.random.default_rng([s, 2])) for s in seeds]
    records = [detect_closed_orbit(x, system, cfg.eps_close, t_max=cfg.t_max, dt=cfg.dt,
                                   drift_tol=cfg.drift_tol) for x in starts]
    write_orbit_report(run.path("orbits.csv"), seeds, starts, records, sphere=True)
    integrate(starts[0], system, cfg.dt, cfg.t_final, cfg.drift_tol).to_csv(
        run.path("trajectory.csv"), cfg.csv_stride)

    oracle = great_circle_period(cfg.energy)
    periods = np.array([r.period for r in records if r is not None])
    closed = len(periods)
    metrics = {"energy": cfg.energy, "oracle_period": oracle, "closed": closed, "count": cfg.count}
    checks = {"all_closed": closed == cfg.count}
    if closed:
        rel = np.abs(periods / oracle - 1.0)
        metrics.update(
            periods_min=float(periods.min()), periods_max=float(periods.max()),
            max_rel_error=float(rel.max()),
            spread=float((periods.max() - periods.min()) / periods.mean()),
            max_closure_gap=max(r.closure_gap for r in records if r is not None),
        )
        checks["period_oracle"] = metrics["max_rel_error"] <= cfg.period_rel_tol
        checks["period_spread"] = metrics["spread"] <= cfg.period_rel_tol
    return metrics, checks


def single_cosine(amplitude: float, k_max: int = 1) -> FourierSeries:
    """``U(q) = amplitude * cos(q1)`` on the 2-torus."""
    return FourierSeries2D.from_terms({(1, 0): (amplitude, 0.0)}, k_max=k_max)


def _axis_launch(U: FourierSeries, energy: float, rng: np.random.Generator) -> PhaseState:
    """Seeded start in ``{U < E}`` moving along ``q1`` (``p2 = 0``)."""
    for _ in range(10_000):
        q = rng.uniform(0.0, 2.0 * np.pi, 2)
        kinetic = energy - evaluate(U, q)
        if kinetic > 0:
            sign = 1.0 if rng.uniform() < 0.5 else -1.0
            return PhaseState(q, np.array([sign * np.sqrt(kinetic), 0.0]))
    raise DomainError(f"no accessible point at energy {energy}")


def _low_energy(cfg: ScenarioConfig, run: _Run):
    _, U, state0 = setup_run(cfg)
    c0 = sup_bound_c0(U)
    energy = cfg.energy_factor * c0
    traj = integrate(state0, U, cfg.dt, cfg.t_final, cfg.drift_tol)
    samples = extract_force(observe(traj, cfg.mode), cfg.stride)
    key = key_set_diagnostic(samples, cfg.k_max, cfg.rank_tol)
    res = fit_potential(samples, cfg.k_max, cfg.rank_tol)
    cov = coverage_metrics(traj, cfg.grid_n, cfg.circle_radius)

    energy2 = cfg.comparison_energy_factor * c0
    traj2 = integrate(random_state_on_level(U, energy2, run.rng(3)), U, cfg.dt, cfg.t_final, cfg.drift_tol)
    samples2 = extract_force(observe(traj2, cfg.mode), cfg.stride)
    key2 = key_set_diagnostic(samples2, cfg.k_max, cfg.rank_tol)
    res2 = fit_potential(samples2, cfg.k_max, cfg.rank_tol)

    # a generic launch direction at the same low energy, reported only
    traj3 = integrate(random_state_on_level(U, energy, run.rng(4)), U, cfg.dt, cfg.t_final, cfg.drift_tol)
    key3 = key_set_diagnostic(extract_force(observe(traj3, cfg.mode), cfg.stride), cfg.k_max, cfg.rank_tol)

    U.to_csv(run.path("potential.csv"))
    traj.to_csv(run.path("trajectory.csv"), cfg.csv_stride)
    traj2.to_csv(run.path("trajectory_comparison.csv"), cfg.csv_stride)
    write_reconstruction_csv(run.path("reconstruction.csv"), U, res.fitted)
    write_reconstruction_csv(run.path("reconstruction_comparison.csv"), U, res2.fitted)

    metrics = {
        "C0_l1": c0, "C0_grid": U.grid_sup(), "energy": energy, "gate_ok": False,
        "occupancy": cov.occupancy, "crossing_count": cov.crossing_count,
        "condition": key.condition, "sigma_min": key.sigma_min, "rank": key.rank,
        "rank_deficient": res.rank_deficient, "verdict": key.verdict,
        "sup_error": sup_norm_error(res.fitted, U),
        "comparison_energy": energy2, "comparison_condition": key2.condition,
        "comparison_verdict": key2.verdict, "comparison_sup_error": sup_norm_error(res2.fitted, U),
        "generic_launch_condition": key3.condition, "generic_launch_verdict": key3.verdict,
        "generic_launch_occupancy": coverage_metrics(traj3, cfg.grid_n, cfg.circle_radius).occupancy,
    }
    checks = {
        "confined": cov.occupancy < cfg.occupancy_max,
        "ill_conditioned": key.condition > cfg.condition_min,
        "rank_deficient": res.rank_deficient,
        "comparison_conditioned": key2.condition < cfg.condition_max,
        "comparison_key": key2.is_key,
    }
    return metrics, checks


T3_FREQUENCY = np.array([1.0, GOLDEN, 1.0 + GOLDEN])
T3_NULL_WAVE_VECTOR = (1, 1, -1)


def null_direction(k_max: int, k, phase: float) -> np.ndarray:
    """Coefficient vector of ``cos(k.q - phase)`` in the 3D band, mean excluded."""
    kv = canonical_wave_vectors(k_max, 3)
    idx = int(np.flatnonzero(np.all(kv == np.asarray(k), axis=1))[0])
    theta = np.zeros(2 * len(kv))
    theta[idx], theta[len(kv) + idx] = np.cos(phase), np.sin(phase)
    return theta


def _t3_underdetermined(cfg: ScenarioConfig, run: _Run):
    _, U, state0 = setup_run(cfg)
    q0 = state0.q
    traj = integrate(state0, U, cfg.dt, cfg.t_final, cfg.drift_tol)
    samples = extract_force(observe(traj, cfg.mode), cfg.stride)
    key = key_set_diagnostic(samples, cfg.k_max, cfg.rank_tol)
    res = fit_potential(samples, cfg.k_max, cfg.rank_tol)

    k = np.array(T3_NULL_WAVE_VECTOR)
    theta = null_direction(cfg.k_max, k, float(k @ q0))
    image = np.linalg.norm(design_matrix(samples.q, cfg.k_max) @ theta)
    null_rel = float(image / (key.sigma_max * np.linalg.norm(theta)))

    traj.to_csv(run.path("trajectory.csv"), cfg.csv_stride)
    s = res.singular_values
    write_csv(run.path("design_spectrum.csv"), ["index", "sigma", "sigma_rel"],
              [[i, v, v / s[0]] for i, v in enumerate(s)])

    ratio = key.sigma_min / key.sigma_max
    metrics = {
        "frequency": T3_FREQUENCY, "null_wave_vector": k, "k_dot_omega": float(k @ T3_FREQUENCY),
        "rank": key.rank, "n_unknowns": key.n_unknowns, "rank_deficient": res.rank_deficient,
        "sigma_ratio": ratio, "condition": key.condition, "verdict": key.verdict,
        "null_image_rel": null_rel, "drift": traj.drift,
    }
    checks = {
        "rank_deficient": res.rank_deficient,
        "sigma_ratio": ratio < cfg.sigma_ratio_max,
        "null_direction": null_rel < cfg.null_rel_tol,
    }
    return metrics, checks


def gronwall_energies(eps: float, count: int, margin: float) -> np.ndarray:
    """``count`` energies in the libration range, ``margin * 2 eps`` from each end."""
    span = 2.0 * eps
    return np.linspace(-eps + margin * span, eps - margin * span, count)


def _gronwall_check(cfg: ScenarioConfig, run: _Run):
    eps = cfg.amplitude
    U = single_cosine(eps, cfg.k_max)
    energies = gronwall_energies(eps, cfg.count, cfg.separatrix_margin)
    starts = [PhaseState(np.array([np.pi, 0.0]), np.array([np.sqrt(E + eps), 0.0])) for E in energies]
    t_min = 0.5 * 2.0 * np.pi / np.sqrt(2.0 * eps)
    rep = period_lipschitz_check(starts, energies, U, eps_close=cfg.eps_close, t_min=t_min,
                                 t_max=cfg.t_max, dt=cfg.dt, drift_tol=cfg.drift_tol)
    oracle = np.array([pendulum_period(E, eps) for E in energies])
    rel = np.abs(rep.periods / oracle - 1.0)
    darc = np.diff(rep.arc)
    oracle_slopes = np.diff(np.log(oracle)) / darc
    slope_rel = np.abs(rep.slopes - oracle_slopes) / np.abs(oracle_slopes)

    write_csv(run.path("gronwall.csv"),
              ["energy", "arc", "period", "oracle_period", "rel_error", "slope", "oracle_slope"],
              [[E, a, T, To, r, s, so] for E, a, T, To, r, s, so in
               zip(energies, rep.arc, rep.periods, oracle, rel,
                   np.append(rep.slopes, np.nan), np.append(oracle_slopes, np.nan))])
    traj = integrate(starts[0], U, cfg.dt, cfg.t_final, cfg.drift_tol)
    traj.to_csv(run.path("trajectory.csv"), cfg.csv_stride)

    metrics = {
        "eps": eps, "energy_min": float(energies[0]), "energy_max": float(energies[-1]),
        "separatrix_gap": float(eps - energies[-1]), "periods": rep.periods,
        "max_rel_error": float(rel.max()), "c2": rep.c2, "bound_holds": rep.bound_holds,
        "max_slope_rel_error": float(slope_rel.max()),
    }
    checks = {
        "oracle_periods": metrics["max_rel_error"] <= cfg.oracle_rel_tol,
        "c2_finite": bool(np.isfinite(rep.c2)),
        "gronwall_bound": rep.bound_holds,
        "oracle_slopes": metrics["max_slope_rel_error"] <= cfg.oracle_rel_tol,
        "separatrix_margin": eps - energies[-1] >= 0.1 * eps,
    }
    return metrics, checks


def _conformal_reconstruct(cfg: ScenarioConfig, run: _Run):
    system, rho, state0 = setup_run(cfg)
    traj = integrate(state0, system, cfg.dt, cfg.t_final, cfg.drift_tol)
    obs = observe(traj, cfg.mode)
    speed2 = np.sum(obs.velocity ** 2, axis=1)
    speed_law = float(np.max(np.abs(speed2 / (4.0 * cfg.energy * np.exp(evaluate(rho, obs.q))) - 1.0)))
    cr = reconstruct_conformal_factor(obs, cfg.energy, cfg.k_max, cfg.stride, cfg.rank_tol)
    by_value, by_grad = cr.rho_fitted, cr.gradient_fitted.fitted
    err_value = max(float(np.max(np.abs(by_value.theta - rho.theta))), abs(by_value.mean - rho.mean))
    err_grad = float(np.max(np.abs(by_grad.theta - rho.theta)))

    rho.to_csv(run.path("rho.csv"))
    traj.to_csv(run.path("trajectory.csv"), cfg.csv_stride)
    write_reconstruction_csv(run.path("reconstruction_values.csv"), rho, by_value)
    write_reconstruction_csv(run.path("reconstruction_gradient.csv"), rho, by_grad)

    metrics = {
        "energy": cfg.energy, "drift": traj.drift, "speed_law": speed_law,
        "value_fit_error": err_value, "gradient_fit_error": err_grad, "agreement": cr.agreement,
        "condition": cr.gradient_fitted.condition, "rank_deficient": cr.gradient_fitted.rank_deficient,
        "dropped": cr.dropped,
    }
    checks = {
        "value_fit": err_value <= cfg.truth_tol,
        "gradient_fit": err_grad <= cfg.truth_tol,
        "agreement": cr.agreement <= cfg.agreement_tol,
        "speed_law": speed_law <= cfg.speed_law_tol,
    }
    return metrics, checks


_RUNNERS: dict[str, Callable] = {
    "torus-reconstruct": _torus_reconstruct,
    "sphere-closed": _sphere_closed,
    "low-energy": _low_energy,
    "t3-underdetermined": _t3_underdetermined,
    "gronwall-check": _gronwall_check,
    "conformal-reconstruct": _conformal_reconstruct,
}
