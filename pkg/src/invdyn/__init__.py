"""Potential reconstruction from trajectories of natural mechanical systems.

Systems ``H = |p|^2 + U(q)`` on the flat 2- and 3-torus, the conformal
torus ``H = exp(rho) |p|^2`` and geodesic flow on the round sphere.
"""
from .dynamics import (
    ConformalSystem,
    DriftError,
    NaturalSystem,
    ObservationSeries,
    PhaseState,
    SphereSystem,
    Trajectory,
    hamiltonian,
    integrate,
    observe,
    random_state_on_level,
    vector_field,
)
from .geometry import (
    DomainError,
    MetricKind,
    MetricTag,
    jacobi_metric_factor,
    torus_displacement,
    wrap_to_fundamental_domain,
)
from .harness import (
    ConfigError,
    GateError,
    ScenarioConfig,
    ScenarioReport,
    emit_config,
    parse_config,
    run_scenario,
)
from .oracles import free_torus_period, great_circle_period, pendulum_period
from .periodicity import (
    ClosedOrbitRecord,
    LipschitzReport,
    PeriodDetectionError,
    SingularPointError,
    build_section,
    detect_closed_orbit,
    first_return,
    minimum_period_floor,
    period_lipschitz_check,
)
from .potential import (
    FourierSeries,
    FourierSeries2D,
    FourierSeries3D,
    canonical_wave_vectors,
    evaluate,
    gradient,
    random_potential,
    sup_bound_c0,
)
from .reconstruction import (
    CoverageReport,
    ForceSamples,
    KeySetReport,
    PotentialReconstructor,
    ReconstructionResult,
    coverage_metrics,
    extract_force,
    fit_potential,
    key_set_diagnostic,
    reconstruct_conformal_factor,
    sup_norm_error,
)

__version__ = "0.1.0"

__all__ = [name for name in dir() if not name.startswith("_")]
