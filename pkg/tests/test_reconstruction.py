import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from invdyn.dynamics import ConformalSystem, PhaseState, integrate, observe, random_state_on_level
from invdyn.potential import FourierSeries2D, canonical_wave_vectors, evaluate, gradient, random_potential
from invdyn.reconstruction import (
    ForceSamples,
    conformal_gradient,
    coverage_metrics,
    design_matrix,
    extract_force,
    fit_potential,
    key_set_diagnostic,
    reconstruct_conformal_factor,
    sup_norm_error,
    value_fit,
    write_reconstruction_csv,
)


def _points(seed, n, dim=2):
    return np.random.default_rng(seed).uniform(0, 2 * np.pi, (n, dim))


@pytest.mark.parametrize("dim", [2, 3])
def test_design_matrix_maps_coefficients_to_forces(dim):
    U = random_potential(4, 2, 1.0, dim=dim)
    q = _points(0, 7, dim)
    np.testing.assert_allclose(design_matrix(q, 2) @ U.theta, -gradient(U, q).reshape(-1), atol=1e-13)


def test_exact_forces_recover_the_potential():
    U = random_potential(9, 3, 1.0).with_mean(5.0)
    q = _points(1, 200)
    res = fit_potential(ForceSamples(q, -gradient(U, q)), 3)
    assert not res.rank_deficient and res.rank == 48
    assert res.fitted.mean == 0.0
    np.testing.assert_allclose(res.fitted.theta, U.theta, atol=1e-12)
    assert sup_norm_error(res.fitted, U) < 1e-12
    assert res.residual_rms < 1e-12


@given(st.floats(-100, 100))
def test_fit_is_gauge_invariant(c):
    U = random_potential(2, 2, 1.0)
    q = _points(2, 60)
    a = fit_potential(ForceSamples(q, -gradient(U, q)), 2)
    b = fit_potential(ForceSamples(q, -gradient(U.with_mean(c), q)), 2)
    np.testing.assert_array_equal(a.fitted.theta, b.fitted.theta)
    assert sup_norm_error(U, U.with_mean(c)) < 1e-12


@given(st.integers(0, 1000), st.integers(13, 60), st.integers(1, 40))
def test_sigma_min_grows_with_samples(seed, n, extra):
    q = _points(seed, n + extra)
    small = key_set_diagnostic(q[:n], 2)
    big = key_set_diagnostic(q, 2)
    assert big.sigma_min >= small.sigma_min * (1 - 1e-9)


def test_line_is_not_a_key_set():
    t = np.linspace(0, 2 * np.pi, 300, endpoint=False)
    line = np.column_stack([t, np.full_like(t, 1.3)])
    rep = key_set_diagnostic(line, 2)
    assert rep.verdict == "not key" and rep.rank < rep.n_unknowns
    U = random_potential(3, 2, 1.0)
    res = fit_potential(ForceSamples(line, -gradient(U, line)), 2)
    assert res.rank_deficient
    # the forces along the line are still reproduced
    np.testing.assert_allclose(design_matrix(line, 2) @ res.fitted.theta,
                               -gradient(U, line).reshape(-1), atol=1e-8)


def test_random_points_are_a_key_set():
    rep = key_set_diagnostic(_points(5, 100), 3)
    assert rep.is_key and rep.rank == rep.n_unknowns == 48
    assert rep.condition == pytest.approx(rep.sigma_max / rep.sigma_min)


def test_fit_needs_enough_equations():
    q = _points(0, 5)
    with pytest.raises(ValueError):
        fit_potential(ForceSamples(q, np.zeros_like(q)), 3)


def test_force_samples_validate():
    with pytest.raises(ValueError):
        ForceSamples(np.zeros((3, 2)), np.zeros((4, 2)))
    with pytest.raises(ValueError):
        ForceSamples([[np.nan, 0.0]], [[0.0, 0.0]])
    with pytest.raises(ValueError):
        ForceSamples(np.zeros((3, 2)), np.zeros((3, 2)), weight=[1, -1, 1])


def test_zero_weights_drop_samples():
    U = random_potential(6, 2, 1.0)
    q = _points(6, 80)
    f = -gradient(U, q)
    f[:10] += 5.0  # corrupted rows, masked out
    w = np.r_[np.zeros(10), np.ones(70)]
    res = fit_potential(ForceSamples(q, f, w), 2)
    np.testing.assert_allclose(res.fitted.theta, U.theta, atol=1e-11)


def test_extract_force_halves_the_acceleration(potential):
    s = random_state_on_level(potential, 50.0, np.random.default_rng(0))
    obs = observe(integrate(s, potential, 1e-3, 0.1))
    samples = extract_force(obs, stride=10)
    assert len(samples) == 11
    np.testing.assert_allclose(samples.f, -gradient(potential, obs.q[::10]), atol=1e-12)


def test_coverage_of_a_known_path():
    # a loop around the origin crossing a circle of radius 0.5 about (1, 1)
    t = np.linspace(0, 1, 1001)
    path = np.column_stack([1.0 + 1.0 * np.cos(2 * np.pi * t), np.full_like(t, 1.0)])
    rep = coverage_metrics(path, grid_n=8, circle_radius=0.5, q_star=[1.0, 1.0])
    assert rep.crossing_count == 4
    assert rep.occupancy == pytest.approx(3 / 64)


def test_coverage_grows_along_an_irrational_line():
    golden = (1 + 5 ** 0.5) / 2
    t = np.linspace(0, 400, 400_001)
    path = np.column_stack([t, golden * t])
    occ = [coverage_metrics(path[: n], 64).occupancy for n in (10_000, 100_000, 400_001)]
    assert occ[0] < occ[1] < occ[2] and occ[2] > 0.9


def test_value_fit_and_sup_error():
    U = random_potential(8, 2, 1.0).with_mean(0.7)
    q = _points(8, 100)
    V = value_fit(q, evaluate(U, q), 2)
    assert V.mean == pytest.approx(0.7, abs=1e-12)
    np.testing.assert_allclose(V.theta, U.theta, atol=1e-12)
    W = FourierSeries2D.from_terms({(1, 0): (0.25, 0.0)}, k_max=2)
    assert sup_norm_error(U.with_mean(0.0), FourierSeries2D.from_theta(U.theta + W.theta, 2)) == \
        pytest.approx(0.25)


@given(st.integers(0, 10_000))
def test_conformal_gradient_inverts_the_acceleration_law(seed):
    rng = np.random.default_rng(seed)
    g, v = rng.normal(size=(5, 2)), rng.normal(size=(5, 2)) + 0.1
    a = np.sum(g * v, axis=1)[:, None] * v - 0.5 * np.sum(v * v, axis=1)[:, None] * g
    np.testing.assert_allclose(conformal_gradient(v, a), g, rtol=1e-8, atol=1e-8)


def test_conformal_reconstruction_short_run():
    rho = random_potential(11, 1, 0.05)
    system = ConformalSystem(rho)
    s = random_state_on_level(system, 1.0, np.random.default_rng(11))
    obs = observe(integrate(s, system, 1e-4, 10.0))
    cr = reconstruct_conformal_factor(obs, 1.0, 1)
    assert cr.dropped == 0
    np.testing.assert_allclose(cr.rho_fitted.theta, rho.theta, atol=1e-7)
    np.testing.assert_allclose(cr.gradient_fitted.fitted.theta, rho.theta, atol=1e-7)
    assert cr.agreement < 1e-7
    with pytest.raises(ValueError):
        reconstruct_conformal_factor(obs, -1.0, 1)


def test_reconstruction_csv():
    U = random_potential(1, 1, 1.0)
    V = FourierSeries2D.from_theta(U.theta + 1e-3, 1)
    lines = write_reconstruction_csv(None, U, V).splitlines()
    assert lines[0] == "k1,k2,a_true,b_true,a_fit,b_fit,abs_err"
    assert len(lines) == 1 + len(canonical_wave_vectors(1))
    assert float(lines[1].split(",")[-1]) == pytest.approx(1e-3)


def test_free_motion_has_zero_forces_and_zero_fit():
    from invdyn.dynamics import PhaseState
    traj = integrate(PhaseState([0.0, 0.0], [0.5, 0.5 * (1 + 5 ** 0.5) / 2]), FourierSeries2D.zeros(3), 1e-3, 100.0)
    samples = extract_force(observe(traj))
    assert np.all(samples.f == 0.0)
    res = fit_potential(samples, 3)
    assert np.all(res.fitted.theta == 0.0) and res.residual_rms == 0.0
    rep = key_set_diagnostic(samples, 3)
    assert len(samples) == 10_001 and rep.is_key and rep.condition < 1e3


def test_single_cosine_forces():
    eps = 0.8
    U = FourierSeries2D.from_terms({(1, 0): (eps, 0.0)})
    s = random_state_on_level(U, 2.0, np.random.default_rng(1))
    samples = extract_force(observe(integrate(s, U, 1e-3, 5.0)), stride=1)
    np.testing.assert_allclose(samples.f[:, 0], eps * np.sin(samples.q[:, 0]), atol=1e-13)
    np.testing.assert_array_equal(samples.f[:, 1], 0.0)


def test_line_through_a_pure_q2_harmonic_is_flagged():
    t = np.linspace(0, 2 * np.pi, 200, endpoint=False)
    line = np.column_stack([t, np.zeros_like(t)])
    U = FourierSeries2D.from_terms({(0, 1): (1.0, 0.0)}, k_max=2)
    res = fit_potential(ForceSamples(line, -gradient(U, line)), 2)
    assert res.rank_deficient
    col = list(map(tuple, canonical_wave_vectors(2))).index((0, 1))
    assert np.all(design_matrix(line, 2)[:, col] == 0.0)


def test_closed_orbit_is_not_a_key_set():
    from invdyn.dynamics import PhaseState
    traj = integrate(PhaseState([0.3, 0.1], [0.5, 0.5]), FourierSeries2D.zeros(3), 1e-3, 20.0)
    assert key_set_diagnostic(extract_force(observe(traj)), 3).verdict == "not key"
    assert key_set_diagnostic(traj.positions[:1], 3).verdict == "not key"


def test_closed_orbit_coverage_stalls_and_crossings_track_periods():
    from invdyn.dynamics import PhaseState
    traj = integrate(PhaseState([0.3, 0.1], [0.5, 0.5]), FourierSeries2D.zeros(1), 1e-3, 1e3)
    reps = [coverage_metrics(traj.head(T), 64) for T in (250, 500, 1000)]
    assert reps[0].occupancy == reps[1].occupancy == reps[2].occupancy < 0.05
    # the circle about q* is entered and left once per period 2 pi
    full = reps[2]
    assert abs(full.crossing_count - 2 * 1000 / (2 * np.pi)) <= 2


def test_single_point_coverage():
    rep = coverage_metrics(np.array([[1.0, 1.0]]), 64)
    assert rep.occupancy == 1 / 64 ** 2 and rep.crossing_count == 0


def test_constant_conformal_factors():
    from invdyn.dynamics import PhaseState
    for c in (0.0, 0.4):
        system = ConformalSystem(FourierSeries2D.zeros(1).with_mean(c))
        s = PhaseState([0.2, 0.3], np.array([1.0, 0.7]) * np.sqrt(np.exp(-c) / 1.49))
        cr = reconstruct_conformal_factor(observe(integrate(s, system, 1e-3, 30.0)), 1.0, 1)
        np.testing.assert_allclose(cr.rho_samples, c, atol=1e-12)
        assert np.all(np.abs(cr.gradient_fitted.fitted.theta) < 1e-12)
        assert cr.agreement < 1e-12
