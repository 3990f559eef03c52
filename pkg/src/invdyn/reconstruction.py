"""Potential reconstruction from an observed trajectory.

Forces read off the equations of motion are matched, in the least-squares
sense, by the gradient of a band-limited Fourier series.  Whether the
trajectory determines the potential uniquely within the band is exactly
whether the gradient design matrix has full column rank, which is what the
key-set diagnostics report.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np
from sklearn.base import BaseEstimator, RegressorMixin
from sklearn.utils.validation import check_is_fitted

from ._validation import check_band, check_positions, check_vectors, check_weights
from .dynamics import ObservationSeries, Trajectory, write_csv
from .geometry import torus_distance, wrap_to_fundamental_domain
from .potential import (
    TWO_PI,
    FourierSeries,
    FourierSeries2D,
    FourierSeries3D,
    canonical_wave_vectors,
    evaluate,
    gradient,
)

DEFAULT_RANK_TOL = 1e-10
DEFAULT_STRIDE = 10
MIN_SPEED = 1e-8


def _series_class(dim):
    return {2: FourierSeries2D, 3: FourierSeries3D}[dim]


@dataclass(frozen=True, eq=False)
class ForceSamples:
    """Force values ``f = -grad U`` at configuration points."""

    q: np.ndarray
    f: np.ndarray
    weight: Optional[np.ndarray] = None

    def __post_init__(self):
        q = check_positions(self.q, name="q")
        f = check_vectors(self.f, len(q), q.shape[1], name="f")
        object.__setattr__(self, "q", q)
        object.__setattr__(self, "f", f)
        object.__setattr__(self, "weight", check_weights(self.weight, len(q)))

    def __len__(self):
        return len(self.q)

    def __getitem__(self, idx) -> "ForceSamples":
        return ForceSamples(self.q[idx], self.f[idx], self.weight[idx])

    @property
    def dim(self) -> int:
        return self.q.shape[1]


@dataclass(frozen=True, eq=False)
class ReconstructionResult:
    fitted: FourierSeries
    residual_rms: float
    singular_values: np.ndarray
    condition: float
    rank_deficient: bool
    rank: int

    @property
    def sigma_min(self) -> float:
        return float(self.singular_values[-1])


@dataclass(frozen=True)
class KeySetReport:
    rank: int
    n_unknowns: int
    condition: float
    sigma_min: float
    sigma_max: float
    verdict: str

    @property
    def is_key(self) -> bool:
        return self.verdict == "key"


def extract_force(obs: ObservationSeries, stride: int = DEFAULT_STRIDE) -> ForceSamples:
    """Forces ``f = q''/2`` along the observation, keeping every ``stride``-th sample.

    Since ``q'' = -2 grad U`` the force ``-grad U`` is half the acceleration.
    """
    if len(obs) == 0:
        raise ValueError("empty observation series")
    sl = slice(None, None, max(1, int(stride)))
    return ForceSamples(obs.q[sl], 0.5 * obs.acceleration[sl])


def design_matrix(q, k_max: int) -> np.ndarray:
    """Rows ``-d/dq_i`` of the basis at each point, unknowns ``[a, b]``.

    Sample ``n`` owns rows ``n*dim .. n*dim + dim - 1``.
    """
    q = np.asarray(q, dtype=float)
    n, dim = q.shape
    k = canonical_wave_vectors(k_max, dim).astype(float)
    ph = q @ k.T
    s, c = np.sin(ph), np.cos(ph)
    A = np.empty((n, dim, 2 * len(k)))
    for i in range(dim):
        A[:, i, : len(k)] = k[:, i] * s
        A[:, i, len(k):] = -k[:, i] * c
    return A.reshape(n * dim, 2 * len(k))


def _weighted_system(samples: ForceSamples, k_max: int):
    A = design_matrix(samples.q, k_max)
    rhs = samples.f.reshape(-1)
    w = np.repeat(np.sqrt(samples.weight), samples.dim)
    return A * w[:, None], rhs * w


def _truncated_lstsq(A, rhs, rank_tol):
    u, s, vt = np.linalg.svd(A, full_matrices=False)
    if s.size == 0 or s[0] == 0.0:
        return np.zeros(A.shape[1]), s, 0
    keep = s >= rank_tol * s[0]
    theta = vt[keep].T @ ((u[:, keep].T @ rhs) / s[keep])
    return theta, s, int(keep.sum())


def fit_potential(samples: ForceSamples, k_max: int, rank_tol: float = DEFAULT_RANK_TOL
                  ) -> ReconstructionResult:
    """Least-squares band-limited potential whose force matches the samples.

    Directions with singular value below ``rank_tol * sigma_max`` are
    dropped (minimum-norm solution) and flagged as ``rank_deficient``.  The
    additive constant is unobservable and set to zero.
    """
    k_max = check_band(k_max)
    if len(samples) == 0:
        raise ValueError("no force samples")
    dim = samples.dim
    n_unknowns = (2 * k_max + 1) ** dim - 1
    if len(samples) * dim < n_unknowns:
        raise ValueError(
            f"{len(samples)} samples give {len(samples) * dim} equations for {n_unknowns} unknowns"
        )
    A, rhs = _weighted_system(samples, k_max)
    theta, s, rank = _truncated_lstsq(A, rhs, rank_tol)
    resid = A @ theta - rhs
    retained = s[:rank]
    condition = float(retained[0] / retained[-1]) if rank else np.inf
    return ReconstructionResult(
        fitted=_series_class(dim).from_theta(theta, k_max),
        residual_rms=float(np.sqrt(np.mean(resid ** 2))),
        singular_values=s,
        condition=condition,
        rank_deficient=rank < n_unknowns,
        rank=rank,
    )


def key_set_diagnostic(samples, k_max: int, rank_tol: float = DEFAULT_RANK_TOL) -> KeySetReport:
    """Spectrum of the gradient design matrix on the sample positions.

    ``samples`` may be :class:`ForceSamples` or an ``(n, dim)`` array of
    positions.  The verdict is ``"key"`` iff the smallest singular value
    clears ``rank_tol * sigma_max``, i.e. no nonzero band-limited potential
    has vanishing gradient at every sample.
    """
    k_max = check_band(k_max)
    q = samples.q if isinstance(samples, ForceSamples) else check_positions(samples, name="samples")
    A = design_matrix(q, k_max)
    n_unknowns = A.shape[1]
    s = np.linalg.svd(A, compute_uv=False)
    s = np.concatenate([s, np.zeros(n_unknowns - len(s))])
    smax, smin = float(s[0]), float(s[-1])
    rank = int(np.sum(s >= rank_tol * smax)) if smax > 0 else 0
    condition = smax / smin if smin > 0 else np.inf
    verdict = "key" if smax > 0 and smin >= rank_tol * smax else "not key"
    return KeySetReport(rank, n_unknowns, condition, smin, smax, verdict)


@dataclass(frozen=True)
class CoverageReport:
    occupancy: float
    q_star: np.ndarray
    crossing_count: int


def coverage_metrics(traj, grid_n: int = 64, circle_radius: float = 0.5,
                     q_star=None) -> CoverageReport:
    """Cell occupancy, most-visited point and circle crossings of a trajectory.

    ``q_star`` is the centre of the most visited grid cell (lowest index on
    ties) unless given; ``crossing_count`` counts sign changes of
    ``dist(q, q_star) - circle_radius`` along the samples.
    """
    q = traj.positions if isinstance(traj, Trajectory) else wrap_to_fundamental_domain(traj)
    q = np.atleast_2d(q)
    if len(q) == 0:
        raise ValueError("empty trajectory")
    dim = q.shape[1]
    h = TWO_PI / grid_n
    cells = np.minimum((q // h).astype(np.int64), grid_n - 1)
    flat = np.ravel_multi_index(cells.T, (grid_n,) * dim)
    counts = np.bincount(flat, minlength=grid_n ** dim)
    occupancy = np.count_nonzero(counts) / grid_n ** dim
    if q_star is None:
        best = np.unravel_index(int(np.argmax(counts)), (grid_n,) * dim)
        q_star = (np.asarray(best) + 0.5) * h
    q_star = np.asarray(q_star, dtype=float)
    outside = torus_distance(q_star, q) - circle_radius >= 0.0
    crossings = int(np.count_nonzero(outside[1:] != outside[:-1]))
    return CoverageReport(float(occupancy), q_star, crossings)


def _grid(dim, grid_n):
    axes = [np.arange(grid_n) * (TWO_PI / grid_n)] * dim
    return np.stack(np.meshgrid(*axes, indexing="ij"), axis=-1).reshape(-1, dim)


def sup_norm_error(fit: FourierSeries, truth: FourierSeries, grid_n: int = 128) -> float:
    """``max |fit - truth|`` on a uniform grid with both means removed."""
    if fit.dim != truth.dim:
        raise ValueError("series dimensions differ")
    pts = _grid(fit.dim, grid_n)
    diff = (evaluate(fit, pts) - fit.mean) - (evaluate(truth, pts) - truth.mean)
    return float(np.max(np.abs(diff)))


def value_fit(q, values, k_max: int, rank_tol: float = DEFAULT_RANK_TOL) -> FourierSeries:
    """Band-limited series (mean included) through pointwise values."""
    q = check_positions(q)
    k = canonical_wave_vectors(k_max, q.shape[1]).astype(float)
    ph = q @ k.T
    A = np.hstack([np.ones((len(q), 1)), np.cos(ph), np.sin(ph)])
    theta, _, _ = _truncated_lstsq(A, np.asarray(values, dtype=float), rank_tol)
    return _series_class(q.shape[1]).from_theta(theta[1:], k_max, mean=theta[0])


def conformal_gradient(velocity, acceleration) -> np.ndarray:
    """Solve ``q'' = (g.v) v - |v|^2 g / 2`` for ``g = grad rho`` sample by sample.

    The matrix ``v v^T - |v|^2 I / 2`` has determinant ``-|v|^4 / 4``.
    """
    v = np.asarray(velocity, dtype=float)
    a = np.asarray(acceleration, dtype=float)
    M = v[:, :, None] * v[:, None, :] - 0.5 * np.sum(v * v, axis=1)[:, None, None] * np.eye(v.shape[1])
    return np.linalg.solve(M, a[:, :, None])[:, :, 0]


@dataclass(frozen=True, eq=False)
class ConformalReconstruction:
    q: np.ndarray
    rho_samples: np.ndarray
    rho_fitted: FourierSeries
    gradient_fitted: ReconstructionResult
    agreement: float
    dropped: int


def reconstruct_conformal_factor(obs: ObservationSeries, energy: float, k_max: int,
                                 stride: int = DEFAULT_STRIDE, rank_tol: float = DEFAULT_RANK_TOL,
                                 grid_n: int = 128) -> ConformalReconstruction:
    """Recover ``rho`` in ``H = exp(rho) |p|^2`` two independent ways.

    (a) values: the speed law ``|q'|^2 = 4 E exp(rho)`` gives ``rho`` at each
    sample, followed by a value fit.  (b) gradients: ``grad rho`` solved from
    the acceleration, followed by a gradient fit; its mean is aligned with (a).
    ``agreement`` is the sup-norm distance between the two fits.
    """
    if energy <= 0:
        raise ValueError("energy must be positive")
    sl = slice(None, None, max(1, int(stride)))
    q, v, a = obs.q[sl], obs.velocity[sl], obs.acceleration[sl]
    speed2 = np.sum(v * v, axis=1)
    ok = speed2 >= MIN_SPEED ** 2
    if not np.any(ok):
        raise ValueError("every sample is below the minimum speed")
    q, v, a, speed2 = q[ok], v[ok], a[ok], speed2[ok]
    rho_samples = np.log(speed2 / (4.0 * energy))
    by_value = value_fit(q, rho_samples, k_max, rank_tol)
    grad = conformal_gradient(v, a)
    by_gradient = fit_potential(ForceSamples(q, -grad), k_max, rank_tol)
    aligned = by_gradient.fitted.with_mean(by_value.mean)
    by_gradient = ReconstructionResult(aligned, by_gradient.residual_rms, by_gradient.singular_values,
                                       by_gradient.condition, by_gradient.rank_deficient, by_gradient.rank)
    agreement = sup_norm_error(by_value, aligned, grid_n)
    return ConformalReconstruction(q, rho_samples, by_value, by_gradient, agreement, int(np.sum(~ok)))


RECONSTRUCTION_HEADER_2D = ["k1", "k2", "a_true", "b_true", "a_fit", "b_fit", "abs_err"]


def write_reconstruction_csv(path, truth: FourierSeries, fit: FourierSeries) -> str:
    """Per-wave-vector comparison; ``abs_err = max(|a_fit - a_true|, |b_fit - b_true|)``."""
    band = max(truth.k_max, fit.k_max)
    t, f = truth.on_band(band), fit.on_band(band)
    header = [f"k{i + 1}" for i in range(truth.dim)] + RECONSTRUCTION_HEADER_2D[2:]
    rows = []
    for k, at, bt, af, bf in zip(t.wave_vectors, t.cos_coef, t.sin_coef, f.cos_coef, f.sin_coef):
        rows.append([*(int(x) for x in k), at, bt, af, bf, max(abs(af - at), abs(bf - bt))])
    return write_csv(path, header, rows)


class PotentialReconstructor(RegressorMixin, BaseEstimator):
    """Estimator form of :func:`fit_potential`.

    ``fit(X, y)`` takes positions ``X`` of shape ``(n, dim)`` and forces
    ``y = -grad U(X)`` of the same shape; ``predict`` returns the fitted
    force field, so ``score`` is the R^2 of the force reconstruction.

    Parameters
    ----------
    k_max : int, default=3
        Band limit of the fitted series.
    rank_tol : float, default=1e-10
        Relative singular-value cutoff.

    Attributes
    ----------
    potential_ : FourierSeries
        Fitted potential, mean zero.
    result_ : ReconstructionResult
    singular_values_ : ndarray
    rank_deficient_ : bool
    """

    def __init__(self, k_max=3, rank_tol=DEFAULT_RANK_TOL):
        self.k_max = k_max
        self.rank_tol = rank_tol

    def fit(self, X, y, sample_weight=None):
        X = check_positions(X)
        y = check_vectors(y, len(X), X.shape[1])
        self.result_ = fit_potential(ForceSamples(X, y, sample_weight), self.k_max, self.rank_tol)
        self.potential_ = self.result_.fitted
        self.singular_values_ = self.result_.singular_values
        self.rank_deficient_ = self.result_.rank_deficient
        self.n_features_in_ = X.shape[1]
        return self

    def predict(self, X):
        check_is_fitted(self, "potential_")
        X = check_positions(X, dim=self.n_features_in_)
        return -gradient(self.potential_, X)

    def potential(self, X):
        """Fitted potential values at ``X`` (defined up to an additive constant)."""
        check_is_fitted(self, "potential_")
        return evaluate(self.potential_, check_positions(X, dim=self.n_features_in_))

    def key_set(self, X) -> KeySetReport:
        """Whether the positions ``X`` determine potentials of this band."""
        return key_set_diagnostic(check_positions(X), self.k_max, self.rank_tol)
