"""Band-limited trigonometric potentials on the flat 2- and 3-torus.

A potential is stored as a real Fourier series

    U(q) = mean + sum_k [a_k cos(k.q) + b_k sin(k.q)]

over the canonical half of the integer lattice ``|k|_inf <= k_max``: of each
pair ``{k, -k}`` only the member whose first nonzero component is positive
is kept.
"""
from __future__ import annotations

import csv
import io
from dataclasses import dataclass, field
from itertools import product
from pathlib import Path
from typing import Mapping, Sequence

import numpy as np

TWO_PI = 2.0 * np.pi


def canonical_wave_vectors(k_max: int, dim: int = 2) -> np.ndarray:
    """Canonical wave vectors of the band ``0 < |k|_inf <= k_max``.

    Returned in lexicographic order as an ``(m, dim)`` integer array with
    ``m = ((2 k_max + 1)**dim - 1) / 2``.
    """
    if k_max < 0:
        raise ValueError("k_max must be nonnegative")
    rng = range(-k_max, k_max + 1)
    out = [k for k in product(rng, repeat=dim) if is_canonical(k)]
    return np.array(out, dtype=np.int64).reshape(-1, dim)


def is_canonical(k: Sequence[int]) -> bool:
    for ki in k:
        if ki != 0:
            return ki > 0
    return False


@dataclass(frozen=True, eq=False)
class FourierSeries:
    """Truncated real Fourier series on the flat torus R^dim / 2 pi Z^dim.

    Parameters
    ----------
    wave_vectors : (m, dim) int array
        Canonical wave vectors, no duplicates, zero vector excluded.
    cos_coef, sin_coef : (m,) float arrays
        Amplitudes ``a_k`` and ``b_k``.
    mean : float
        The constant term.
    k_max : int
        Band limit; every stored ``|k|_inf`` is at most this.
    """

    wave_vectors: np.ndarray
    cos_coef: np.ndarray
    sin_coef: np.ndarray
    mean: float = 0.0
    k_max: int = field(default=-1)

    dim = 0

    def __post_init__(self):
        k = np.asarray(self.wave_vectors, dtype=np.int64).reshape(-1, self.dim)
        a = np.asarray(self.cos_coef, dtype=float).reshape(-1)
        b = np.asarray(self.sin_coef, dtype=float).reshape(-1)
        if not (len(k) == len(a) == len(b)):
            raise ValueError("wave_vectors, cos_coef and sin_coef differ in length")
        for row in k:
            if not is_canonical(row):
                raise ValueError(f"wave vector {tuple(row)} is not canonical")
        if len({tuple(row) for row in k}) != len(k):
            raise ValueError("duplicate wave vectors")
        if not (np.all(np.isfinite(a)) and np.all(np.isfinite(b)) and np.isfinite(self.mean)):
            raise ValueError("non-finite coefficient")
        band = int(np.abs(k).max()) if len(k) else 0
        k_max = band if self.k_max < 0 else int(self.k_max)
        if band > k_max:
            raise ValueError(f"wave vector outside band k_max={k_max}")
        for arr in (k, a, b):
            arr.setflags(write=False)
        object.__setattr__(self, "wave_vectors", k)
        object.__setattr__(self, "cos_coef", a)
        object.__setattr__(self, "sin_coef", b)
        object.__setattr__(self, "mean", float(self.mean))
        object.__setattr__(self, "k_max", k_max)

    def __eq__(self, other):
        if not isinstance(other, FourierSeries) or other.dim != self.dim:
            return NotImplemented
        return (self.k_max == other.k_max and self.mean == other.mean
                and np.array_equal(self.wave_vectors, other.wave_vectors)
                and np.array_equal(self.cos_coef, other.cos_coef)
                and np.array_equal(self.sin_coef, other.sin_coef))

    __hash__ = object.__hash__

    # -- constructors ---------------------------------------------------
    @classmethod
    def zeros(cls, k_max: int):
        m = len(canonical_wave_vectors(k_max, cls.dim))
        return cls(canonical_wave_vectors(k_max, cls.dim), np.zeros(m), np.zeros(m), 0.0, k_max)

    @classmethod
    def from_terms(cls, terms: Mapping[tuple, tuple], mean: float = 0.0, k_max: int | None = None):
        """Build a series on the full canonical band from ``{k: (a_k, b_k)}``.

        Non-canonical ``k`` are folded onto ``-k`` (``a`` is kept, ``b`` flips
        sign).
        """
        folded: dict[tuple, list[float]] = {}
        for k, (a, b) in terms.items():
            k = tuple(int(x) for x in k)
            if len(k) != cls.dim:
                raise ValueError(f"wave vector {k} has wrong dimension")
            if not any(k):
                raise ValueError("use `mean` for the k = 0 term")
            if not is_canonical(k):
                k, b = tuple(-x for x in k), -b
            acc = folded.setdefault(k, [0.0, 0.0])
            acc[0] += a
            acc[1] += b
        band = max((max(abs(x) for x in k) for k in folded), default=1)
        k_max = band if k_max is None else k_max
        out = cls.zeros(k_max)
        index = {tuple(k): i for i, k in enumerate(out.wave_vectors)}
        a = np.zeros(len(index))
        b = np.zeros(len(index))
        for k, (ak, bk) in folded.items():
            if k not in index:
                raise ValueError(f"wave vector {k} outside band k_max={k_max}")
            a[index[k]] = ak
            b[index[k]] = bk
        return cls(out.wave_vectors, a, b, mean, k_max)

    @classmethod
    def from_theta(cls, theta: np.ndarray, k_max: int, mean: float = 0.0):
        """Inverse of :attr:`theta` on the full canonical band."""
        k = canonical_wave_vectors(k_max, cls.dim)
        theta = np.asarray(theta, dtype=float)
        if theta.shape != (2 * len(k),):
            raise ValueError(f"expected {2 * len(k)} coefficients, got {theta.shape}")
        return cls(k, theta[: len(k)], theta[len(k):], mean, k_max)

    # -- views ----------------------------------------------------------
    @property
    def theta(self) -> np.ndarray:
        """Coefficient vector ``[a_1..a_m, b_1..b_m]`` on the full band."""
        full = self.on_band(self.k_max)
        return np.concatenate([full.cos_coef, full.sin_coef])

    def on_band(self, k_max: int):
        """The same function re-expressed on the full canonical band ``k_max``."""
        terms = {tuple(k): (a, b) for k, a, b in zip(self.wave_vectors, self.cos_coef, self.sin_coef)}
        return type(self).from_terms(terms, self.mean, k_max)

    def with_mean(self, mean: float):
        return type(self)(self.wave_vectors, self.cos_coef, self.sin_coef, mean, self.k_max)

    def terms(self) -> dict[tuple, tuple[float, float]]:
        return {tuple(int(x) for x in k): (float(a), float(b))
                for k, a, b in zip(self.wave_vectors, self.cos_coef, self.sin_coef)}

    # -- evaluation -----------------------------------------------------
    def _phases(self, q):
        q = np.asarray(q, dtype=float)
        if q.shape[-1] != self.dim:
            raise ValueError(f"points must have trailing dimension {self.dim}")
        return q @ self.wave_vectors.T.astype(float)

    def __call__(self, q):
        return evaluate(self, q)

    def gradient(self, q):
        return gradient(self, q)

    def grid_sup(self, n: int | None = None) -> float:
        """max |U| over an ``n**dim`` uniform grid (a lower bound for sup|U|)."""
        n = n or (512 if self.dim == 2 else 64)
        axes = [np.arange(n) * (TWO_PI / n)] * self.dim
        pts = np.stack(np.meshgrid(*axes, indexing="ij"), axis=-1).reshape(-1, self.dim)
        out = 0.0
        for chunk in np.array_split(pts, max(1, len(pts) // 65536)):
            out = max(out, float(np.abs(evaluate(self, chunk)).max()))
        return out

    def gradient_bound(self) -> float:
        """Certified bound ``sum_k |k| (|a_k| + |b_k|) >= sup |grad U|``."""
        norms = np.linalg.norm(self.wave_vectors, axis=1)
        return float(np.sum(norms * (np.abs(self.cos_coef) + np.abs(self.sin_coef))))

    # -- CSV ------------------------------------------------------------
    def to_csv(self, path=None) -> str:
        """Serialize as ``k1,k2[,k3],a,b`` rows; the mean is the zero-vector row."""
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow([f"k{i + 1}" for i in range(self.dim)] + ["a", "b"])
        w.writerow([0] * self.dim + [_fmt(self.mean), _fmt(0.0)])
        for k, a, b in zip(self.wave_vectors, self.cos_coef, self.sin_coef):
            w.writerow([int(x) for x in k] + [_fmt(a), _fmt(b)])
        text = buf.getvalue()
        if path is not None:
            Path(path).write_text(text)
        return text

    @classmethod
    def from_csv(cls, source, k_max: int | None = None):
        """Parse the CSV written by :meth:`to_csv` (path or text).

        The file's dimension decides the class when called on the base class.
        """
        text = source if "\n" in str(source) else Path(source).read_text()
        rows = list(csv.reader(io.StringIO(text)))
        header, body = rows[0], [r for r in rows[1:] if r]
        dim = len(header) - 2
        expected = [f"k{i + 1}" for i in range(dim)] + ["a", "b"]
        if header != expected:
            raise ValueError(f"bad header {header}")
        target = {2: FourierSeries2D, 3: FourierSeries3D}.get(dim) if cls.dim == 0 else cls
        if target is None or target.dim != dim:
            raise ValueError(f"CSV has dimension {dim}, expected {cls.dim}")
        mean = 0.0
        terms = {}
        for r in body:
            k = tuple(int(x) for x in r[:dim])
            a, b = float(r[dim]), float(r[dim + 1])
            if not any(k):
                mean = a
            else:
                terms[k] = (a, b)
        return target.from_terms(terms, mean, k_max)


class FourierSeries2D(FourierSeries):
    dim = 2


class FourierSeries3D(FourierSeries):
    dim = 3


def _fmt(x) -> str:
    return format(float(x), ".17g")


def evaluate(U: FourierSeries, q) -> np.ndarray | float:
    """Value of ``U`` at points ``q`` of shape ``(..., dim)``."""
    ph = U._phases(q)
    out = U.mean + np.cos(ph) @ U.cos_coef + np.sin(ph) @ U.sin_coef
    return float(out) if np.ndim(out) == 0 else out


def gradient(U: FourierSeries, q) -> np.ndarray:
    """``grad U`` at points ``q``; the force is its negative."""
    ph = U._phases(q)
    w = -np.sin(ph) * U.cos_coef + np.cos(ph) * U.sin_coef
    return w @ U.wave_vectors.astype(float)


def sup_bound_c0(U: FourierSeries) -> float:
    """The l1 bound ``|mean| + sum(|a_k| + |b_k|)`` on ``sup |U|``."""
    return float(abs(U.mean) + np.abs(U.cos_coef).sum() + np.abs(U.sin_coef).sum())


def random_potential(seed: int, k_max: int, amplitude: float, dim: int = 2) -> FourierSeries:
    """Seeded potential with i.i.d. uniform coefficients and zero mean.

    All cosine amplitudes are drawn first, then all sine amplitudes, in
    canonical wave-vector order.
    """
    if k_max < 1:
        raise ValueError("k_max must be at least 1; a constant potential has no force")
    if amplitude < 0:
        raise ValueError("amplitude must be nonnegative")
    cls = {2: FourierSeries2D, 3: FourierSeries3D}[dim]
    k = canonical_wave_vectors(k_max, dim)
    rng = np.random.default_rng(seed)
    a = rng.uniform(-amplitude, amplitude, len(k))
    b = rng.uniform(-amplitude, amplitude, len(k))
    return cls(k, a, b, 0.0, k_max)
