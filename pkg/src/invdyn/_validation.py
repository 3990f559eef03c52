"""Input checks shared by the functional API and the estimators."""
import numpy as np
from sklearn.utils.validation import check_array


def check_positions(X, dim=None, name="X"):
    """Finite ``(n, dim)`` float array of torus positions, ``dim`` in {2, 3}."""
    X = check_array(X, dtype=np.float64, ensure_min_samples=1, input_name=name)
    if dim is None and X.shape[1] not in (2, 3):
        raise ValueError(f"{name} must have 2 or 3 columns (torus dimension), got {X.shape[1]}")
    if dim is not None and X.shape[1] != dim:
        raise ValueError(f"{name} has {X.shape[1]} columns, expected {dim}")
    return X


def check_vectors(y, n, dim, name="y"):
    """Finite ``(n, dim)`` array matching the positions sample-for-sample."""
    y = check_array(y, dtype=np.float64, ensure_min_samples=1, input_name=name)
    if y.shape != (n, dim):
        raise ValueError(f"{name} has shape {y.shape}, expected {(n, dim)}")
    return y


def check_weights(w, n):
    if w is None:
        return np.ones(n)
    w = np.asarray(w, dtype=float).reshape(-1)
    if w.shape != (n,) or not np.all(np.isfinite(w)) or np.any(w < 0):
        raise ValueError("sample weights must be finite, nonnegative and one per sample")
    return w


def check_band(k_max):
    if int(k_max) != k_max or k_max < 1:
        raise ValueError(f"k_max must be a positive integer, got {k_max!r}")
    return int(k_max)
