import numpy as np
import pytest
from sklearn.base import clone
from sklearn.exceptions import NotFittedError

from invdyn.potential import evaluate, gradient, random_potential
from invdyn.reconstruction import PotentialReconstructor


@pytest.fixture
def data():
    U = random_potential(21, 2, 1.0)
    X = np.random.default_rng(21).uniform(0, 2 * np.pi, (150, 2))
    return U, X, -gradient(U, X)


def test_params_and_clone():
    est = PotentialReconstructor(k_max=2, rank_tol=1e-8)
    assert est.get_params() == {"k_max": 2, "rank_tol": 1e-8}
    est.set_params(k_max=4)
    assert clone(est).get_params()["k_max"] == 4


def test_fit_predict_score(data):
    U, X, y = data
    est = PotentialReconstructor(k_max=2).fit(X, y)
    assert est.n_features_in_ == 2 and not est.rank_deficient_
    np.testing.assert_allclose(est.predict(X), y, atol=1e-11)
    assert est.score(X, y) == pytest.approx(1.0)
    v = est.potential(X)
    np.testing.assert_allclose(v - v.mean(), evaluate(U, X) - evaluate(U, X).mean(), atol=1e-11)
    assert est.key_set(X).is_key


def test_unfitted_and_invalid_input(data):
    _, X, y = data
    with pytest.raises(NotFittedError):
        PotentialReconstructor().predict(X)
    with pytest.raises(ValueError):
        PotentialReconstructor().fit(X, y[:, :1])
    with pytest.raises(ValueError):
        PotentialReconstructor().fit(np.c_[X, X], y)
    bad = X.copy()
    bad[0, 0] = np.nan
    with pytest.raises(ValueError):
        PotentialReconstructor().fit(bad, y)
    est = PotentialReconstructor(k_max=2).fit(X, y)
    with pytest.raises(ValueError):
        est.predict(np.zeros((3, 3)))
    with pytest.raises(ValueError):
        PotentialReconstructor(k_max=0).fit(X, y)
