import numpy as np
import pytest
from sklearn.base import clone
from sklearn.exceptions import NotFittedError

from periodic_hyperbolic import PeriodicHyperbolicSolver
from periodic_hyperbolic.diagnostics import manufacture

from conftest import M1_W


@pytest.fixture(scope="module")
def fitted():
    m = manufacture(M1_W, a="1", a1="-1")
    return m, PeriodicHyperbolicSolver(nx=65, nt=64).fit(m.spec)


def test_fit_attributes(fitted):
    m, est = fitted
    assert est.converged_ and est.n_iter_ > 0
    assert est.w_.shape == (65, 64) and est.u_.shape == (2, 65, 64)


def test_predict_at_nodes(fitted):
    m, est = fitted
    g = est.grid_
    X, T = g.mesh(1.0)
    pts = np.column_stack([X.ravel(), T.ravel()])
    np.testing.assert_allclose(est.predict(pts), est.w_.ravel(), atol=1e-12)


def test_predict_off_grid(fitted):
    rng = np.random.default_rng(3)
    m, est = fitted
    x, t = rng.random(200), rng.random(200) * 3 - 1
    exact = np.exp(x) * (2 + np.sin(2 * np.pi * t))
    assert np.max(np.abs(est.predict(np.column_stack([x, t])) - exact)) <= 1e-2


def test_params_round_trip():
    est = PeriodicHyperbolicSolver(nx=17, nt=16, strategy="dense")
    twin = clone(est)
    assert twin.get_params() == est.get_params()
    assert est.set_params(tol_abs=1e-8).tol_abs == 1e-8


def test_errors(fitted):
    with pytest.raises(NotFittedError):
        PeriodicHyperbolicSolver().predict([[0.5, 0.5]])
    with pytest.raises(TypeError):
        PeriodicHyperbolicSolver().fit("a=1")
    _, est = fitted
    with pytest.raises(ValueError):
        est.predict([[0.5, 0.5, 0.5]])
    with pytest.raises(ValueError):
        est.predict([[1.5, 0.5]])
