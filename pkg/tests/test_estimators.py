import numpy as np
import pytest
from sklearn.base import clone
from sklearn.exceptions import NotFittedError

from conftest import C_P, G_H, G_P, H_S
from helpers import LOOSE_CENTER, THETA, collect, learned_prior, source_data, system
from zonosafe import DataDrivenSafeController, InfeasibleSynthesisError, SetMembershipIdentifier
from zonosafe.exceptions import ShapeError


def transitions(batch):
    return np.hstack([batch.X0.T, batch.U0.T]), batch.X1.T


def test_identifier_contains_truth_and_predicts(rng):
    src, _ = source_data(rng, T=12)
    X, y = transitions(src)
    est = SetMembershipIdentifier(G_P, C_P, LOOSE_CENTER, 0.5).fit(X, y)
    assert est.contains(THETA)
    assert est.interval_.contains(THETA)
    assert est.predict(X).shape == y.shape
    assert est.n_features_in_ == 3


@pytest.mark.filterwarnings("ignore:2\\*T_s")
def test_partial_fit_shrinks(rng):
    src, _ = source_data(rng, T=12)
    X, y = transitions(src)
    est = SetMembershipIdentifier(G_P, C_P, LOOSE_CENTER, 0.5).fit(X[:6], y[:6])
    w0 = est.interval_.width.copy()
    est.partial_fit(X[6:], y[6:])
    assert np.all(est.interval_.width <= w0 + 1e-9)
    assert est.contains(THETA)


def test_identifier_validation():
    est = SetMembershipIdentifier(G_P)
    with pytest.raises(NotFittedError):
        est.predict(np.zeros((1, 3)))
    with pytest.raises(ValueError):
        est.fit(np.zeros((4, 3)), np.zeros((5, 2)))
    with pytest.raises(ShapeError):
        est.fit(np.ones((4, 2)), np.ones((4, 2)))
    with pytest.raises(ValueError):
        SetMembershipIdentifier().fit(np.ones((4, 3)), np.ones((4, 2)))


def test_get_params_and_clone():
    est = SetMembershipIdentifier(G_P, prior_radius=0.3)
    assert est.get_params()["prior_radius"] == 0.3
    assert clone(est).get_params()["prior_radius"] == 0.3
    ctrl = DataDrivenSafeController(lam=0.9)
    assert ctrl.set_params(lam=0.95).lam == 0.95


def test_controller_fit_predict(rng):
    _, batch = collect(system(), 10, rng)
    X, y = transitions(batch)
    ctrl = DataDrivenSafeController(H_S, np.ones(4), G_H, lam=0.98,
                                    prior=learned_prior(rng)).fit(X, y)
    assert ctrl.K_.shape == (1, 2)
    np.testing.assert_allclose(batch.X0 @ ctrl.V_K_, np.eye(2), atol=1e-7)
    states = np.array([[1.0, 0.0], [0.0, 1.0]])
    np.testing.assert_allclose(ctrl.predict(states), states @ ctrl.K_.T)


def test_controller_without_prior(rng):
    _, batch = collect(system(), 15, rng)
    X, y = transitions(batch)
    ctrl = DataDrivenSafeController(H_S, np.ones(4), G_H, lam=0.99).fit(X, y)
    assert ctrl.family_.refinement == "noise"


def test_controller_infeasible_raises(rng):
    _, batch = collect(system(), 10, rng)
    X, y = transitions(batch)
    with pytest.raises(InfeasibleSynthesisError):
        DataDrivenSafeController(H_S, np.ones(4), G_H, lam=0.3).fit(X, y)
