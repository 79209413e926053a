"""scikit-learn style estimators over one-step transition data.

Both estimators take ``X`` with rows ``[x(t), u(t)]`` (``n + m`` columns) and
``y`` with rows ``x(t+1)`` (``n`` columns), i.e. one row per transition.
"""

from __future__ import annotations

import numpy as np
from sklearn.base import BaseEstimator
from sklearn.utils.validation import check_array, check_is_fitted, check_X_y

from . import setops
from .closed_loop import PriorKnowledge, build_family
from .data import DataBatch, t_concat_disturbance
from .exceptions import InfeasibleSynthesisError, ShapeError
from .identification import build_info_set, refine_prior
from .sets import Polytope, Zonotope
from .synthesis import SynthesisProblem, synth_cz, synth_polytope


def _disturbance(generators, center, n):
    G = np.asarray(generators, dtype=float)
    if G.ndim == 1:
        G = G.reshape(n, -1)
    c = np.zeros(n) if center is None else np.asarray(center, dtype=float)
    return Zonotope(c, G)


def _to_batch(X, y, n):
    return DataBatch(X[:, n:].T, X[:, :n].T, y.T)


class SetMembershipIdentifier(BaseEstimator):
    """Guaranteed parameter set for ``x(t+1) = [A B] [x; u] + w`` with ``w`` in a zonotope.

    Starting from a box prior around ``prior_center`` with half-width
    ``prior_radius``, every call to :meth:`fit` or :meth:`partial_fit`
    intersects the current set with the models consistent with the data.

    Attributes
    ----------
    prior_ : PriorKnowledge
        The refined parameter set.
    interval_ : MatrixInterval
        Its element-wise bounds.
    theta_ : ndarray of shape (n, n + m)
        Midpoint of ``interval_``, used by :meth:`predict`.
    """

    def __init__(self, disturbance_generators=None, disturbance_center=None,
                 prior_center=None, prior_radius=1.0, slack="entrywise"):
        self.disturbance_generators = disturbance_generators
        self.disturbance_center = disturbance_center
        self.prior_center = prior_center
        self.prior_radius = prior_radius
        self.slack = slack

    def _validate(self, X, y):
        X, y = check_X_y(X, y, multi_output=True, y_numeric=True)
        y = y.reshape(len(y), -1)
        n = y.shape[1]
        if X.shape[1] <= n:
            raise ShapeError(f"X needs n + m > n = {n} columns, got {X.shape[1]}")
        return X, y, n

    def _initial_prior(self, n, p):
        center = np.zeros((n, p)) if self.prior_center is None else np.asarray(
            self.prior_center, dtype=float)
        if center.shape != (n, p):
            raise ShapeError(f"prior_center must be {n}x{p}, got {center.shape}")
        return PriorKnowledge.box(center, self.prior_radius)

    def _update(self, prior, X, y, n):
        w = _disturbance(self.disturbance_generators, self.disturbance_center, n)
        info = build_info_set(_to_batch(X, y, n), w)
        prior = refine_prior(prior, info, self.slack)
        interval = setops.cmz_interval_hull(prior.model_set)
        self.prior_ = prior
        self.interval_ = interval
        self.theta_ = interval.center
        return self

    def fit(self, X, y):
        X, y, n = self._validate(X, y)
        if self.disturbance_generators is None:
            raise ValueError("disturbance_generators is required")
        self.n_features_in_ = X.shape[1]
        self.n_states_ = n
        return self._update(self._initial_prior(n, X.shape[1]), X, y, n)

    def partial_fit(self, X, y):
        """Refine the current set with additional transitions."""
        if not hasattr(self, "prior_"):
            return self.fit(X, y)
        X, y, n = self._validate(X, y)
        if X.shape[1] != self.n_features_in_ or n != self.n_states_:
            raise ShapeError("partial_fit data shape differs from the fitted shape")
        return self._update(self.prior_, X, y, n)

    def predict(self, X):
        """Next-state prediction with the midpoint model."""
        check_is_fitted(self, "theta_")
        X = check_array(X)
        if X.shape[1] != self.n_features_in_:
            raise ShapeError(f"expected {self.n_features_in_} features, got {X.shape[1]}")
        return X @ self.theta_.T

    def contains(self, theta, tol=1e-6):
        check_is_fitted(self, "prior_")
        return self.prior_.contains(theta, tol)


class DataDrivenSafeController(BaseEstimator):
    """λ-contractive state feedback learned from one input-state experiment.

    Parameters
    ----------
    safe_H, safe_h : array-like
        Safe polytope ``{x : safe_H x <= safe_h}``. With
        ``safe_set="zonotope"`` the polytope must be a centrally symmetric
        parallelotope and is converted to a zonotope.
    disturbance_generators, disturbance_center : array-like
        The disturbance zonotope.
    lam : float
        Contraction factor in ``(0, 1]``.
    prior : PriorKnowledge, optional
        Prior model set. Without it the family uses only the data-explainability
        constraints.
    constrained : bool
        Use the family's equality constraints when bounding the disturbance
        term (polytope path only).
    norm : {"l1", "linf"}
        Norm for that bound; see :func:`zonosafe.synthesis.compute_l`.
    """

    def __init__(self, safe_H=None, safe_h=None, disturbance_generators=None,
                 disturbance_center=None, lam=0.98, prior=None, constrained=True,
                 norm="l1", safe_set="polytope"):
        self.safe_H = safe_H
        self.safe_h = safe_h
        self.disturbance_generators = disturbance_generators
        self.disturbance_center = disturbance_center
        self.lam = lam
        self.prior = prior
        self.constrained = constrained
        self.norm = norm
        self.safe_set = safe_set

    def fit(self, X, y):
        X, y = check_X_y(X, y, multi_output=True, y_numeric=True)
        y = y.reshape(len(y), -1)
        n = y.shape[1]
        if X.shape[1] <= n:
            raise ShapeError(f"X needs n + m > n = {n} columns, got {X.shape[1]}")
        if self.safe_H is None or self.safe_h is None or self.disturbance_generators is None:
            raise ValueError("safe_H, safe_h and disturbance_generators are required")
        batch = _to_batch(X, y, n)
        w = _disturbance(self.disturbance_generators, self.disturbance_center, n)
        dc = t_concat_disturbance(w, batch.T)
        if self.prior is not None:
            fam = build_family(batch, dc, self.prior, "full")
        else:
            fam = build_family(batch, dc, None, "noise")
        poly = Polytope(np.asarray(self.safe_H, dtype=float), np.asarray(self.safe_h, dtype=float))
        if self.safe_set == "polytope":
            cert = synth_polytope(SynthesisProblem(fam, poly, w, self.lam, batch),
                                  constrained=self.constrained, norm=self.norm)
        elif self.safe_set == "zonotope":
            zx = setops.symmetric_polytope_to_zonotope(poly)
            cert = synth_cz(SynthesisProblem(fam, zx.to_constrained(), w, self.lam, batch))
        else:
            raise ValueError(f"safe_set must be 'polytope' or 'zonotope', got {self.safe_set!r}")
        if not cert:
            raise InfeasibleSynthesisError(f"no certificate at lambda={self.lam}: {cert.reason}")
        self.n_features_in_ = X.shape[1]
        self.family_ = fam
        self.certificate_ = cert
        self.V_K_ = cert.V_K
        self.K_ = cert.K
        return self

    def predict(self, X):
        """Control inputs ``u = K x`` for state rows ``X``."""
        check_is_fitted(self, "K_")
        X = check_array(X)
        if X.shape[1] != self.K_.shape[1]:
            raise ShapeError(f"expected {self.K_.shape[1]} state columns, got {X.shape[1]}")
        return X @ self.K_.T
