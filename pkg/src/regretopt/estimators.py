"""scikit-learn style wrappers: ``fit(system)`` synthesizes, then ``predict`` runs.

The estimators take a system instead of data, since synthesis needs only
the model. Hyper-parameters follow the sklearn conventions, so
``get_params``, ``set_params`` and ``clone`` work as usual.
"""

from __future__ import annotations

import numpy as np
from sklearn.base import BaseEstimator
from sklearn.utils.validation import check_is_fitted

from .exceptions import ValidationError
from .extensions import augment
from .hinf import GammaCertificate, hinf_controller, hinf_estimator, optimal_hinf_controller, optimal_hinf_estimator
from .regret_controller import optimal_regret_controller, synthesize_regret_controller
from .regret_filter import optimal_regret_filter, synthesize_regret_filter
from .systems import ControlSystem, EstimationSystem, as_signal


def _check_system(system, kind):
    if not isinstance(system, kind):
        raise ValidationError(f"expected a {kind.__name__}, got {type(system).__name__}")
    return system


def _fixed(gamma):
    if not gamma > 0:
        raise ValidationError(f"gamma must be positive, got {gamma!r}")
    return GammaCertificate(float(gamma), (float(gamma), float(gamma)), 0, True)


class _ControllerBase(BaseEstimator):
    def _synthesize(self, system):
        raise NotImplementedError

    def fit(self, system, y=None):
        """Synthesize on ``system`` (a :class:`ControlSystem`)."""
        system = _check_system(system, ControlSystem)
        la, dl = getattr(self, "lookahead", 0), getattr(self, "delay", 0)
        aug, maps = augment(system, la, dl)
        self.system_ = system
        self.augmented_system_ = aug
        self.maps_ = maps
        self.certificate_, self.policy_ = self._synthesize(aug)
        self.gamma_ = self.certificate_.gamma_opt
        return self

    def _lift(self, w):
        w = as_signal(w, self.system_.T, self.system_.p, "w")
        for amap in self.maps_:
            w = amap.lift_disturbance(w)
        return w

    def _closed_loop(self, w):
        check_is_fitted(self, "policy_")
        u, x, cost = self.policy_.run(self.augmented_system_, self._lift(w))
        for amap in reversed(self.maps_):
            if amap.kind == "delay":
                x = x[:, : amap.n]
            else:
                u = amap.extract_controls(u)
                x = amap.extract_states(x)
        return u, x, cost

    def predict(self, w):
        """Controls ``u`` (original units) applied in closed loop under ``w``."""
        return self._closed_loop(w)[0]

    def transform(self, w):
        """State trajectory ``x[0..T-1]`` of the closed loop under ``w``."""
        return self._closed_loop(w)[1]

    def score(self, w, y=None):
        """Negative closed-loop cost, so that larger is better."""
        return -self._closed_loop(w)[2]


class RegretOptimalController(_ControllerBase):
    """Causal controller minimizing worst-case regret against the clairvoyant one.

    Parameters
    ----------
    gamma : float or None
        Synthesis level; ``None`` bisects for the optimum.
    tol : float
        Bisection tolerance.
    lookahead, delay : int
        Disturbance preview and input delay in steps.
    """

    def __init__(self, gamma=None, tol=1e-4, lookahead=0, delay=0):
        self.gamma = gamma
        self.tol = tol
        self.lookahead = lookahead
        self.delay = delay

    def _synthesize(self, system):
        if self.gamma is None:
            return optimal_regret_controller(system, self.tol)
        return _fixed(self.gamma), synthesize_regret_controller(system, self.gamma)


class HinfControllerEstimator(_ControllerBase):
    """Full-information H-infinity controller (``gamma=None`` bisects for the optimum)."""

    def __init__(self, gamma=None, tol=1e-4):
        self.gamma = gamma
        self.tol = tol

    def _synthesize(self, system):
        if self.gamma is None:
            return optimal_hinf_controller(system, self.tol)
        return _fixed(self.gamma), hinf_controller(system, self.gamma)


class _FilterBase(BaseEstimator):
    def fit(self, system, y=None):
        """Synthesize on ``system`` (an :class:`EstimationSystem`)."""
        self.system_ = _check_system(system, EstimationSystem)
        self.certificate_, self.filter_ = self._synthesize(system)
        self.gamma_ = self.certificate_.gamma_opt
        return self

    def predict(self, y):
        """Estimates ``s_hat`` of shape ``(T, r)`` from measurements of shape ``(T, p)``."""
        check_is_fitted(self, "filter_")
        y = as_signal(y, self.system_.T, self.system_.p, "y")
        return self.filter_.run(y)

    def transform(self, y):
        return self.predict(y)


class RegretOptimalFilter(_FilterBase):
    """Causal filter minimizing worst-case regret against the noncausal smoother."""

    def __init__(self, gamma=None, tol=1e-4):
        self.gamma = gamma
        self.tol = tol

    def _synthesize(self, system):
        if self.gamma is None:
            return optimal_regret_filter(system, self.tol)
        return _fixed(self.gamma), synthesize_regret_filter(system, self.gamma)


class HinfFilterEstimator(_FilterBase):
    """Central H-infinity filter (``gamma=None`` bisects for the optimum)."""

    def __init__(self, gamma=None, tol=1e-4):
        self.gamma = gamma
        self.tol = tol

    def _synthesize(self, system):
        if self.gamma is None:
            return optimal_hinf_estimator(system, self.tol)
        return _fixed(self.gamma), hinf_estimator(system, self.gamma)


def fitted_gamma(est):
    check_is_fitted(est, "gamma_")
    return float(np.asarray(est.gamma_))
