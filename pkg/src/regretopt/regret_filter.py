"""Regret-optimal filtering.

With ``T`` the causal factor of ``gamma^2 (S'S)^-1 + L (I + H'H)^-1 L'``, a
filter ``K`` is regret-suboptimal at level ``gamma`` exactly when
``T^-1 K`` is an H-infinity filter at level one for the target
``g = T^-1 L u``. The target has the augmented realization::

    [x; eta]+ = Ahat [x; eta] + [B; 0] u,    g = Lhat [x; eta],   y = [C 0] [x; eta] + v

with ``Ahat = [[A, 0], [Kt L, At - Kt Ct]]`` and
``Lhat = St^-1/2 [L, -Ct]`` (tilde matrices from the T factor). The filter
output is ``T`` applied to the estimate of ``g``.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import partial

import numpy as np

from .exceptions import Infeasible
from .factorization import backward_factor_dual, estimation_S_factor, estimation_T_factor
from .hinf import HinfFilter, bisect_gamma, feasibility, hinf_estimator
from .statespace import CausalStateSpaceModel
from .systems import EstimationSystem, as_signal, psd_inv_sqrt


@dataclass(frozen=True)
class RegretFilter:
    """Level-``gamma`` regret filter: augmented H-infinity filter followed by ``T``."""

    hinf: HinfFilter
    Tmodel: CausalStateSpaceModel
    L: np.ndarray
    gamma: float

    @property
    def T(self):
        return self.hinf.T

    @property
    def Ahat(self):
        return self.hinf.A

    @property
    def Khat(self):
        return self.hinf.K

    @property
    def Lhat(self):
        return self.hinf.L

    @property
    def Chat(self):
        return self.hinf.C

    def augmented_estimates(self, y):
        """Filtered augmented states ``(x[t|t], eta[t|t])`` stacked, shape ``(T, 3n[, k])``."""
        return self.hinf.filtered_states(y)

    def run(self, y):
        """Estimates ``s_hat`` for observations ``y`` of shape ``(T, p)`` or ``(T, p, k)``."""
        y = np.asarray(y, dtype=float)
        if y.ndim < 3:
            y = as_signal(y, self.T, self.hinf.C.shape[1], "y")
        g = self.hinf.run(y)
        return self.Tmodel.simulate(g)


def augmented_estimation_system(sys: EstimationSystem, tf):
    T, n, m = sys.T, sys.n, sys.m
    At, Ct = tf.schedules["Atilde"], tf.schedules["Ctilde"]
    Kt, St = tf.schedules["Ktilde"], tf.schedules["Sigmatilde"]
    N = 3 * n
    Ah = np.zeros((T, N, N))
    Bh = np.zeros((T, N, m))
    Ch = np.zeros((T, sys.p, N))
    Lh = np.zeros((T, sys.r, N))
    for t in range(T):
        L = sys.L[t]
        Ah[t, :n, :n] = sys.A[t]
        Ah[t, n:, :n] = Kt[t] @ L
        Ah[t, n:, n:] = At[t] - Kt[t] @ Ct[t]
        Bh[t, :n] = sys.B[t]
        Ch[t, :, :n] = sys.C[t]
        Si = psd_inv_sqrt(St[t])
        Lh[t, :, :n] = Si @ L
        Lh[t, :, n:] = -Si @ Ct[t]
    return EstimationSystem(Ah, Bh, Ch, Lh)


def synthesize_regret_filter(sys: EstimationSystem, gamma, d1=None):
    """Regret-suboptimal filter at level ``gamma``; raises :class:`Infeasible`.

    ``d1`` may pass a precomputed :func:`backward_factor_dual` of ``sys``,
    which does not depend on ``gamma``.
    """
    if gamma <= 0:
        raise ValueError("gamma must be positive")
    if d1 is None:
        d1 = backward_factor_dual(sys)
    S = estimation_S_factor(sys, gamma, d1)
    tf = estimation_T_factor(sys, gamma, S, d1)
    aug = augmented_estimation_system(sys, tf)
    try:
        hf = hinf_estimator(aug, 1.0)
    except Infeasible as exc:
        raise Infeasible(exc.step, gamma, "augmented H-infinity test failed") from None
    return RegretFilter(hf, tf.factor, sys.L, float(gamma))


def run_regret_filter(f: RegretFilter, y):
    return f.run(y)


def optimal_regret_filter(sys: EstimationSystem, tol=1e-4, hint=None):
    d1 = backward_factor_dual(sys)
    synth = partial(synthesize_regret_filter, d1=d1)
    cert = bisect_gamma(feasibility(synth, sys), tol, hint=hint)
    return cert, synth(sys, cert.gamma_opt)
