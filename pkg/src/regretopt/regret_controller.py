"""Regret-optimal full-information control.

The regret constraint ``cost(u) - cost_nc(w) < gamma^2 |w|^2`` is the H-infinity
constraint at level one for the system driven by ``w' = D2 w``::

    [zeta; nu]+ = Ahat [zeta; nu] + Bhat_u u + Bhat_w w'
    s = [Q^1/2  0] [zeta; nu]

with ``Ahat = [[A, -Bw Kb'], [0, Atilde - Bw Kb']]``,
``Bhat_w = [Bw Sb^-1/2; Bw Sb^-1/2]``. Substituting ``w'`` back gives a
controller driven by ``w`` itself whose internal states are the plant state
``zeta`` and ``nu+ = Atilde nu + Bw w``.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .exceptions import Infeasible
from .factorization import control_delta2, forward_factor
from .hinf import bisect_gamma, feasibility, game_riccati
from .systems import ControlSystem, as_signal, psd_inv_sqrt


@dataclass(frozen=True)
class RegretController:
    """Synthesized controller; gains act on ``(zeta, nu)`` and ``w`` in original input units.

    ``u[t] = Gz[t] (A zeta + Bw w) + Gn[t] (Atilde nu + Bw w)`` where
    ``[Gz, Gn] = -R^-1/2 Hhat^-1 Bhat_u' Phat[t+1]``.
    """

    A: np.ndarray
    Bu: np.ndarray
    Bw: np.ndarray
    Atilde: np.ndarray
    Gz: np.ndarray
    Gn: np.ndarray
    Phat: np.ndarray
    Kb: np.ndarray
    Sigmab: np.ndarray
    K: np.ndarray
    Sigma: np.ndarray
    gamma: float

    @property
    def T(self):
        return self.A.shape[0]

    def feedback(self):
        """Equivalent ``(Kz, Kn, Kw)`` with ``u = Kz zeta + Kn nu + Kw w``."""
        Kz = np.einsum("tij,tjk->tik", self.Gz, self.A)
        Kn = np.einsum("tij,tjk->tik", self.Gn, self.Atilde)
        Kw = np.einsum("tij,tjk->tik", self.Gz + self.Gn, self.Bw)
        return Kz, Kn, Kw

    def run(self, sys: ControlSystem, w):
        """Closed loop on ``sys`` from rest; returns ``(u, x, cost)``.

        ``w`` may also carry a trailing batch axis, in which case the cost
        is returned per column.
        """
        w = np.asarray(w, dtype=float)
        batch = w.ndim == 3
        if not batch:
            w = as_signal(w, sys.T, sys.p, "w")[:, :, None]
        T, k = sys.T, w.shape[2]
        Kz, Kn, Kw = self.feedback()
        zeta = np.zeros((sys.n, k))
        nu = np.zeros((sys.n, k))
        u = np.zeros((T, sys.m, k))
        x = np.zeros((T, sys.n, k))
        cost = np.zeros(k)
        for t in range(T):
            x[t] = zeta
            u[t] = Kz[t] @ zeta + Kn[t] @ nu + Kw[t] @ w[t]
            cost += np.einsum("ik,ij,jk->k", zeta, sys.Q[t], zeta)
            cost += np.einsum("ik,ij,jk->k", u[t], sys.R[t], u[t])
            zeta = sys.A[t] @ zeta + sys.Bu[t] @ u[t] + sys.Bw[t] @ w[t]
            nu = self.Atilde[t] @ nu + self.Bw[t] @ w[t]
        if batch:
            return u, x, cost
        return u[:, :, 0], x[:, :, 0], float(cost[0])


def augmented_system(ns: ControlSystem, fwd, d2):
    """Two-copy system whose level-one H-infinity controller is regret-suboptimal.

    ``ns`` must be normalized. Returns a :class:`ControlSystem` with state
    ``(zeta, nu)`` and disturbance ``w' = D2 w``.
    """
    T, n, m, p = ns.T, ns.n, ns.m, ns.p
    At = fwd.schedules["Atilde"]
    Kb, Sb = d2.schedules["Kb"], d2.schedules["Sigmab"]
    Ah = np.zeros((T, 2 * n, 2 * n))
    Bu = np.zeros((T, 2 * n, m))
    Bw = np.zeros((T, 2 * n, p))
    Qh = np.zeros((T, 2 * n, 2 * n))
    Sbi = psd_inv_sqrt(Sb)
    for t in range(T):
        BK = ns.Bw[t] @ Kb[t].T
        Ah[t, :n, :n] = ns.A[t]
        Ah[t, :n, n:] = -BK
        Ah[t, n:, n:] = At[t] - BK
        Bu[t, :n] = ns.Bu[t]
        BS = ns.Bw[t] @ Sbi[t]
        Bw[t, :n] = BS
        Bw[t, n:] = BS
        Qh[t, :n, :n] = ns.Q[t]
    return ControlSystem(Ah, Bu, Bw, Qh, np.broadcast_to(np.eye(m), (T, m, m)))


@dataclass(frozen=True)
class PreparedControl:
    """Level-independent data of a regret-control problem, reused across levels."""

    sys: ControlSystem
    ns: ControlSystem
    fwd: object
    Ri: np.ndarray


def prepare_control(sys: ControlSystem):
    ns = sys.normalized()
    return PreparedControl(sys, ns, forward_factor(ns), sys.r_inv_sqrt())


def synthesize_regret_controller(sys, gamma):
    """Regret-suboptimal controller at level ``gamma``; raises :class:`Infeasible`.

    ``sys`` is a :class:`ControlSystem` or the result of :func:`prepare_control`.
    """
    if gamma <= 0:
        raise ValueError("gamma must be positive")
    prep = sys if isinstance(sys, PreparedControl) else prepare_control(sys)
    ns, fwd = prep.ns, prep.fwd
    d2 = control_delta2(ns, gamma, fwd)
    aug = augmented_system(ns, fwd, d2)
    try:
        Ph, _, _ = game_riccati(aug, 1.0)
    except Infeasible as exc:
        raise Infeasible(exc.step, gamma, "augmented H-infinity test failed") from None
    T, n, m = ns.T, ns.n, ns.m
    Gz = np.zeros((T, m, n))
    Gn = np.zeros((T, m, n))
    for t in range(T):
        Bh = aug.Bu[t]
        Pn = Ph[t + 1]
        G = -np.linalg.solve(np.eye(m) + Bh.T @ Pn @ Bh, Bh.T @ Pn)
        Gz[t] = prep.Ri[t] @ G[:, :n]
        Gn[t] = prep.Ri[t] @ G[:, n:]
    return RegretController(
        A=ns.A, Bu=prep.sys.Bu, Bw=ns.Bw, Atilde=fwd.schedules["Atilde"], Gz=Gz, Gn=Gn, Phat=Ph,
        Kb=d2.schedules["Kb"], Sigmab=d2.schedules["Sigmab"],
        K=fwd.schedules["K"], Sigma=fwd.schedules["Sigma"], gamma=float(gamma),
    )


def run_regret_controller(c: RegretController, w, sys: ControlSystem):
    return c.run(sys, w)


def optimal_regret_controller(sys: ControlSystem, tol=1e-4, hint=None):
    prep = prepare_control(sys)
    cert = bisect_gamma(feasibility(synthesize_regret_controller, prep), tol, hint=hint)
    return cert, synthesize_regret_controller(prep, cert.gamma_opt)
