"""Finite-horizon suboptimal H-infinity filtering and full-information control.

Both syntheses raise :class:`~regretopt.exceptions.Infeasible` carrying the
first step at which the existence test fails. :func:`bisect_gamma` turns any
monotone feasibility predicate into an optimal level.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np

from .exceptions import FactorizationError, Infeasible, UnboundedGamma
from .systems import ControlSystem, EstimationSystem, as_signal

logger = logging.getLogger(__name__)

INERTIA_RTOL = 1e-12


def _sym(P):
    return 0.5 * (P + P.T)


def inertia(M):
    w = np.linalg.eigvalsh(_sym(M))
    thresh = INERTIA_RTOL * max(np.max(np.abs(w)), 1e-300)
    return int(np.sum(w > thresh)), int(np.sum(w < -thresh))


@dataclass(frozen=True)
class HinfFilter:
    """Central H-infinity filter ``s_hat[t] = L[t] x[t|t]``."""

    A: np.ndarray
    C: np.ndarray
    L: np.ndarray
    K: np.ndarray
    P: np.ndarray
    Sigma: np.ndarray
    gamma: float

    @property
    def T(self):
        return self.A.shape[0]

    def filtered_states(self, y):
        """``x[t|t]`` for every step; ``y`` has shape ``(T, p)`` or ``(T, p, k)``."""
        y = np.asarray(y, dtype=float)
        batch = y.ndim == 3
        if not batch:
            y = y[:, :, None]
        n = self.A.shape[1]
        xs = np.zeros((self.T, n, y.shape[2]))
        x_pred = np.zeros((n, y.shape[2]))
        for t in range(self.T):
            x = x_pred + self.K[t] @ (y[t] - self.C[t] @ x_pred)
            xs[t] = x
            x_pred = self.A[t] @ x
        return xs if batch else xs[:, :, 0]

    def run(self, y):
        y = as_signal(y, self.T, self.C.shape[1], "y") if np.ndim(y) < 3 else y
        xs = self.filtered_states(y)
        if xs.ndim == 3:
            return np.einsum("tij,tjk->tik", self.L, xs)
        return np.einsum("tij,tj->ti", self.L, xs)


def hinf_estimator(sys: EstimationSystem, gamma):
    """Central filter with ``|s_hat - s|^2 < gamma^2 (|u|^2 + |v|^2)``.

    The Riccati variable starts at ``P[0] = 0`` (the initial state is known)
    and the filter exists iff every ``Sigma[t]`` has the inertia of
    ``diag(I_p, -gamma^2 I_r)``. Since the leading block ``I + C P C'`` is
    always positive, the inertia is read off the Schur complement
    ``L P[t|t] L' - gamma^2 I``, which stays well scaled when ``P`` is large.
    """
    if gamma <= 0:
        raise ValueError("gamma must be positive")
    T, n, p, r = sys.T, sys.n, sys.p, sys.r
    J = np.zeros((p + r, p + r))
    J[:p, :p] = np.eye(p)
    J[p:, p:] = -gamma * gamma * np.eye(r)
    P = np.zeros((T + 1, n, n))
    K = np.zeros((T, n, p))
    Sig = np.zeros((T, p + r, p + r))
    for t in range(T):
        A, B = sys.A[t], sys.B[t]
        CL = np.vstack([sys.C[t], sys.L[t]])
        Sig[t] = _sym(J + CL @ P[t] @ CL.T)
        C, L = sys.C[t], sys.L[t]
        K[t] = np.linalg.solve(np.eye(p) + C @ P[t] @ C.T, C @ P[t]).T
        Pf = P[t] - K[t] @ C @ P[t]
        gap = np.linalg.eigvalsh(_sym(gamma * gamma * np.eye(r) - L @ Pf @ L.T))
        if gap.min() <= INERTIA_RTOL * gamma * gamma:
            raise Infeasible(t, gamma, "Sigma has the wrong inertia")
        APC = A @ P[t] @ CL.T
        P[t + 1] = _sym(A @ P[t] @ A.T + B @ B.T - APC @ np.linalg.solve(Sig[t], APC.T))
    return HinfFilter(sys.A, sys.C, sys.L, K, P, Sig, float(gamma))


def kalman_estimator(sys: EstimationSystem):
    """Kalman filter with unit noise covariances, the ``gamma -> inf`` limit of :func:`hinf_estimator`."""
    T, n, p = sys.T, sys.n, sys.p
    P = np.zeros((T + 1, n, n))
    K = np.zeros((T, n, p))
    Sig = np.zeros((T, p, p))
    for t in range(T):
        A, B, C = sys.A[t], sys.B[t], sys.C[t]
        Sig[t] = _sym(np.eye(p) + C @ P[t] @ C.T)
        K[t] = np.linalg.solve(Sig[t], C @ P[t]).T
        Pf = P[t] - K[t] @ C @ P[t]
        P[t + 1] = _sym(A @ Pf @ A.T + B @ B.T)
    return HinfFilter(sys.A, sys.C, sys.L, K, P, Sig, float("inf"))


@dataclass(frozen=True)
class HinfController:
    """Full-information controller ``u[t] = Kx[t] x[t] + Kw[t] w[t]`` (original units)."""

    Kx: np.ndarray
    Kw: np.ndarray
    P: np.ndarray
    gamma: float

    @property
    def T(self):
        return self.Kx.shape[0]

    def run(self, sys: ControlSystem, w):
        """Closed loop from ``x0 = 0``; returns ``(u, x, cost)``."""
        T = sys.T
        w = as_signal(w, T, sys.p, "w")
        u = np.zeros((T, sys.m))
        x = np.zeros((T, sys.n))
        xt = np.zeros(sys.n)
        cost = 0.0
        for t in range(T):
            x[t] = xt
            u[t] = self.Kx[t] @ xt + self.Kw[t] @ w[t]
            cost += xt @ sys.Q[t] @ xt + u[t] @ sys.R[t] @ u[t]
            xt = sys.A[t] @ xt + sys.Bu[t] @ u[t] + sys.Bw[t] @ w[t]
        return u, x, float(cost)


def game_riccati(sys: ControlSystem, gamma):
    """Backward game Riccati recursion of the full-information problem.

    ``sys`` must have ``R = I``. Returns ``(P, Kx, Kw)`` in normalized input
    units, with ``P[T] = 0``. ``gamma = inf`` gives the LQR recursion.
    Raises :class:`Infeasible` when ``gamma^2 I - Bw' M Bw`` is not positive
    definite, ``M = P - P Bu H^-1 Bu' P``.
    """
    T, n, m = sys.T, sys.n, sys.m
    g2 = gamma * gamma
    P = np.zeros((T + 1, n, n))
    Kx = np.zeros((T, m, n))
    Kw = np.zeros((T, m, sys.p))
    eye_m = np.eye(m)
    g2I = g2 * np.eye(sys.p) if np.isfinite(g2) else None
    for t in range(T - 1, -1, -1):
        A, Bu, Bw, Pn = sys.A[t], sys.Bu[t], sys.Bw[t], P[t + 1]
        PB = Pn @ Bu
        G = np.linalg.solve(eye_m + Bu.T @ PB, PB.T)
        Kx[t] = -G @ A
        Kw[t] = -G @ Bw
        M = _sym(Pn - PB @ G)
        if g2I is not None:
            gap = _sym(g2I - Bw.T @ M @ Bw)
            ev = np.linalg.eigvalsh(gap)
            if ev[0] <= INERTIA_RTOL * max(g2, abs(ev[0]), abs(ev[-1])):
                raise Infeasible(t, gamma, "Bw' M Bw is not below gamma^2 I")
            MA = Bw.T @ M @ A
            P[t] = _sym(sys.Q[t] + A.T @ M @ A + MA.T @ np.linalg.solve(gap, MA))
        else:
            P[t] = _sym(sys.Q[t] + A.T @ M @ A)
    return P, Kx, Kw


def hinf_controller(sys: ControlSystem, gamma, normalized=None):
    """Central controller with ``cost < gamma^2 |w|^2`` for all nonzero ``w``.

    ``normalized`` may pass ``sys.normalized()`` when it is already at hand.
    """
    if gamma <= 0:
        raise ValueError("gamma must be positive")
    ns = sys.normalized() if normalized is None else normalized
    P, Kx, Kw = game_riccati(ns, gamma)
    Ri = sys.r_inv_sqrt()
    return HinfController(
        np.einsum("tij,tjk->tik", Ri, Kx), np.einsum("tij,tjk->tik", Ri, Kw), P, float(gamma)
    )


def h2_controller(sys: ControlSystem):
    """LQR full-information controller, the ``gamma -> inf`` limit of :func:`hinf_controller`."""
    ns = sys.normalized()
    P, Kx, Kw = game_riccati(ns, np.inf)
    Ri = sys.r_inv_sqrt()
    return HinfController(
        np.einsum("tij,tjk->tik", Ri, Kx), np.einsum("tij,tjk->tik", Ri, Kw), P, float("inf")
    )


@dataclass(frozen=True)
class GammaCertificate:
    """Result of a bisection: ``gamma_opt`` is the feasible end ``hi``."""

    gamma_opt: float
    bracket: tuple
    iterations: int
    feasible_at_opt: bool


MAX_DOUBLINGS = 60
MAX_ITERATIONS = 100


HINT_WIDTH = 0.02


def bisect_gamma(feasible, tol=1e-4, start=1.0, lo=0.0, hint=None):
    """Smallest level accepted by a monotone ``feasible`` predicate.

    The upper end is found by doubling from ``start`` (failing past ``2**60``),
    then the bracket is halved until ``hi - lo <= tol * max(1, hi)``. A
    ``hint`` (for instance the optimum of a nearby problem) first tries the
    bracket ``hint * (1 +- 0.02)`` and falls back to doubling.
    """
    if tol <= 0:
        raise ValueError("tol must be positive")
    hi = start
    doublings = 0
    if hint is not None and np.isfinite(hint) and hint > 0:
        up, down = hint * (1 + HINT_WIDTH), hint / (1 + HINT_WIDTH)
        doublings += 1
        if feasible(up):
            doublings += 1
            if feasible(down):
                hi = down
            else:
                lo, hi = down, up
        else:
            lo, hi = up, 2.0 * up
    while not feasible(hi):
        lo = hi
        hi *= 2.0
        doublings += 1
        if hi > 2.0 ** MAX_DOUBLINGS:
            raise UnboundedGamma(f"no feasible level below 2**{MAX_DOUBLINGS}")
    iterations = 0
    while hi - lo > tol * max(1.0, hi):
        if iterations >= MAX_ITERATIONS:
            logger.warning("bisection stopped after %d iterations, bracket (%g, %g)", iterations, lo, hi)
            break
        mid = 0.5 * (lo + hi)
        if feasible(mid):
            hi = mid
        else:
            lo = mid
        iterations += 1
    return GammaCertificate(float(hi), (float(lo), float(hi)), iterations + doublings, True)


def feasibility(synthesize, system):
    """Wrap a synthesis routine into a boolean predicate of gamma.

    A level whose factorizations break down numerically is reported as
    infeasible, since no certificate can be built there.
    """

    def check(gamma):
        if gamma <= 0:
            return False
        try:
            synthesize(system, gamma)
        except Infeasible:
            return False
        except FactorizationError as exc:
            logger.debug("level %g rejected: %s", gamma, exc)
            return False
        return True

    return check


def optimal_hinf_estimator(sys, tol=1e-4, hint=None):
    cert = bisect_gamma(feasibility(hinf_estimator, sys), tol, hint=hint)
    return cert, hinf_estimator(sys, cert.gamma_opt)


def optimal_hinf_controller(sys, tol=1e-4, hint=None):
    ns = sys.normalized()

    def check(gamma):
        if gamma <= 0:
            return False
        try:
            game_riccati(ns, gamma)
        except Infeasible:
            return False
        return True

    cert = bisect_gamma(check, tol, hint=hint)
    return cert, hinf_controller(sys, cert.gamma_opt, normalized=ns)
