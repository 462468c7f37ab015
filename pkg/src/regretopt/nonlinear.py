"""Nonlinear benchmarks driven by repeated linearization.

Two models are provided: an inverted pendulum controlled in receding-horizon
fashion (:func:`mpc_loop`) and a frequency-modulation receiver estimated in
the style of an extended Kalman filter (:func:`ekf_style_loop`). Both are
Euler-discretized with step ``delta``.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .exceptions import FactorizationError, Infeasible, UnboundedGamma, ValidationError
from .hinf import h2_controller, optimal_hinf_controller
from .noncausal import noncausal_control
from .regret_controller import optimal_regret_controller
from .regret_filter import optimal_regret_filter
from .systems import ControlSystem, EstimationSystem

logger = logging.getLogger(__name__)

CONTROL_POLICIES = ("H2", "Hinf", "RegretOpt", "Noncausal")
FILTER_KINDS = ("EKF", "RegretOpt")


@dataclass(frozen=True)
class NonlinearModel:
    """Continuous-time model ``dx/dt = f(x, u, w)`` with optional observation ``h(x, t)``.

    For control models ``u`` is the control and ``w`` the disturbance. For
    estimation models ``u`` is the process disturbance and there is no ``w``
    (``p = 0``); ``h`` gives the noiseless measurement.
    """

    name: str
    n: int
    m: int
    p: int
    delta: float
    f: Callable
    fx: Callable
    fu: Callable
    fw: Callable
    h: Callable | None = None
    hx: Callable | None = None
    q: int = 0

    def step(self, x, u, w=None):
        """One forward Euler step."""
        w = np.zeros(self.p) if w is None else w
        return x + self.delta * self.f(x, u, w)

    def linearize(self, x, u=None, w=None):
        """Discrete ``(A, Bu, Bw)`` of the Euler step at ``(x, u, w)`` (inputs zero by default)."""
        u = np.zeros(self.m) if u is None else u
        w = np.zeros(self.p) if w is None else w
        d = self.delta
        return np.eye(self.n) + d * self.fx(x, u, w), d * self.fu(x, u, w), d * self.fw(x, u, w)


def pendulum_model(params=None, delta=0.1):
    """Inverted pendulum ``theta'' = (m g l / J) sin(theta) + (l / J) (u + w) cos(theta)``.

    ``params`` may set any of ``m, g, l, J`` (all default to 1).
    """
    p = {"m": 1.0, "g": 1.0, "l": 1.0, "J": 1.0}
    for key, val in (params or {}).items():
        if key not in p:
            raise ValidationError(f"unknown pendulum parameter {key!r}")
        p[key] = float(val)
    if min(p.values()) <= 0 or delta <= 0:
        raise ValidationError("pendulum parameters and delta must be positive")
    a = p["m"] * p["g"] * p["l"] / p["J"]
    b = p["l"] / p["J"]

    def f(x, u, w):
        th, om = x
        return np.array([om, a * np.sin(th) + b * (u[0] + w[0]) * np.cos(th)])

    def fx(x, u, w):
        th = x[0]
        return np.array([[0.0, 1.0], [a * np.cos(th) - b * (u[0] + w[0]) * np.sin(th), 0.0]])

    def fu(x, u, w):
        return np.array([[0.0], [b * np.cos(x[0])]])

    return NonlinearModel("pendulum", 2, 1, 1, float(delta), f, fx, fu, fu)


def fm_model(beta=1.0, omega_c=1.0, delta=0.1):
    """Frequency modulation: ``lambda' = -lambda / beta + u``, ``theta' = lambda``,
    ``y = sqrt(2) sin(omega_c t + theta) + v``."""
    if beta <= 0 or delta <= 0:
        raise ValidationError("beta and delta must be positive")
    F = np.array([[-1.0 / beta, 0.0], [1.0, 0.0]])
    G = np.array([[1.0], [0.0]])
    s2 = np.sqrt(2.0)

    def f(x, u, w):
        return F @ x + G @ u

    def fx(x, u, w):
        return F.copy()

    def fu(x, u, w):
        return G.copy()

    def fw(x, u, w):
        return np.zeros((2, 0))

    def h(x, t):
        return np.array([s2 * np.sin(omega_c * t + x[1])])

    def hx(x, t):
        return np.array([[0.0, s2 * np.cos(omega_c * t + x[1])]])

    return NonlinearModel("fm", 2, 1, 0, float(delta), f, fx, fu, fw, h, hx, q=1)


@dataclass(frozen=True)
class BenchmarkRun:
    """Per-step cost (or squared error) of one policy and its running sum."""

    label: str
    instantaneous: np.ndarray
    cumulative: np.ndarray
    gammas: tuple = ()
    diagnostics: tuple = field(default=(), repr=False)

    @property
    def total(self):
        return float(self.cumulative[-1]) if self.cumulative.size else 0.0


def _make_run(label, inst, gammas=(), diagnostics=()):
    inst = np.asarray(inst, dtype=float)
    return BenchmarkRun(label, inst, np.cumsum(inst), tuple(gammas), tuple(diagnostics))


def _first_action(kind, sys, x, w_win, gamma_tol, hint):
    """First control of the requested policy on the window system from state ``x``."""
    if kind == "H2":
        c = h2_controller(sys)
        return c.Kx[0] @ x + c.Kw[0] @ w_win[0], None
    if kind == "Hinf":
        cert, c = optimal_hinf_controller(sys, gamma_tol, hint=hint)
        return c.Kx[0] @ x + c.Kw[0] @ w_win[0], cert.gamma_opt
    if kind == "RegretOpt":
        cert, c = optimal_regret_controller(sys, gamma_tol, hint=hint)
        zeta = sys.A[0] @ x + sys.Bw[0] @ w_win[0]
        nu = c.Bw[0] @ w_win[0]
        return c.Gz[0] @ zeta + c.Gn[0] @ nu, cert.gamma_opt
    if kind == "Noncausal":
        u, _ = noncausal_control(sys, w_win, x0=x)
        return u[0], None
    raise ValidationError(f"unknown policy {kind!r}; expected one of {CONTROL_POLICIES}")


def mpc_loop(model: NonlinearModel, policy_kind, w, steps, horizon=None, Q=None, R=None,
             x0=None, gamma_tol=1e-3):
    """Receding-horizon control of ``model`` under disturbance ``w``.

    At step ``k`` the model is linearized at the current state (with zero
    inputs), the policy is synthesized on the time-invariant linearization
    over ``min(horizon, steps - k)`` steps, and its first action is applied to
    the nonlinear model. The causal policies start their internal plant copy
    at the current state; the noncausal one also knows the future ``w`` in
    the window. When a synthesis fails, the H2 action is used for that step
    and the failure is recorded in ``diagnostics``.
    """
    if policy_kind not in CONTROL_POLICIES:
        raise ValidationError(f"unknown policy {policy_kind!r}; expected one of {CONTROL_POLICIES}")
    w = np.asarray(w, dtype=float).reshape(len(w), -1)
    if w.shape[0] < steps:
        raise ValidationError(f"disturbance has {w.shape[0]} samples, need {steps}")
    horizon = steps if horizon is None else int(horizon)
    if horizon < 1:
        raise ValidationError("horizon must be positive")
    Q = np.eye(model.n) if Q is None else np.asarray(Q, dtype=float)
    R = np.eye(model.m) if R is None else np.asarray(R, dtype=float)
    x = np.zeros(model.n) if x0 is None else np.asarray(x0, dtype=float).copy()
    inst = np.zeros(steps)
    gammas, diags = [], []
    hint = None
    for k in range(steps):
        Tk = min(horizon, steps - k)
        A, Bu, Bw = model.linearize(x)
        sys = ControlSystem(A, Bu, Bw, Q, R, T=Tk)
        w_win = w[k : k + Tk]
        try:
            u, g = _first_action(policy_kind, sys, x, w_win, gamma_tol, hint)
        except (Infeasible, FactorizationError, UnboundedGamma, np.linalg.LinAlgError) as exc:
            logger.info("step %d: %s synthesis failed (%s), using H2", k, policy_kind, exc)
            diags.append(f"step {k}: {exc}")
            u, g = _first_action("H2", sys, x, w_win, gamma_tol, None)
        if g is not None:
            gammas.append(g)
            hint = g
        inst[k] = x @ Q @ x + u @ R @ u
        x = model.step(x, u, w[k])
    return _make_run(policy_kind, inst, gammas, diags)


def ekf_style_loop(model: NonlinearModel, filter_kind, u, v, steps, L=None, gamma_tol=1e-3):
    """Estimate the state of an observed nonlinear ``model`` from noisy measurements.

    The true state is driven by ``u`` and measured as ``h(x, k delta) + v``.
    Measurements are linearized at the one-step prediction, giving
    pseudo-measurements ``y - h(x_pred) + C x_pred`` of a linear system. The
    EKF runs the Kalman update with unit covariances; the regret-optimal
    filter is resynthesized on the linearized system over the whole window
    seen so far and its latest estimate is kept. The recorded error is
    ``|L (x_hat - x)|^2`` with ``L = I`` by default.
    """
    if filter_kind not in FILTER_KINDS:
        raise ValidationError(f"unknown filter {filter_kind!r}; expected one of {FILTER_KINDS}")
    if model.h is None:
        raise ValidationError(f"model {model.name!r} has no observation function")
    n, m, q, d = model.n, model.m, model.q, model.delta
    u = np.asarray(u, dtype=float).reshape(len(u), -1)
    v = np.asarray(v, dtype=float).reshape(len(v), -1)
    if u.shape[0] < steps or v.shape[0] < steps:
        raise ValidationError(f"signals must have at least {steps} samples")
    L = np.eye(n) if L is None else np.atleast_2d(np.asarray(L, dtype=float))

    x = np.zeros(n)
    xs = np.zeros((steps, n))
    ys = np.zeros((steps, q))
    for k in range(steps):
        xs[k] = x
        ys[k] = model.h(x, k * d) + v[k]
        x = model.step(x, u[k])

    inst = np.zeros(steps)
    gammas, diags = [], []
    As, Bs, Cs, yt = [], [], [], []
    x_pred = np.zeros(n)
    P = np.zeros((n, n))
    est = np.zeros(n)
    hint = None
    for k in range(steps):
        t = k * d
        C = model.hx(x_pred, t)
        A, B, _ = model.linearize(x_pred)
        if filter_kind == "EKF":
            S = C @ P @ C.T + np.eye(q)
            K = np.linalg.solve(S, C @ P).T
            est = x_pred + K @ (ys[k] - model.h(x_pred, t))
            P = P - K @ C @ P
            x_pred = model.step(est, np.zeros(m))
            P = A @ P @ A.T + B @ B.T
        else:
            As.append(A)
            Bs.append(B)
            Cs.append(C)
            yt.append(ys[k] - model.h(x_pred, t) + C @ x_pred)
            sys = EstimationSystem(np.array(As), np.array(Bs), np.array(Cs), np.eye(n), T=k + 1)
            try:
                cert, filt = optimal_regret_filter(sys, gamma_tol, hint=hint)
                est = filt.run(np.array(yt))[-1]
                gammas.append(cert.gamma_opt)
                hint = cert.gamma_opt
            except (Infeasible, FactorizationError, UnboundedGamma, np.linalg.LinAlgError) as exc:
                logger.info("step %d: regret filter synthesis failed (%s), keeping prediction", k, exc)
                diags.append(f"step {k}: {exc}")
                est = x_pred
            x_pred = model.step(est, np.zeros(m))
        e = L @ (est - xs[k])
        inst[k] = e @ e
    return _make_run(filter_kind, inst, gammas, diags)
