"""Lookahead and input-delay reductions to the plain regret-control problem.

Both reductions return a :class:`~regretopt.systems.ControlSystem` on which
any causal synthesis applies unchanged, together with an
:class:`AugmentationMap` that lifts signals into the new system and extracts
the original ones back.

Predictions of ``h`` future disturbances are handled by carrying a transcript
``(w[t], ..., w[t+h-1])`` next to the state and driving the system with
``w'[t] = w[t+h]``. So that the lifted system still starts from rest, the
transcript is filled during ``h`` extra leading steps in which control has no
effect and nothing is penalized.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .exceptions import ValidationError
from .systems import ControlSystem, as_signal


@dataclass(frozen=True)
class AugmentationMap:
    """Bookkeeping between an original system and its augmented version.

    ``offset`` is the number of leading steps the augmented horizon adds;
    original step ``t`` is augmented step ``t + offset``. The original state
    occupies the first ``n`` coordinates of the augmented state.
    """

    kind: str
    size: int
    T: int
    n: int
    m: int
    p: int
    n_aug: int
    offset: int

    @property
    def T_aug(self):
        return self.T + self.offset

    @property
    def state_index(self):
        return np.arange(self.n)

    def lift_disturbance(self, w):
        """Disturbance of the augmented system for an original ``w``."""
        w = as_signal(w, self.T, self.p, "w")
        if self.kind == "predictions":
            return np.vstack([w, np.zeros((self.offset, self.p))])
        return w

    def lift_control(self, u):
        u = as_signal(u, self.T, self.m, "u")
        return np.vstack([np.zeros((self.offset, self.m)), u])

    def extract_states(self, xi):
        xi = np.asarray(xi, dtype=float)
        if xi.shape[:2] != (self.T_aug, self.n_aug):
            raise ValidationError(f"expected augmented states of shape ({self.T_aug}, {self.n_aug}, ...)")
        return xi[self.offset:, : self.n]

    def extract_controls(self, u_aug):
        u_aug = np.asarray(u_aug, dtype=float)
        if u_aug.shape[:2] != (self.T_aug, self.m):
            raise ValidationError(f"expected augmented controls of shape ({self.T_aug}, {self.m}, ...)")
        return u_aug[self.offset:]


def augment_predictions(sys: ControlSystem, h: int):
    """System in which a causal controller sees ``h`` future disturbances.

    The augmented state is ``(x[t], w[t], ..., w[t+h-1])`` of size
    ``n + h p``; disturbances past the horizon are zero.
    """
    T, n, m, p = sys.T, sys.n, sys.m, sys.p
    if not isinstance(h, (int, np.integer)) or not 1 <= h <= T:
        raise ValidationError(f"lookahead must be an integer in [1, {T}], got {h!r}")
    h = int(h)
    N = n + h * p
    Ta = T + h
    A = np.zeros((Ta, N, N))
    Bu = np.zeros((Ta, N, m))
    Bw = np.zeros((Ta, N, p))
    Q = np.zeros((Ta, N, N))
    R = np.zeros((Ta, m, m))
    shift = np.eye(h * p, k=p)
    for k in range(Ta):
        A[k, n:, n:] = shift
        Bw[k, N - p :] = np.eye(p)
        if k < h:
            A[k, :n, :n] = np.eye(n)
            R[k] = sys.R[0]
            continue
        t = k - h
        A[k, :n, :n] = sys.A[t]
        A[k, :n, n : n + p] = sys.Bw[t]
        Bu[k, :n] = sys.Bu[t]
        Q[k, :n, :n] = sys.Q[t]
        R[k] = sys.R[t]
    amap = AugmentationMap("predictions", h, T, n, m, p, N, h)
    return ControlSystem(A, Bu, Bw, Q, R), amap


def augment_delay(sys: ControlSystem, d: int):
    """System equivalent to ``x[t+1] = A x + Bu[t-d] u[t-d] + Bw w`` without delay.

    The augmented state is ``(x[t], u[t-1], ..., u[t-d])`` of size ``n + d m``;
    controls before time zero are zero.
    """
    T, n, m, p = sys.T, sys.n, sys.m, sys.p
    if not isinstance(d, (int, np.integer)) or not 1 <= d < T:
        raise ValidationError(f"delay must be an integer in [1, {T - 1}], got {d!r}")
    d = int(d)
    N = n + d * m
    A = np.zeros((T, N, N))
    Bu = np.zeros((T, N, m))
    Bw = np.zeros((T, N, p))
    Q = np.zeros((T, N, N))
    shift = np.eye(d * m, k=-m)
    for t in range(T):
        A[t, :n, :n] = sys.A[t]
        if t >= d:
            A[t, :n, N - m :] = sys.Bu[t - d]
        A[t, n:, n:] = shift
        Bu[t, n : n + m] = np.eye(m)
        Bw[t, :n] = sys.Bw[t]
        Q[t, :n, :n] = sys.Q[t]
    amap = AugmentationMap("delay", d, T, n, m, p, N, 0)
    return ControlSystem(A, Bu, Bw, Q, sys.R), amap


def simulate_delayed(sys: ControlSystem, d: int, u, w):
    """Direct simulation of the delayed dynamics from rest; returns ``(x, cost)``."""
    T = sys.T
    u = as_signal(u, T, sys.m, "u")
    w = as_signal(w, T, sys.p, "w")
    x = np.zeros((T, sys.n))
    xt = np.zeros(sys.n)
    cost = 0.0
    for t in range(T):
        x[t] = xt
        cost += xt @ sys.Q[t] @ xt + u[t] @ sys.R[t] @ u[t]
        xt = sys.A[t] @ xt + sys.Bw[t] @ w[t]
        if t >= d:
            xt = xt + sys.Bu[t - d] @ u[t - d]
    return x, float(cost)


def augment(sys: ControlSystem, lookahead: int = 0, delay: int = 0):
    """Apply the prediction reduction, then the delay reduction, as requested.

    Returns the augmented system and the list of maps applied in order.
    """
    maps = []
    if lookahead:
        sys, amap = augment_predictions(sys, lookahead)
        maps.append(amap)
    if delay:
        sys, amap = augment_delay(sys, delay)
        maps.append(amap)
    return sys, maps
