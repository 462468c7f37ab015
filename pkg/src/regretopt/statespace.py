"""Finite-horizon state-space realizations of causal (and anticausal) operators."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .exceptions import FactorizationError

MAX_FEEDTHROUGH_COND = 1e12


@dataclass(frozen=True)
class CausalStateSpaceModel:
    """``x[t+1] = A[t] x[t] + B[t] i[t]``, ``o[t] = C[t] x[t] + D[t] i[t]``.

    With ``direction="backward"`` the state runs the other way,
    ``x[t-1] = A[t] x[t] + B[t] i[t]`` starting from ``x[T-1] = 0``, which
    realizes an anticausal operator. Matrices are per-step lists so the state
    dimension may change along the horizon.
    """

    A: tuple
    B: tuple
    C: tuple
    D: tuple
    direction: str = "forward"
    name: str = field(default="", compare=False)

    def __post_init__(self):
        if self.direction not in ("forward", "backward"):
            raise ValueError("direction must be 'forward' or 'backward'")
        lens = {len(self.A), len(self.B), len(self.C), len(self.D)}
        if len(lens) != 1:
            raise ValueError("schedules must share one horizon")
        for attr in ("A", "B", "C", "D"):
            object.__setattr__(self, attr, tuple(np.asarray(m, dtype=float) for m in getattr(self, attr)))

    @property
    def T(self):
        return len(self.D)

    @property
    def in_dim(self):
        return self.D[0].shape[1]

    @property
    def out_dim(self):
        return self.D[0].shape[0]

    def state_dim(self, t):
        return self.C[t].shape[1]

    def simulate(self, inputs):
        """Apply the operator to ``inputs`` of shape ``(T, in_dim)`` or ``(T, in_dim, k)``."""
        inputs = np.asarray(inputs, dtype=float)
        squeeze = inputs.ndim == 2
        if squeeze:
            inputs = inputs[:, :, None]
        T, k = self.T, inputs.shape[2]
        out = np.zeros((T, self.out_dim, k))
        if self.direction == "forward":
            x = np.zeros((self.state_dim(0), k))
            for t in range(T):
                out[t] = self.C[t] @ x + self.D[t] @ inputs[t]
                x = self.A[t] @ x + self.B[t] @ inputs[t]
        else:
            x = np.zeros((self.state_dim(T - 1), k))
            for t in range(T - 1, -1, -1):
                out[t] = self.C[t] @ x + self.D[t] @ inputs[t]
                x = self.A[t] @ x + self.B[t] @ inputs[t]
        return out[:, :, 0] if squeeze else out

    def dense(self):
        """Block matrix of the operator, built by unit-impulse probing."""
        T, di = self.T, self.in_dim
        eye = np.eye(T * di).reshape(T, di, T * di)
        return self.simulate(eye).reshape(T * self.out_dim, T * di)

    def inverse(self):
        return invert_causal_ss(self)


def invert_causal_ss(model):
    """Exchange inputs and outputs of a model with invertible feedthrough.

    The inverse realization is ``(A - B D^-1 C, B D^-1, -D^-1 C, D^-1)``.
    """
    check_invertible(model)
    A, B, C, D = [], [], [], []
    for t in range(model.T):
        Di = np.linalg.inv(model.D[t])
        A.append(model.A[t] - model.B[t] @ Di @ model.C[t])
        B.append(model.B[t] @ Di)
        C.append(-Di @ model.C[t])
        D.append(Di)
    name = f"{model.name}^-1" if model.name else ""
    return CausalStateSpaceModel(A, B, C, D, direction=model.direction, name=name)


def check_invertible(model):
    """Raise :class:`FactorizationError` unless every feedthrough is well conditioned."""
    for t, Dt in enumerate(model.D):
        if Dt.shape[0] != Dt.shape[1]:
            raise FactorizationError(f"feedthrough at step {t} is not square")
    with np.errstate(all="ignore"):
        sv = np.linalg.svd(np.stack(model.D), compute_uv=False)
        cond = sv[:, 0] / sv[:, -1]
    bad = ~(np.isfinite(cond) & (cond <= MAX_FEEDTHROUGH_COND))
    if np.any(bad):
        t = int(np.argmax(bad))
        raise FactorizationError(f"feedthrough at step {t} is singular (cond={cond[t]:.3g})")


def identity_model(T, dim):
    z = np.zeros((0, 0))
    return CausalStateSpaceModel(
        [z] * T, [np.zeros((0, dim))] * T, [np.zeros((dim, 0))] * T, [np.eye(dim)] * T, name="I"
    )
