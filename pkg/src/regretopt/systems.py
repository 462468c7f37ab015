"""Finite-horizon linear time-varying systems and their dense transfer operators.

Two system families are used throughout the package:

* :class:`EstimationSystem` -- ``x[t+1] = A[t] x[t] + B[t] u[t]``,
  ``y[t] = C[t] x[t] + v[t]``, target ``s[t] = L[t] x[t]``.
* :class:`ControlSystem` -- ``x[t+1] = A[t] x[t] + Bu[t] u[t] + Bw[t] w[t]``
  with stage cost ``x'Q x + u'R u``.

The initial state is always zero. Matrices are stored stacked along a leading
time axis, signals are arrays of shape ``(T, dim)``.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .exceptions import ConfigurationError, ValidationError

SQRT_EIG_FLOOR = 1e-12


def _sym_stack(M):
    return 0.5 * (M + np.swapaxes(M, -1, -2))


def psd_sqrt(M):
    """Principal symmetric square root of a symmetric PSD matrix (or a stack of them)."""
    M = np.asarray(M, dtype=float)
    w, V = np.linalg.eigh(_sym_stack(M))
    w = np.where(w < SQRT_EIG_FLOOR, 0.0, w)
    return (V * np.sqrt(w)[..., None, :]) @ np.swapaxes(V, -1, -2)


def psd_inv_sqrt(M):
    """Inverse principal square root of a symmetric positive definite matrix (or a stack)."""
    M = np.asarray(M, dtype=float)
    w, V = np.linalg.eigh(_sym_stack(M))
    if w.size and w.min() <= 0:
        raise ValidationError("matrix is not positive definite")
    return (V / np.sqrt(w)[..., None, :]) @ np.swapaxes(V, -1, -2)


def _stack(value, T, name):
    arr = np.asarray(value, dtype=float)
    if arr.ndim == 0:
        arr = arr.reshape(1, 1)
    if arr.ndim == 2:
        arr = np.broadcast_to(arr, (T,) + arr.shape)
    if arr.ndim != 3 or arr.shape[0] != T:
        raise ValidationError(
            f"{name} must be a matrix or a length-{T} sequence of matrices, got shape {arr.shape}"
        )
    arr = np.array(arr)
    arr.setflags(write=False)
    return arr


def as_signal(values, T, dim, name="signal"):
    """Coerce ``values`` to a float array of shape ``(T, dim)``."""
    arr = np.asarray(values, dtype=float)
    if arr.ndim == 1 and dim == 1:
        arr = arr[:, None]
    if arr.ndim == 0 and T == 1 and dim == 1:
        arr = arr.reshape(1, 1)
    if arr.shape != (T, dim):
        raise ValidationError(f"{name} must have shape ({T}, {dim}), got {arr.shape}")
    return arr


def energy(sig):
    """Sum of squared entries of a signal."""
    sig = np.asarray(sig, dtype=float)
    return float(np.sum(sig * sig))


@dataclass(frozen=True)
class EstimationSystem:
    A: np.ndarray
    B: np.ndarray
    C: np.ndarray
    L: np.ndarray

    def __init__(self, A, B, C, L, T=None):
        if T is None:
            T = next((np.asarray(m).shape[0] for m in (A, B, C, L) if np.ndim(m) == 3), None)
            if T is None:
                raise ValidationError("horizon T is required when every matrix is constant")
        if int(T) < 1:
            raise ValidationError(f"horizon T must be positive, got {T}")
        object.__setattr__(self, "A", _stack(A, T, "A"))
        object.__setattr__(self, "B", _stack(B, T, "B"))
        object.__setattr__(self, "C", _stack(C, T, "C"))
        object.__setattr__(self, "L", _stack(L, T, "L"))
        n = self.A.shape[1]
        if self.A.shape[2] != n:
            raise ValidationError("A must be square")
        if self.B.shape[1] != n or self.C.shape[2] != n or self.L.shape[2] != n:
            raise ValidationError(
                f"inconsistent state dimension: A {self.A.shape}, B {self.B.shape}, "
                f"C {self.C.shape}, L {self.L.shape}"
            )

    @property
    def T(self):
        return self.A.shape[0]

    @property
    def n(self):
        return self.A.shape[1]

    @property
    def m(self):
        return self.B.shape[2]

    @property
    def p(self):
        return self.C.shape[1]

    @property
    def r(self):
        return self.L.shape[1]

    def __repr__(self):
        return f"EstimationSystem(T={self.T}, n={self.n}, m={self.m}, p={self.p}, r={self.r})"

    __hash__ = object.__hash__

    def __eq__(self, other):
        if type(other) is not type(self):
            return NotImplemented
        return all(np.array_equal(getattr(self, f), getattr(other, f)) for f in self.__dataclass_fields__)


@dataclass(frozen=True)
class ControlSystem:
    A: np.ndarray
    Bu: np.ndarray
    Bw: np.ndarray
    Q: np.ndarray
    R: np.ndarray

    def __init__(self, A, Bu, Bw, Q, R, T=None):
        if T is None:
            T = next((np.asarray(m).shape[0] for m in (A, Bu, Bw, Q, R) if np.ndim(m) == 3), None)
            if T is None:
                raise ValidationError("horizon T is required when every matrix is constant")
        if int(T) < 1:
            raise ValidationError(f"horizon T must be positive, got {T}")
        for name, val in (("A", A), ("Bu", Bu), ("Bw", Bw), ("Q", Q), ("R", R)):
            object.__setattr__(self, name, _stack(val, T, name))
        n = self.A.shape[1]
        if self.A.shape[2] != n or self.Bu.shape[1] != n or self.Bw.shape[1] != n:
            raise ValidationError(
                f"inconsistent state dimension: A {self.A.shape}, Bu {self.Bu.shape}, Bw {self.Bw.shape}"
            )
        if self.Q.shape[1:] != (n, n):
            raise ValidationError(f"Q must be {n}x{n}")
        if self.R.shape[1:] != (self.m, self.m):
            raise ValidationError(f"R must be {self.m}x{self.m}")
        for name, M in (("Q", self.Q), ("R", self.R)):
            asym = np.abs(M - np.swapaxes(M, 1, 2)).max(axis=(1, 2), initial=0.0)
            if np.any(asym > 1e-10):
                raise ValidationError(f"{name} must be symmetric (step {int(np.argmax(asym > 1e-10))})")
        qmin = np.linalg.eigvalsh(self.Q)[:, 0] if n else np.zeros(T)
        if np.any(qmin < -1e-10):
            raise ValidationError(f"Q[{int(np.argmax(qmin < -1e-10))}] is not positive semidefinite")
        rmin = np.linalg.eigvalsh(self.R)[:, 0]
        if np.any(rmin <= 0):
            raise ValidationError(f"R[{int(np.argmax(rmin <= 0))}] is not positive definite")

    @property
    def T(self):
        return self.A.shape[0]

    @property
    def n(self):
        return self.A.shape[1]

    @property
    def m(self):
        return self.Bu.shape[2]

    @property
    def p(self):
        return self.Bw.shape[2]

    def __repr__(self):
        return f"ControlSystem(T={self.T}, n={self.n}, m={self.m}, p={self.p})"

    __hash__ = object.__hash__

    def __eq__(self, other):
        if type(other) is not type(self):
            return NotImplemented
        return all(np.array_equal(getattr(self, f), getattr(other, f)) for f in self.__dataclass_fields__)

    def q_sqrt(self):
        """Stack of principal square roots of ``Q[t]``."""
        return psd_sqrt(self.Q)

    def r_inv_sqrt(self):
        return psd_inv_sqrt(self.R)

    def normalized(self):
        """Equivalent system with ``R = I`` (input scaled by ``R^{1/2}``).

        A control ``u`` of the original system corresponds to ``R^{1/2} u`` in
        the returned one; use :meth:`to_original_input` to map back.
        """
        Ri = self.r_inv_sqrt()
        Bu = np.einsum("tij,tjk->tik", self.Bu, Ri)
        eye = np.broadcast_to(np.eye(self.m), self.R.shape)
        return ControlSystem(self.A, Bu, self.Bw, self.Q, eye)

    def to_original_input(self, u_normalized):
        return np.einsum("tij,tj->ti", self.r_inv_sqrt(), u_normalized)

    def to_normalized_input(self, u):
        Rs = psd_sqrt(self.R)
        return np.einsum("tij,tj->ti", Rs, u)


@dataclass(frozen=True)
class DenseOperator:
    """Block matrix of a finite-horizon operator with ``T x T`` blocks."""

    matrix: np.ndarray
    row_dim: int
    col_dim: int

    @property
    def T(self):
        return self.matrix.shape[0] // self.row_dim if self.row_dim else self.matrix.shape[1] // self.col_dim

    def block(self, t, tau):
        r, c = self.row_dim, self.col_dim
        return self.matrix[t * r:(t + 1) * r, tau * c:(tau + 1) * c]

    def is_causal(self, strict=False, tol=1e-12):
        """True when every block on or above the diagonal (``strict``) or above it vanishes."""
        T = self.T
        for t in range(T):
            for tau in range(t if strict else t + 1, T):
                if np.max(np.abs(self.block(t, tau)), initial=0.0) > tol:
                    return False
        return True

    def __matmul__(self, other):
        return self.matrix @ np.asarray(other).reshape(-1)


def _strictly_causal_matrix(A, B, C):
    """Dense map of ``x[t+1] = A x + B in``, ``out = C x``, zero initial state."""
    T, n = A.shape[0], A.shape[1]
    ro, ci = C.shape[1], B.shape[2]
    M = np.zeros((T * ro, T * ci))
    for tau in range(T - 1):
        X = B[tau]
        for t in range(tau + 1, T):
            M[t * ro:(t + 1) * ro, tau * ci:(tau + 1) * ci] = C[t] @ X
            X = A[t] @ X
    return M


def assemble_estimation_operators(sys):
    """Dense ``H`` (u -> C x) and ``L`` (u -> L x) operators."""
    H = _strictly_causal_matrix(sys.A, sys.B, sys.C)
    Lop = _strictly_causal_matrix(sys.A, sys.B, sys.L)
    return DenseOperator(H, sys.p, sys.m), DenseOperator(Lop, sys.r, sys.m)


def assemble_control_operators(sys):
    """Dense ``F`` (u -> s) and ``G`` (w -> s) with ``s[t] = Q[t]^{1/2} x[t]``.

    ``F`` acts on the normalized input ``R^{1/2} u`` so that the LQR cost is
    ``|F u' + G w|^2 + |u'|^2``.
    """
    ns = sys.normalized()
    Qs = sys.q_sqrt()
    F = _strictly_causal_matrix(ns.A, ns.Bu, Qs)
    G = _strictly_causal_matrix(ns.A, ns.Bw, Qs)
    return DenseOperator(F, sys.n, sys.m), DenseOperator(G, sys.n, sys.p)


def simulate_control(sys, u, w, x0=None):
    """Roll the control system forward from ``x0`` (zero by default).

    Returns the state trajectory ``x[0..T-1]`` and the quadratic cost.
    """
    T = sys.T
    u = as_signal(u, T, sys.m, "u")
    w = as_signal(w, T, sys.p, "w")
    x = np.zeros((T, sys.n))
    xt = np.zeros(sys.n) if x0 is None else np.asarray(x0, dtype=float).reshape(sys.n)
    cost = 0.0
    for t in range(T):
        x[t] = xt
        cost += xt @ sys.Q[t] @ xt + u[t] @ sys.R[t] @ u[t]
        xt = sys.A[t] @ xt + sys.Bu[t] @ u[t] + sys.Bw[t] @ w[t]
    return x, float(cost)


def simulate_estimation(sys, u, v):
    """Observations ``y`` and targets ``s`` driven by ``(u, v)`` from ``x0 = 0``."""
    T = sys.T
    u = as_signal(u, T, sys.m, "u")
    v = as_signal(v, T, sys.p, "v")
    y = np.zeros((T, sys.p))
    s = np.zeros((T, sys.r))
    xt = np.zeros(sys.n)
    for t in range(T):
        y[t] = sys.C[t] @ xt + v[t]
        s[t] = sys.L[t] @ xt
        xt = sys.A[t] @ xt + sys.B[t] @ u[t]
    return y, s


_ESTIMATION_KEYS = {"T", "A", "B", "C", "L"}
_CONTROL_KEYS = {"T", "A", "Bu", "Bw", "Q", "R"}


def system_from_dict(doc):
    """Build a system from a JSON-style mapping.

    Matrices are row-major nested lists; a single matrix is reused for every
    step. The family is inferred from the keys present.
    """
    keys = set(doc) - {"kind"}
    T = doc.get("T")
    if keys == _CONTROL_KEYS:
        return ControlSystem(doc["A"], doc["Bu"], doc["Bw"], doc["Q"], doc["R"], T=T)
    if keys == _ESTIMATION_KEYS:
        return EstimationSystem(doc["A"], doc["B"], doc["C"], doc["L"], T=T)
    raise ConfigurationError(
        f"unrecognised system keys {sorted(keys)}; expected {sorted(_CONTROL_KEYS)} "
        f"or {sorted(_ESTIMATION_KEYS)}"
    )


def system_to_dict(sys):
    if isinstance(sys, ControlSystem):
        names = ("A", "Bu", "Bw", "Q", "R")
    else:
        names = ("A", "B", "C", "L")
    doc = {"T": sys.T}
    doc.update({k: getattr(sys, k).tolist() for k in names})
    return doc


def load_system(path):
    with open(Path(path)) as fh:
        return system_from_dict(json.load(fh))
