"""Riccati-based spectral factorizations used by the regret syntheses.

Every factor is returned as a causal :class:`CausalStateSpaceModel` together
with its causal inverse (built on demand). The Gram identities realized here are

=====================  ==============================================
``forward_factor``     ``D1 D1' = I + F F'``                (control)
``backward_factor_dual`` ``D1' D1 = I + H' H``              (estimation)
``control_delta2``     ``D2' D2 = g^2 I + G' (I + F F')^-1 G``
``estimation_S_factor`` ``S' S = I + g^-2 L (I + H'H)^-1 L'``
``estimation_T_factor`` ``T T' = g^2 (S'S)^-1 + L (I + H'H)^-1 L'``
=====================  ==============================================

Passing ``check=True`` assembles the dense operators and stores the relative
Frobenius residual of the identity in the result; this is O(T^2) memory and
meant for tests.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from functools import cached_property

import numpy as np

from .statespace import CausalStateSpaceModel, check_invertible
from .systems import (
    assemble_control_operators,
    assemble_estimation_operators,
    psd_inv_sqrt,
    psd_sqrt,
)

PINV_RTOL = 1e-10


@dataclass(frozen=True)
class FactorizationResult:
    factor: CausalStateSpaceModel
    residual: float | None = None
    schedules: dict = field(default_factory=dict, repr=False)

    @cached_property
    def inverse(self):
        """Causal inverse of the factor, built on first access."""
        return self.factor.inverse()


def _sym(P):
    return 0.5 * (P + P.T)


def _rel_residual(approx, target):
    return float(np.linalg.norm(approx - target) / max(np.linalg.norm(target), 1e-300))


def pinv_truncated(M, rtol=PINV_RTOL):
    """Moore-Penrose inverse discarding singular values below ``rtol * s_max``."""
    U, s, Vt = np.linalg.svd(M)
    if s.size == 0 or s[0] == 0.0:
        return np.zeros(M.T.shape)
    keep = s > rtol * s[0]
    return (Vt[keep].T / s[keep]) @ U[:, keep].T


def forward_factor(sys, check=False):
    """Causal ``D1`` with ``D1 D1' = I + F F'`` via the forward Kalman filter.

    ``sys`` must be normalized (``R = I``). Schedules: ``P`` (T+1 predicted
    covariances), ``K``, ``Sigma``, ``Qs`` (square roots of Q) and
    ``Atilde = A - K Q^{1/2}``.
    """
    T, n = sys.T, sys.n
    Qs = sys.q_sqrt()
    P = np.zeros((T + 1, n, n))
    K = np.zeros((T, n, n))
    Sig = np.zeros((T, n, n))
    At = np.zeros((T, n, n))
    fA, fB, fC, fD = [], [], [], []
    for t in range(T):
        A, Bu, Q12 = sys.A[t], sys.Bu[t], Qs[t]
        Sig[t] = _sym(np.eye(n) + Q12 @ P[t] @ Q12)
        K[t] = np.linalg.solve(Sig[t], (A @ P[t] @ Q12).T).T
        At[t] = A - K[t] @ Q12
        P[t + 1] = _sym(A @ P[t] @ A.T + Bu @ Bu.T - K[t] @ Sig[t] @ K[t].T)
        S12 = psd_sqrt(Sig[t])
        fA.append(A)
        fB.append(K[t] @ S12)
        fC.append(Q12)
        fD.append(S12)
    factor = CausalStateSpaceModel(fA, fB, fC, fD, name="Delta1")
    check_invertible(factor)
    residual = None
    if check:
        F, _ = assemble_control_operators(sys)
        D = factor.dense()
        residual = _rel_residual(D @ D.T, np.eye(F.matrix.shape[0]) + F.matrix @ F.matrix.T)
    return FactorizationResult(
        factor, residual, dict(P=P, K=K, Sigma=Sig, Qs=Qs, Atilde=At)
    )


def backward_factor_dual(sys, check=False):
    """Causal ``D1`` with ``D1' D1 = I + H' H`` via the backward Kalman filter.

    ``P`` runs from ``P[T-1] = 0`` down to ``P[0]``; ``K[t] = A' P B Sigma^-1``.
    """
    T, n, m = sys.T, sys.n, sys.m
    P = np.zeros((T, n, n))
    K = np.zeros((T, n, m))
    Sig = np.zeros((T, m, m))
    Pt = np.zeros((n, n))
    for t in range(T - 1, -1, -1):
        A, B, C = sys.A[t], sys.B[t], sys.C[t]
        P[t] = Pt
        Sig[t] = _sym(np.eye(m) + B.T @ Pt @ B)
        K[t] = np.linalg.solve(Sig[t], (A.T @ Pt @ B).T).T
        Pt = _sym(A.T @ Pt @ A + C.T @ C - K[t] @ Sig[t] @ K[t].T)
    S12 = psd_sqrt(Sig)
    factor = CausalStateSpaceModel(
        list(sys.A), list(sys.B), [S12[t] @ K[t].T for t in range(T)], S12, name="Delta1"
    )
    check_invertible(factor)
    residual = None
    if check:
        H, _ = assemble_estimation_operators(sys)
        D = factor.dense()
        residual = _rel_residual(D.T @ D, np.eye(H.matrix.shape[1]) + H.matrix.T @ H.matrix)
    return FactorizationResult(factor, residual, dict(P=P, K=K, Sigma=Sig))


def control_delta2(sys, gamma, fwd=None, check=False):
    """Causal ``D2`` with ``D2' D2 = gamma^2 I + G' (I + F F')^-1 G``.

    Runs the backward Kalman filter on the anticausal model of
    ``(D1^-1 G)'`` whose forward form is ``nu[t+1] = Atilde nu + Bw w``,
    ``e = Sigma^{-1/2} Q^{1/2} nu``. The recursion starts from
    ``Pb[T-1] = 0``.
    """
    if gamma <= 0:
        raise ValueError("gamma must be positive")
    if fwd is None:
        fwd = forward_factor(sys)
    T, n, p = sys.T, sys.n, sys.p
    At, Sig, Qs = fwd.schedules["Atilde"], fwd.schedules["Sigma"], fwd.schedules["Qs"]
    g2 = gamma * gamma
    Pb = np.zeros((T, n, n))
    Kb = np.zeros((T, n, p))
    Sb = np.zeros((T, p, p))
    Pt = np.zeros((n, n))
    g2I = g2 * np.eye(p)
    CtC = Qs @ np.linalg.solve(Sig, Qs)
    for t in range(T - 1, -1, -1):
        Bw = sys.Bw[t]
        Pb[t] = Pt
        X = At[t].T @ Pt @ Bw
        Sb[t] = _sym(g2I + Bw.T @ Pt @ Bw)
        Kb[t] = np.linalg.solve(Sb[t], X.T).T
        Pt = _sym(At[t].T @ Pt @ At[t] + CtC[t] - Kb[t] @ X.T)
    Sb12 = psd_sqrt(Sb)
    factor = CausalStateSpaceModel(
        list(At), list(sys.Bw), [Sb12[t] @ Kb[t].T for t in range(T)], Sb12, name="Delta2"
    )
    check_invertible(factor)
    residual = None
    if check:
        F, G = assemble_control_operators(sys)
        F, G = F.matrix, G.matrix
        target = g2 * np.eye(G.shape[1]) + G.T @ np.linalg.solve(np.eye(F.shape[0]) + F @ F.T, G)
        D = factor.dense()
        residual = _rel_residual(D.T @ D, target)
    return FactorizationResult(factor, residual, dict(Pb=Pb, Kb=Kb, Sigmab=Sb))


def l_delta1_inverse(sys, d1):
    """Strictly causal model of ``L D1^-1``: ``x+ = (A - B K') x + B Sigma^-1/2 e``, ``s = L x``."""
    K, Sig = d1.schedules["K"], d1.schedules["Sigma"]
    Abar = [sys.A[t] - sys.B[t] @ K[t].T for t in range(sys.T)]
    Bbar = [sys.B[t] @ psd_inv_sqrt(Sig[t]) for t in range(sys.T)]
    return CausalStateSpaceModel(
        Abar, Bbar, list(sys.L), [np.zeros((sys.r, sys.m))] * sys.T, name="L Delta1^-1"
    )


def _dense_regret_gram(sys):
    """Dense ``L (I + H'H)^-1 L'`` from the raw operators."""
    H, Lop = assemble_estimation_operators(sys)
    H, Lm = H.matrix, Lop.matrix
    return Lm @ np.linalg.solve(np.eye(H.shape[1]) + H.T @ H, Lm.T)


def estimation_S_factor(sys, gamma, d1=None, check=False, pinv_rtol=PINV_RTOL):
    """Causal ``S`` with ``S' S = I + gamma^-2 M M'`` where ``M = L D1^-1``.

    ``M M'`` has the causal factor on the left, so the backward innovations
    model of ``s = gamma^-1 M e + f`` is needed. It uses the backward Markov
    model of the state of ``M``: ``A^b[t] = Pi[t-1] Abar[t-1]' pinv(Pi[t])``
    and ``Q^b[t] = Pi[t-1] - A^b Pi[t] A^b'``, then a backward Riccati
    recursion started at ``Pb[T-1] = Pi[T-1]``.
    """
    if gamma <= 0:
        raise ValueError("gamma must be positive")
    if d1 is None:
        d1 = backward_factor_dual(sys)
    T, n, r = sys.T, sys.n, sys.r
    M = l_delta1_inverse(sys, d1)
    Abar, Bbar = M.A, M.B
    Pi = np.zeros((T, n, n))
    for t in range(T - 1):
        Pi[t + 1] = _sym(Abar[t] @ Pi[t] @ Abar[t].T + Bbar[t] @ Bbar[t].T)
    Ab = np.zeros((T, n, n))
    Qb = np.zeros((T, n, n))
    for t in range(1, T):
        Ab[t] = Pi[t - 1] @ Abar[t - 1].T @ pinv_truncated(Pi[t], pinv_rtol)
        Qb[t] = _sym(Pi[t - 1] - Ab[t] @ Pi[t] @ Ab[t].T)
    ig = 1.0 / gamma
    Pb = np.zeros((T, n, n))
    Kb = np.zeros((T, n, r))
    Sb = np.zeros((T, r, r))
    Pt = Pi[T - 1].copy()
    for t in range(T - 1, -1, -1):
        L = sys.L[t]
        Pb[t] = Pt
        Sb[t] = _sym(np.eye(r) + ig * ig * L @ Pt @ L.T)
        Kb[t] = ig * np.linalg.solve(Sb[t], (Ab[t] @ Pt @ L.T).T).T
        if t > 0:
            Pt = _sym(Ab[t] @ Pt @ Ab[t].T + Qb[t] - Kb[t] @ Sb[t] @ Kb[t].T)
    Sb12 = psd_sqrt(Sb)
    factor = CausalStateSpaceModel(
        [Ab[t].T for t in range(T)],
        [ig * sys.L[t].T for t in range(T)],
        [Sb12[t] @ Kb[t].T for t in range(T)],
        Sb12,
        name="S",
    )
    check_invertible(factor)
    residual = None
    if check:
        target = np.eye(T * r) + ig * ig * _dense_regret_gram(sys)
        D = factor.dense()
        residual = _rel_residual(D.T @ D, target)
    return FactorizationResult(
        factor, residual, dict(Pi=Pi, Ab=Ab, Qb=Qb, Pb=Pb, Kb=Kb, Sigmab=Sb, M=M)
    )


def estimation_T_factor(sys, gamma, S=None, d1=None, check=False):
    """Causal ``T`` with ``T T' = gamma^2 (S'S)^-1 + M M'``.

    ``T T'`` is the covariance of ``gamma S^-1 f + M e``; stacking both
    models gives ``eta = (y, z)`` with matrices ``Atilde, Btilde, Ctilde``
    and feedthrough ``[0, gamma Sigmab^-1/2]``, whitened by a forward Kalman
    filter from ``Ptilde[0] = 0``.
    """
    if gamma <= 0:
        raise ValueError("gamma must be positive")
    if d1 is None:
        d1 = backward_factor_dual(sys)
    if S is None:
        S = estimation_S_factor(sys, gamma, d1)
    T, n, r, m = sys.T, sys.n, sys.r, sys.m
    Ms = S.schedules["M"]
    Ab, Kb, Sb = S.schedules["Ab"], S.schedules["Kb"], S.schedules["Sigmab"]
    ig = 1.0 / gamma
    N = 2 * n
    At = np.zeros((T, N, N))
    Bt = np.zeros((T, N, m + r))
    Ct = np.zeros((T, r, N))
    Dt = np.zeros((T, r, m + r))
    for t in range(T):
        Sbi = psd_inv_sqrt(Sb[t])
        L = sys.L[t]
        At[t, :n, :n] = Ms.A[t]
        At[t, n:, n:] = Ab[t].T - ig * L.T @ Kb[t].T
        Bt[t, :n, :m] = Ms.B[t]
        Bt[t, n:, m:] = ig * L.T @ Sbi
        Ct[t, :, :n] = L
        Ct[t, :, n:] = -gamma * Kb[t].T
        Dt[t, :, m:] = gamma * Sbi
    Pt = np.zeros((T + 1, N, N))
    Kt = np.zeros((T, N, r))
    St = np.zeros((T, r, r))
    for t in range(T):
        St[t] = _sym(Dt[t] @ Dt[t].T + Ct[t] @ Pt[t] @ Ct[t].T)
        Kt[t] = np.linalg.solve(St[t], (At[t] @ Pt[t] @ Ct[t].T + Bt[t] @ Dt[t].T).T).T
        Pt[t + 1] = _sym(At[t] @ Pt[t] @ At[t].T + Bt[t] @ Bt[t].T - Kt[t] @ St[t] @ Kt[t].T)
    St12 = psd_sqrt(St)
    factor = CausalStateSpaceModel(
        list(At), [Kt[t] @ St12[t] for t in range(T)], list(Ct), St12, name="T"
    )
    check_invertible(factor)
    residual = None
    if check:
        Sd = S.factor.dense()
        target = gamma * gamma * np.linalg.inv(Sd.T @ Sd) + _dense_regret_gram(sys)
        D = factor.dense()
        residual = _rel_residual(D @ D.T, target)
    return FactorizationResult(
        factor, residual, dict(Atilde=At, Btilde=Bt, Ctilde=Ct, Ktilde=Kt, Sigmatilde=St, Ptilde=Pt)
    )
