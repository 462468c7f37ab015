"""Clairvoyant comparators and regret evaluation.

Everything here works on dense operators and is meant as ground truth for
small horizons; the synthesis code never calls it.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.linalg

from .systems import (
    ControlSystem,
    EstimationSystem,
    as_signal,
    assemble_control_operators,
    assemble_estimation_operators,
    energy,
    psd_sqrt,
    simulate_control,
    simulate_estimation,
)

SYMMETRY_TOL = 1e-8


@dataclass(frozen=True)
class RegretReport:
    policy_cost: float
    clairvoyant_cost: float
    regret: float
    disturbance_energy: float

    @property
    def ratio(self):
        if self.disturbance_energy <= 0:
            return float("nan")
        return self.regret / self.disturbance_energy


def noncausal_estimator_matrix(sys: EstimationSystem):
    """Dense smoother ``L H' (I + H H')^-1``."""
    H, Lop = assemble_estimation_operators(sys)
    H, Lm = H.matrix, Lop.matrix
    G = np.eye(H.shape[0]) + H @ H.T
    return scipy.linalg.solve(G, H @ Lm.T, assume_a="pos").T


def noncausal_estimate(sys: EstimationSystem, y):
    y = as_signal(y, sys.T, sys.p, "y")
    return (noncausal_estimator_matrix(sys) @ y.reshape(-1)).reshape(sys.T, sys.r)


def noncausal_control_matrix(sys: ControlSystem):
    """Dense map ``w -> u`` of the offline optimum, in original input units."""
    F, G = assemble_control_operators(sys)
    F, G = F.matrix, G.matrix
    Kn = -scipy.linalg.solve(np.eye(F.shape[1]) + F.T @ F, F.T @ G, assume_a="pos")
    Ri = scipy.linalg.block_diag(*sys.r_inv_sqrt())
    return Ri @ Kn


def clairvoyant_cost_matrix(sys: ControlSystem):
    """``G' (I + F F')^-1 G``."""
    F, G = assemble_control_operators(sys)
    F, G = F.matrix, G.matrix
    return G.T @ scipy.linalg.solve(np.eye(F.shape[0]) + F @ F.T, G, assume_a="pos")


def noncausal_control(sys: ControlSystem, w, x0=None):
    """Offline optimal actions for the whole disturbance ``w`` and their cost.

    A nonzero initial state ``x0`` is treated as known in advance, like ``w``.
    """
    w = as_signal(w, sys.T, sys.p, "w")
    if x0 is None:
        u = (noncausal_control_matrix(sys) @ w.reshape(-1)).reshape(sys.T, sys.m)
    else:
        F, G = assemble_control_operators(sys)
        F, G = F.matrix, G.matrix
        xf, _ = simulate_control(sys, np.zeros((sys.T, sys.m)), np.zeros_like(w), x0)
        free = np.einsum("tij,tj->ti", sys.q_sqrt(), xf).reshape(-1)
        un = -scipy.linalg.solve(np.eye(F.shape[1]) + F.T @ F, F.T @ (G @ w.reshape(-1) + free), assume_a="pos")
        u = sys.to_original_input(un.reshape(sys.T, sys.m))
    _, cost = simulate_control(sys, u, w, x0)
    return u, cost


def regret_estimation(sys: EstimationSystem, s_hat, u, v):
    s_hat = as_signal(s_hat, sys.T, sys.r, "s_hat")
    y, s = simulate_estimation(sys, u, v)
    s_nc = noncausal_estimate(sys, y)
    pc = energy(s_hat - s)
    cc = energy(s_nc - s)
    return RegretReport(pc, cc, pc - cc, energy(u) + energy(v))


def regret_control(sys: ControlSystem, u, w):
    _, pc = simulate_control(sys, u, w)
    w = as_signal(w, sys.T, sys.p, "w")
    cc = float(w.reshape(-1) @ clairvoyant_cost_matrix(sys) @ w.reshape(-1))
    return RegretReport(pc, cc, pc - cc, energy(w))


def _policy_fn(policy, sys):
    if hasattr(policy, "run"):
        return lambda w: policy.run(sys, w)[0]
    return policy


def densify_controller(sys: ControlSystem, policy):
    """Dense ``w -> u`` map of a linear policy, found by unit-impulse probing.

    ``policy`` is either a callable ``w -> u`` or an object whose
    ``run(sys, w)`` returns ``u`` first.
    """
    fn = _policy_fn(policy, sys)
    T, p, m = sys.T, sys.p, sys.m
    K = np.zeros((T * m, T * p))
    for j in range(T * p):
        e = np.zeros(T * p)
        e[j] = 1.0
        K[:, j] = np.asarray(fn(e.reshape(T, p)), dtype=float).reshape(-1)
    return K


def densify_filter(sys: EstimationSystem, filt, batch=None):
    """Dense ``y -> s_hat`` map of a linear filter (callable or object with ``run(y)``).

    Objects with ``run`` accept a trailing batch axis and are probed with all
    impulses at once; plain callables get one impulse per call unless
    ``batch`` is true.
    """
    fn = filt.run if hasattr(filt, "run") else filt
    batch = hasattr(filt, "run") if batch is None else batch
    T, p, r = sys.T, sys.p, sys.r
    eye = np.eye(T * p).reshape(T, p, T * p)
    if batch:
        return np.asarray(fn(eye), dtype=float).reshape(T * r, T * p)
    K = np.zeros((T * r, T * p))
    for j in range(T * p):
        K[:, j] = np.asarray(fn(eye[:, :, j]), dtype=float).reshape(-1)
    return K


def _top_eig(M):
    asym = np.max(np.abs(M - M.T), initial=0.0)
    if asym > SYMMETRY_TOL * max(1.0, np.max(np.abs(M), initial=0.0)):
        raise ArithmeticError(f"regret form is not symmetric (residue {asym:.3g})")
    w, V = np.linalg.eigh(0.5 * (M + M.T))
    return float(w[-1]), V[:, -1]


def control_regret_form(sys: ControlSystem, K):
    """Quadratic form in ``w`` of (policy cost - clairvoyant cost) for ``u = K w``."""
    F, G = assemble_control_operators(sys)
    F, G = F.matrix, G.matrix
    Rs = scipy.linalg.block_diag(*[psd_sqrt(r) for r in sys.R])
    Kn = Rs @ K
    S = F @ Kn + G
    return S.T @ S + Kn.T @ Kn - clairvoyant_cost_matrix(sys)


def control_cost_form(sys: ControlSystem, K):
    F, G = assemble_control_operators(sys)
    F, G = F.matrix, G.matrix
    Rs = scipy.linalg.block_diag(*[psd_sqrt(r) for r in sys.R])
    Kn = Rs @ K
    S = F @ Kn + G
    return S.T @ S + Kn.T @ Kn


def worst_case_regret_ratio(sys, policy, return_disturbance=False):
    """``sup regret / energy`` of a linear causal policy.

    For a :class:`ControlSystem` the policy maps ``w`` to ``u``; for an
    :class:`EstimationSystem` it maps ``y`` to ``s_hat`` and the supremum runs
    over stacked ``(u, v)``. With ``return_disturbance`` the maximizing
    disturbance (unit energy) is returned as well.
    """
    if isinstance(sys, ControlSystem):
        form = control_regret_form(sys, densify_controller(sys, policy))
        ratio, vec = _top_eig(form)
        dist = vec.reshape(sys.T, sys.p)
    else:
        form = estimation_regret_form(sys, densify_filter(sys, policy))
        ratio, vec = _top_eig(form)
        k = sys.T * sys.m
        dist = (vec[:k].reshape(sys.T, sys.m), vec[k:].reshape(sys.T, sys.p))
    return (ratio, dist) if return_disturbance else ratio


def worst_case_gain(sys, policy):
    """``sup cost / energy`` (control) or ``sup error / energy`` (filtering)."""
    if isinstance(sys, ControlSystem):
        form = control_cost_form(sys, densify_controller(sys, policy))
    else:
        TK = error_operator(sys, densify_filter(sys, policy))
        form = TK.T @ TK
    return _top_eig(form)[0]


def error_operator(sys: EstimationSystem, K):
    """``[L - K H, -K]`` mapping ``(u, v)`` to the error ``s - s_hat``."""
    H, Lop = assemble_estimation_operators(sys)
    return np.hstack([Lop.matrix - K @ H.matrix, -K])


def estimation_regret_form(sys: EstimationSystem, K):
    TK = error_operator(sys, K)
    Tn = error_operator(sys, noncausal_estimator_matrix(sys))
    return TK.T @ TK - Tn.T @ Tn
