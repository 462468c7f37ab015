import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from regretopt.exceptions import Infeasible
from regretopt.noncausal import worst_case_regret_ratio
from regretopt.regret_controller import (
    augmented_system,
    optimal_regret_controller,
    prepare_control,
    synthesize_regret_controller,
)
from regretopt.factorization import control_delta2

from _oracles import (
    anticausal_part,
    arveson_control,
    control_ops,
    control_regret_ratio,
    probe_controller,
    random_control,
    scalar_control,
)

seeds = st.integers(0, 2**32 - 1)
dims = st.integers(1, 3)

# frozen from the distance oracle: squared anticausal corner norm
SCALAR3_OPT = 0.1
SCALAR4_OPT = 2 / 13


def test_two_step_scalar_has_no_regret():
    # w[1] never reaches the cost, so the causal and offline optima coincide
    cert, c = optimal_regret_controller(scalar_control(), tol=1e-6)
    assert cert.gamma_opt < 1e-5
    assert control_regret_ratio(scalar_control(), probe_controller(scalar_control(), c)) < 1e-10


@pytest.mark.parametrize("T, expected", [(3, SCALAR3_OPT), (4, SCALAR4_OPT)])
def test_scalar_optimum(T, expected):
    sys = scalar_control(T)
    assert arveson_control(sys) == pytest.approx(expected, rel=1e-12)
    cert, c = optimal_regret_controller(sys, tol=1e-8)
    assert cert.gamma_opt**2 == pytest.approx(expected, rel=1e-6)
    assert control_regret_ratio(sys, probe_controller(sys, c)) == pytest.approx(expected, rel=1e-6)


def test_zero_disturbance_gives_zero_control():
    sys = random_control(np.random.default_rng(0), 6, 2, 1, 2)
    _, c = optimal_regret_controller(sys)
    u, x, cost = c.run(sys, np.zeros((6, 2)))
    assert np.all(u == 0) and np.all(x == 0) and cost == 0


def test_feasibility_brackets_optimum():
    sys = random_control(np.random.default_rng(1), 6, 2, 2, 1)
    g = np.sqrt(arveson_control(sys))
    synthesize_regret_controller(sys, 2 * g)
    with pytest.raises(Infeasible):
        synthesize_regret_controller(sys, 0.5 * g)


def test_rejects_nonpositive_level():
    with pytest.raises(ValueError):
        synthesize_regret_controller(scalar_control(), 0.0)


@settings(max_examples=30, deadline=None)
@given(seed=seeds, T=st.integers(1, 8), n=dims, m=dims, p=dims, factor=st.sampled_from([1.001, 1.5, 4.0]))
def test_regret_bound_holds_at_feasible_levels(seed, T, n, m, p, factor):
    sys = random_control(np.random.default_rng(seed), T, n, m, p)
    gamma = factor * max(np.sqrt(arveson_control(sys)), 1e-3)
    K = probe_controller(sys, synthesize_regret_controller(sys, gamma))
    assert control_regret_ratio(sys, K) <= gamma**2 * (1 + 1e-6) + 1e-12
    assert anticausal_part(K, T, m, p) < 1e-9


@settings(max_examples=25, deadline=None)
@given(seed=seeds, T=st.integers(2, 8), n=dims, m=dims, p=dims)
def test_bisection_is_tight(seed, T, n, m, p):
    sys = random_control(np.random.default_rng(seed), T, n, m, p)
    opt = arveson_control(sys)
    cert, c = optimal_regret_controller(sys, tol=1e-7)
    assert cert.gamma_opt**2 == pytest.approx(opt, rel=1e-5, abs=1e-10)
    assert worst_case_regret_ratio(sys, c) == pytest.approx(opt, rel=1e-5, abs=1e-10)


def test_augmented_system_reduction():
    # driven by w' = D2 w, the first copy reproduces the plant; the cost bound
    # |z|^2 + |u|^2 < |w'|^2 is then the regret bound at level gamma
    rng = np.random.default_rng(2)
    sys = random_control(rng, 5, 2, 1, 2)
    gamma = 1.2 * np.sqrt(arveson_control(sys))
    prep = prepare_control(sys)
    d2 = control_delta2(prep.ns, gamma, prep.fwd)
    aug = augmented_system(prep.ns, prep.fwd, d2)
    F, G, _ = control_ops(prep.ns)
    Fa, Ga, _ = control_ops(aug)
    D2 = d2.factor.dense()
    w, u = rng.normal(size=10), rng.normal(size=5)
    zeta_part = (Fa @ u + Ga @ D2 @ w).reshape(5, 4)[:, :2].reshape(-1)
    np.testing.assert_allclose(zeta_part, F @ u + G @ w, atol=1e-9)
    clair = G.T @ np.linalg.solve(np.eye(F.shape[0]) + F @ F.T, G)
    np.testing.assert_allclose(D2.T @ D2, gamma**2 * np.eye(10) + clair, rtol=1e-9, atol=1e-9)


def test_causal_prefix():
    rng = np.random.default_rng(3)
    sys = random_control(rng, 8, 2, 1, 1)
    _, c = optimal_regret_controller(sys)
    w = rng.normal(size=(8, 1))
    w2 = w.copy()
    w2[5:] = rng.normal(size=(3, 1))
    u1, _, _ = c.run(sys, w)
    u2, _, _ = c.run(sys, w2)
    np.testing.assert_array_equal(u1[:5], u2[:5])


def test_batch_run_matches_columns():
    rng = np.random.default_rng(4)
    sys = random_control(rng, 5, 2, 2, 1)
    _, c = optimal_regret_controller(sys)
    W = rng.normal(size=(5, 1, 3))
    U, X, cost = c.run(sys, W)
    for k in range(3):
        u, x, ck = c.run(sys, W[:, :, k])
        np.testing.assert_allclose(U[:, :, k], u, atol=1e-14)
        assert cost[k] == pytest.approx(ck, rel=1e-13)
