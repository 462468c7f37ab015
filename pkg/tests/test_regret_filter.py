import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from regretopt.exceptions import Infeasible
from regretopt.factorization import estimation_T_factor
from regretopt.noncausal import worst_case_regret_ratio
from regretopt.regret_filter import (
    augmented_estimation_system,
    optimal_regret_filter,
    synthesize_regret_filter,
)

from _oracles import (
    anticausal_part,
    estimation_ops,
    filter_regret_ratio,
    probe_filter,
    random_estimation,
    scalar_estimation,
    sdp_filter,
)

seeds = st.integers(0, 2**32 - 1)
dims = st.integers(1, 3)

# frozen from the SDP oracle
SCALAR3_OPT = 0.244325735566


def test_two_step_scalar_has_no_regret():
    # the only informative measurement arrives in time for the only nonzero target
    cert, f = optimal_regret_filter(scalar_estimation(), tol=1e-6)
    assert cert.gamma_opt < 1e-3
    assert filter_regret_ratio(scalar_estimation(), probe_filter(scalar_estimation(), f)) < 1e-6


def test_scalar_optimum():
    sys = scalar_estimation(3)
    assert sdp_filter(sys) == pytest.approx(SCALAR3_OPT, rel=1e-6)
    cert, f = optimal_regret_filter(sys, tol=1e-8)
    assert cert.gamma_opt**2 == pytest.approx(SCALAR3_OPT, rel=1e-6)
    assert filter_regret_ratio(sys, probe_filter(sys, f)) == pytest.approx(SCALAR3_OPT, rel=1e-6)


def test_zero_measurements_give_zero_estimate():
    sys = random_estimation(np.random.default_rng(0), 6, 2, 1, 1, 1)
    _, f = optimal_regret_filter(sys)
    assert np.all(f.run(np.zeros((6, 1))) == 0)


def test_feasibility_brackets_optimum():
    sys = random_estimation(np.random.default_rng(1), 5, 2, 2, 1, 1)
    g = np.sqrt(filter_regret_ratio(sys, probe_filter(sys, optimal_regret_filter(sys, tol=1e-6)[1])))
    synthesize_regret_filter(sys, 2 * g)
    with pytest.raises(Infeasible):
        synthesize_regret_filter(sys, 0.5 * g)


def test_rejects_nonpositive_level():
    with pytest.raises(ValueError):
        synthesize_regret_filter(scalar_estimation(), -1.0)


@settings(max_examples=30, deadline=None)
@given(seed=seeds, T=st.integers(1, 8), n=dims, m=dims, p=dims, r=dims, factor=st.sampled_from([1.01, 1.5, 4.0]))
def test_regret_bound_holds_at_feasible_levels(seed, T, n, m, p, r, factor):
    sys = random_estimation(np.random.default_rng(seed), T, n, m, p, r)
    cert, _ = optimal_regret_filter(sys, tol=1e-6)
    gamma = factor * max(cert.gamma_opt, 1e-2)
    K = probe_filter(sys, synthesize_regret_filter(sys, gamma))
    assert filter_regret_ratio(sys, K) <= gamma**2 * (1 + 1e-6) + 1e-12
    assert anticausal_part(K, T, r, p) < 1e-9


@settings(max_examples=10, deadline=None)
@given(seed=seeds, T=st.integers(3, 6), n=dims, m=dims, p=dims, r=st.integers(1, 2))
def test_bisection_matches_sdp(seed, T, n, m, p, r):
    sys = random_estimation(np.random.default_rng(seed), T, n, m, p, r)
    opt = sdp_filter(sys)
    cert, f = optimal_regret_filter(sys, tol=1e-7)
    # T >= 3: with T = 2 the optimum can be 0, where gamma only resolves to ~1e-3
    assert cert.gamma_opt**2 == pytest.approx(opt, rel=1e-4, abs=1e-6)
    assert worst_case_regret_ratio(sys, f) == pytest.approx(opt, rel=1e-4, abs=1e-6)


def test_reduction_to_level_one():
    # the filter equals T composed with the level-one estimator of T^-1 L u
    rng = np.random.default_rng(2)
    sys = random_estimation(rng, 5, 2, 1, 2, 1)
    gamma = 1.5
    f = synthesize_regret_filter(sys, gamma)
    tf = estimation_T_factor(sys, gamma)
    Td = tf.factor.dense()
    H, L = estimation_ops(sys)
    aug = augmented_estimation_system(sys, tf)
    Ha, La = estimation_ops(aug)
    np.testing.assert_allclose(Ha, H, atol=1e-10)
    np.testing.assert_allclose(Td @ La, L, atol=1e-9)
    K = probe_filter(sys, f)
    Kg = probe_filter(sys, f.hinf)
    np.testing.assert_allclose(K, Td @ Kg, atol=1e-9)
    E = np.hstack([Kg @ Ha - La, Kg])
    assert np.linalg.eigvalsh(E.T @ E)[-1] < 1 + 1e-9


def test_causal_prefix_and_batch():
    rng = np.random.default_rng(3)
    sys = random_estimation(rng, 7, 2, 1, 2, 1)
    _, f = optimal_regret_filter(sys)
    y = rng.normal(size=(7, 2))
    y2 = y.copy()
    y2[4:] = rng.normal(size=(3, 2))
    np.testing.assert_array_equal(f.run(y)[:4], f.run(y2)[:4])
    Y = np.stack([y, y2], axis=2)
    out = f.run(Y)
    np.testing.assert_allclose(out[:, :, 1], f.run(y2), atol=1e-13)
