import numpy as np
import pytest

from infotrap import (
    Environment,
    GaussianPrior,
    SpanError,
    asymptotic_variance,
    beta_phi_lambda,
    check_assumptions,
    construct_trap_prior,
    enumerate_minimal_spanning_sets,
    is_subspace_optimal,
    phi_by_l1,
    simulate,
    subspace_closure,
)

from conftest import random_environment


def test_enumerate_example2(example2):
    reports = enumerate_minimal_spanning_sets(example2)
    assert [r.indices for r in reports] == [(1, 2), (0,)]
    assert reports[0].phi == pytest.approx(2 / 3, abs=1e-12)
    assert reports[1].phi == pytest.approx(1.0, abs=1e-12)


def test_enumerate_precise_info(precise_info):
    reports = enumerate_minimal_spanning_sets(precise_info)
    by_set = {r.indices: r.phi for r in reports}
    assert by_set[(2, 3)] == pytest.approx(3 / 16, abs=1e-12)
    assert by_set[(0, 1)] == pytest.approx(1 / 5, abs=1e-12)
    assert reports[0].indices == (2, 3)


def test_enumerate_trivial_two_state():
    env = Environment([[1, 0], [0, 1]])
    reports = enumerate_minimal_spanning_sets(env)
    assert [r.indices for r in reports] == [(0,)]
    assert reports[0].phi == pytest.approx(1.0)


def test_enumerate_rejects_multi_direction():
    env = Environment([[1, 0], [0, 1]], objective=[(1.0, [1, 0]), (1.0, [0, 1])])
    with pytest.raises(SpanError):
        enumerate_minimal_spanning_sets(env)


def test_beta_phi_lambda_example2(example2):
    report = beta_phi_lambda(example2, [1, 2])
    assert report.beta[1] == pytest.approx(1 / 3, abs=1e-12)
    assert report.beta[2] == pytest.approx(-1 / 3, abs=1e-12)
    assert report.phi == pytest.approx(2 / 3, abs=1e-12)
    assert report.lambda_star.weights == pytest.approx([0, 0.5, 0.5], abs=1e-12)


def test_beta_phi_lambda_precise_info(precise_info):
    report = beta_phi_lambda(precise_info, [2, 3])
    assert report.beta[2] == pytest.approx(1 / 8, abs=1e-12)
    assert report.beta[3] == pytest.approx(1 / 16, abs=1e-12)
    assert report.phi == pytest.approx(3 / 16, abs=1e-12)
    assert report.lambda_star.weights == pytest.approx([0, 0, 2 / 3, 1 / 3], abs=1e-12)


def test_beta_phi_lambda_scalar():
    env = Environment([[2.0]])
    report = beta_phi_lambda(env, [0])
    assert report.beta[0] == pytest.approx(0.5)
    assert report.phi == pytest.approx(0.5)
    assert report.lambda_star.weights == pytest.approx([1.0])


def test_beta_phi_lambda_rejects_bad_sets(example2):
    with pytest.raises(SpanError):
        beta_phi_lambda(example2, [2])  # does not span the target
    with pytest.raises(SpanError):
        beta_phi_lambda(example2, [0, 1])  # representation forces a zero weight


def test_representation_residual(example2, precise_info):
    for env in (example2, precise_info):
        u = env.single_direction()
        for report in enumerate_minimal_spanning_sets(env):
            recon = report.beta_vector(env.num_sources) @ env.coefficients
            assert np.max(np.abs(recon - u)) < 1e-9
            assert report.phi == pytest.approx(
                sum(abs(b) for b in report.beta.values()), abs=1e-12
            )
            assert report.lambda_star.simplex_normalized


def test_phi_by_l1(example2, precise_info):
    assert phi_by_l1(example2)[0] == pytest.approx(2 / 3, abs=1e-12)
    assert phi_by_l1(precise_info)[0] == pytest.approx(3 / 16, abs=1e-12)


def test_phi_by_l1_duplicate_sources():
    # splitting weight across identical sources does not shrink the total
    env = Environment([[1.0], [1.0]])
    value, beta = phi_by_l1(env)
    assert value == pytest.approx(1.0, abs=1e-12)


def test_phi_by_l1_infeasible():
    env = Environment([[0.0, 1.0]])  # the target is orthogonal to every source
    with pytest.raises(SpanError):
        phi_by_l1(env)


def test_phi_by_l1_matches_enumeration_randomized():
    rng = np.random.default_rng(42)
    done = 0
    while done < 50:
        env = random_environment(rng, n=int(rng.integers(2, 7)), k=int(rng.integers(1, 4)))
        try:
            reports = enumerate_minimal_spanning_sets(env)
        except SpanError:
            continue
        if not reports:
            continue
        done += 1
        assert phi_by_l1(env)[0] == pytest.approx(reports[0].phi, rel=1e-10)


def test_subspace_closure():
    env = Environment([[1.0], [2.0]])
    assert subspace_closure(env, [0]) == (0, 1)


def test_subspace_closure_example2(example2):
    assert subspace_closure(example2, [0]) == (0,)
    assert subspace_closure(example2, [0, 1, 2]) == (0, 1, 2)


def test_is_subspace_optimal():
    env = Environment([[1.0], [2.0]])
    assert not is_subspace_optimal(env, [0])  # the faster source shares its span
    assert is_subspace_optimal(env, [1])


def test_is_subspace_optimal_example2(example2):
    assert is_subspace_optimal(example2, [0])
    assert is_subspace_optimal(example2, [1, 2])


def test_check_assumptions_parity_env(parity_env):
    report = check_assumptions(parity_env)
    assert not report.unique_minimizer
    assert report.witnesses  # the tied pair of spanning sets is reported


def test_check_assumptions_example2(example2):
    report = check_assumptions(example2)
    assert report.unique_minimizer
    assert report.gap == pytest.approx(1 / 3, abs=1e-9)
    assert report.strong_linear_independence
    assert report.unique_minimizer_every_subspace
    assert not report.all_minimal_sets_size_K


def test_check_assumptions_generic_env():
    rng = np.random.default_rng(5)
    for _ in range(5):
        env = random_environment(rng, n=5, k=3)
        report = check_assumptions(env)
        assert report.all_minimal_sets_size_K
        assert report.strong_linear_independence


def test_construct_trap_prior_example2(example2):
    prior = construct_trap_prior(example2, [0], eps=0.01)
    assert np.diag(prior.covariance) == pytest.approx([0.01, 100.0], rel=1e-12)
    assert abs(prior.covariance[0, 1]) < 1e-12
    trace = simulate(example2, prior, 500)
    assert trace.classification.kind == "trap"
    assert trace.classification.trapped == (0,)
    assert all(c == 0 for c in trace.choices)


def test_construct_trap_prior_best_set_is_efficient(example2):
    prior = construct_trap_prior(example2, [1, 2], eps=0.01)
    trace = simulate(example2, prior, 2000)
    assert trace.classification.kind == "efficient"
    assert trace.frequency_estimate.weights == pytest.approx([0, 0.5, 0.5], abs=0.05)


def test_construct_trap_prior_example3(example3):
    prior = construct_trap_prior(example3, [2, 3, 4], eps=1e-4)
    trace = simulate(example3, prior, 2000)
    assert trace.classification.kind == "trap"
    assert trace.classification.trapped == (2, 3, 4)
    assert trace.inefficiency_ratio == pytest.approx(15.0, rel=1e-9)


def test_construct_trap_prior_rejects_dominated_set():
    env = Environment([[1.0], [2.0]])
    with pytest.raises(SpanError):
        construct_trap_prior(env, [0], eps=0.01)


def test_construct_trap_prior_rejects_full_rank_suboptimal():
    # both sets span the whole two-dimensional state space; only the best works
    env = Environment([[1, 0], [2, 0], [0, 1]])
    with pytest.raises(SpanError, match="best set|subspace"):
        construct_trap_prior(env, [0], eps=0.01)


def test_lambda_star_attains_squared_phi(example2, precise_info):
    rng = np.random.default_rng(7)
    for env in (example2, precise_info):
        reports = enumerate_minimal_spanning_sets(env)
        star = reports[0]
        assert asymptotic_variance(env, star.lambda_star) == pytest.approx(
            star.phi**2, abs=1e-10
        )
        for _ in range(1000):
            lam = rng.dirichlet(np.ones(env.num_sources))
            assert asymptotic_variance(env, lam) >= star.phi**2 - 1e-10
