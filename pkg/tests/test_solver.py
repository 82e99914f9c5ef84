import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from pbftqbd.errors import IterationLimitError, StabilityError
from pbftqbd.model import assemble_generator, build_blocks, build_params
from pbftqbd.oracle import truncated_stationary
from pbftqbd.solver import (
    RateIteration,
    check_stability,
    compute_rate_matrix,
    equation_residual,
    inf_norm,
    natural_step,
    right_solve_neg_a1,
    solve,
    solve_boundary,
    spectral_radius,
    stacked_levels,
    stationary_level,
)

from conftest import params_at_rho


def dense_step(r, d):
    """The iteration with an explicit dense inverse, for comparison only."""
    return (r @ r @ d["a2"] + d["a0"]) @ np.linalg.inv(-d["a1"])


def test_theta_f1():
    rep = check_stability(build_params(1, 1, 1))
    np.testing.assert_allclose(rep.theta, [3 / 13, 4 / 13, 6 / 13], rtol=1e-15)
    a = sum(build_blocks(build_params(1, 1, 1)).dense()[k] for k in ("a0", "a1", "a2"))
    np.testing.assert_allclose(rep.theta @ a, 0, atol=1e-14)


@given(st.floats(0.1, 20), st.floats(0.1, 20), st.integers(1, 30))
def test_stability_report_consistent(lam, mu, f):
    p = build_params(lam, mu, f)
    rep = check_stability(p)
    assert rep.theta.min() >= 0
    assert abs(rep.theta.sum() - 1) < 1e-12
    a = sum(build_blocks(p).dense()[k] for k in ("a0", "a1", "a2"))
    assert np.max(np.abs(rep.theta @ a)) < 1e-10 * max(1.0, mu * p.n)
    assert rep.drift_in == pytest.approx(lam, rel=1e-15)
    if abs(rep.rho - 1) > 1e-12:
        assert rep.stable == rep.drift_stable == (rep.rho < 1)


def test_stable_example():
    rep = check_stability(build_params(1, 2, 1))
    assert rep.stable and rep.rho == pytest.approx(13 / 24)


def test_back_substitution_matches_dense_inverse():
    b = build_blocks(build_params(0.8, 1.7, 4))
    y = np.random.default_rng(1).random((9, 9))
    expect = y @ np.linalg.inv(-b.dense()["a1"])
    np.testing.assert_allclose(right_solve_neg_a1(y, b), expect, rtol=1e-13, atol=1e-15)


def test_first_iterate_f1():
    b = build_blocks(build_params(1, 1, 1))
    r1 = natural_step(np.zeros((3, 3)), b)
    expect = [[0.2, 0.2, 0.2], [0, 0.25, 0.25], [0, 0, 1 / 3]]
    np.testing.assert_allclose(r1, expect, rtol=1e-15)
    np.testing.assert_allclose(next(iter(RateIteration(b))), expect, rtol=1e-15)


def test_rank_one_iterates_match_literal_iteration():
    b = build_blocks(build_params(1.0, 1.5, 2))
    d = b.dense()
    r = np.zeros((5, 5))
    for n, it in zip(range(25), RateIteration(b)):
        r = dense_step(r, d)
        np.testing.assert_allclose(it, r, rtol=1e-12, atol=1e-15)


def test_iterates_monotone():
    b = build_blocks(build_params(1, 2, 1))
    prev = np.zeros((3, 3))
    for _, r in zip(range(80), RateIteration(b)):
        assert np.all(r >= prev - 1e-16)
        prev = r
    assert compute_rate_matrix(b).monotone


def test_rate_matrix_residual_and_nonnegativity(small):
    rate = compute_rate_matrix(build_blocks(small))
    d = build_blocks(small).dense()
    r = rate.r
    assert r.min() >= 0
    res = r @ r @ d["a2"] + r @ d["a1"] + d["a0"]
    assert np.max(np.abs(res)) <= 1e-10
    assert rate.residual == pytest.approx(equation_residual(r, build_blocks(small)), abs=1e-14)
    assert inf_norm(dense_step(r, d) - r) < 1e-12
    assert spectral_radius(rate) < 1
    assert np.linalg.cond(np.eye(3) - r) < 1e6


def test_rate_matrix_matches_oracle_ratios(small):
    rate = compute_rate_matrix(build_blocks(small))
    sol = truncated_stationary(small, 200)
    p = np.array([sol.level(k) for k in (1, 2, 3)])
    q = np.array([sol.level(k) for k in (2, 3, 4)])
    r_oracle = np.linalg.solve(p, q)
    np.testing.assert_allclose(rate.r, r_oracle, atol=1e-6)


def test_unstable_rejected():
    with pytest.raises(StabilityError):
        compute_rate_matrix(build_blocks(build_params(1, 1, 1)))


def test_boundary_at_rho_one_rejected():
    p = params_at_rho(1.0, 1.0, 1)
    with pytest.raises(StabilityError):
        solve(p)


def test_iteration_limit():
    with pytest.raises(IterationLimitError) as info:
        compute_rate_matrix(build_blocks(build_params(1, 2, 1)), max_iter=3)
    assert info.value.residual > 0


def test_bad_tolerances():
    b = build_blocks(build_params(1, 2, 1))
    with pytest.raises(ValueError):
        compute_rate_matrix(b, tol=0)
    with pytest.raises(ValueError):
        compute_rate_matrix(b, max_iter=0)


@pytest.mark.parametrize("rho, mu, f", [(0.54, 2, 1), (0.3, 5, 3), (0.8, 1, 2), (0.95, 1, 5)])
def test_boundary_system(rho, mu, f):
    p = params_at_rho(rho, mu, f)
    b = build_blocks(p)
    d = b.dense()
    sol = solve_boundary(b, compute_rate_matrix(b))
    r = sol.r
    assert sol.pi0 >= 0 and sol.pi1.min() >= 0
    assert abs(sol.total_mass() - 1) < 1e-10
    assert np.max(np.abs(sol.pi0 * d["b1"] + sol.pi1 @ d["b2"])) < 1e-10
    assert np.max(np.abs(sol.pi0 * d["b0"] + sol.pi1 @ (d["a1"] + r @ d["a2"]))) < 1e-10


def test_boundary_matches_oracle(small):
    sol = solve(small)
    ora = truncated_stationary(small, 200)
    assert abs(sol.pi0 - ora.level(0)[0]) < 1e-8
    np.testing.assert_allclose(sol.pi1, ora.level(1), atol=1e-8)
    np.testing.assert_allclose(stationary_level(sol, 3), ora.level(3), atol=1e-8)


def test_stationary_level_one_is_pi1(small):
    sol = solve(small)
    assert np.array_equal(stationary_level(sol, 1), sol.pi1)
    with pytest.raises(ValueError):
        stationary_level(sol, 0)


@pytest.mark.parametrize("rho, mu, f", [(0.54, 2, 1), (0.7, 1, 3)])
def test_interior_global_balance(rho, mu, f):
    p = params_at_rho(rho, mu, f)
    sol = solve(p)
    d = sol.blocks.dense()
    for k in range(2, 11):
        lhs = (stationary_level(sol, k - 1) @ d["a0"] + stationary_level(sol, k) @ d["a1"]
               + stationary_level(sol, k + 1) @ d["a2"])
        assert np.max(np.abs(lhs)) < 1e-10


def test_full_truncated_expansion_balance():
    p = params_at_rho(0.6, 1.0, 2)
    sol = solve(p)
    sr = spectral_radius(sol.rate_matrix)
    levels = int(np.ceil(np.log(1e-13) / np.log(sr))) + 5
    pi = stacked_levels(sol, levels)
    q = assemble_generator(sol.blocks, levels)
    resid = q.T @ pi
    s = sol.blocks.size
    assert np.max(np.abs(resid[: 1 + (levels - 1) * s])) < 1e-9
    assert abs(pi.sum() - 1) < 1e-11


@settings(max_examples=60, deadline=None)
@given(st.integers(1, 5), st.floats(0.5, 1.5), st.floats(0.2, 10))
def test_stability_predicates_agree(f, rho, mu):
    p = params_at_rho(rho, mu, f)
    rep = check_stability(p)
    if abs(rep.rho - 1) > 1e-9:
        assert rep.stable == rep.drift_stable
