import numpy as np
import pytest

from pbftqbd.errors import StabilityError, TruncationError
from pbftqbd.metrics import evaluate_all
from pbftqbd.model import assemble_generator, build_blocks, build_params
from pbftqbd.oracle import (
    balance_residual,
    default_level_cap,
    oracle_metrics,
    truncated_generator,
    truncated_stationary,
)
from pbftqbd.solver import solve, spectral_radius

from conftest import params_at_rho


def test_generator_matches_block_assembly_below_top():
    p = build_params(1.1, 0.9, 2)
    levels = 6
    direct = truncated_generator(p, levels).toarray()
    blocks = assemble_generator(build_blocks(p), levels).toarray()
    s = p.phases
    # identical except on the reflecting top level's diagonal
    top = slice(1 + (levels - 1) * s, None)
    np.testing.assert_array_equal(direct[: top.start], blocks[: top.start])
    off = ~np.eye(direct.shape[0], dtype=bool)
    np.testing.assert_array_equal(direct[off], blocks[off])
    np.testing.assert_allclose(np.diag(direct)[top] - np.diag(blocks)[top], p.lam)
    np.testing.assert_allclose(direct.sum(axis=1), 0, atol=1e-13)


def test_probabilities_normalized(small):
    sol = truncated_stationary(small, 200)
    assert sol.probabilities.min() >= 0
    assert abs(sol.probabilities.sum() - 1) < 1e-12
    assert sol.probabilities.shape == (1 + 200 * 3,)
    assert balance_residual(sol, small) < 1e-10


def test_geometric_tail(small):
    sol = truncated_stationary(small, 200)
    masses = sol.level_masses()
    ratios = masses[11:30] / masses[10:29]
    eta = spectral_radius(solve(small).rate_matrix)
    assert np.ptp(ratios) < 1e-4
    np.testing.assert_allclose(ratios, eta, atol=1e-4)


def test_pi0_matches_analytic(small):
    sol = truncated_stationary(small, 200)
    assert abs(sol.level(0)[0] - solve(small).pi0) < 1e-8


def test_heavy_traffic_needs_depth():
    p = params_at_rho(0.95, 1.0, 1)
    with pytest.raises(TruncationError) as info:
        truncated_stationary(p, 10)
    assert info.value.level_cap == 10


def test_unstable_and_shallow_rejected():
    with pytest.raises(StabilityError):
        truncated_stationary(build_params(1, 1, 1))
    with pytest.raises(ValueError):
        truncated_stationary(build_params(1, 2, 1), 5)


def test_default_level_cap():
    assert default_level_cap(0.5) == 34 + 50
    assert default_level_cap(0.9) == 219 + 50
    assert default_level_cap(1e-6) == 2 + 50


@pytest.mark.parametrize("lam, mu, f", [(1, 2, 1), (1, 3, 3)])
def test_metrics_match_analytic(lam, mu, f):
    p = build_params(lam, mu, f, 12.5)
    o = oracle_metrics(truncated_stationary(p), p)
    a = evaluate_all(p)
    for key in ("e_k", "e_m", "gamma", "upsilon"):
        assert abs(getattr(o, key) - getattr(a, key)) < 1e-6, key


def test_oracle_flow_conservation():
    p = params_at_rho(0.9, 1.0, 2)
    sol = truncated_stationary(p, 150, tail_threshold=1e-3)
    o = oracle_metrics(sol, p)
    assert abs(o.gamma - p.lam) <= sol.tail_mass_estimate * p.peg_rate + 1e-12
