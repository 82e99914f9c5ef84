"""Stationary performance measures of the PBFT queue.

All ``(I - R)^{-1}`` products are linear solves against the LU factors held
by the :class:`~pbftqbd.solver.StationarySolution`.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp

from .model import GeneratorBlocks, ModelParams
from .solver import DEFAULT_MAX_ITER, DEFAULT_TOL, StationarySolution, solve, stacked_levels


@dataclass(frozen=True)
class PerformanceMetrics:
    e_k: float
    e_m: float
    gamma: float
    upsilon: float
    # gamma - lambda; zero up to rounding for a stable loss-free queue
    gamma_minus_lambda: float = float("nan")


def verified_weights(f: int) -> np.ndarray:
    """phi = (0, 1, ..., 2f)^T."""
    return np.arange(2 * f + 1, dtype=float)


def expected_packages(solution: StationarySolution) -> float:
    """E[K] = pi1 (I - R)^{-2} e."""
    s = solution.r.shape[0]
    y = solution.solve(np.ones(s))
    z = solution.solve(y)
    return max(float(solution.pi1 @ z), 0.0)


def expected_verified_nodes(solution: StationarySolution) -> float:
    """E[M] = pi1 (I - R)^{-1} phi."""
    phi = verified_weights(solution.blocks.params.f)
    return max(float(solution.pi1 @ solution.solve(phi)), 0.0)


def block_pegged_rate(solution: StationarySolution, blocks: GeneratorBlocks | None = None) -> float:
    """gamma = pi1 B2 e + pi1 R (I - R)^{-1} A2 e."""
    blocks = blocks or solution.blocks
    s = blocks.size
    b2e = np.zeros(s)
    b2e[blocks.b2[0]] = blocks.b2[1]
    row, _, a = blocks.a2
    a2e = np.zeros(s)
    a2e[row] = a
    head = float(solution.pi1 @ b2e)
    tail = float((solution.pi1 @ solution.r) @ solution.solve(a2e))
    return head + tail


def major_node_reward(gamma: float, params: ModelParams) -> float:
    """Upsilon = gamma c / N."""
    if gamma < 0:
        raise ValueError("gamma must be nonnegative")
    return gamma * params.c / params.n


def measures(solution: StationarySolution) -> PerformanceMetrics:
    params = solution.blocks.params
    gamma = block_pegged_rate(solution)
    return PerformanceMetrics(
        e_k=expected_packages(solution),
        e_m=expected_verified_nodes(solution),
        gamma=gamma,
        upsilon=major_node_reward(gamma, params),
        gamma_minus_lambda=gamma - params.lam,
    )


def evaluate_all(
    params: ModelParams, tol: float = DEFAULT_TOL, max_iter: int = DEFAULT_MAX_ITER
) -> PerformanceMetrics:
    """Full analytic pipeline for one parameter point.

    Raises :class:`~pbftqbd.errors.StabilityError` for rho >= 1 instead of
    returning partial results.
    """
    return measures(solve(params, tol=tol, max_iter=max_iter))


def map_matrices(blocks: GeneratorBlocks, levels: int) -> tuple[sp.csr_matrix, sp.csr_matrix]:
    """Truncated (C, D) split of the block-pegging MAP over levels 0..``levels``.

    D holds the level-down transitions (``B2``, ``A2``) that peg a block, C
    everything else; ``C + D`` equals the truncated generator.
    """
    d = blocks.dense()
    c_grid: list[list] = [[None] * (levels + 1) for _ in range(levels + 1)]
    d_grid: list[list] = [[None] * (levels + 1) for _ in range(levels + 1)]
    c_grid[0][0] = sp.csr_matrix(d["b1"])
    c_grid[0][1] = sp.csr_matrix(d["b0"])
    d_grid[1][0] = sp.csr_matrix(d["b2"])
    d_grid[0][0] = sp.csr_matrix((1, 1))
    for k in range(1, levels + 1):
        c_grid[k][k] = sp.csr_matrix(d["a1"])
        d_grid[k][k] = sp.csr_matrix((blocks.size, blocks.size))
        if k < levels:
            c_grid[k][k + 1] = sp.csr_matrix(d["a0"])
        if k >= 2:
            d_grid[k][k - 1] = sp.csr_matrix(d["a2"])
    return sp.bmat(c_grid, format="csr"), sp.bmat(d_grid, format="csr")


def gamma_from_map(solution: StationarySolution, levels: int) -> float:
    """pi D e with the truncated MAP representation."""
    _, dm = map_matrices(solution.blocks, levels)
    pi = stacked_levels(solution, levels)
    return float(pi @ (dm @ np.ones(dm.shape[0])))


__all__ = [
    "PerformanceMetrics",
    "block_pegged_rate",
    "evaluate_all",
    "expected_packages",
    "expected_verified_nodes",
    "gamma_from_map",
    "major_node_reward",
    "map_matrices",
    "measures",
    "verified_weights",
]
