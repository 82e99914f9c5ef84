"""Brute-force truncated-chain solver used as ground truth.

The generator over levels 0..L is built by enumerating the transitions of
the chain state by state, without going through the QBD blocks, and
``pi Q = 0, pi e = 1`` is solved with a sparse direct factorization.  The
last level is reflecting: arrivals there are dropped, diagonal included.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .errors import SingularSystemError, StabilityError, TruncationError
from .metrics import PerformanceMetrics
from .model import ModelParams, utilization

DEFAULT_TAIL_THRESHOLD = 1e-10
MIN_LEVEL_CAP = 10


@dataclass(frozen=True)
class TruncatedSolution:
    level_cap: int
    probabilities: np.ndarray
    tail_mass_estimate: float
    phases: int

    def level(self, k: int) -> np.ndarray:
        """Probabilities of level k (length 1 for level 0)."""
        if k == 0:
            return self.probabilities[:1]
        start = 1 + (k - 1) * self.phases
        return self.probabilities[start : start + self.phases]

    def level_masses(self) -> np.ndarray:
        tail = self.probabilities[1:].reshape(self.level_cap, self.phases).sum(axis=1)
        return np.concatenate([self.probabilities[:1], tail])


def state_index(k: int, m: int, phases: int) -> int:
    return 0 if k == 0 else 1 + (k - 1) * phases + m


def truncated_generator(params: ModelParams, level_cap: int) -> sp.csr_matrix:
    """Sparse generator over levels 0..level_cap with a reflecting top level."""
    lam, mu, f, n = params.lam, params.mu, params.f, params.n
    phases = 2 * f + 1
    size = 1 + level_cap * phases
    rows: list[int] = []
    cols: list[int] = []
    vals: list[float] = []

    def add(src: int, dst: int, rate: float) -> None:
        rows.append(src)
        cols.append(dst)
        vals.append(rate)

    add(0, state_index(1, 0, phases), lam)
    for k in range(1, level_cap + 1):
        for m in range(phases):
            here = state_index(k, m, phases)
            if k < level_cap:
                add(here, state_index(k + 1, m, phases), lam)
            if m < 2 * f:
                add(here, state_index(k, m + 1, phases), (n - m) * mu)
            else:
                add(here, state_index(k - 1, 0, phases), (n - 2 * f) * mu)

    q = sp.coo_matrix((vals, (rows, cols)), shape=(size, size)).tocsr()
    out = np.asarray(q.sum(axis=1)).ravel()
    return (q - sp.diags(out)).tocsr()


def default_level_cap(rho: float, tail_threshold: float = DEFAULT_TAIL_THRESHOLD) -> int:
    return max(MIN_LEVEL_CAP, math.ceil(math.log(tail_threshold) / math.log(rho)) + 50)


def truncated_stationary(
    params: ModelParams,
    level_cap: int | None = None,
    tail_threshold: float = DEFAULT_TAIL_THRESHOLD,
) -> TruncatedSolution:
    rho = utilization(params)
    if not rho < 1.0:
        raise StabilityError(rho)
    if level_cap is None:
        level_cap = default_level_cap(rho, tail_threshold)
    if level_cap < MIN_LEVEL_CAP:
        raise ValueError(f"level_cap must be >= {MIN_LEVEL_CAP}")

    q = truncated_generator(params, level_cap)
    size = q.shape[0]
    # pi Q = 0  <=>  Q^T pi^T = 0; the first equation is swapped for sum(pi) = 1.
    a = q.T.tolil()
    a[0, :] = np.ones(size)
    rhs = np.zeros(size)
    rhs[0] = 1.0
    with warnings.catch_warnings():
        warnings.simplefilter("error", spla.MatrixRankWarning)
        try:
            pi = spla.spsolve(a.tocsc(), rhs)
        except spla.MatrixRankWarning as exc:
            raise SingularSystemError("truncated generator", 0.0) from exc
    if not np.all(np.isfinite(pi)) or pi.min() < -1e-14:
        raise SingularSystemError("truncated generator", 0.0)
    pi = np.maximum(pi, 0.0)
    pi = pi / pi.sum()
    pi.setflags(write=False)

    phases = params.phases
    tail = float(pi[1 + (level_cap - 1) * phases :].sum())
    if tail > tail_threshold:
        raise TruncationError(level_cap, tail, tail_threshold)
    return TruncatedSolution(
        level_cap=level_cap, probabilities=pi, tail_mass_estimate=tail, phases=phases
    )


def balance_residual(solution: TruncatedSolution, params: ModelParams) -> float:
    """max |pi Q| for the truncated generator."""
    q = truncated_generator(params, solution.level_cap)
    return float(np.max(np.abs(q.T @ solution.probabilities)))


def oracle_metrics(solution: TruncatedSolution, params: ModelParams) -> PerformanceMetrics:
    """The four measures by direct summation over the truncated distribution."""
    f = params.f
    grid = solution.probabilities[1:].reshape(solution.level_cap, solution.phases)
    levels = np.arange(1, solution.level_cap + 1)
    e_k = float(levels @ grid.sum(axis=1))
    e_m = float(grid.sum(axis=0) @ np.arange(solution.phases))
    gamma = float(grid[:, 2 * f].sum()) * params.peg_rate
    return PerformanceMetrics(
        e_k=e_k,
        e_m=e_m,
        gamma=gamma,
        upsilon=gamma * params.c / params.n,
        gamma_minus_lambda=gamma - params.lam,
    )
