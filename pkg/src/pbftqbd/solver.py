"""Stability test, rate matrix and matrix-geometric stationary solution.

The rate matrix is the minimal nonnegative solution of
``R^2 A2 + R A1 + A0 = 0``, computed with the natural fixed-point iteration
``R(n+1) = (R(n)^2 A2 + A0)(-A1)^{-1}`` from ``R(0) = 0``.

Because ``A2`` has a single nonzero entry ``a`` at (2f, 0), ``R^2 A2`` is
``a * (R r) e_0^T`` with ``r`` the last column of ``R``.  Writing
``w = e_0^T (-A1)^{-1}`` every iterate is therefore

    R(n+1) = lam (-A1)^{-1} + v(n) w^T,   v(n) = a R(n) r(n),

so an iteration step costs one matrix-vector product.  ``(-A1)^{-1}`` is only
ever applied by back-substitution on the bidiagonal factor.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from functools import cached_property

import numpy as np
import scipy.linalg as sla

from .errors import IterationLimitError, SingularSystemError, StabilityError
from .model import GeneratorBlocks, ModelParams, utilization

log = logging.getLogger(__name__)

DEFAULT_TOL = 1e-12
DEFAULT_MAX_ITER = 10**6
RESIDUAL_TOL = 1e-10
# Reciprocal condition numbers below this are treated as singular.
RCOND_FLOOR = 1e-13


@dataclass(frozen=True)
class StabilityReport:
    rho: float
    stable: bool
    theta: np.ndarray
    drift_in: float
    drift_out: float

    @property
    def drift_stable(self) -> bool:
        return self.drift_in < self.drift_out


def check_stability(params: ModelParams) -> StabilityReport:
    """Evaluate rho and the mean-drift condition for ``A = A0 + A1 + A2``.

    theta is the stationary vector of ``A``: theta_k proportional to
    N / (N - k).  The drifts are theta A0 e (= lam) and theta A2 e.
    """
    n, f = params.n, params.f
    k = np.arange(2 * f + 1)
    weights = n / (n - k)
    theta = weights / math.fsum(weights)
    drift_in = params.lam * math.fsum(theta)
    drift_out = theta[2 * f] * params.peg_rate
    rho = utilization(params)
    theta.setflags(write=False)
    return StabilityReport(
        rho=rho, stable=rho < 1.0, theta=theta, drift_in=drift_in, drift_out=drift_out
    )


def right_solve_neg_a1(y: np.ndarray, blocks: GeneratorBlocks) -> np.ndarray:
    """Return ``X`` with ``X (-A1) = Y`` by forward column recurrence.

    ``-A1`` is upper bidiagonal, so column j of X only needs column j-1:
    ``X[:, j] = (Y[:, j] + X[:, j-1] * sup[j-1]) / diag[j]``.
    Accepts a matrix or a single row vector.
    """
    diag = -blocks.a1_diag
    sup = blocks.a1_sup  # superdiagonal of A1; -A1 has -sup there
    y = np.asarray(y, dtype=float)
    x = np.empty_like(y)
    x[..., 0] = y[..., 0] / diag[0]
    for j in range(1, diag.shape[0]):
        x[..., j] = (y[..., j] + x[..., j - 1] * sup[j - 1]) / diag[j]
    return x


def natural_step(r: np.ndarray, blocks: GeneratorBlocks) -> np.ndarray:
    """One literal step ``(R^2 A2 + A0)(-A1)^{-1}`` on a dense iterate."""
    row, col, a = blocks.a2
    y = np.zeros_like(r)
    y[:, col] = a * (r @ r[:, row])
    y[np.diag_indices_from(y)] += blocks.a0
    return right_solve_neg_a1(y, blocks)


def equation_residual(r: np.ndarray, blocks: GeneratorBlocks) -> float:
    """Max-abs entry of ``R^2 A2 + R A1 + A0``, evaluated structurally."""
    row, col, a = blocks.a2
    out = r * blocks.a1_diag
    out[:, 1:] += r[:, :-1] * blocks.a1_sup
    out[:, col] += a * (r @ r[:, row])
    out[np.diag_indices_from(out)] += blocks.a0
    return float(np.max(np.abs(out)))


def inf_norm(m: np.ndarray) -> float:
    """Max absolute row sum."""
    return float(np.max(np.sum(np.abs(m), axis=1)))


@dataclass(frozen=True)
class RateMatrix:
    r: np.ndarray
    iterations: int
    residual: float
    spectral_radius_bound: float
    last_step: float = 0.0
    monotone: bool = True


class RateIteration:
    """The natural iteration in rank-one form; no stability precondition.

    Iterating the object yields successive dense iterates ``R(1), R(2), ...``
    on demand; :meth:`advance` moves without forming them.
    """

    def __init__(self, blocks: GeneratorBlocks) -> None:
        self.blocks = blocks
        s = blocks.size
        self.base = right_solve_neg_a1(blocks.a0 * np.eye(s), blocks)
        e0 = np.zeros(s)
        e0[blocks.a2[1]] = 1.0
        self.w = right_solve_neg_a1(e0, blocks)
        self.w_l1 = float(np.sum(np.abs(self.w)))
        self.v = np.zeros(s)
        self.iterations = 1
        self.last_step = inf_norm(self.base)
        self.monotone = True

    def current(self) -> np.ndarray:
        return self.base + np.outer(self.v, self.w)

    def advance(self) -> float:
        """Step to the next iterate; return ``||R(n+1) - R(n)||_inf``."""
        row, _, a = self.blocks.a2
        last_col = self.base[:, row] + self.v * self.w[row]
        v_new = a * (self.base @ last_col + self.v * (self.w @ last_col))
        dv = v_new - self.v
        if np.any(dv < -1e-15 * np.maximum(np.abs(v_new), 1.0)):
            self.monotone = False
        self.v = v_new
        self.iterations += 1
        self.last_step = float(np.max(np.abs(dv))) * self.w_l1
        return self.last_step

    def __iter__(self):
        yield self.current()
        while True:
            self.advance()
            yield self.current()


def compute_rate_matrix(
    blocks: GeneratorBlocks,
    tol: float = DEFAULT_TOL,
    max_iter: int = DEFAULT_MAX_ITER,
    residual_tol: float = RESIDUAL_TOL,
) -> RateMatrix:
    """Run the natural iteration until both stopping rules hold.

    Stops at the first ``n`` with ``||R(n+1) - R(n)||_inf < tol`` *and*
    equation residual of ``R(n)`` at most ``residual_tol``; returns ``R(n)``.
    """
    if tol <= 0:
        raise ValueError("tol must be positive")
    if max_iter < 1:
        raise ValueError("max_iter must be >= 1")
    rho = utilization(blocks.params)
    if not rho < 1.0:
        raise StabilityError(rho)

    it = RateIteration(blocks)
    residual = math.inf
    while it.iterations <= max_iter:
        prev_v = it.v.copy()
        step = it.advance()
        if step < tol:
            r = it.base + np.outer(prev_v, it.w)
            residual = equation_residual(r, blocks)
            if residual <= residual_tol:
                r = np.maximum(r, 0.0)
                r.setflags(write=False)
                iterations = it.iterations - 1
                log.debug("rate matrix converged: %d iterations, residual %.2e", iterations, residual)
                return RateMatrix(
                    r=r,
                    iterations=iterations,
                    residual=residual,
                    spectral_radius_bound=inf_norm(r),
                    last_step=step,
                    monotone=it.monotone,
                )
    if not math.isfinite(residual):
        residual = equation_residual(it.current(), blocks)
    raise IterationLimitError(it.iterations - 1, it.last_step, residual)


def spectral_radius(rate: RateMatrix) -> float:
    """Dominant eigenvalue modulus of R (dense eigen-solve)."""
    return float(np.max(np.abs(np.linalg.eigvals(rate.r))))


def factor(mat: np.ndarray, what: str) -> tuple[np.ndarray, np.ndarray]:
    """LU-factor ``mat``; raise :class:`SingularSystemError` if ill-conditioned."""
    lu, piv = sla.lu_factor(mat, check_finite=True)
    anorm = np.linalg.norm(mat, 1)
    rcond, info = sla.lapack.dgecon(lu, anorm, norm="1")
    if info != 0 or not rcond > RCOND_FLOOR:
        raise SingularSystemError(what, float(rcond))
    return lu, piv


@dataclass(frozen=True)
class StationarySolution:
    pi0: float
    pi1: np.ndarray
    rate_matrix: RateMatrix
    blocks: GeneratorBlocks = field(repr=False)

    @property
    def r(self) -> np.ndarray:
        return self.rate_matrix.r

    @cached_property
    def i_minus_r(self) -> tuple[np.ndarray, np.ndarray]:
        """LU factors of ``I - R``, shared by every measure."""
        s = self.r.shape[0]
        return factor(np.eye(s) - self.r, "I - R")

    def solve(self, rhs: np.ndarray) -> np.ndarray:
        """``(I - R)^{-1} rhs`` for a column vector."""
        return sla.lu_solve(self.i_minus_r, rhs)

    def total_mass(self) -> float:
        """``pi0 + pi1 (I - R)^{-1} e``."""
        return self.pi0 + float(self.pi1 @ self.solve(np.ones(self.r.shape[0])))


def solve_boundary(blocks: GeneratorBlocks, rate: RateMatrix) -> StationarySolution:
    """Solve for (pi0, pi1) from the two boundary balance equations and normalization.

    Unknown row vector x = (pi0, pi1).  The level-0 balance column
    ``pi0 B1 + pi1 B2 = 0`` is redundant and replaced by the normalization
    column ``(1, (I - R)^{-1} e)``.
    """
    s = blocks.size
    r = rate.r
    d = blocks.dense()
    i_minus_r = factor(np.eye(s) - r, "I - R")

    system = np.zeros((s + 1, s + 1))
    system[0, 0] = 1.0
    system[1:, 0] = sla.lu_solve(i_minus_r, np.ones(s))
    system[0, 1:] = d["b0"][0]
    lower = d["a1"].copy()
    row, col, a = blocks.a2
    lower[:, col] += a * r[:, row]
    system[1:, 1:] = lower

    lu = factor(system.T, "boundary system")
    rhs = np.zeros(s + 1)
    rhs[0] = 1.0
    x = sla.lu_solve(lu, rhs)
    x = np.where(np.abs(x) < 1e-300, 0.0, x)
    if np.any(x < -1e-12):
        raise SingularSystemError("boundary system (negative probabilities)", float(x.min()))
    x = np.maximum(x, 0.0)
    pi1 = x[1:]
    pi1.setflags(write=False)
    sol = StationarySolution(pi0=float(x[0]), pi1=pi1, rate_matrix=rate, blocks=blocks)
    sol.__dict__["i_minus_r"] = i_minus_r
    return sol


def stationary_level(solution: StationarySolution, k: int) -> np.ndarray:
    """``pi_k = pi_1 R^{k-1}`` by repeated vector-matrix products."""
    if k < 1:
        raise ValueError("level index must be >= 1")
    v = np.array(solution.pi1)
    for _ in range(k - 1):
        v = v @ solution.r
    return v


def iter_levels(solution: StationarySolution, start: int = 1):
    """Yield ``(k, pi_k)`` for k = start, start+1, ... indefinitely."""
    v = stationary_level(solution, start)
    k = start
    while True:
        yield k, v
        v = v @ solution.r
        k += 1


def stacked_levels(solution: StationarySolution, levels: int) -> np.ndarray:
    """Concatenate pi_0, pi_1, ..., pi_levels into one vector."""
    parts = [np.array([solution.pi0])]
    for k, v in iter_levels(solution):
        if k > levels:
            break
        parts.append(v)
    return np.concatenate(parts)


def solve(
    params: ModelParams, tol: float = DEFAULT_TOL, max_iter: int = DEFAULT_MAX_ITER
) -> StationarySolution:
    """check stability -> blocks -> R -> boundary, in one call."""
    from .model import build_blocks

    report = check_stability(params)
    if not report.stable:
        raise StabilityError(report.rho)
    blocks = build_blocks(params)
    rate = compute_rate_matrix(blocks, tol=tol, max_iter=max_iter)
    return solve_boundary(blocks, rate)
