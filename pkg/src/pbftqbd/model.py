"""Model parameters and QBD generator blocks of the PBFT consensus queue.

The chain is {(K(t), M(t))}: K is the number of transaction packages at the
client and M in 0..2f is the number of nodes that have verified the package
currently in consensus.  Level 0 is the single empty state (0, 0); every level
k >= 1 holds the 2f+1 phases m = 0..2f.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp

from .errors import ArrivalRateError, ByzantineCountError, RewardError, ServiceRateError


@dataclass(frozen=True)
class ModelParams:
    """One instance of the model.  ``n`` is always ``3f + 1``."""

    lam: float
    mu: float
    f: int
    c: float

    @property
    def n(self) -> int:
        return 3 * self.f + 1

    @property
    def phases(self) -> int:
        return 2 * self.f + 1

    @property
    def peg_rate(self) -> float:
        """Completion rate (N - 2f) mu of the last verification phase."""
        return (self.n - 2 * self.f) * self.mu


def build_params(lam: float, mu: float, f: int, c: float = 0.0) -> ModelParams:
    """Validate the four free scalars and return a :class:`ModelParams`."""
    if not (isinstance(lam, (int, float)) and math.isfinite(lam) and lam > 0):
        raise ArrivalRateError("lambda", lam, "must be a finite positive rate")
    if not (isinstance(mu, (int, float)) and math.isfinite(mu) and mu > 0):
        raise ServiceRateError("mu", mu, "must be a finite positive rate")
    if isinstance(f, bool) or not isinstance(f, (int, np.integer)) or f < 1:
        raise ByzantineCountError("f", f, "must be an integer >= 1")
    if not (isinstance(c, (int, float)) and math.isfinite(c) and c >= 0):
        raise RewardError("c", c, "must be a finite nonnegative reward")
    return ModelParams(lam=float(lam), mu=float(mu), f=int(f), c=float(c))


def utilization(params: ModelParams) -> float:
    """rho = (lambda / mu) * sum_{k=0}^{2f} 1 / (N - k), summed term by term."""
    n = params.n
    total = math.fsum(1.0 / (n - k) for k in range(2 * params.f + 1))
    return params.lam / params.mu * total


def _frozen(a: np.ndarray) -> np.ndarray:
    a.setflags(write=False)
    return a


@dataclass(frozen=True)
class GeneratorBlocks:
    """Structured storage of the six blocks of the level-independent QBD.

    ``a1`` is upper bidiagonal and kept as its diagonal and superdiagonal;
    ``a0`` is ``lam * I``; ``b0``, ``b2`` and ``a2`` each carry a single
    nonzero, stored as (index, value).
    """

    params: ModelParams
    b1: float
    b0: tuple[int, float]
    b2: tuple[int, float]
    a0: float
    a1_diag: np.ndarray
    a1_sup: np.ndarray
    a2: tuple[int, int, float]

    @property
    def size(self) -> int:
        return self.a1_diag.shape[0]

    def dense(self) -> dict[str, np.ndarray]:
        """Expand every block into a dense array (for tests and small cases)."""
        s = self.size
        b0 = np.zeros((1, s))
        b0[0, self.b0[0]] = self.b0[1]
        b2 = np.zeros((s, 1))
        b2[self.b2[0], 0] = self.b2[1]
        a2 = np.zeros((s, s))
        a2[self.a2[0], self.a2[1]] = self.a2[2]
        a1 = np.diag(self.a1_diag) + np.diag(self.a1_sup, 1)
        return {
            "b1": np.array([[self.b1]]),
            "b0": b0,
            "b2": b2,
            "a0": self.a0 * np.eye(s),
            "a1": a1,
            "a2": a2,
        }


def build_blocks(params: ModelParams) -> GeneratorBlocks:
    lam, mu, f, n = params.lam, params.mu, params.f, params.n
    m = np.arange(2 * f + 1)
    speed = (n - m) * mu
    return GeneratorBlocks(
        params=params,
        b1=-lam,
        b0=(0, lam),
        b2=(2 * f, params.peg_rate),
        a0=lam,
        a1_diag=_frozen(-speed - lam),
        a1_sup=_frozen(speed[:-1].copy()),
        a2=(2 * f, 0, params.peg_rate),
    )


def assemble_generator(blocks: GeneratorBlocks, levels: int) -> sp.csr_matrix:
    """Block-assemble Q over levels 0..``levels`` from the QBD blocks.

    The last level keeps its ``A1`` diagonal but has no ``A0`` block, so its
    rows do not sum to zero (the missing mass is the arrival outflow).
    """
    if levels < 1:
        raise ValueError("levels must be >= 1")
    d = blocks.dense()
    a0 = sp.csr_matrix(d["a0"])
    a1 = sp.csr_matrix(d["a1"])
    a2 = sp.csr_matrix(d["a2"])
    grid: list[list[sp.spmatrix | None]] = [[None] * (levels + 1) for _ in range(levels + 1)]
    grid[0][0] = sp.csr_matrix(d["b1"])
    grid[0][1] = sp.csr_matrix(d["b0"])
    grid[1][0] = sp.csr_matrix(d["b2"])
    for k in range(1, levels + 1):
        grid[k][k] = a1
        if k < levels:
            grid[k][k + 1] = a0
        if k >= 2:
            grid[k][k - 1] = a2
    return sp.bmat(grid, format="csr")
