"""Event-by-event simulation of the (K, M) chain.

In state (k, m) the total event rate is ``lam`` when k = 0 and
``lam + (N - m) mu`` otherwise.  Each step draws one holding time and one
uniform to pick the branch:

* arrival (prob. ``lam / total``): k -> k + 1
* verification, m < 2f: m -> m + 1
* block pegged, m = 2f: (k, 2f) -> (k - 1, 0)

Random numbers come from numpy's ``Philox`` bit generator (Philox-4x64-10,
counter based) seeded through ``SeedSequence(seed)``, and are drawn in fixed
blocks of ``CHUNK`` standard exponentials followed by ``CHUNK`` uniforms, so a
reimplementation using the same generator reproduces the event sequence.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass

import numba
import numpy as np
from scipy import stats

from .errors import SimConfigError
from .model import ModelParams, utilization

log = logging.getLogger(__name__)

CHUNK = 1 << 18


@dataclass(frozen=True)
class SimConfig:
    horizon: float = 1e6
    warmup: float | None = None
    seed: int = 20240501
    batches: int = 20

    def __post_init__(self) -> None:
        if not (self.horizon > 0 and np.isfinite(self.horizon)):
            raise SimConfigError(f"horizon must be positive, got {self.horizon!r}")
        if self.warmup is None:
            object.__setattr__(self, "warmup", 0.01 * self.horizon)
        if not (0 <= self.warmup < self.horizon):
            raise SimConfigError(f"warmup must lie in [0, horizon), got {self.warmup!r}")
        if isinstance(self.batches, bool) or int(self.batches) != self.batches or self.batches < 2:
            raise SimConfigError(f"batches must be an integer >= 2, got {self.batches!r}")
        if not (0 <= int(self.seed) < 2**64):
            raise SimConfigError("seed must fit in 64 bits")


@dataclass(frozen=True)
class SimEstimates:
    e_k_mean: float
    e_m_mean: float
    gamma_mean: float
    half_widths: dict[str, float]
    events: int
    pegged_blocks: int
    stable: bool
    batch_means: dict[str, np.ndarray]
    # branch_counts[m] = (arrivals, services) seen from busy states in phase m
    branch_counts: np.ndarray
    trace: np.ndarray | None = None

    def std_errors(self) -> dict[str, float]:
        b = len(self.batch_means["e_k"])
        return {
            key: float(np.std(vals, ddof=1) / np.sqrt(b)) for key, vals in self.batch_means.items()
        }


@numba.njit(cache=True)
def _run_chunk(state, lam, mu, n, f, horizon, warmup, batch_len, expo, unif,
               area_k, area_m, pegs, branch, trace):  # pragma: no cover - compiled
    # state = [t, k, m, events, trace_pos, done]
    t = state[0]
    k = int(state[1])
    m = int(state[2])
    events = int(state[3])
    tpos = int(state[4])
    nb = area_k.shape[0]
    last = 2 * f
    for i in range(expo.shape[0]):
        if k == 0:
            total = lam
        else:
            total = lam + (n - m) * mu
        t_next = t + expo[i] / total
        # time-average accumulation over [max(t, warmup), min(t_next, horizon)]
        lo = t if t > warmup else warmup
        hi = t_next if t_next < horizon else horizon
        while lo < hi:
            b = int((lo - warmup) / batch_len)
            if b >= nb:
                b = nb - 1
            edge = warmup + (b + 1) * batch_len
            seg_end = hi if (hi < edge or b == nb - 1) else edge
            area_k[b] += k * (seg_end - lo)
            area_m[b] += m * (seg_end - lo)
            lo = seg_end
        if t_next >= horizon:
            state[0] = horizon
            state[1] = k
            state[2] = m
            state[3] = events
            state[4] = tpos
            state[5] = 1.0
            return
        t = t_next
        events += 1
        if k == 0 or unif[i] * total < lam:
            if k > 0:
                branch[m, 0] += 1
            k += 1
        else:
            branch[m, 1] += 1
            if m < last:
                m += 1
            else:
                k -= 1
                m = 0
                if t >= warmup:
                    b = int((t - warmup) / batch_len)
                    if b >= nb:
                        b = nb - 1
                    pegs[b] += 1
        if tpos < trace.shape[0]:
            trace[tpos, 0] = t
            trace[tpos, 1] = k
            trace[tpos, 2] = m
            tpos += 1
    state[0] = t
    state[1] = k
    state[2] = m
    state[3] = events
    state[4] = tpos


def simulate(params: ModelParams, config: SimConfig, trace_len: int = 0) -> SimEstimates:
    """Simulate to ``config.horizon`` and return batch-means estimates.

    Stability is not required; unstable runs finish with ``stable=False``.
    ``trace_len`` > 0 records the first states visited as rows (t, k, m).
    """
    rho = utilization(params)
    stable = rho < 1.0
    if not stable:
        log.warning("simulating an unstable instance (rho=%.4f); averages will diverge", rho)

    rng = np.random.Generator(np.random.Philox(np.random.SeedSequence(int(config.seed))))
    nb = int(config.batches)
    window = config.horizon - config.warmup
    batch_len = window / nb
    area_k = np.zeros(nb)
    area_m = np.zeros(nb)
    pegs = np.zeros(nb, dtype=np.int64)
    branch = np.zeros((params.phases, 2), dtype=np.int64)
    trace = np.zeros((trace_len, 3))
    state = np.zeros(6)
    while state[5] == 0.0:
        expo = rng.standard_exponential(CHUNK)
        unif = rng.random(CHUNK)
        _run_chunk(state, params.lam, params.mu, params.n, params.f, config.horizon,
                   config.warmup, batch_len, expo, unif, area_k, area_m, pegs, branch, trace)

    means = {"e_k": area_k / batch_len, "e_m": area_m / batch_len, "gamma": pegs / batch_len}
    tq = stats.t.ppf(0.975, nb - 1)
    half = {key: float(tq * np.std(v, ddof=1) / np.sqrt(nb)) for key, v in means.items()}
    pegged = int(pegs.sum())
    return SimEstimates(
        e_k_mean=float(area_k.sum() / window),
        e_m_mean=float(area_m.sum() / window),
        gamma_mean=pegged / window,
        half_widths=half,
        events=int(state[3]),
        pegged_blocks=pegged,
        stable=stable,
        batch_means=means,
        branch_counts=branch,
        trace=trace if trace_len else None,
    )
