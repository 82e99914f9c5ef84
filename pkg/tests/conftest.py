from __future__ import annotations

import math

import pytest

from pbftqbd.model import ModelParams, build_params, utilization

ACCEPTANCE: list[tuple[str, bool, str]] = []


def record(criterion: str, passed: bool, detail: str = "") -> None:
    ACCEPTANCE.append((criterion, passed, detail))


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for name, ok, detail in ACCEPTANCE:
        terminalreporter.write_line(f"{'PASS' if ok else 'FAIL'}  {name}  {detail}")


def params_at_rho(rho: float, mu: float, f: int, c: float = 12.5) -> ModelParams:
    """Choose lambda so that utilization equals ``rho``."""
    unit = utilization(build_params(1.0, mu, f, c))
    return build_params(rho / unit, mu, f, c)


def pk_reference(p: ModelParams) -> dict[str, float]:
    """Closed forms for the M/PH/1 queue this chain describes.

    Service is a sum of exponential stages with rates (N - m) mu, so
    Pollaczek-Khinchine gives E[K]; E[M] follows from Little's law per stage.
    """
    rates = [(p.n - m) * p.mu for m in range(2 * p.f + 1)]
    es = math.fsum(1.0 / r for r in rates)
    var = math.fsum(1.0 / r**2 for r in rates)
    rho = p.lam * es
    e_k = rho + p.lam**2 * (var + es**2) / (2.0 * (1.0 - rho))
    e_m = p.lam * math.fsum(m / r for m, r in enumerate(rates))
    return {"rho": rho, "e_k": e_k, "e_m": e_m, "gamma": p.lam}


@pytest.fixture
def small() -> ModelParams:
    return build_params(1.0, 2.0, 1, 12.5)
