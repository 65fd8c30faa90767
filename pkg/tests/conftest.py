"""Shared fixtures and independent oracles for the test suite."""

from __future__ import annotations

import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from heckman_fa.data import SyntheticSpec
from heckman_fa.dataset import Dataset, FeatureMask

settings.register_profile(
    "default", deadline=None, max_examples=60,
    suppress_health_check=[HealthCheck.too_slow],
)
settings.load_profile("default")

ACCEPTANCE_LINES: list[str] = []


def record_criterion(number: int, passed: bool, detail: str) -> str:
    line = f"[{'PASS' if passed else 'FAIL'}] criterion {number:>2}: {detail}"
    ACCEPTANCE_LINES.append(line)
    print(line)
    return line


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES, key=lambda s: int(s.split("criterion")[1].split(":")[0])):
            terminalreporter.write_line(line)


def mnar_spec(n=10_000, K=6, true=(0, 1, 2, 3), rho=0.5, sigma=1.0) -> SyntheticSpec:
    """Generator with an exclusion restriction: the last two selection
    features do not enter the outcome."""
    beta = np.zeros(K + 1)
    beta[0] = 1.0
    coefs = [1.0, -0.5, 0.8, 0.6, 0.4, -0.3, 0.7, 0.2]
    for j, k in enumerate(true):
        beta[1 + k] = coefs[j]
    gamma = np.zeros(K + 1)
    gamma[0] = 0.2
    gamma[1 + np.arange(K)] = 0.25
    gamma[1 + K - 2:] = 0.9
    return SyntheticSpec(
        n=n, K=K, true_mask=FeatureMask.from_indices(true, K),
        beta=beta, gamma=gamma, rho=rho, sigma=sigma,
    )


def random_dataset(rng: np.random.Generator, n: int, K: int, m: int | None = None) -> Dataset:
    """Unstructured observed/unobserved data for algebraic checks."""
    x = rng.normal(size=(n, K))
    if m is None:
        m = int(rng.integers(max(K + 4, n // 3), n - n // 6))
    s = np.zeros(n, dtype=np.int8)
    s[rng.permutation(n)[:m]] = 1
    y = np.where(s == 1, x @ rng.normal(size=K) + rng.normal(size=n), np.nan)
    return Dataset.from_arrays(x, y)


def relaxed_assign(pi: np.ndarray, g: np.ndarray, tau: float) -> np.ndarray:
    """Softmax weight on the 'assigned' class, written out directly."""
    a0 = np.exp((np.log(pi[0]) + g[0]) / tau)
    a1 = np.exp((np.log(pi[1]) + g[1]) / tau)
    return a1 / (a0 + a1)


def surrogate_mae(pi, pi0, g, tau, data, fit) -> float:
    """MAE when the hard assignment is shifted by the change in the relaxed
    assignment; equals the hard MAE at ``pi0`` and has the straight-through
    gradient there."""
    shift = relaxed_assign(pi, g, tau) - relaxed_assign(pi0, g, tau)
    resid = data.y_obs - fit.fitted - data.x_obs @ (fit.beta_hat[1:] * shift)
    return float(np.mean(np.abs(resid)))


def central_difference(f, pi0: np.ndarray, h: float = 1e-5) -> np.ndarray:
    out = np.zeros_like(pi0)
    for q in range(pi0.shape[0]):
        for k in range(pi0.shape[1]):
            up, dn = pi0.copy(), pi0.copy()
            up[q, k] += h
            dn[q, k] -= h
            out[q, k] = (f(up) - f(dn)) / (2 * h)
    return out


@pytest.fixture
def rng():
    return np.random.default_rng(20240917)
