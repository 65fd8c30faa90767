"""Probit stage, inverse Mills ratio, two-step fit and its diagnostics."""

import math

import mpmath
import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from conftest import mnar_spec, random_dataset
from heckman_fa.data import SyntheticSpec, synthesize
from heckman_fa.dataset import Dataset, FeatureMask
from heckman_fa.errors import DegenerateSelection, InsufficientSamples, SingularDesign
from heckman_fa.selection import (
    PROBIT_TOL,
    add_intercept,
    adjusted_r2,
    estimate_sigma_rho,
    fit_heckman,
    fit_probit,
    inverse_mills,
    lstsq_qr,
    probit_loglik,
    probit_newton,
)


# -- probit ------------------------------------------------------------------


def test_probit_intercept_only_half_ones():
    s = np.array([1, 0] * 50, dtype=float)
    fit = probit_newton(np.ones((100, 1)), s)
    assert fit.converged
    assert abs(fit.gamma_hat[0]) < 1e-12


def test_probit_recovers_slope_and_agrees_with_grid():
    rng = np.random.default_rng(8)
    x = rng.normal(size=10_000)
    x = (x - x.mean()) / x.std()
    s = (0.8 * x + rng.normal(size=10_000) > 0).astype(float)
    design = add_intercept(x[:, None])
    fit = probit_newton(design, s)
    assert abs(fit.gamma_hat[1] - 0.8) < 0.1
    # independent coarse grid over the slope with the intercept profiled on a grid too
    from scipy.stats import norm

    q = 2 * s - 1
    best, arg = -np.inf, None
    for a in np.linspace(-0.3, 0.3, 61):
        for b in np.linspace(0.5, 1.1, 61):
            ll = norm.logcdf(q * (a + b * x)).sum()
            if ll > best:
                best, arg = ll, (a, b)
    assert abs(fit.gamma_hat[1] - arg[1]) <= 0.01 + 1e-9
    assert fit.log_likelihood >= best - 1e-9


def test_probit_degenerate_selection():
    x = np.random.default_rng(0).normal(size=(20, 2))
    with pytest.raises(DegenerateSelection):
        fit_probit(Dataset.from_arrays(x, np.ones(20)))


def test_probit_score_at_optimum_below_tolerance(rng):
    data = random_dataset(rng, 300, 4)
    fit = fit_probit(data)
    design = add_intercept(data.x_sel)
    q = 2.0 * data.s - 1.0
    b = q * (design @ fit.gamma_hat)
    score = design.T @ (q * inverse_mills(b))
    assert np.max(np.abs(score)) < PROBIT_TOL
    assert fit.log_likelihood == pytest.approx(probit_loglik(design, data.s, fit.gamma_hat))


# -- inverse Mills ratio -----------------------------------------------------


def test_imr_at_zero():
    assert inverse_mills(0.0) == pytest.approx(0.7978845608, abs=1e-10)
    assert inverse_mills(0.0) == pytest.approx(math.sqrt(2 / math.pi), rel=1e-15)


def test_imr_upper_tail_vanishes():
    lam = inverse_mills(10.0)
    assert lam < 1e-20
    mpmath.mp.dps = 60
    phi = mpmath.quad(lambda t: mpmath.exp(-t * t / 2), [-mpmath.inf, 10]) / mpmath.sqrt(2 * mpmath.pi)
    ref = mpmath.exp(-50) / mpmath.sqrt(2 * mpmath.pi) / phi
    assert lam == pytest.approx(float(ref), rel=1e-12)


@given(st.floats(1e-6, 35))
def test_imr_reflection_order(a):
    assert inverse_mills(-a) > inverse_mills(a)


@given(st.floats(-1e4, 37), st.floats(1e-9, 10))
def test_imr_positive_and_strictly_decreasing(a, gap):
    # phi itself underflows past ~38.5, so stay where the ratio is representable
    b = min(a + gap, 37.0)
    if b <= a:
        return
    la, lb = inverse_mills(a), inverse_mills(b)
    assert la > 0 and lb > 0
    # at 1e-9 gaps the decrease can be below one ulp; allow equality there only
    assert la > lb or (gap < 1e-6 and la == lb)


# -- two-step fit ------------------------------------------------------------


def test_noiseless_outcome_recovers_slope():
    rng = np.random.default_rng(3)
    n = 2000
    x = rng.normal(size=(n, 3))
    s = (0.3 + x[:, 1] - 0.5 * x[:, 2] + rng.normal(size=n) > 0)
    y = np.where(s, 2.0 * x[:, 0], np.nan)
    data = Dataset.from_arrays(x, y)
    fit = fit_heckman(data, FeatureMask.full(3))
    assert fit.beta_hat[1] == pytest.approx(2.0, abs=1e-6)
    assert abs(fit.beta_h_hat) < 1e-8
    # direct least squares with the IMR column appended
    design = np.column_stack([np.ones(data.m), data.x_obs, fit.lambda_hat])
    direct = np.linalg.lstsq(design, data.y_obs, rcond=None)[0]
    assert fit.beta_h_hat == pytest.approx(direct[-1], abs=1e-10)


def test_unassigned_coefficients_are_exact_zeros(rng):
    data = random_dataset(rng, 400, 5)
    mask = FeatureMask.from_indices([0, 3], 5)
    fit = fit_heckman(data, mask)
    assert np.all(fit.beta_hat[1:][~mask.assigned] == 0.0)
    assert np.all(fit.lambda_hat > 0)
    if fit.sigma_sq_hat > 0:
        assert fit.rho_hat == pytest.approx(fit.beta_h_hat / math.sqrt(fit.sigma_sq_hat))
    else:
        assert fit.rho_hat is None


def test_full_mask_has_worst_imr_conditioning():
    # selection index built from prediction features only: no exclusion restriction
    K = 4
    spec = SyntheticSpec(n=3000, K=K, true_mask=FeatureMask.full(K),
                         beta=[1, 1, -1, 0.5, 0.5], gamma=[0.1, 0.3, 0.3, 0.3, 0.3], rho=0.5)
    data, _ = synthesize(spec, 2)
    probit = fit_probit(data)
    full = fit_heckman(data, FeatureMask.full(K), probit).imr_condition_number
    for code in range(1, 2**K - 1):
        mask = FeatureMask(np.array([(code >> k) & 1 for k in range(K)], dtype=bool))
        assert full > fit_heckman(data, mask, probit).imr_condition_number


def test_sigma_rho_with_zero_correction():
    v = np.array([1.0, -2.0, 0.5])
    sigma_sq, rho = estimate_sigma_rho(v, np.array([0.3, 0.8, 1.2]), np.array([0.1, -0.4, 0.0]), 0.0)
    assert sigma_sq == pytest.approx(np.mean(v**2))
    assert rho == 0.0


def test_sigma_rho_perfect_fit_undefined():
    sigma_sq, rho = estimate_sigma_rho(np.zeros(4), np.ones(4), np.zeros(4), 0.0)
    assert sigma_sq == 0.0 and rho is None


def test_rho_recovered_on_average():
    spec = mnar_spec(n=10_000, rho=0.5)
    rhos = [fit_heckman(synthesize(spec, seed)[0], spec.true_mask).rho_hat for seed in range(50)]
    assert abs(np.mean(rhos) - 0.5) <= 0.2


def test_conditional_variance_identity():
    spec = mnar_spec(n=10_000, rho=0.5)
    emp, theo = [], []
    for seed in range(50):
        data, _ = synthesize(spec, seed)
        fit = fit_heckman(data, spec.true_mask)
        a = spec.gamma[0] + data.x_obs @ spec.gamma[1:]
        lam = inverse_mills(a)
        emp.append(np.mean(fit.residuals**2))
        theo.append(spec.sigma**2 * (1 + spec.rho**2 * np.mean(lam * (-a) - lam**2)))
    assert np.mean(emp) == pytest.approx(np.mean(theo), rel=0.05)


@pytest.mark.parametrize("r2, m, j, expected", [
    (1.0, 50, 3, 1.0),
    (0.5, 101, 10, 1 - 0.5 * 100 / 90),
    (0.0, 101, 10, -1 / 9),
])
def test_adjusted_r2_examples(r2, m, j, expected):
    assert adjusted_r2(r2, m, j) == pytest.approx(expected, rel=1e-15)


def test_adjusted_r2_needs_degrees_of_freedom():
    with pytest.raises(InsufficientSamples):
        adjusted_r2(0.5, 4, 3)


def test_singular_design_detected():
    x = np.random.default_rng(1).normal(size=(30, 2))
    with pytest.raises(SingularDesign):
        lstsq_qr(np.column_stack([x, x[:, 0]]), np.ones(30))
    with pytest.raises(SingularDesign):
        lstsq_qr(np.ones((2, 3)), np.ones(2))


@given(st.integers(0, 2**32 - 1), st.integers(2, 7))
def test_residuals_orthogonal_to_design(seed, K):
    rng = np.random.default_rng(seed)
    data = random_dataset(rng, 150, K)
    assigned = rng.uniform(size=K) < 0.6
    assigned[rng.integers(K)] = True
    mask = FeatureMask(assigned)
    fit = fit_heckman(data, mask)
    design = np.column_stack([np.ones(data.m), data.x_obs[:, mask.indices], fit.lambda_hat])
    r = fit.residuals
    bound = 1e-8 * np.linalg.norm(r) * np.linalg.norm(design, axis=0)
    assert np.all(np.abs(design.T @ r) <= bound + 1e-300)


@given(st.integers(0, 2**32 - 1), st.integers(2, 6))
def test_scatter_matches_zero_column_pseudoinverse(seed, K):
    rng = np.random.default_rng(seed)
    data = random_dataset(rng, 120, K)
    assigned = rng.uniform(size=K) < 0.5
    assigned[rng.integers(K)] = True
    mask = FeatureMask(assigned)
    fit = fit_heckman(data, mask)
    zeroed = np.column_stack([np.ones(data.m), data.x_obs * assigned, fit.lambda_hat])
    coef = np.linalg.pinv(zeroed) @ data.y_obs
    np.testing.assert_allclose(zeroed @ coef, fit.fitted, rtol=1e-9, atol=1e-9)
