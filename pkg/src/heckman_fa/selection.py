"""Two-step Heckman estimator: probit selection stage, inverse Mills ratio,
augmented least squares and the post-fit diagnostics used for extraction."""

from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np
from scipy.linalg import solve_triangular

from . import kernels
from .dataset import Dataset, FeatureMask
from .errors import (
    DegenerateSelection,
    InsufficientSamples,
    NonConvergence,
    SingularDesign,
)

PROBIT_MAX_ITER = 100
PROBIT_TOL = 1e-8
MAX_HALVINGS = 40
COND_LIMIT = 1e12


@dataclass(frozen=True, eq=False)
class ProbitFit:
    """Selection-stage fit. ``fit_probit`` also stores the selection index
    and inverse Mills ratio over the observed rows, which every step-2 fit
    on the same data reuses."""

    gamma_hat: np.ndarray
    log_likelihood: float
    iterations: int
    converged: bool
    grad_norm: float
    index_obs: np.ndarray | None = None
    lambda_obs: np.ndarray | None = None


@dataclass(frozen=True, eq=False)
class HeckmanFit:
    """Result of the two-step fit on one feature mask.

    ``beta_hat`` has ``K + 1`` entries (intercept first) with exact zeros
    at unassigned features. ``rho_hat`` is ``None`` when ``sigma_sq_hat``
    is not positive. Arrays indexed by sample cover the ``m`` observed rows.
    """

    beta_hat: np.ndarray
    beta_h_hat: float
    lambda_hat: np.ndarray
    sigma_sq_hat: float
    rho_hat: float | None
    r2: float
    r2_adj: float
    mask: FeatureMask
    imr_condition_number: float
    probit: ProbitFit
    selection_index: np.ndarray
    fitted: np.ndarray
    residuals: np.ndarray

    @property
    def rho_defined(self) -> bool:
        return self.rho_hat is not None

    def predict(self, x) -> np.ndarray:
        """Population prediction ``x beta``; the IMR term is not added."""
        return self.beta_hat[0] + np.asarray(x, dtype=float) @ self.beta_hat[1:]

    @property
    def train_mse(self) -> float:
        """MSE on observed rows including the IMR term."""
        return float(np.mean(self.residuals**2))


def add_intercept(x) -> np.ndarray:
    x = np.asarray(x, dtype=float)
    return np.column_stack([np.ones(x.shape[0]), x])


def norm_cdf(x):
    return kernels.norm_cdf(x)


def inverse_mills(index):
    """phi(a) / Phi(a), the selection-correction regressor.

    Positive and strictly decreasing. Below ``a = -10`` a continued
    fraction for the normal hazard replaces the direct ratio, whose
    numerator and denominator both underflow near ``a = -37``.
    """
    out = kernels.inverse_mills(np.asarray(index, dtype=float))
    return float(out) if np.ndim(index) == 0 else out


def probit_loglik(design, s, gamma) -> float:
    return kernels.probit_derivatives(design, s, np.asarray(gamma, dtype=float))[0]


def probit_newton(
    design,
    s,
    max_iter: int = PROBIT_MAX_ITER,
    tol: float = PROBIT_TOL,
) -> ProbitFit:
    """Newton-Raphson on the probit log-likelihood with step halving.

    Does not raise on failure; check ``converged``.
    """
    design = np.ascontiguousarray(design, dtype=float)
    s = np.ascontiguousarray(s, dtype=float)
    gamma = np.zeros(design.shape[1])
    ll, grad, hess = kernels.probit_derivatives(design, s, gamma)
    it = 0
    while True:
        gnorm = float(np.max(np.abs(grad)))
        if gnorm < tol:
            return ProbitFit(gamma, ll, it, True, gnorm)
        if it >= max_iter:
            return ProbitFit(gamma, ll, it, False, gnorm)
        it += 1
        try:
            step = np.linalg.solve(-hess, grad)
        except np.linalg.LinAlgError:
            step = np.linalg.lstsq(-hess, grad, rcond=None)[0]
        if not np.all(np.isfinite(step)):
            return ProbitFit(gamma, ll, it, False, gnorm)
        t = 1.0
        slack = 1e-12 * (1.0 + abs(ll))
        for _ in range(MAX_HALVINGS):
            cand = gamma + t * step
            ll_new, g_new, h_new = kernels.probit_derivatives(design, s, cand)
            if np.isfinite(ll_new) and ll_new >= ll - slack:
                break
            t *= 0.5
        else:
            return ProbitFit(gamma, ll, it, False, gnorm)
        gamma, ll, grad, hess = cand, ll_new, g_new, h_new


def fit_probit(data: Dataset) -> ProbitFit:
    """Probit of ``s`` on an intercept plus all selection features, over all ``n`` rows."""
    m, n = data.m, data.n
    if m == 0 or m == n:
        raise DegenerateSelection(f"selection indicator is constant ({m} of {n} observed)")
    fit = probit_newton(add_intercept(data.x_sel), data.s)
    if not fit.converged:
        raise NonConvergence(
            f"probit did not converge in {fit.iterations} iterations "
            f"(|grad|={fit.grad_norm:.3g}); check for separation"
        )
    index = fit.gamma_hat[0] + data.x_obs @ fit.gamma_hat[1:]
    lam = inverse_mills(index)
    for arr in (index, lam):
        arr.setflags(write=False)
    return replace(fit, index_obs=index, lambda_obs=lam)


def lstsq_qr(design, y, cond_limit: float = COND_LIMIT) -> tuple[np.ndarray, float]:
    """QR least squares; raises SingularDesign above ``cond_limit``."""
    design = np.asarray(design, dtype=float)
    rows, p = design.shape
    if rows < p:
        raise SingularDesign(f"{rows} rows for {p} columns")
    q, r = np.linalg.qr(design)
    return solve_upper(r, q.T @ np.asarray(y, dtype=float), cond_limit)


def solve_upper(r, qty, cond_limit: float = COND_LIMIT) -> tuple[np.ndarray, float]:
    """Back-substitute ``R coef = Q^T y`` after checking the condition number of ``R``."""
    sv = np.linalg.svd(r, compute_uv=False)
    cond = float(sv[0] / sv[-1]) if sv[-1] > 0 else float("inf")
    if not cond <= cond_limit:
        raise SingularDesign(f"design condition number {cond:.3g} exceeds {cond_limit:.0e}")
    return solve_triangular(r, qty), cond


def adjusted_r2(r2: float, m: int, j: int) -> float:
    if m <= j + 1:
        raise InsufficientSamples(f"adjusted R^2 needs m > J + 1 (m={m}, J={j})")
    return 1.0 - (1.0 - r2) * (m - 1) / (m - j - 1)


def r_squared(y, fitted) -> float:
    y = np.asarray(y, dtype=float)
    ssr = float(np.sum((y - fitted) ** 2))
    sst = float(np.sum((y - y.mean()) ** 2))
    if sst == 0.0:
        return 1.0 if ssr == 0.0 else 0.0
    return 1.0 - ssr / sst


def estimate_sigma_rho(residuals, lambda_hat, selection_index, beta_h: float):
    """Moment estimates of the outcome noise variance and noise correlation.

    ``sigma^2 = mean(v^2) - beta_h^2 * mean(lambda * (-index) - lambda^2)``
    and ``rho = beta_h / sigma``; ``rho`` is ``None`` unless ``sigma^2 > 0``.
    """
    v = np.asarray(residuals, dtype=float)
    lam = np.asarray(lambda_hat, dtype=float)
    idx = np.asarray(selection_index, dtype=float)
    sigma_sq = float(np.mean(v * v) - beta_h**2 * np.mean(lam * (-idx) - lam * lam))
    rho = beta_h / np.sqrt(sigma_sq) if sigma_sq > 0.0 else None
    return sigma_sq, (None if rho is None else float(rho))


def step2_design(x_obs, mask: FeatureMask, lam) -> np.ndarray:
    """``[1 | assigned columns | lambda]`` over the observed rows."""
    return np.column_stack([np.ones(len(lam)), x_obs[:, mask.indices], lam])


def fit_heckman(data: Dataset, mask: FeatureMask, probit: ProbitFit | None = None) -> HeckmanFit:
    """Two-step fit with the prediction features given by ``mask``.

    The probit stage does not depend on ``mask``; pass a precomputed
    ``probit`` to reuse it across masks.
    """
    if mask.K != data.K:
        raise ValueError(f"mask has {mask.K} entries for {data.K} features")
    if probit is None:
        probit = fit_probit(data)
    m = data.m
    x_obs, y_obs = data.x_obs, data.y_obs
    if probit.lambda_obs is not None and probit.lambda_obs.shape == (m,):
        index, lam = probit.index_obs, probit.lambda_obs
    else:
        index = probit.gamma_hat[0] + x_obs @ probit.gamma_hat[1:]
        lam = inverse_mills(index)
    if m < mask.j_count + 2:
        raise SingularDesign(f"{m} rows for {mask.j_count + 2} columns")
    r, qty = kernels.masked_qr(x_obs, mask.indices, lam, y_obs)
    coef, cond = solve_upper(r, qty)
    beta = np.zeros(data.K + 1)
    beta[0] = coef[0]
    beta[1 + mask.indices] = coef[1:-1]
    beta_h = float(coef[-1])
    fitted = beta[0] + x_obs @ beta[1:] + beta_h * lam
    resid = y_obs - fitted
    sigma_sq, rho = estimate_sigma_rho(resid, lam, index, beta_h)
    r2 = r_squared(y_obs, fitted)
    return HeckmanFit(
        beta_hat=beta,
        beta_h_hat=beta_h,
        lambda_hat=lam,
        sigma_sq_hat=sigma_sq,
        rho_hat=rho,
        r2=r2,
        r2_adj=adjusted_r2(r2, m, mask.j_count),
        mask=mask,
        imr_condition_number=cond,
        probit=probit,
        selection_index=index,
        fitted=fitted,
        residuals=resid,
    )
