"""Pure-numpy kernels, used when the compiled extension is unavailable.

Mirrors ``_ckernels.pyx`` function for function; results agree to
rounding, not bit for bit.
"""

from __future__ import annotations

import numpy as np
from scipy.special import erfc

_SQRT1_2 = 0.7071067811865476
_INV_SQRT_2PI = 0.3989422804014327
TAIL_SWITCH = -10.0
CF_TERMS = 60
PROB_CLIP = 1e-12


def norm_cdf(x):
    return 0.5 * erfc(-np.asarray(x, dtype=float) * _SQRT1_2)


def _mills_tail(x):
    # hazard phi(x)/(1 - Phi(x)) for x >= 10 by backward continued fraction
    t = x.copy()
    for k in range(CF_TERMS, 0, -1):
        t = x + k / t
    return t


def inverse_mills(index):
    a = np.asarray(index, dtype=float)
    out = np.empty_like(a)
    direct = a > TAIL_SWITCH
    ad = a[direct]
    out[direct] = _INV_SQRT_2PI * np.exp(-0.5 * ad * ad) / norm_cdf(ad)
    out[~direct] = _mills_tail(-a[~direct])
    return out


def probit_derivatives(X, s, gamma):
    """Log-likelihood, score and Hessian of the probit model at ``gamma``."""
    X = np.asarray(X, dtype=float)
    q = 2.0 * np.asarray(s, dtype=float) - 1.0
    b = q * (X @ gamma)
    lam = inverse_mills(b)
    p = np.clip(norm_cdf(b), PROB_CLIP, 1.0 - PROB_CLIP)
    ll = float(np.sum(np.log(p)))
    grad = X.T @ (q * lam)
    w = -lam * (lam + b)
    hess = (X * w[:, None]).T @ X
    return ll, grad, hess


def sign_colsum(X, r):
    return np.asarray(X, dtype=float).T @ np.sign(np.asarray(r, dtype=float))


def masked_qr(X, idx, lam, y):
    """``(R, Q^T y)`` for the design ``[1 | X[:, idx] | lam]``."""
    lam = np.asarray(lam, dtype=float)
    design = np.column_stack([np.ones(lam.shape[0]), np.asarray(X, dtype=float)[:, idx], lam])
    if design.shape[0] < design.shape[1]:
        raise ValueError("masked_qr needs rows >= columns")
    q, r = np.linalg.qr(design)
    return r, q.T @ np.asarray(y, dtype=float)
