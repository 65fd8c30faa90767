"""Compiled and numpy kernels agree with each other and with mpmath."""

import os
import subprocess
import sys

import mpmath
import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from hypothesis.extra import numpy as hnp

from heckman_fa import _pykernels, kernels

try:
    from heckman_fa import _ckernels
except ImportError:  # extension not built
    _ckernels = None

BACKENDS = [pytest.param(_pykernels, id="python")]
if _ckernels is not None:
    BACKENDS.append(pytest.param(_ckernels, id="cython"))

needs_ext = pytest.mark.skipif(_ckernels is None, reason="compiled extension not built")

mpmath.mp.dps = 50


def mp_mills(a: float) -> float:
    a = mpmath.mpf(a)
    return float(mpmath.npdf(a) / mpmath.ncdf(a))


@pytest.mark.parametrize("impl", BACKENDS)
def test_inverse_mills_matches_high_precision(impl):
    pts = np.concatenate([np.linspace(-40, 40, 801), [-1e3, -200.0, -10.0, -9.999999, 0.0]])
    ours = impl.inverse_mills(pts)
    ref = np.array([mp_mills(a) for a in pts])
    # ref underflows to 0 only for a > ~38; compare there with absolute tolerance
    big = ref > 1e-300
    assert np.max(np.abs(ours[big] - ref[big]) / ref[big]) < 1e-12
    assert np.all(ours[~big] < 1e-300)


@pytest.mark.parametrize("impl", BACKENDS)
def test_norm_cdf_matches_high_precision(impl):
    pts = np.linspace(-37, 8, 451)
    ref = np.array([float(mpmath.ncdf(a)) for a in pts])
    assert np.max(np.abs(impl.norm_cdf(pts) - ref) / ref) < 1e-12  # libm erfc tail accuracy


@pytest.mark.parametrize("impl", BACKENDS)
def test_probit_derivatives_against_finite_differences(impl, rng):
    X = np.column_stack([np.ones(80), rng.normal(size=(80, 2))])
    s = (rng.uniform(size=80) < 0.4).astype(float)
    gamma = np.array([0.2, -0.7, 0.4])
    ll, grad, hess = impl.probit_derivatives(X, s, gamma)
    h = 1e-6
    num_g = np.zeros(3)
    num_h = np.zeros((3, 3))
    for j in range(3):
        e = np.zeros(3)
        e[j] = h
        num_g[j] = (impl.probit_derivatives(X, s, gamma + e)[0]
                    - impl.probit_derivatives(X, s, gamma - e)[0]) / (2 * h)
        num_h[:, j] = (impl.probit_derivatives(X, s, gamma + e)[1]
                       - impl.probit_derivatives(X, s, gamma - e)[1]) / (2 * h)
    np.testing.assert_allclose(grad, num_g, rtol=1e-6, atol=1e-7)
    np.testing.assert_allclose(hess, num_h, rtol=1e-6, atol=1e-6)
    assert ll == pytest.approx(float(np.sum(np.log(
        [float(mpmath.ncdf(v)) for v in (2 * s - 1) * (X @ gamma)]))), rel=1e-12)


@needs_ext
@given(hnp.arrays(np.float64, st.integers(1, 200),
                  elements=st.floats(-60, 60, allow_nan=False)))
def test_backends_agree_on_pointwise_kernels(a):
    np.testing.assert_allclose(_ckernels.inverse_mills(a), _pykernels.inverse_mills(a),
                               rtol=1e-13, atol=0)
    # below a = -37.5 the CDF is subnormal; libm keeps digits there that scipy flushes to 0
    np.testing.assert_allclose(_ckernels.norm_cdf(a), _pykernels.norm_cdf(a), rtol=1e-13,
                               atol=1e-300)


@needs_ext
@given(st.integers(0, 2**32 - 1), st.integers(1, 120), st.integers(1, 6))
def test_backends_agree_on_matrix_kernels(seed, n, p):
    rng = np.random.default_rng(seed)
    X = rng.normal(size=(n, p))
    s = (rng.uniform(size=n) < 0.5).astype(float)
    gamma = rng.normal(scale=2, size=p)
    r = rng.normal(size=n)
    r[rng.uniform(size=n) < 0.2] = 0.0
    a, b = _ckernels.probit_derivatives(X, s, gamma), _pykernels.probit_derivatives(X, s, gamma)
    assert a[0] == pytest.approx(b[0], rel=1e-12, abs=1e-12)
    np.testing.assert_allclose(a[1], b[1], rtol=1e-10, atol=1e-10)
    np.testing.assert_allclose(a[2], b[2], rtol=1e-10, atol=1e-10)
    np.testing.assert_allclose(_ckernels.sign_colsum(X, r), _pykernels.sign_colsum(X, r),
                               rtol=1e-12, atol=1e-12)


def test_shapes_preserved():
    a = np.linspace(-5, 5, 12).reshape(3, 4)
    assert kernels.inverse_mills(a).shape == (3, 4)
    assert kernels.norm_cdf(a).shape == (3, 4)


def test_env_var_forces_fallback():
    code = "from heckman_fa import kernels; print(kernels.BACKEND)"
    env = dict(os.environ, HECKMAN_FA_PURE_PYTHON="1")
    out = subprocess.run([sys.executable, "-c", code], env=env, capture_output=True, text=True)
    assert out.stdout.strip() == "python"


@needs_ext
def test_compiled_backend_selected_by_default():
    env = {k: v for k, v in os.environ.items() if k != "HECKMAN_FA_PURE_PYTHON"}
    out = subprocess.run([sys.executable, "-c", "from heckman_fa import kernels; print(kernels.BACKEND)"],
                         env=env, capture_output=True, text=True)
    assert out.stdout.strip() == "cython"


@pytest.mark.parametrize("impl", BACKENDS)
@given(st.integers(0, 2**32 - 1), st.integers(0, 5), st.integers(0, 40))
def test_masked_qr_solves_the_step2_least_squares(impl, seed, n_cols, extra_rows):
    rng = np.random.default_rng(seed)
    K = 6
    idx = np.sort(rng.choice(K, size=n_cols, replace=False))
    m = n_cols + 2 + extra_rows
    x = rng.normal(size=(m, K))
    lam = rng.random(m) + 0.1
    y = rng.normal(size=m)
    r, qty = impl.masked_qr(x, idx, lam, y)
    assert r.shape == (n_cols + 2, n_cols + 2) and np.allclose(np.tril(r, -1), 0.0)
    design = np.column_stack([np.ones(m), x[:, idx], lam])
    # R^T R reproduces the Gram matrix whatever the reflector signs
    np.testing.assert_allclose(r.T @ r, design.T @ design, atol=1e-9 * (1 + np.abs(design).max() ** 2 * m))
    np.testing.assert_allclose(r.T @ qty, design.T @ y, atol=1e-9 * m)


@pytest.mark.parametrize("impl", BACKENDS)
def test_masked_qr_zero_column_gives_zero_pivot(impl):
    x = np.zeros((10, 3))
    x[:, 0] = np.arange(10.0)
    r, _ = impl.masked_qr(x, np.array([0, 1]), np.linspace(1, 2, 10), np.ones(10))
    assert abs(r[2, 2]) < 1e-12


@pytest.mark.parametrize("impl", BACKENDS)
def test_masked_qr_rejects_short_design(impl):
    with pytest.raises(ValueError):
        impl.masked_qr(np.ones((2, 3)), np.array([0]), np.ones(2), np.ones(2))
