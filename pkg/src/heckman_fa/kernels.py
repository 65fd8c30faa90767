"""Backend selection for the hot per-row kernels.

The compiled extension is preferred; set ``HECKMAN_FA_PURE_PYTHON=1`` to
force the numpy fallback.
"""

from __future__ import annotations

import os

from . import _pykernels

if os.environ.get("HECKMAN_FA_PURE_PYTHON", "") not in ("", "0"):
    _impl = _pykernels
    BACKEND = "python"
else:
    try:
        from . import _ckernels as _impl  # type: ignore[attr-defined]

        BACKEND = "cython"
    except ImportError:
        _impl = _pykernels
        BACKEND = "python"

norm_cdf = _impl.norm_cdf
inverse_mills = _impl.inverse_mills
probit_derivatives = _impl.probit_derivatives
sign_colsum = _impl.sign_colsum
masked_qr = _impl.masked_qr

__all__ = [
    "BACKEND",
    "norm_cdf",
    "inverse_mills",
    "probit_derivatives",
    "sign_colsum",
    "masked_qr",
]
