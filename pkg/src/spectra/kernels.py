"""Kernel dispatch: compiled max-plus step when available, numpy otherwise.

Set ``SPECTRA_PURE_PYTHON=1`` to force the numpy implementation.  Rate
evaluation always uses numpy; its vectorized ``log1p`` beats a scalar loop.
"""
import os

import numpy as np

from . import _pykernels

BACKEND = "python"
maxplus_step = _pykernels.maxplus_step

if os.environ.get("SPECTRA_PURE_PYTHON", "") in ("", "0"):
    try:
        from . import _ckernels
    except ImportError:  # pragma: no cover - depends on the build
        pass
    else:
        BACKEND = "cython"
        maxplus_step = _ckernels.maxplus_step


def weighted_rates(P, alpha, noise, w):
    """``sum_i w_i ln(1 + P_i / (n_i + sum_{j != i} P_j alpha[j, i]))`` per row."""
    P = np.asarray(P, dtype=float)
    if P.ndim != 2:
        raise ValueError("P must be (N, K)")
    return _pykernels.weighted_rates(P, alpha, noise, w)
