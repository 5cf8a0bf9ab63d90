"""Hot pair-sum kernels: compiled when available, numpy otherwise.

Set ``KELVINLAB_PURE_PYTHON=1`` to force the numpy path.
"""
import os

import numpy as np

from . import _kernels_py

BACKEND = "python"
_impl = _kernels_py
if os.environ.get("KELVINLAB_PURE_PYTHON", "") not in ("1", "true", "yes"):
    try:
        from . import _kernels as _impl  # type: ignore[no-redef]

        BACKEND = "cython"
    except ImportError:
        _impl = _kernels_py


def _prep(a):
    return np.ascontiguousarray(np.asarray(a, dtype=np.float64))


def kernel_matrix(targets, sources, power, cap=np.inf, coincident=0.0, backend=None):
    """Matrix of min(|t_i - s_j|^power, cap); coincident pairs get ``coincident``."""
    impl = _select(backend)
    return impl.kernel_matrix(_prep(targets), _prep(sources), float(power), float(cap), float(coincident))


def kernel_sum(targets, sources, weights, power, cap=np.inf, coincident=0.0, backend=None):
    """sum_j w_j min(|t_i - s_j|^power, cap) for every target."""
    impl = _select(backend)
    return impl.kernel_sum(_prep(targets), _prep(sources), _prep(weights).reshape(-1),
                           float(power), float(cap), float(coincident))


def _select(backend):
    if backend is None:
        return _impl
    if backend == "python":
        return _kernels_py
    if backend == "cython":
        if BACKEND != "cython":
            raise RuntimeError("compiled kernels are not available")
        return _impl
    raise ValueError(f"unknown backend {backend!r}")
