"""Hot-loop kernels with a compiled backend and a numpy fallback.

The Cython extension ``slgpopt._ckernels`` is used when it was built;
otherwise the numpy versions in ``slgpopt._kernels_py`` are used. Setting
``SLGPOPT_PURE_PYTHON=1`` before import forces the fallback.

``BACKEND`` names the active backend (``"cython"`` or ``"python"``).
``log_trapz_exp`` always runs in numpy: its vectorised ``exp`` beats the
compiled scalar loop at the sizes used here (see benchmarks/).
"""
import os

import numpy as np

from . import _kernels_py

_ext = None
if not os.environ.get("SLGPOPT_PURE_PYTHON"):
    try:
        from . import _ckernels as _ext
    except ImportError:  # extension not built
        _ext = None

BACKEND = "cython" if _ext is not None else "python"


def log_trapz_exp(values, weights):
    values = np.ascontiguousarray(values, dtype=float)
    if values.ndim == 1:
        return log_trapz_exp(values[None, :], weights)[0]
    return _kernels_py.log_trapz_exp(values, np.ascontiguousarray(weights, dtype=float))


def grid_quantiles(densities, t_grid, tau):
    densities = np.ascontiguousarray(densities, dtype=float)
    t_grid = np.ascontiguousarray(t_grid, dtype=float)
    if _ext is not None:
        return _ext.grid_quantiles(densities, t_grid, float(tau))
    return _kernels_py.grid_quantiles(densities, t_grid, float(tau))


def weighted_quantile_min(sorted_values, order, weights, alpha):
    sorted_values = np.ascontiguousarray(sorted_values, dtype=float)
    order = np.ascontiguousarray(order, dtype=np.intp)
    weights = np.ascontiguousarray(np.atleast_2d(weights), dtype=float)
    if _ext is not None:
        return _ext.weighted_quantile_min(sorted_values, order, weights, float(alpha))
    return _kernels_py.weighted_quantile_min(sorted_values, order, weights, float(alpha))


log_trapz_exp.__doc__ = _kernels_py.log_trapz_exp.__doc__
grid_quantiles.__doc__ = _kernels_py.grid_quantiles.__doc__
weighted_quantile_min.__doc__ = _kernels_py.weighted_quantile_min.__doc__
