"""Pure numpy versions of the hot kernels.

These are the reference implementations; ``_ckernels.pyx`` mirrors them
loop for loop and must agree to rounding error.
"""
import numpy as np


def log_trapz_exp(values, weights):
    """Row-wise ``log(sum_k weights[k] * exp(values[i, k]))`` with a max shift.

    Args:
        values: (m, G) array of log-integrand values on the grid.
        weights: (G,) trapezoidal quadrature weights.

    Returns:
        (m,) array of log-integrals.
    """
    values = np.asarray(values, dtype=float)
    shift = values.max(axis=1)
    total = np.exp(values - shift[:, None]) @ weights
    return shift + np.log(total)


def grid_quantiles(densities, t_grid, tau):
    """Row-wise tau-quantile of densities tabulated on ``t_grid``.

    The CDF is the trapezoidal cumulative integral, rescaled so its last
    value is exactly one, and is inverted by linear interpolation. A flat
    CDF segment at the crossing returns the right-hand node.
    """
    densities = np.asarray(densities, dtype=float)
    t_grid = np.asarray(t_grid, dtype=float)
    dt = np.diff(t_grid)
    cells = 0.5 * dt * (densities[:, 1:] + densities[:, :-1])
    cdf = np.zeros_like(densities)
    np.cumsum(cells, axis=1, out=cdf[:, 1:])
    cdf /= cdf[:, -1:]
    # first node whose CDF reaches tau; node 0 (cdf = 0) only when tau <= 0
    k = np.argmax(cdf >= tau, axis=1)
    k = np.clip(k, 1, t_grid.size - 1)
    rows = np.arange(densities.shape[0])
    lo, hi = cdf[rows, k - 1], cdf[rows, k]
    span = hi - lo
    safe = np.where(span > 0, span, 1.0)
    frac = np.where(span > 0, (tau - lo) / safe, 1.0)
    return t_grid[k - 1] + frac * dt[k - 1]


def weighted_quantile_min(sorted_values, order, weights, alpha, tol=1e-12):
    """Minimum over columns of the weighted alpha-quantile, for each weight row.

    Args:
        sorted_values: (n_x, N) values sorted ascending along axis 1.
        order: (n_x, N) particle indices giving that sort order.
        weights: (M, N) particle weights, one row per simulation.
        alpha: quantile level in (0, 1].
        tol: slack on the cumulative-weight comparison so that exact
            fractions such as 5 * 0.1 >= 0.5 are not lost to rounding.

    Returns:
        (M,) array; entry i is ``min_x q_alpha(values[x], weights[i])`` where
        ``q_alpha`` is the smallest value whose cumulative weight reaches alpha.
    """
    weights = np.asarray(weights, dtype=float)
    cum = np.cumsum(weights[:, order], axis=2)  # (M, n_x, N)
    idx = np.argmax(cum >= alpha - tol, axis=2)
    # rows that never reach alpha (alpha > total weight) take the top value
    reached = cum[:, :, -1] >= alpha - tol
    idx = np.where(reached, idx, sorted_values.shape[1] - 1)
    x_idx = np.arange(sorted_values.shape[0])[None, :]
    return sorted_values[x_idx, idx].min(axis=1)
