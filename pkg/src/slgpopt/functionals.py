"""Distribution functionals, posterior quantile curves and field distances."""
from dataclasses import dataclass

import numpy as np

from . import kernels
from .slgp import DensityField, trapezoid_weights


@dataclass(frozen=True)
class Functional:
    """A quantile functional; ``level=0.5`` is the median."""

    level: float = 0.5
    kind: str = "quantile"

    def __post_init__(self):
        if self.kind != "quantile":
            raise ValueError(f"unsupported functional kind {self.kind!r}")
        if not 0.0 < self.level < 1.0:
            raise ValueError(f"quantile level must be in (0, 1), got {self.level}")

    def on_grid(self, densities, t_grid):
        """Apply to each row of a (m, G) density array."""
        return kernels.grid_quantiles(np.atleast_2d(densities), t_grid, self.level)


MEDIAN = Functional(0.5)


@dataclass(frozen=True)
class QuantileCurve:
    x_grid: np.ndarray
    values: np.ndarray
    alpha: float

    def argmin(self):
        """Index of the smallest value (first one on ties)."""
        return int(np.argmin(self.values))


def apply_functional(density, rho=MEDIAN):
    """Quantile of a ``DensityGrid`` from its interpolated trapezoidal CDF."""
    return float(rho.on_grid(density.values[None, :], density.t_grid)[0])


def functional_values(ensemble, x_grid, rho=MEDIAN, chunk=256):
    """rho of every particle density at every location: shape (N, n_x)."""
    model = ensemble.model
    x_grid = np.atleast_1d(np.asarray(x_grid, dtype=float))
    out = np.empty((len(ensemble), x_grid.size))
    g = model.t_grid.size
    for start in range(0, len(ensemble), chunk):
        dens = model.density_grid(ensemble.draws[start:start + chunk], x_grid)
        block = rho.on_grid(dens.reshape(-1, g), model.t_grid)
        out[start:start + chunk] = block.reshape(dens.shape[:2])
    return out


def functional_ensemble(ensemble, model, x, rho=MEDIAN):
    """The N values ``rho(p_x(.; eps_j))`` at one location."""
    if len(ensemble) == 0:
        raise ValueError("ensemble is empty")
    if model is not ensemble.model and model.rank != ensemble.model.rank:
        raise ValueError("model does not match the ensemble")
    dens = model.density_grid(ensemble.draws, np.array([float(x)]))[:, 0, :]
    return rho.on_grid(dens, model.t_grid)


def check_weights(weights, n):
    weights = np.asarray(weights, dtype=float)
    if weights.shape[-1] != n:
        raise ValueError(f"expected {n} weights, got {weights.shape[-1]}")
    if np.any(weights < 0) or np.any(np.abs(weights.sum(axis=-1) - 1.0) > 1e-9):
        raise ValueError("weights must be nonnegative and sum to 1")
    return weights


def weighted_quantile(values, weights, alpha, tol=1e-12):
    """Smallest value whose cumulative weight (values ascending) reaches alpha.

    Args:
        values: (N, ...) values, one row per particle.
        weights: (N,) nonnegative weights summing to one.
        alpha: level in (0, 1].
        tol: slack on the comparison, so 5 * 0.1 counts as reaching 0.5.
    """
    values = np.asarray(values, dtype=float)
    order = np.argsort(values, axis=0, kind="stable")
    sorted_vals = np.take_along_axis(values, order, axis=0)
    cum = np.cumsum(np.asarray(weights)[order], axis=0)
    hit = np.argmax(cum >= alpha - tol, axis=0)
    hit = np.where(cum[-1] >= alpha - tol, hit, values.shape[0] - 1)
    return np.take_along_axis(sorted_vals, np.expand_dims(hit, 0), axis=0)[0]


def posterior_quantile_curve(ensemble, model, x_grid, rho=MEDIAN, alpha=0.9, weights=None):
    """Pointwise (weighted) alpha-quantile of the functional over the ensemble."""
    n = len(ensemble)
    if n == 0:
        raise ValueError("ensemble is empty")
    if not 0.0 < alpha <= 1.0:
        raise ValueError(f"alpha must be in (0, 1], got {alpha}")
    weights = np.full(n, 1.0 / n) if weights is None else check_weights(weights, n)
    x_grid = np.atleast_1d(np.asarray(x_grid, dtype=float))
    values = functional_values(ensemble, x_grid, rho)
    return QuantileCurve(x_grid, weighted_quantile(values, weights, alpha), alpha)


def ish_distance(field_a, field_b):
    """Integrated squared Hellinger distance between two density fields.

    Both fields must share their x- and t-grids; the double integral is
    the tensor trapezoidal rule. The result lies in [0, 2] for normalised
    fields over unit-length domains.
    """
    if not isinstance(field_a, DensityField) or not isinstance(field_b, DensityField):
        raise ValueError("both arguments must be DensityField instances")
    if (
        field_a.values.shape != field_b.values.shape
        or not np.array_equal(field_a.x_grid, field_b.x_grid)
        or not np.array_equal(field_a.t_grid, field_b.t_grid)
    ):
        raise ValueError("fields are tabulated on different grids")
    diff = (np.sqrt(field_a.values) - np.sqrt(field_b.values)) ** 2
    inner = diff @ trapezoid_weights(field_a.t_grid)
    if field_a.x_grid.size == 1:
        return float(inner[0])
    return float(trapezoid_weights(field_a.x_grid) @ inner)
