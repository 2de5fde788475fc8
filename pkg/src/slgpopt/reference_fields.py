"""Analytic reference density fields used as ground truth and data source.

Each field is centred on a median curve ``f(x)`` and truncated to
``|t - f(x)| <= c(x)`` with ``c(x) = min(f(x), 1 - f(x))``, which keeps the
support inside [0, 1] and the density symmetric about ``f(x)``.
"""
from dataclasses import dataclass

import numpy as np

from .slgp import Dataset, DensityGrid, trapezoid_weights

SAMPLING_GRID_SIZE = 1001


def _check_unit(x):
    x = np.asarray(x, dtype=float)
    if np.any(~np.isfinite(x)) or np.any(x < 0.0) or np.any(x > 1.0):
        raise ValueError("x must lie in [0, 1]")
    return x


def f1(x):
    """Two-sine median curve; global minimum near x = 0.5095."""
    x = _check_unit(x)
    return 0.25 * np.sin(16.0 * x + 9.0) + 0.25 * np.sin(4.8 * x + 2.7) + 0.625


def f2(x):
    """Rational median curve; global minimum near x = 0.7414."""
    x = _check_unit(x)
    u = 10.0 * x - 5.0
    return 0.15 + (7.0 / 72.0) * (1.1 * u**2 - 5.0 * u + 6.1) / (u**2 + 1.0)


MEDIANS = {"f1": f1, "f2": f2}
KINDS = ("truncated_gaussian", "multimodal")


@dataclass(frozen=True)
class ReferenceField:
    """A known density field.

    Attributes:
        kind: ``"truncated_gaussian"`` or ``"multimodal"``.
        median: ``"f1"`` or ``"f2"``.
        scale: standard deviation of the truncated Gaussian.
        mode_offset: distance of each bump from the median (multimodal).
        mode_width: standard deviation of each bump (multimodal).
    """

    kind: str = "truncated_gaussian"
    median: str = "f1"
    scale: float = 0.05
    mode_offset: float = 0.1
    mode_width: float = 0.03

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError(f"unknown field kind {self.kind!r}; expected one of {KINDS}")
        if self.median not in MEDIANS:
            raise ValueError(f"unknown median function {self.median!r}; expected one of {sorted(MEDIANS)}")
        if self.scale <= 0 or self.mode_width <= 0:
            raise ValueError("scales must be positive")

    @property
    def name(self):
        return f"{self.kind}:{self.median}"

    @classmethod
    def parse(cls, spec):
        """Build from ``"kind:median"``, e.g. ``"multimodal:f1"``."""
        kind, _, median = spec.partition(":")
        return cls(kind=kind, median=median or "f1")

    def median_curve(self, x):
        return MEDIANS[self.median](x)

    def half_width(self, x):
        f = self.median_curve(x)
        return np.minimum(f, 1.0 - f)

    def unnormalised(self, x, t):
        """Density shape at scalar ``x`` on points ``t``, zero off the support."""
        f = float(self.median_curve(x))
        c = min(f, 1.0 - f)
        u = np.asarray(t, dtype=float) - f
        if self.kind == "truncated_gaussian":
            shape = np.exp(-0.5 * (u / self.scale) ** 2)
        else:
            shape = 0.5 * (
                np.exp(-0.5 * ((u - self.mode_offset) / self.mode_width) ** 2)
                + np.exp(-0.5 * ((u + self.mode_offset) / self.mode_width) ** 2)
            )
        # small slack so grid nodes sitting exactly on the support edge count
        return np.where(np.abs(u) <= c * (1.0 + 1e-12), shape, 0.0)

    # field-oracle protocol used by the optimisation loops
    def sample(self, x, k, rng):
        return sample_reference(self, x, k, rng)

    def median_values(self, x):
        return self.median_curve(x)


def reference_density(field, x, t_grid):
    """The field's density at ``x`` on ``t_grid``, normalised by the trapezoidal rule."""
    x = float(_check_unit(x))
    t_grid = np.asarray(t_grid, dtype=float)
    shape = field.unnormalised(x, t_grid)
    total = trapezoid_weights(t_grid) @ shape
    if total <= 0.0:
        # support narrower than a grid cell: put the mass on the nearest node
        shape = np.zeros_like(t_grid)
        k = int(np.argmin(np.abs(t_grid - float(field.median_curve(x)))))
        shape[k] = 1.0
        total = trapezoid_weights(t_grid)[k]
    return DensityGrid(shape / total, t_grid)


def reference_field_values(field, x_grid, t_grid):
    """Stack ``reference_density`` over ``x_grid``: shape (n_x, G)."""
    return np.stack([reference_density(field, x, t_grid).values for x in np.atleast_1d(x_grid)])


def _support_cdf(field, x):
    f = float(field.median_curve(x))
    c = min(f, 1.0 - f)
    grid = np.linspace(f - c, f + c, SAMPLING_GRID_SIZE)
    dens = field.unnormalised(x, grid)
    cdf = np.concatenate([[0.0], np.cumsum(0.5 * np.diff(grid) * (dens[1:] + dens[:-1]))])
    return grid, cdf / cdf[-1]


def sample_reference(field, x, k, rng):
    """Draw ``k`` i.i.d. responses at ``x`` by inverse CDF on a fine support grid."""
    if int(k) != k or k < 1:
        raise ValueError(f"k must be a positive integer, got {k!r}")
    x = float(_check_unit(x))
    grid, cdf = _support_cdf(field, x)
    u = rng.random(int(k))
    return np.clip(np.interp(u, cdf, grid), 0.0, 1.0)


def random_design(n, rng):
    """``n`` i.i.d. uniform locations in [0, 1]."""
    if int(n) != n or n < 1:
        raise ValueError(f"n must be a positive integer, got {n!r}")
    return rng.random(int(n))


def sample_dataset(field, x, rng, batch=1):
    """Observations at each location in ``x`` (``batch`` draws per location)."""
    xs, ts = [], []
    for loc in np.atleast_1d(x):
        xs.append(np.full(batch, float(loc)))
        ts.append(sample_reference(field, loc, batch, rng))
    if not xs:
        return Dataset()
    return Dataset(np.concatenate(xs), np.concatenate(ts))
