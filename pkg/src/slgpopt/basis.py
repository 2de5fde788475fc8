"""Bivariate Fourier basis for the finite-rank field W(x, t).

Each basis function is ``cos`` or ``sin`` of ``2*pi*(omega1*t + omega2*x)``
with ``1 <= omega1 <= q`` and ``-q <= omega2 <= q``. Requiring
``omega1 >= 1`` removes both the sign-flipped duplicates and the
t-independent terms, which the per-x normalisation would cancel anyway.
"""
from dataclasses import dataclass
from functools import cached_property

import numpy as np

COS, SIN = 0, 1
_KIND_NAMES = {COS: "cos", SIN: "sin"}


@dataclass(frozen=True)
class FrequencyPair:
    omega1: int  # frequency in t
    omega2: int  # frequency in x


@dataclass(frozen=True)
class BasisFunction:
    kind: str
    freq: FrequencyPair
    weight: float  # sqrt(lambda)

    def __call__(self, x, t):
        phase = 2.0 * np.pi * (self.freq.omega1 * np.asarray(t) + self.freq.omega2 * np.asarray(x))
        return np.cos(phase) if self.kind == "cos" else np.sin(phase)


@dataclass(frozen=True, eq=False)
class BasisSet:
    """An ordered Fourier basis of rank ``p`` with eigenvalue weights.

    Attributes:
        order: the Fourier order q.
        kinds: (p,) array of ``COS``/``SIN`` codes.
        omega1, omega2: (p,) integer frequency arrays.
        lam: (p,) eigenvalues, non-increasing, in (0, 1].
    """

    order: int
    kinds: np.ndarray
    omega1: np.ndarray
    omega2: np.ndarray
    lam: np.ndarray

    @property
    def rank(self):
        return self.kinds.size

    @cached_property
    def weights(self):
        """sqrt(lambda_j), the per-function standard deviations."""
        return np.sqrt(self.lam)

    @property
    def functions(self):
        return [
            BasisFunction(_KIND_NAMES[k], FrequencyPair(int(a), int(b)), float(w))
            for k, a, b, w in zip(self.kinds, self.omega1, self.omega2, self.weights)
        ]

    def __len__(self):
        return self.rank

    def table(self):
        """Rows of ``(kind, omega1, omega2, lambda)`` in basis order."""
        return [
            (_KIND_NAMES[int(k)], int(a), int(b), float(lam))
            for k, a, b, lam in zip(self.kinds, self.omega1, self.omega2, self.lam)
        ]


def eigenvalue(omega1, omega2):
    """Spectral weight 1 / (1 + |omega1| + |omega2|)."""
    return 1.0 / (1.0 + np.abs(omega1) + np.abs(omega2))


def build_fourier_basis(q):
    """Build the pruned Fourier basis of order ``q``.

    The result has rank ``2*q*(2*q + 1)``, sorted by eigenvalue (largest
    first) with ties broken by ``(omega1, omega2, cos before sin)``.

    Raises:
        ValueError: if ``q < 1``.
    """
    if int(q) != q or q < 1:
        raise ValueError(f"Fourier order must be a positive integer, got {q!r}")
    q = int(q)
    rows = []
    for w1 in range(1, q + 1):
        for w2 in range(-q, q + 1):
            lam = 1.0 / (1.0 + abs(w1) + abs(w2))
            for kind in (COS, SIN):
                rows.append((-lam, w1, w2, kind))
    rows.sort()
    lam = np.array([-r[0] for r in rows])
    omega1 = np.array([r[1] for r in rows], dtype=np.int64)
    omega2 = np.array([r[2] for r in rows], dtype=np.int64)
    kinds = np.array([r[3] for r in rows], dtype=np.int64)
    for arr in (lam, omega1, omega2, kinds):
        arr.setflags(write=False)
    return BasisSet(order=q, kinds=kinds, omega1=omega1, omega2=omega2, lam=lam)


def _check_unit(name, values):
    values = np.asarray(values, dtype=float)
    if not np.all(np.isfinite(values)) or np.any(values < 0.0) or np.any(values > 1.0):
        raise ValueError(f"{name} must lie in [0, 1]")
    return values


def _evaluate(basis, x, t):
    # broadcasting helper: x, t arrays of equal shape -> (..., p)
    phase = 2.0 * np.pi * (np.multiply.outer(t, basis.omega1) + np.multiply.outer(x, basis.omega2))
    return np.where(basis.kinds == COS, np.cos(phase), np.sin(phase))


def eval_basis(basis, x, t):
    """Unweighted basis values ``e_j(x, t)`` as a length-``p`` vector."""
    x = float(_check_unit("x", x))
    t = float(_check_unit("t", t))
    return _evaluate(basis, np.float64(x), np.float64(t))


def eval_basis_grid(basis, x_grid, t_grid):
    """Tabulate the basis on a tensor grid.

    Row ``i * len(t_grid) + k`` holds ``e_j(x_grid[i], t_grid[k])``.

    Raises:
        ValueError: on an empty grid or values outside [0, 1].
    """
    x_grid = np.atleast_1d(_check_unit("x_grid", x_grid))
    t_grid = np.atleast_1d(_check_unit("t_grid", t_grid))
    if x_grid.size == 0 or t_grid.size == 0:
        raise ValueError("grids must be nonempty")
    xx, tt = np.meshgrid(x_grid, t_grid, indexing="ij")
    return _evaluate(basis, xx.ravel(), tt.ravel())
