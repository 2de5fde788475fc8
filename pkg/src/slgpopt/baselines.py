"""Homoscedastic GP regression with expected improvement, as a baseline.

Every observation ``(x_i, t_i)`` enters the GP individually; replicated
batches at one location are absorbed by the homoscedastic noise term.
The prior mean is the sample mean of the targets.
"""
import logging
import time
from dataclasses import dataclass

import numpy as np
from scipy.linalg import cho_factor, cho_solve
from scipy.optimize import minimize
from scipy.stats import norm

from .design import OptimizationState, StepRecord, default_candidates, optimality_gap

logger = logging.getLogger(__name__)

JITTER = 1e-8
N_STARTS = 8
# log-space bounds for (lengthscale, signal variance / var(y), noise variance / var(y))
LOG_BOUNDS = [(np.log(1e-3), np.log(10.0)), (np.log(1e-4), np.log(1e2)), (np.log(1e-10), np.log(10.0))]
GP_STRATEGIES = ("adaptive_ei", "random")


def matern52(x1, x2, lengthscale, variance):
    r = np.abs(np.subtract.outer(np.asarray(x1, dtype=float), np.asarray(x2, dtype=float))) / lengthscale
    s5r = np.sqrt(5.0) * r
    return variance * (1.0 + s5r + 5.0 / 3.0 * r**2) * np.exp(-s5r)


@dataclass(frozen=True, eq=False)
class GPSurrogate:
    """A fitted GP: Matern-5/2 kernel plus homoscedastic noise."""

    x: np.ndarray
    y: np.ndarray
    lengthscale: float
    variance: float
    noise: float
    mean: float
    chol: tuple
    alpha: np.ndarray

    @classmethod
    def from_hyperparameters(cls, x, y, lengthscale, variance, noise, mean=None):
        x = np.asarray(x, dtype=float)
        y = np.asarray(y, dtype=float)
        mean = float(np.mean(y)) if mean is None else float(mean)
        gram = matern52(x, x, lengthscale, variance) + (noise + JITTER) * np.eye(x.size)
        chol = cho_factor(gram, lower=True)
        alpha = cho_solve(chol, y - mean)
        return cls(x, y, float(lengthscale), float(variance), float(noise), mean, chol, alpha)

    def log_marginal_likelihood(self):
        low = self.chol[0]
        resid = self.y - self.mean
        return float(-0.5 * resid @ self.alpha - np.sum(np.log(np.diag(low))) - 0.5 * self.x.size * np.log(2 * np.pi))


def _neg_lml(log_theta, x, y, mean, scale):
    ell, var, noise = np.exp(log_theta)
    var, noise = var * scale, noise * scale
    gram = matern52(x, x, ell, var) + (noise + JITTER) * np.eye(x.size)
    try:
        low, lower = cho_factor(gram, lower=True)
    except np.linalg.LinAlgError:
        return 1e25
    resid = y - mean
    a = cho_solve((low, lower), resid)
    return float(0.5 * resid @ a + np.sum(np.log(np.diag(low))) + 0.5 * x.size * np.log(2 * np.pi))


def fit_gp(x, y, rng=None, noise=None, n_starts=N_STARTS):
    """Maximum-likelihood GP fit with seeded log-uniform multi-start L-BFGS.

    Args:
        x, y: training inputs and targets (at least two distinct inputs).
        rng: generator for the start points; defaults to seed 0.
        noise: if given, the noise variance is held at this value.
        n_starts: number of start points.

    Raises:
        ValueError: with fewer than two distinct inputs.
    """
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    if x.shape != y.shape or np.unique(x).size < 2:
        raise ValueError("need at least two distinct training points")
    rng = np.random.default_rng(0) if rng is None else rng
    mean = float(np.mean(y))
    scale = float(np.var(y)) if np.var(y) > 0 else 1.0
    bounds = list(LOG_BOUNDS)
    if noise is not None:
        fixed = np.log(max(noise, 1e-300) / scale)
        bounds[2] = (fixed, fixed)
    lo = np.array([b[0] for b in bounds])
    hi = np.array([b[1] for b in bounds])
    starts = rng.uniform(lo, hi, size=(n_starts, 3))
    best_val, best_theta = np.inf, None
    for start in starts:
        val0 = _neg_lml(start, x, y, mean, scale)
        res = minimize(_neg_lml, start, args=(x, y, mean, scale), method="L-BFGS-B", bounds=bounds)
        for theta, val in ((start, val0), (res.x, res.fun)):
            if val < best_val:
                best_val, best_theta = val, theta
    ell, var, nz = np.exp(best_theta)
    nz = nz * scale if noise is None else float(noise)
    return GPSurrogate.from_hyperparameters(x, y, ell, var * scale, nz, mean)


def gp_predict(surrogate, x):
    """Predictive mean and standard deviation of the latent function at ``x``."""
    x = np.atleast_1d(np.asarray(x, dtype=float))
    k_star = matern52(x, surrogate.x, surrogate.lengthscale, surrogate.variance)
    mean = surrogate.mean + k_star @ surrogate.alpha
    v = cho_solve(surrogate.chol, k_star.T)
    var = surrogate.variance - np.sum(k_star * v.T, axis=1)
    sd = np.sqrt(np.maximum(var, 0.0))
    if mean.size == 1:
        return float(mean[0]), float(sd[0])
    return mean, sd


def expected_improvement(surrogate, x, best):
    """E[(best - Y(x))^+] under the Gaussian predictive distribution."""
    mean, sd = gp_predict(surrogate, x)
    return ei_from_moments(mean, sd, best)


def ei_from_moments(mean, sd, best):
    mean = np.asarray(mean, dtype=float)
    sd = np.asarray(sd, dtype=float)
    improvement = best - mean
    with np.errstate(divide="ignore", invalid="ignore"):
        u = np.where(sd > 0, improvement / np.where(sd > 0, sd, 1.0), 0.0)
    u = np.clip(u, -40.0, 40.0)  # cdf and pdf are saturated well before this
    ei = np.where(sd > 0, improvement * norm.cdf(u) + sd * norm.pdf(u), np.maximum(improvement, 0.0))
    ei = np.maximum(ei, 0.0)
    return float(ei) if ei.ndim == 0 else ei


def run_gp_optimization(field_oracle, initial_design, steps, K=20, strategy="adaptive_ei", rng=None,
                        candidates=None, callback=None):
    """Sequential optimisation driven by the homoscedastic GP.

    Mirrors ``design.run_optimization``: the estimated minimiser is the
    argmin of the predicted mean over the candidate grid.
    """
    if strategy not in GP_STRATEGIES:
        raise ValueError(f"unknown strategy {strategy!r}; expected one of {GP_STRATEGIES}")
    if len(initial_design) == 0:
        raise ValueError("initial design is empty")
    rng = np.random.default_rng() if rng is None else rng
    candidates = default_candidates() if candidates is None else np.asarray(candidates, dtype=float)
    master = np.random.SeedSequence(int(rng.integers(2**63)))
    oracle_rng, design_rng, fit_rng = (np.random.default_rng(s) for s in master.spawn(3))

    def fit(data):
        gp = fit_gp(data.x, data.t, rng=fit_rng)
        mean, sd = gp_predict(gp, candidates)
        return gp, np.atleast_1d(mean), np.atleast_1d(sd)

    t0 = time.perf_counter()
    data = initial_design
    gp, mean, sd = fit(data)
    x_hat = float(candidates[np.argmin(mean)])
    state = OptimizationState(data, gp)
    state.initial = StepRecord(0, float("nan"), x_hat, optimality_gap(field_oracle, x_hat, candidates), len(data),
                               seconds=time.perf_counter() - t0)
    if callback:
        callback(state.initial)
    for step in range(1, steps + 1):
        t0 = time.perf_counter()
        if strategy == "adaptive_ei":
            ei = ei_from_moments(mean, sd, float(mean.min()))
            x_next = float(candidates[int(np.argmax(ei))])
        else:
            x_next = float(design_rng.random())
        data = data.append(x_next, field_oracle.sample(x_next, K, oracle_rng))
        gp, mean, sd = fit(data)
        x_hat = float(candidates[np.argmin(mean)])
        record = StepRecord(step, x_next, x_hat, optimality_gap(field_oracle, x_hat, candidates), len(data),
                            seconds=time.perf_counter() - t0)
        state.history.append(record)
        state.dataset, state.ensemble = data, gp
        if callback:
            callback(record)
    return state
