"""Expected quantile improvement and the adaptive sampling loop.

EQI at a candidate ``x_new`` is estimated by simulation from a posterior
ensemble of N particles:

1. the predictive density at ``x_new`` is the particle mixture;
2. each of M simulations draws a batch of K responses from it and
   reweights the particles by the batch likelihood;
3. the weighted alpha-quantile curve of the functional gives the future
   domain minimum, and EQI averages its positive improvement over the
   current minimum.

Particles are reused for every candidate and simulation, so everything
that depends only on the ensemble is computed once per step in
``EQIContext``.
"""
import logging
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace
from typing import List, Optional

import numpy as np

from . import kernels
from .functionals import MEDIAN, functional_values, weighted_quantile
from .mcmc import PCNConfig, chain_seeds, run_pcn
from .slgp import DensityGrid

logger = logging.getLogger(__name__)

STRATEGIES = ("adaptive_eqi", "random")


def default_candidates(n=101):
    return np.linspace(0.0, 1.0, n)


@dataclass(frozen=True)
class BatchSimulation:
    x_new: float
    draws: np.ndarray
    weights: np.ndarray


@dataclass(frozen=True)
class EQIResult:
    candidates: np.ndarray
    values: np.ndarray
    chosen: int
    K: int
    M: int
    alpha: float
    seed: int

    @property
    def chosen_x(self):
        return float(self.candidates[self.chosen])


def _particle_factors(ensemble, model, x):
    """Per-particle field coefficients at ``x`` and log-normalisers."""
    xf = model.x_factors(np.array([float(x)]))
    a, b = model.field_coefficients(ensemble.draws, xf)  # (N, 1, q)
    ct, st = model._t_factors
    w_grid = a[:, 0] @ ct + b[:, 0] @ st
    m = model.mean_on_grid(float(x))
    if m is not None:
        w_grid = w_grid + m[0]
    log_z = kernels.log_trapz_exp(w_grid, model.quad_weights)
    return a[:, 0], b[:, 0], w_grid, log_z


def predictive_density(ensemble, model, x):
    """Mixture of the particle densities at ``x``."""
    if len(ensemble) == 0:
        raise ValueError("ensemble is empty")
    _, _, w_grid, log_z = _particle_factors(ensemble, model, x)
    values = np.exp(w_grid - log_z[:, None]).mean(axis=0)
    return DensityGrid(values, model.t_grid)


def _inverse_cdf(density, uniforms):
    t = density.t_grid
    cdf = np.concatenate([[0.0], np.cumsum(0.5 * np.diff(t) * (density.values[1:] + density.values[:-1]))])
    cdf /= cdf[-1]
    return np.clip(np.interp(uniforms, cdf, t), 0.0, 1.0)


def simulate_future_batch(ensemble, model, x_new, K, rng):
    """K i.i.d. draws from the predictive mixture at ``x_new``."""
    if int(K) != K or K < 1:
        raise ValueError(f"K must be a positive integer, got {K!r}")
    return _inverse_cdf(predictive_density(ensemble, model, x_new), rng.random(int(K)))


def batch_log_likelihoods(ensemble, model, x_new, batches):
    """Log-likelihood of each batch under each particle: (M, N) for (M, K) batches."""
    batches = np.atleast_2d(np.asarray(batches, dtype=float))
    n_sim, k = batches.shape
    if k == 0:
        return np.zeros((n_sim, len(ensemble)))
    a, b, _, log_z = _particle_factors(ensemble, model, x_new)
    ct, st = model.t_factors(batches.ravel())  # (M*K, q)
    w = a @ ct.T + b @ st.T  # (N, M*K)
    m = model.mean_at(float(x_new), batches.ravel())
    if m is not None:
        w = w + m
    return w.reshape(-1, n_sim, k).sum(axis=2).T - k * log_z


def _normalise_log_weights(logw):
    logw = logw - logw.max(axis=-1, keepdims=True)
    w = np.exp(logw)
    return w / w.sum(axis=-1, keepdims=True)


def reweight(ensemble, model, x_new, batch):
    """Particle weights proportional to the batch likelihood, summing to one."""
    batch = np.asarray(batch, dtype=float).ravel()
    if batch.size == 0:
        return np.full(len(ensemble), 1.0 / len(ensemble))
    return _normalise_log_weights(batch_log_likelihoods(ensemble, model, x_new, batch[None, :]))[0]


class EQIContext:
    """Ensemble-only quantities shared by all candidates of one step.

    Attributes:
        values: (N, n_x) functional value of each particle at each x.
        q_now: current minimum over x of the alpha-quantile curve.
    """

    def __init__(self, ensemble, model, x_grid, rho=MEDIAN, alpha=0.9):
        if len(ensemble) == 0:
            raise ValueError("ensemble is empty")
        self.ensemble = ensemble
        self.model = model
        self.x_grid = np.atleast_1d(np.asarray(x_grid, dtype=float))
        self.rho = rho
        self.alpha = alpha
        self.values = functional_values(ensemble, self.x_grid, rho)
        self.order = np.argsort(self.values.T, axis=1, kind="stable")
        self.sorted_values = np.take_along_axis(self.values.T, self.order, axis=1)
        n = len(ensemble)
        self.uniform = np.full(n, 1.0 / n)
        self.q_now = float(self.future_minima(self.uniform[None, :])[0])

    def future_minima(self, weights):
        """min over x of the weighted alpha-quantile curve, per weight row."""
        return kernels.weighted_quantile_min(self.sorted_values, self.order, weights, self.alpha)

    def quantile_curve(self, alpha, weights=None):
        weights = self.uniform if weights is None else weights
        return weighted_quantile(self.values, weights, alpha)

    def estimated_minimizer(self):
        """Index of the minimum of the posterior median of the functional."""
        return int(np.argmin(self.quantile_curve(0.5)))

    def simulate(self, x_new, K, M, rng):
        """EQI estimate at ``x_new`` with the simulated batches and weights.

        Returns:
            ``(eqi, batches (M, K), weights (M, N), future minima (M,))``.
        """
        if int(M) != M or M < 1:
            raise ValueError(f"M must be a positive integer, got {M!r}")
        if K == 0:
            weights = np.tile(self.uniform, (M, 1))
            batches = np.empty((M, 0))
        else:
            density = predictive_density(self.ensemble, self.model, x_new)
            batches = _inverse_cdf(density, rng.random((M, int(K))))
            weights = _normalise_log_weights(batch_log_likelihoods(self.ensemble, self.model, x_new, batches))
        q_future = self.future_minima(weights)
        improvement = np.maximum(0.0, self.q_now - q_future)
        return float(improvement.mean()), batches, weights, q_future


def eqi(ensemble, model, x_new, K, M, x_grid, rho=MEDIAN, alpha=0.9, rng=None, context=None):
    """Simulation estimate of the expected quantile improvement at ``x_new``."""
    if K < 0:
        raise ValueError("K must be nonnegative")
    rng = np.random.default_rng() if rng is None else rng
    ctx = context if context is not None else EQIContext(ensemble, model, x_grid, rho, alpha)
    return ctx.simulate(x_new, K, M, rng)[0]


def batch_simulations(ensemble, model, x_new, K, M, x_grid, rho=MEDIAN, alpha=0.9, rng=None):
    """The M ``BatchSimulation`` records behind one EQI estimate."""
    ctx = EQIContext(ensemble, model, x_grid, rho, alpha)
    _, batches, weights, _ = ctx.simulate(x_new, K, M, np.random.default_rng() if rng is None else rng)
    return [BatchSimulation(float(x_new), b, w) for b, w in zip(batches, weights)]


def select_next(ensemble, model, candidates, K, M, rho=MEDIAN, alpha=0.9, rng=None, seed=None,
                x_grid=None, context=None, workers=1):
    """Evaluate EQI on every candidate and pick the maximiser.

    Every candidate gets a generator seeded with the same value, so all
    candidates see the same uniform numbers (common random numbers) and
    the result does not depend on evaluation order. Ties go to the
    smallest index.
    """
    candidates = np.atleast_1d(np.asarray(candidates, dtype=float))
    if candidates.size == 0:
        raise ValueError("no candidates")
    if seed is None:
        rng = np.random.default_rng() if rng is None else rng
        seed = int(rng.integers(2**63))
    x_grid = candidates if x_grid is None else x_grid
    ctx = context if context is not None else EQIContext(ensemble, model, x_grid, rho, alpha)

    def one(x):
        return ctx.simulate(x, K, M, np.random.default_rng(seed))[0]

    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            values = np.array(list(pool.map(one, candidates)))
    else:
        values = np.array([one(x) for x in candidates])
    return EQIResult(candidates, values, int(np.argmax(values)), int(K), int(M), float(alpha), int(seed))


# -- optimisation loop ---------------------------------------------------------


@dataclass
class StepRecord:
    step: int
    chosen_x: float
    x_hat: float
    gap: float
    n_obs: int
    eqi: Optional[EQIResult] = None
    acceptance_rate: float = float("nan")
    seconds: float = 0.0


@dataclass
class OptimizationState:
    """Data, current posterior and per-step records of an optimisation run.

    ``initial`` describes the fit on the starting design (step 0);
    ``history`` has one record per completed step.
    """

    dataset: object
    ensemble: object
    initial: Optional[StepRecord] = None
    history: List[StepRecord] = field(default_factory=list)

    def trajectory(self):
        return ([self.initial] if self.initial is not None else []) + list(self.history)


def optimality_gap(field_oracle, x_hat, x_grid):
    """True objective at ``x_hat`` minus its minimum over ``x_grid``."""
    g = np.asarray(field_oracle.median_values(np.atleast_1d(x_grid)), dtype=float)
    return float(field_oracle.median_values(np.array([x_hat]))[0]) - float(g.min())


def _streams(rng):
    master = np.random.SeedSequence(int(rng.integers(2**63)))
    oracle, design, chains = master.spawn(3)
    return (np.random.default_rng(oracle), np.random.default_rng(design),
            int(chains.generate_state(1, dtype=np.uint64)[0]))


def run_optimization(field_oracle, initial_design, steps, K=20, M=150, pcn_config=None, model=None,
                     rho=MEDIAN, alpha=0.9, strategy="adaptive_eqi", rng=None, candidates=None,
                     callback=None):
    """Sequential SLGP optimisation with EQI (or random) batch placement.

    Args:
        field_oracle: object with ``sample(x, k, rng)`` and ``median_values(x)``.
        initial_design: starting ``Dataset`` (nonempty).
        steps: number of batches to add.
        K: batch size; M: simulations per EQI estimate.
        pcn_config: chain settings; its seed is replaced per step.
        model: the ``SLGPModel``.
        strategy: ``"adaptive_eqi"`` or ``"random"``.
        rng: generator from which all streams are derived.
        candidates: x-grid for acquisition, curve minima and gap (101 points).
        callback: called with each ``StepRecord`` as it is produced.
    """
    if strategy not in STRATEGIES:
        raise ValueError(f"unknown strategy {strategy!r}; expected one of {STRATEGIES}")
    if len(initial_design) == 0:
        raise ValueError("initial design is empty")
    if model is None:
        raise ValueError("model is required")
    pcn_config = PCNConfig() if pcn_config is None else pcn_config
    rng = np.random.default_rng() if rng is None else rng
    candidates = default_candidates() if candidates is None else np.asarray(candidates, dtype=float)
    oracle_rng, design_rng, chain_master = _streams(rng)
    seeds = chain_seeds(chain_master, steps + 1)

    def fit(data, step):
        ens = run_pcn(model, data, replace(pcn_config, seed=seeds[step]))
        return ens, EQIContext(ens, model, candidates, rho, alpha)

    t0 = time.perf_counter()
    data = initial_design
    ensemble, ctx = fit(data, 0)
    x_hat = float(candidates[ctx.estimated_minimizer()])
    state = OptimizationState(data, ensemble)
    state.initial = StepRecord(0, float("nan"), x_hat, optimality_gap(field_oracle, x_hat, candidates),
                               len(data), acceptance_rate=ensemble.acceptance_rate,
                               seconds=time.perf_counter() - t0)
    if callback:
        callback(state.initial)
    for step in range(1, steps + 1):
        t0 = time.perf_counter()
        result = None
        if strategy == "adaptive_eqi":
            result = select_next(ensemble, model, candidates, K, M, rho, alpha,
                                 seed=int(design_rng.integers(2**63)), context=ctx)
            x_next = result.chosen_x
        else:
            x_next = float(design_rng.random())
        data = data.append(x_next, field_oracle.sample(x_next, K, oracle_rng))
        ensemble, ctx = fit(data, step)
        x_hat = float(candidates[ctx.estimated_minimizer()])
        record = StepRecord(step, x_next, x_hat, optimality_gap(field_oracle, x_hat, candidates), len(data),
                            eqi=result, acceptance_rate=ensemble.acceptance_rate,
                            seconds=time.perf_counter() - t0)
        state.history.append(record)
        state.dataset, state.ensemble = data, ensemble
        logger.info("step %d: x=%.4f x_hat=%.4f gap=%.4g", step, x_next, x_hat, record.gap)
        if callback:
            callback(record)
    return state
