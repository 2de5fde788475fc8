"""Preconditioned Crank-Nicolson sampling of the coefficient posterior.

The proposal ``sqrt(1 - beta**2) * eps + beta * xi`` with ``xi ~ N(0, I)``
leaves the standard normal prior invariant, so the acceptance ratio only
involves the likelihood.
"""
import csv
import json
import logging
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, replace

import numpy as np
from scipy.optimize import minimize

from .slgp import DensityField, LikelihoodTerms, SLGPModel

logger = logging.getLogger(__name__)

TARGET_ACCEPTANCE = 0.25
ADAPT_WINDOW = 50
BETA_BOUNDS = (1e-5, 1.0)


@dataclass(frozen=True)
class PCNConfig:
    """Settings of one pCN chain.

    ``beta`` is the initial step size; with ``adapt`` it is tuned during
    burn-in towards a 0.25 acceptance rate and frozen afterwards. ``init``
    is ``"zero"`` (prior mode) or ``"map"`` (posterior mode found by
    L-BFGS, which spares the chain the long walk from the origin when the
    data are plentiful).
    """

    n_iterations: int = 2500
    burn_in: int = 1000
    thinning: int = 10
    beta: float = 0.1
    seed: int = 0
    adapt: bool = True
    init: str = "zero"

    def __post_init__(self):
        if not 0.0 < self.beta <= 1.0:
            raise ValueError(f"beta must be in (0, 1], got {self.beta}")
        if self.n_iterations < 1 or self.thinning < 1 or self.burn_in < 0:
            raise ValueError("n_iterations and thinning must be positive, burn_in nonnegative")
        if self.burn_in >= self.n_iterations:
            raise ValueError("burn_in must be smaller than n_iterations")
        if self.init not in ("zero", "map"):
            raise ValueError(f"init must be 'zero' or 'map', got {self.init!r}")
        if not 0 <= int(self.seed) < 2**64:
            raise ValueError("seed must be a 64-bit unsigned integer")

    @property
    def n_retained(self):
        return (self.n_iterations - self.burn_in) // self.thinning

    @classmethod
    def for_draws(cls, n_draws, burn_in=1000, thinning=10, **kwargs):
        """Config that retains exactly ``n_draws`` states."""
        return cls(n_iterations=burn_in + n_draws * thinning, burn_in=burn_in, thinning=thinning, **kwargs)


@dataclass(frozen=True, eq=False)
class PosteriorEnsemble:
    """Retained pCN states: ``draws`` has shape (N, p)."""

    draws: np.ndarray
    model: SLGPModel
    acceptance_rate: float
    n_accepted: int = 0
    n_proposed: int = 0
    beta: float = float("nan")

    def __len__(self):
        return self.draws.shape[0]


def _terms(model, data):
    return data if isinstance(data, LikelihoodTerms) else LikelihoodTerms(model, data)


def pcn_step(current, current_loglik, model, data, beta, rng):
    """One pCN transition.

    Args:
        current: current coefficient vector.
        current_loglik: its log-likelihood.
        model: the ``SLGPModel``.
        data: a ``Dataset`` or prepared ``LikelihoodTerms``.
        beta: step size in (0, 1].
        rng: ``numpy.random.Generator``.

    Returns:
        ``(state, loglik, accepted)`` for the retained state.
    """
    if not 0.0 < beta <= 1.0:
        raise ValueError(f"beta must be in (0, 1], got {beta}")
    terms = _terms(model, data)
    xi = rng.standard_normal(current.shape[0])
    proposal = np.sqrt(1.0 - beta * beta) * current + beta * xi
    log_u = np.log(rng.random())
    if terms.n == 0:
        return proposal, 0.0, True
    proposal_loglik = terms.loglik(proposal)
    if log_u < proposal_loglik - current_loglik:
        return proposal, proposal_loglik, True
    return current, current_loglik, False


def find_map(model, data, x0=None):
    """Posterior mode of the coefficients by L-BFGS."""
    terms = _terms(model, data)
    x0 = np.zeros(model.rank) if x0 is None else np.asarray(x0, dtype=float)
    if terms.n == 0:
        return np.zeros(model.rank)

    def objective(eps):
        value, grad = terms.loglik_and_grad(eps)
        return 0.5 * eps @ eps - value, eps - grad

    res = minimize(objective, x0, jac=True, method="L-BFGS-B", options={"maxiter": 2000, "gtol": 1e-8})
    return res.x


def run_pcn(model, data, config):
    """Run a single pCN chain and return the retained states.

    The chain starts at zero (or at the MAP with ``init="map"``), runs
    ``config.n_iterations`` transitions and keeps every ``thinning``-th
    state after ``burn_in``. ``acceptance_rate`` counts post-burn-in
    proposals only, i.e. those made with the frozen step size.
    """
    if not isinstance(config, PCNConfig):
        raise ValueError("config must be a PCNConfig")
    terms = _terms(model, data)
    rng = np.random.default_rng(int(config.seed))
    state = find_map(model, terms) if config.init == "map" else np.zeros(model.rank)
    loglik = terms.loglik(state)
    beta = config.beta
    draws = np.empty((config.n_retained, model.rank))
    kept = 0
    window_accepts = 0
    n_accepted = 0
    for it in range(1, config.n_iterations + 1):
        state, loglik, accepted = pcn_step(state, loglik, model, terms, beta, rng)
        if it <= config.burn_in:
            window_accepts += accepted
            if config.adapt and it % ADAPT_WINDOW == 0:
                rate = window_accepts / ADAPT_WINDOW
                beta = float(np.clip(beta * np.exp(2.0 * (rate - TARGET_ACCEPTANCE)), *BETA_BOUNDS))
                window_accepts = 0
            continue
        n_accepted += accepted
        if (it - config.burn_in) % config.thinning == 0:
            draws[kept] = state
            kept += 1
    n_proposed = config.n_iterations - config.burn_in
    logger.debug("pCN: beta=%.3g acceptance=%.3f", beta, n_accepted / n_proposed)
    return PosteriorEnsemble(
        draws=draws,
        model=model,
        acceptance_rate=n_accepted / n_proposed,
        n_accepted=n_accepted,
        n_proposed=n_proposed,
        beta=beta,
    )


def chain_seeds(seed, n_chains):
    """Independent 64-bit seeds derived from one master seed."""
    children = np.random.SeedSequence(int(seed)).spawn(n_chains)
    return [int(c.generate_state(1, dtype=np.uint64)[0]) for c in children]


def _run_chain(args):
    model, data, config = args
    return run_pcn(model, data, config)


def run_chains(model, data, config, n_chains=1, workers=1):
    """Run independent chains and pool their draws.

    With ``n_chains == 1`` this is ``run_pcn(model, data, config)``. The
    pooled draws are ordered by chain, whatever the completion order.
    """
    if n_chains < 1:
        raise ValueError("n_chains must be positive")
    if n_chains == 1:
        return run_pcn(model, data, config)
    jobs = [(model, data, replace(config, seed=s)) for s in chain_seeds(config.seed, n_chains)]
    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            parts = list(pool.map(_run_chain, jobs))
    else:
        parts = [_run_chain(job) for job in jobs]
    n_acc = sum(p.n_accepted for p in parts)
    n_prop = sum(p.n_proposed for p in parts)
    return PosteriorEnsemble(
        draws=np.concatenate([p.draws for p in parts]),
        model=model,
        acceptance_rate=n_acc / n_prop,
        n_accepted=n_acc,
        n_proposed=n_prop,
        beta=float(np.mean([p.beta for p in parts])),
    )


def posterior_mean_field(ensemble, x_grid, chunk=256):
    """Average of the particle densities at each location of ``x_grid``."""
    if len(ensemble) == 0:
        raise ValueError("ensemble is empty")
    model = ensemble.model
    x_grid = np.atleast_1d(np.asarray(x_grid, dtype=float))
    total = np.zeros((x_grid.size, model.t_grid.size))
    for start in range(0, len(ensemble), chunk):
        total += model.density_grid(ensemble.draws[start:start + chunk], x_grid).sum(axis=0)
    return DensityField(x_grid, model.t_grid, total / len(ensemble))


# -- serialisation -----------------------------------------------------------


def write_ensemble(ensemble, csv_path, json_path, config=None, extra=None):
    """Write draws as CSV (one row per draw) and a JSON manifest."""
    p = ensemble.model.rank
    with open(csv_path, "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow([f"eps_{j + 1}" for j in range(p)])
        for row in ensemble.draws:
            writer.writerow([repr(float(v)) for v in row])
    manifest = {
        "q": ensemble.model.q,
        "n_grid": int(ensemble.model.t_grid.size),
        "rank": p,
        "n_draws": len(ensemble),
        "acceptance_rate": ensemble.acceptance_rate,
        "n_accepted": ensemble.n_accepted,
        "n_proposed": ensemble.n_proposed,
        "final_beta": ensemble.beta,
        "seed": None if config is None else int(config.seed),
        "config": None if config is None else asdict(config),
    }
    if extra:
        manifest.update(extra)
    with open(json_path, "w", encoding="utf-8") as fh:
        json.dump(manifest, fh, indent=2, sort_keys=True)
        fh.write("\n")


def read_ensemble(csv_path, json_path):
    """Inverse of ``write_ensemble``; rebuilds a zero-mean model."""
    with open(json_path, encoding="utf-8") as fh:
        manifest = json.load(fh)
    draws = np.loadtxt(csv_path, delimiter=",", skiprows=1, ndmin=2)
    model = SLGPModel.create(q=manifest["q"], n_grid=manifest["n_grid"])
    if draws.shape[1] != model.rank:
        raise ValueError(f"{csv_path}: expected {model.rank} columns, found {draws.shape[1]}")
    return PosteriorEnsemble(
        draws=draws,
        model=model,
        acceptance_rate=manifest["acceptance_rate"],
        n_accepted=manifest["n_accepted"],
        n_proposed=manifest["n_proposed"],
        beta=manifest["final_beta"],
    )
