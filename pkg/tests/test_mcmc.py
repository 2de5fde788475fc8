import numpy as np
import pytest
from scipy import stats

from slgpopt import Dataset, SLGPModel
from slgpopt.mcmc import (
    PCNConfig,
    PosteriorEnsemble,
    chain_seeds,
    find_map,
    pcn_step,
    posterior_mean_field,
    read_ensemble,
    run_chains,
    run_pcn,
    write_ensemble,
)
from slgpopt.slgp import LikelihoodTerms, slgp_density


def ensemble_of(model, draws):
    return PosteriorEnsemble(np.atleast_2d(draws), model, 1.0)


class TestConfig:
    @pytest.mark.parametrize("kwargs", [
        dict(beta=0.0), dict(beta=1.5), dict(n_iterations=0), dict(thinning=0), dict(burn_in=-1),
        dict(n_iterations=100, burn_in=100), dict(init="random"), dict(seed=-1),
    ])
    def test_invalid(self, kwargs):
        with pytest.raises(ValueError):
            PCNConfig(**kwargs)

    @pytest.mark.parametrize("n_it,burn,thin", [(2500, 1000, 10), (101, 0, 1), (1000, 999, 7), (1234, 17, 5)])
    def test_retained_count(self, n_it, burn, thin):
        cfg = PCNConfig(n_iterations=n_it, burn_in=burn, thinning=thin, adapt=False)
        assert cfg.n_retained == (n_it - burn) // thin
        assert len(run_pcn(SLGPModel.create(q=1, n_grid=11), Dataset(), cfg)) == cfg.n_retained

    def test_for_draws(self):
        assert PCNConfig.for_draws(150, burn_in=200, thinning=3).n_retained == 150

    def test_run_rejects_non_config(self, model_q1):
        with pytest.raises(ValueError):
            run_pcn(model_q1, Dataset(), {"beta": 0.1})


class TestStep:
    def test_empty_data_always_accepts(self, model_q1, rng):
        state = np.zeros(6)
        for _ in range(200):
            state, ll, accepted = pcn_step(state, 0.0, model_q1, Dataset(), 0.3, rng)
            assert accepted and ll == 0.0

    def test_beta_one_forgets_current(self, model_q1):
        a, _, _ = pcn_step(np.full(6, 5.0), 0.0, model_q1, Dataset(), 1.0, np.random.default_rng(1))
        b, _, _ = pcn_step(np.full(6, -3.0), 0.0, model_q1, Dataset(), 1.0, np.random.default_rng(1))
        np.testing.assert_array_equal(a, b)

    def test_small_beta_stays_close(self, model_q1, small_data, rng):
        current = rng.standard_normal(6)
        ll = LikelihoodTerms(model_q1, small_data).loglik(current)
        accepts = 0
        for _ in range(50):
            new, _, accepted = pcn_step(current, ll, model_q1, small_data, 1e-6, rng)
            accepts += accepted
            assert np.max(np.abs(new - current)) < 1e-4
        assert accepts >= 48

    def test_rejected_keeps_state_and_loglik(self, model_q1, rng):
        # a sharply peaked dataset makes big moves from its mode unlikely to be accepted
        data = Dataset(np.full(40, 0.5), np.full(40, 0.5))
        mode = find_map(model_q1, data)
        ll = LikelihoodTerms(model_q1, data).loglik(mode)
        rejected = 0
        for _ in range(30):
            new, new_ll, accepted = pcn_step(mode, ll, model_q1, data, 1.0, rng)
            if not accepted:
                rejected += 1
                assert new is mode and new_ll == ll
        assert rejected > 0

    def test_invalid_beta(self, model_q1, rng):
        with pytest.raises(ValueError):
            pcn_step(np.zeros(6), 0.0, model_q1, Dataset(), 0.0, rng)


class TestRun:
    def test_prior_recovery(self, model_q1):
        cfg = PCNConfig(n_iterations=11000, burn_in=1000, thinning=1, seed=7)
        ens = run_pcn(model_q1, Dataset(), cfg)
        assert len(ens) == 10000
        assert ens.acceptance_rate == 1.0
        assert np.all(np.abs(ens.draws.mean(axis=0)) <= 0.05)
        assert np.all((ens.draws.var(axis=0) >= 0.9) & (ens.draws.var(axis=0) <= 1.1))

    def test_prior_ks(self, model_q1):
        # beta = 1 gives independent prior draws, so the KS test applies as stated
        cfg = PCNConfig(n_iterations=10001, burn_in=1, thinning=1, beta=1.0, adapt=False, seed=11)
        draws = run_pcn(model_q1, Dataset(), cfg).draws
        critical = 1.63 / np.sqrt(draws.shape[0])
        for j in range(6):
            assert stats.kstest(draws[:, j], "norm").statistic < critical

    def test_deterministic(self, model_q1, small_data):
        cfg = PCNConfig(n_iterations=600, burn_in=200, thinning=4, seed=99)
        a = run_pcn(model_q1, small_data, cfg)
        b = run_pcn(model_q1, small_data, cfg)
        np.testing.assert_array_equal(a.draws, b.draws)
        assert a.acceptance_rate == b.acceptance_rate

    def test_acceptance_bookkeeping(self, model_q1, small_data):
        cfg = PCNConfig(n_iterations=700, burn_in=300, thinning=2, seed=1)
        ens = run_pcn(model_q1, small_data, cfg)
        assert ens.n_proposed == 400
        assert ens.acceptance_rate == ens.n_accepted / ens.n_proposed
        assert 0.0 <= ens.acceptance_rate <= 1.0

    def test_adaptation_targets_quarter(self, rng):
        model = SLGPModel.create(q=2, n_grid=51)
        data = Dataset(rng.random(200), rng.beta(2, 6, 200))
        ens = run_pcn(model, data, PCNConfig(n_iterations=4000, burn_in=2000, thinning=10, seed=3, init="map"))
        assert 0.15 <= ens.acceptance_rate <= 0.35

    def test_retained_logliks_finite(self, model_q2, small_data):
        ens = run_pcn(model_q2, small_data, PCNConfig(n_iterations=500, burn_in=100, thinning=5, seed=2))
        assert np.all(np.isfinite(LikelihoodTerms(model_q2, small_data).loglik(ens.draws)))

    def test_map_init_is_stationary(self, model_q2, small_data):
        mode = find_map(model_q2, small_data)
        _, grad = LikelihoodTerms(model_q2, small_data).loglik_and_grad(mode)
        np.testing.assert_allclose(grad - mode, 0.0, atol=1e-4)


class TestChains:
    def test_seeds_distinct_and_stable(self):
        seeds = chain_seeds(5, 4)
        assert len(set(seeds)) == 4 and seeds == chain_seeds(5, 4)

    def test_pooled(self, model_q1, small_data):
        cfg = PCNConfig(n_iterations=300, burn_in=100, thinning=4, seed=8)
        ens = run_chains(model_q1, small_data, cfg, n_chains=3)
        assert len(ens) == 3 * cfg.n_retained
        assert ens.n_proposed == 600
        first = run_pcn(model_q1, small_data, PCNConfig(**{**cfg.__dict__, "seed": chain_seeds(8, 3)[0]}))
        np.testing.assert_array_equal(ens.draws[: cfg.n_retained], first.draws)

    def test_single_chain_is_run_pcn(self, model_q1, small_data):
        cfg = PCNConfig(n_iterations=300, burn_in=100, thinning=4, seed=8)
        np.testing.assert_array_equal(run_chains(model_q1, small_data, cfg).draws,
                                      run_pcn(model_q1, small_data, cfg).draws)


class TestMeanField:
    def test_single_draw(self, model_q2, rng):
        eps = rng.standard_normal(model_q2.rank)
        field = posterior_mean_field(ensemble_of(model_q2, eps), [0.1, 0.8])
        np.testing.assert_allclose(field.values[1], slgp_density(model_q2, eps, 0.8).values, rtol=1e-13)

    def test_identical_draws(self, model_q2, rng):
        eps = rng.standard_normal(model_q2.rank)
        field = posterior_mean_field(ensemble_of(model_q2, np.tile(eps, (5, 1))), [0.3])
        np.testing.assert_allclose(field.values[0], slgp_density(model_q2, eps, 0.3).values, rtol=1e-13)

    def test_two_draws_average(self, model_q2, rng):
        a, b = rng.standard_normal((2, model_q2.rank))
        field = posterior_mean_field(ensemble_of(model_q2, np.stack([a, b])), [0.55])
        expect = 0.5 * (slgp_density(model_q2, a, 0.55).values + slgp_density(model_q2, b, 0.55).values)
        np.testing.assert_allclose(field.values[0], expect, rtol=1e-13)

    def test_normalised(self, model_q2, rng):
        field = posterior_mean_field(ensemble_of(model_q2, 2 * rng.standard_normal((300, model_q2.rank))),
                                     np.linspace(0, 1, 9))
        for slice_ in field:
            assert slice_.integral() == pytest.approx(1.0, abs=1e-9)


def test_ensemble_round_trip(tmp_path, model_q2, small_data):
    cfg = PCNConfig(n_iterations=300, burn_in=100, thinning=10, seed=4)
    ens = run_pcn(model_q2, small_data, cfg)
    write_ensemble(ens, tmp_path / "e.csv", tmp_path / "e.json", config=cfg)
    back = read_ensemble(tmp_path / "e.csv", tmp_path / "e.json")
    np.testing.assert_array_equal(back.draws, ens.draws)
    assert back.acceptance_rate == ens.acceptance_rate
    assert back.model.q == 2 and back.model.t_grid.size == 51
