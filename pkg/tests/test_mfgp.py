"""Tests for the multi-fidelity GP: marginal likelihood, MCMC, prediction."""

import numpy as np
import pytest
from scipy.linalg import cho_factor, cho_solve

from mfopt.mean_models import (
    gaussian_peak_mean,
    halfnormal,
    piecewise_offset_mean,
    pointmass,
    uniform,
    zero_mean,
)
from mfopt.mf_kernel import (
    JITTER,
    FidelityPoint,
    KernelHyperParams,
    covariance_matrix_from_arrays,
    cross_covariance_from_arrays,
)
from mfopt.mfgp import (
    Dataset,
    DrawRecord,
    FactorizationError,
    HyperPriors,
    McmcConfig,
    McmcError,
    PosteriorDraws,
    fit_mcmc,
    log_marginal_likelihood,
    predict,
)


def make_hp(sigma2=1.0, theta=1.0, delta=1.0, noise2=0.0, family="rbf"):
    return KernelHyperParams(
        sigma2=sigma2,
        length_scales=np.array([theta]),
        delta=delta,
        noise2=noise2,
        spatial_family=family,
    )


def draws_of(*hps, mean_params=()):
    return PosteriorDraws(
        draws=tuple(DrawRecord(hp=h, mean_params=mean_params) for h in hps),
        diagnostics={},
    )


class TestDataset:
    def test_from_arrays_and_counts(self):
        data = Dataset.from_arrays(
            np.array([0.0, 1.0, 2.0]), np.array([0, 1, 0]), np.array([1.0, 2.0, 3.0])
        )
        assert len(data) == 3
        assert data.fidelity_counts == (2, 1)
        assert data.dim == 1

    def test_length_mismatch_rejected(self):
        with pytest.raises(ValueError):
            Dataset.from_arrays(np.array([0.0, 1.0]), np.array([0, 1]), np.array([1.0]))

    def test_empty_rejected(self):
        with pytest.raises(ValueError):
            Dataset(points=(), outputs=np.array([]))

    def test_append_returns_new_dataset(self):
        data = Dataset.from_arrays(np.array([0.0]), np.array([1]), np.array([5.0]))
        grown = data.append(FidelityPoint(x=np.array([1.0]), f=0), 7.0)
        assert len(data) == 1
        assert len(grown) == 2
        assert grown.outputs[-1] == 7.0


class TestLogMarginalLikelihood:
    def test_single_point_closed_form(self):
        # n=1, zero mean, y=0: lml = -0.5*(log K + log 2pi) with
        # K = sigma2 + noise2 + jitter.
        hp = make_hp(sigma2=1.0, noise2=0.04)
        data = Dataset.from_arrays(np.array([0.5]), np.array([1]), np.array([0.0]))
        k = 1.0 + 0.04 + JITTER
        want = -0.5 * (np.log(k) + np.log(2 * np.pi))
        assert log_marginal_likelihood(data, hp) == pytest.approx(want, abs=1e-12)

    def test_single_point_with_mean_residual(self):
        # y equal to the mean value leaves a zero residual, recovering the
        # same closed form as y=0 under a zero mean.
        spec = gaussian_peak_mean()
        params = (1.0, 1.17, 2.0)
        hp = make_hp(sigma2=0.7, noise2=0.01)
        data = Dataset.from_arrays(np.array([1.17]), np.array([1]), np.array([1.0]))
        k = 0.7 + 0.01 + JITTER
        want = -0.5 * (np.log(k) + np.log(2 * np.pi))
        got = log_marginal_likelihood(data, hp, mean=spec, mean_params=params)
        assert got == pytest.approx(want, abs=1e-12)

    def test_constant_shift_invariance_high_fidelity(self):
        # On all-high-fidelity data, shifting y by a constant while shifting
        # the piecewise offsets the same way leaves the likelihood unchanged.
        rng = np.random.default_rng(5)
        x = rng.uniform(0, 20, 6)
        f = np.ones(6, dtype=int)
        y = rng.normal(size=6)
        hp = make_hp(sigma2=0.8, theta=4.0, delta=0.6, noise2=0.05)
        spec = piecewise_offset_mean(base_form="quadratic")
        shift = 3.7
        base = log_marginal_likelihood(
            Dataset.from_arrays(x, f, y), hp, spec, (1.0, 2.0, 7.5)
        )
        shifted = log_marginal_likelihood(
            Dataset.from_arrays(x, f, y + shift), hp, spec,
            (1.0 - shift, 2.0 - shift, 7.5),
        )
        assert shifted == pytest.approx(base, abs=1e-10)

    def test_mean_ignores_low_fidelity_rows(self):
        # The structured mean models the high-fidelity function only, so on
        # all-low-fidelity data any mean parameters give the zero-mean value.
        rng = np.random.default_rng(6)
        x = rng.uniform(0, 20, 6)
        f = np.zeros(6, dtype=int)
        y = rng.normal(size=6)
        hp = make_hp(sigma2=0.8, theta=4.0, delta=0.6, noise2=0.05)
        data = Dataset.from_arrays(x, f, y)
        spec = piecewise_offset_mean(base_form="quadratic")
        plain = log_marginal_likelihood(data, hp)
        for params in ((1.0, 2.0, 7.5), (-4.0, 30.0, 9.9)):
            got = log_marginal_likelihood(data, hp, spec, params)
            assert got == pytest.approx(plain, abs=1e-12)

    def test_matches_textbook_dense_oracle(self):
        # Direct -0.5 y' K^-1 y - 0.5 log|K| - n/2 log 2pi via slogdet/solve.
        rng = np.random.default_rng(17)
        n = 5
        x = rng.uniform(0, 1, n)
        f = rng.integers(0, 2, n)
        y = rng.normal(size=n)
        hp = make_hp(sigma2=0.6, theta=0.4, delta=0.9, noise2=0.02)
        data = Dataset.from_arrays(x, f, y)

        diff = x[:, None] - x[None, :]
        k = 0.6 * np.exp(-0.5 * (diff / 0.4) ** 2) * np.exp(
            -0.9 * np.abs(f[:, None] - f[None, :])
        )
        k = k + (0.02 + JITTER) * np.eye(n)
        sign, logdet = np.linalg.slogdet(k)
        want = (
            -0.5 * float(y @ np.linalg.solve(k, y))
            - 0.5 * logdet
            - 0.5 * n * np.log(2 * np.pi)
        )
        assert log_marginal_likelihood(data, hp) == pytest.approx(want, abs=1e-8)

    def test_deterministic(self):
        data = Dataset.from_arrays(
            np.array([0.1, 0.9]), np.array([0, 1]), np.array([1.0, -1.0])
        )
        hp = make_hp()
        assert log_marginal_likelihood(data, hp) == log_marginal_likelihood(data, hp)

    def test_factorization_failure_named_error(self):
        # 40 exact duplicates with huge variance and no noise overwhelm the
        # fixed jitter and break the Cholesky.
        data = Dataset.from_arrays(np.zeros(40), np.ones(40), np.zeros(40))
        hp = make_hp(sigma2=1e14)
        with pytest.raises(FactorizationError, match="sigma2"):
            log_marginal_likelihood(data, hp)


class TestFitMcmc:
    def test_pointmass_priors_return_pinned_values(self):
        data = Dataset.from_arrays(np.array([0.2]), np.array([1]), np.array([0.5]))
        priors = HyperPriors(
            sigma2=pointmass(0.5),
            length_scales=(pointmass(0.3),),
            delta=pointmass(0.7),
            noise2=pointmass(0.01),
        )
        draws = fit_mcmc(
            data, priors, mcmc_config=McmcConfig(warmup=10, draws=25),
            rng=np.random.default_rng(0),
        )
        assert len(draws) == 25
        for rec in draws.draws:
            assert rec.hp.sigma2 == 0.5
            assert rec.hp.length_scales[0] == 0.3
            assert rec.hp.delta == 0.7
            assert rec.hp.noise2 == 0.01
        assert draws.diagnostics["overall_acceptance"] == 1.0

    def test_single_point_recovers_delta_prior(self):
        # One observation leaves delta unidentified, so its posterior is the
        # Unif(0.01, 1) prior; empirical quantiles land within 0.05.
        data = Dataset.from_arrays(np.array([0.5]), np.array([1]), np.array([0.0]))
        draws = fit_mcmc(
            data, HyperPriors(), mcmc_config=McmcConfig(warmup=500, draws=2000),
            rng=np.random.default_rng(0),
        )
        ds = np.array([rec.hp.delta for rec in draws.draws])
        levels = np.array([0.1, 0.25, 0.5, 0.75, 0.9])
        want = 0.01 + 0.99 * levels
        got = np.quantile(ds, levels)
        assert np.abs(got - want).max() < 0.05

    def test_synthetic_data_recovers_hyperparameters(self):
        # Data generated from known sigma2/theta; posterior medians land
        # within a factor of two.
        rng = np.random.default_rng(1)
        n = 40
        x = rng.uniform(0, 1, n)
        f = (np.arange(n) % 2).astype(float)
        true = make_hp(sigma2=0.5, theta=0.3, delta=0.5)
        k = covariance_matrix_from_arrays(
            x[:, None], f, true, include_noise=False
        ) + 1e-4 * np.eye(n)
        y = np.linalg.cholesky(k) @ rng.standard_normal(n)
        priors = HyperPriors(
            sigma2=uniform(0.01, 2.0),
            length_scales=(uniform(0.01, 2.0),),
            delta=uniform(0.01, 2.0),
            noise2=halfnormal(0.03),
        )
        draws = fit_mcmc(
            Dataset.from_arrays(x, f, y), priors,
            mcmc_config=McmcConfig(warmup=400, draws=400),
            rng=np.random.default_rng(101),
        )
        s2 = float(np.median([rec.hp.sigma2 for rec in draws.draws]))
        th = float(np.median([rec.hp.length_scales[0] for rec in draws.draws]))
        assert 0.25 <= s2 <= 1.0
        assert 0.15 <= th <= 0.6

    def test_reproducible_given_rng(self):
        data = Dataset.from_arrays(
            np.array([0.1, 0.5, 0.9]), np.array([0, 1, 0]), np.array([0.3, -0.2, 0.8])
        )
        cfg = McmcConfig(warmup=50, draws=50)
        a = fit_mcmc(data, HyperPriors(), mcmc_config=cfg, rng=np.random.default_rng(9))
        b = fit_mcmc(data, HyperPriors(), mcmc_config=cfg, rng=np.random.default_rng(9))
        for ra, rb in zip(a.draws, b.draws):
            assert ra.hp.sigma2 == rb.hp.sigma2
            assert np.array_equal(ra.hp.length_scales, rb.hp.length_scales)
            assert ra.hp.delta == rb.hp.delta
            assert ra.hp.noise2 == rb.hp.noise2

    def test_mean_parameters_sampled_alongside(self):
        rng = np.random.default_rng(3)
        x = np.linspace(0, 20, 8)
        spec = piecewise_offset_mean(base_form="quadratic")
        y = x * x - np.where(x < 7.5, 1.0, 15.0) + 0.01 * rng.standard_normal(8)
        draws = fit_mcmc(
            Dataset.from_arrays(x, np.ones(8), y),
            HyperPriors(),
            mean=spec,
            mcmc_config=McmcConfig(warmup=100, draws=100),
            rng=rng,
        )
        for rec in draws.draws:
            assert len(rec.mean_params) == 3
            assert 5.0 <= rec.mean_params[2] <= 10.0

    def test_unfindable_start_raises_named_error(self):
        data = Dataset.from_arrays(np.array([0.0]), np.array([1]), np.array([np.nan]))
        with pytest.raises(McmcError):
            fit_mcmc(
                data, HyperPriors(), mcmc_config=McmcConfig(warmup=5, draws=5),
                rng=np.random.default_rng(0),
            )

    def test_diagnostics_shape(self):
        data = Dataset.from_arrays(np.array([0.2, 0.8]), np.array([0, 1]), np.array([0.0, 1.0]))
        draws = fit_mcmc(
            data, HyperPriors(), mcmc_config=McmcConfig(warmup=30, draws=30, chains=2),
            rng=np.random.default_rng(2),
        )
        assert len(draws) == 60
        assert set(draws.diagnostics) >= {"acceptance_rates", "overall_acceptance", "chains"}
        assert len(draws.diagnostics["chains"]) == 2


class TestPredict:
    def test_requires_nonempty_grid(self):
        data = Dataset.from_arrays(np.array([0.5]), np.array([1]), np.array([0.0]))
        dr = draws_of(make_hp())
        with pytest.raises(ValueError):
            predict(data, dr, grid=None)
        with pytest.raises(ValueError):
            predict(data, dr, grid=np.array([]))

    def test_noiseless_interpolation_at_training_points(self):
        x = np.array([0.1, 0.4, 0.8])
        y = np.array([1.0, -0.5, 0.3])
        data = Dataset.from_arrays(x, np.ones(3), y)
        dr = draws_of(make_hp(sigma2=1.0, theta=0.3, noise2=0.0))
        pred = predict(data, dr, grid=x)
        assert np.allclose(pred.mu_hf, y, atol=1e-6)
        assert np.all(pred.var_hf <= 1e-6)

    def test_single_draw_aggregation_collapses(self):
        # Duplicating the one draw changes nothing: the variance of a
        # one-point population of means is exactly zero.
        x = np.array([0.1, 0.6])
        data = Dataset.from_arrays(x, np.array([0, 1]), np.array([0.4, 0.9]))
        rec = make_hp(sigma2=0.8, theta=0.5, delta=0.7, noise2=0.01)
        grid = np.linspace(0, 1, 11)
        one = predict(data, draws_of(rec), grid=grid)
        two = predict(data, draws_of(rec, rec), grid=grid)
        assert np.array_equal(one.mu_hf, two.mu_hf)
        assert np.array_equal(one.var_hf, two.var_hf)
        assert np.array_equal(one.mu_lf, two.mu_lf)
        assert np.array_equal(one.var_lf, two.var_lf)

    def test_matches_dense_oracle_three_draws(self):
        # Hand-rolled conditional per draw plus law-of-total-variance
        # aggregation, all in plain numpy.
        rng = np.random.default_rng(23)
        n = 6
        x = rng.uniform(0, 1, n)
        f = rng.integers(0, 2, n)
        y = rng.normal(size=n)
        data = Dataset.from_arrays(x, f, y)
        grid = np.linspace(0, 1, 9)
        hps = [
            make_hp(sigma2=0.5, theta=0.3, delta=0.4, noise2=0.01),
            make_hp(sigma2=0.9, theta=0.5, delta=1.2, noise2=0.02),
            make_hp(sigma2=0.3, theta=0.2, delta=0.8, noise2=0.005),
        ]
        pred = predict(data, draws_of(*hps), grid=grid)

        mus_h, vars_h = [], []
        for hp in hps:
            k = covariance_matrix_from_arrays(x[:, None], f.astype(float), hp, include_noise=True)
            cho = cho_factor(k, lower=True)
            ks = cross_covariance_from_arrays(
                grid[:, None], np.ones(9), x[:, None], f.astype(float), hp
            )
            mu = ks @ cho_solve(cho, y)
            var = hp.sigma2 - np.sum(ks * cho_solve(cho, ks.T).T, axis=1)
            mus_h.append(mu)
            vars_h.append(np.maximum(var, 0.0))
        mus_h = np.stack(mus_h)
        vars_h = np.stack(vars_h)
        mu_want = mus_h.mean(axis=0)
        var_want = vars_h.mean(axis=0) + np.maximum(
            (mus_h * mus_h).mean(axis=0) - mu_want * mu_want, 0.0
        )
        assert np.allclose(pred.mu_hf, mu_want, atol=1e-8)
        assert np.allclose(pred.var_hf, var_want, atol=1e-8)

    def test_variance_nonnegative_everywhere(self):
        rng = np.random.default_rng(31)
        x = rng.uniform(0, 1, 10)
        f = rng.integers(0, 2, 10)
        y = rng.normal(size=10)
        data = Dataset.from_arrays(x, f, y)
        hps = [
            make_hp(
                sigma2=float(rng.uniform(0.1, 2)),
                theta=float(rng.uniform(0.05, 1)),
                delta=float(rng.uniform(0.05, 2)),
                noise2=float(rng.uniform(0, 0.1)),
            )
            for _ in range(5)
        ]
        pred = predict(data, draws_of(*hps), grid=np.linspace(0, 1, 41))
        assert np.all(pred.var_hf >= 0)
        assert np.all(pred.var_lf >= 0)

    def test_variance_grows_away_from_data(self):
        data = Dataset.from_arrays(np.array([0.5]), np.array([1]), np.array([0.0]))
        dr = draws_of(make_hp(sigma2=1.0, theta=0.1, noise2=0.0))
        pred = predict(data, dr, grid=np.array([0.5, 5.0]))
        assert pred.var_hf[1] > pred.var_hf[0]
        assert pred.var_hf[1] == pytest.approx(1.0, abs=1e-6)

    def test_large_delta_decouples_fidelities(self):
        # With delta huge the cross-fidelity correlation vanishes, so the
        # high-fidelity posterior matches a GP trained on the high-fidelity
        # subset alone.
        rng = np.random.default_rng(41)
        x_h = rng.uniform(0, 1, 4)
        y_h = rng.normal(size=4)
        x_l = rng.uniform(0, 1, 4)
        y_l = rng.normal(size=4)
        hp = make_hp(sigma2=0.7, theta=0.4, delta=50.0, noise2=0.01)
        grid = np.linspace(0, 1, 17)
        joint = predict(
            Dataset.from_arrays(
                np.concatenate([x_h, x_l]),
                np.array([1] * 4 + [0] * 4),
                np.concatenate([y_h, y_l]),
            ),
            draws_of(hp),
            grid=grid,
        )
        solo = predict(
            Dataset.from_arrays(x_h, np.ones(4), y_h), draws_of(hp), grid=grid
        )
        assert np.allclose(joint.mu_hf, solo.mu_hf, atol=1e-4)
        assert np.allclose(joint.var_hf, solo.var_hf, atol=1e-4)

    def test_zero_mean_spec_equals_no_mean(self):
        rng = np.random.default_rng(53)
        x = rng.uniform(0, 1, 6)
        f = rng.integers(0, 2, 6)
        y = rng.normal(size=6)
        data = Dataset.from_arrays(x, f, y)
        dr = draws_of(make_hp(sigma2=0.6, theta=0.3, delta=0.5, noise2=0.01))
        grid = np.linspace(0, 1, 13)
        a = predict(data, dr, mean=None, grid=grid)
        b = predict(data, dr, mean=zero_mean(), grid=grid)
        assert np.allclose(a.mu_hf, b.mu_hf, atol=1e-10)
        assert np.allclose(a.var_hf, b.var_hf, atol=1e-10)
        assert np.allclose(a.mu_lf, b.mu_lf, atol=1e-10)

    def test_mean_model_added_back(self):
        # A structured mean with pinned parameters shifts predictions far
        # from data toward the mean surface rather than zero.
        spec = piecewise_offset_mean(base_form="quadratic")
        params = (0.0, 15.0, 7.5)
        data = Dataset.from_arrays(np.array([1.0]), np.array([1]), np.array([1.0]))
        dr = draws_of(make_hp(sigma2=0.1, theta=0.5, noise2=0.0), mean_params=params)
        pred = predict(data, dr, mean=spec, grid=np.array([1.0, 18.0]))
        # far point: prior mean 18^2 - 15 = 309
        assert pred.mu_hf[1] == pytest.approx(309.0, abs=1.0)

    def test_end_to_end_fit_and_predict_deterministic(self):
        data = Dataset.from_arrays(
            np.array([0.1, 0.5, 0.9, 0.3]),
            np.array([0, 1, 0, 1]),
            np.array([0.2, 0.7, -0.1, 0.5]),
        )
        grid = np.linspace(0, 1, 21)

        def run():
            dr = fit_mcmc(
                data, HyperPriors(), mcmc_config=McmcConfig(warmup=60, draws=60),
                rng=np.random.default_rng(77),
            )
            return predict(data, dr, grid=grid)

        a, b = run(), run()
        assert np.array_equal(a.mu_hf, b.mu_hf)
        assert np.array_equal(a.var_hf, b.var_hf)
        assert np.array_equal(a.mu_lf, b.mu_lf)
        assert np.array_equal(a.var_lf, b.var_lf)
