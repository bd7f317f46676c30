from __future__ import annotations

import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from ddrj.errors import DataError, DimensionMismatch
from ddrj.model import (
    Dataset,
    Hyperparams,
    ModelState,
    design,
    full_conditional_alpha,
    full_conditional_beta,
    full_conditional_delta,
    gibbs_sweep,
    gibbs_update_latent,
    initial_state,
    joint_conditional,
    linear_predictor,
    log_likelihood,
    log_model_prior,
    log_prior,
    residuals,
)
from ddrj.numerics import make_rng


def raw_data(y, x=None, z=None):
    return Dataset.from_arrays(y, x, z, standardize=False)


def state(rois=(), snps=(), beta=(0.0,), alpha=(), delta=(), latent=None, n=None):
    latent = np.zeros(n) if latent is None else np.asarray(latent, dtype=float)
    return ModelState(tuple(rois), tuple(snps), np.asarray(beta, float), np.asarray(alpha, float),
                      np.asarray(delta, float), latent)


class TestDataset:
    def test_standardizes_columns(self):
        rng = np.random.default_rng(0)
        x = rng.normal(3.0, 2.0, (50, 3))
        d = Dataset.from_arrays(rng.integers(0, 2, 50), x)
        np.testing.assert_allclose(d.x.mean(axis=0), 0, atol=1e-12)
        np.testing.assert_allclose(d.x.std(axis=0), 1, atol=1e-12)
        np.testing.assert_array_equal(d.x_raw, x)

    def test_constant_column_scale_one(self):
        x = np.column_stack([np.ones(4), np.arange(4.0)])
        d = Dataset.from_arrays([0, 1, 0, 1], x)
        assert d.x_scale[0] == 1.0
        np.testing.assert_array_equal(d.x[:, 0], 0.0)

    @pytest.mark.parametrize("y", [[0, 2], [0.5, 1], [1]])
    def test_bad_outcomes(self, y):
        with pytest.raises(DataError):
            Dataset.from_arrays(y)

    def test_bad_snp_code(self):
        with pytest.raises(DataError):
            Dataset.from_arrays([0, 1], z=[[2], [0]])

    def test_duplicate_labels(self):
        with pytest.raises(DataError):
            Dataset.from_arrays([0, 1], x=[[1, 2], [3, 4]], roi_names=["a", "a"])

    def test_row_mismatch(self):
        with pytest.raises(DimensionMismatch):
            Dataset.from_arrays([0, 1, 1], x=[[1], [2]])

    def test_select_columns_keeps_transform(self):
        rng = np.random.default_rng(1)
        d = Dataset.from_arrays(rng.integers(0, 2, 20), rng.normal(size=(20, 4)), rng.choice([-1, 0, 1], (20, 3)))
        s = d.select_columns([1, 3], [2])
        np.testing.assert_array_equal(s.x, d.x[:, [1, 3]])
        np.testing.assert_array_equal(s.z, d.z[:, [2]])
        assert s.roi_names == ["roi_2", "roi_4"] and s.snp_names == ["snp_3"]


class TestLinearPredictor:
    def test_intercept_only(self):
        d = raw_data([0, 1, 1])
        np.testing.assert_array_equal(linear_predictor(state(beta=[2.5], n=3), d), [2.5] * 3)

    def test_heterozygote_uses_dominance(self):
        d = raw_data([0, 1], z=[[0], [0]])
        eta = linear_predictor(state(snps=[0], alpha=[4.0], delta=[-1.5], n=2), d)
        np.testing.assert_array_equal(eta, [-1.5, -1.5])

    def test_hand_example(self):
        d = raw_data([1, 0], x=[[0.5], [0.0]], z=[[-1], [0]])
        eta = linear_predictor(state([0], [0], [1.0, 2.0], [1.0], [3.0], n=2), d)
        np.testing.assert_array_equal(eta, [1.0, 4.0])

    def test_dimension_errors(self):
        d = raw_data([0, 1], x=[[1], [2]])
        with pytest.raises(DimensionMismatch):
            linear_predictor(state([0], beta=[1.0], n=2), d)
        with pytest.raises(DimensionMismatch):
            linear_predictor(state(n=3), d)
        with pytest.raises(DimensionMismatch):
            linear_predictor(state([5], beta=[0.0, 1.0], n=2), d)

    def test_alpha_delta_exchange(self):
        # on a column where z and 1-|z| are both 0/1, swapping coding and
        # coefficients leaves the predictor unchanged
        z = np.array([[0.0], [1.0], [0.0], [1.0]])
        d1 = raw_data([0, 1, 0, 1], z=z)
        d2 = raw_data([0, 1, 0, 1], z=1 - np.abs(z))
        a, b = 0.7, -1.9
        e1 = linear_predictor(state(snps=[0], alpha=[a], delta=[b], n=4), d1)
        e2 = linear_predictor(state(snps=[0], alpha=[b], delta=[a], n=4), d2)
        np.testing.assert_array_equal(e1, e2)


class TestResidualsAndLikelihood:
    def test_residuals(self):
        d = raw_data([1, 1])
        np.testing.assert_array_equal(residuals(state(beta=[1.0], latent=[1.0, 2.0]), d), [0.0, 1.0])

    def test_reconstruction(self):
        rng = np.random.default_rng(2)
        d = raw_data(rng.integers(0, 2, 10), rng.normal(size=(10, 2)), rng.choice([-1, 0, 1], (10, 2)))
        s = state([1], [0], [0.3, -1.2], [0.4], [0.8], latent=rng.normal(size=10))
        np.testing.assert_allclose(residuals(s, d) + linear_predictor(s, d), s.latent, atol=1e-15)

    def test_zero_residuals(self):
        d = raw_data([1, 0])
        s = state(beta=[0.0], latent=[0.0, -0.0])
        # latent 0 for y=0 is outside the open negative half-line
        assert log_likelihood(s, d) == -math.inf
        s = state(beta=[0.0], latent=[0.0, -1e-300])
        assert log_likelihood(s, d) == pytest.approx(-math.log(2 * math.pi))

    def test_sign_conflict(self):
        d = raw_data([1, 0])
        assert log_likelihood(state(latent=[-0.3, -1.0]), d) == -math.inf

    def test_single_observation_formula(self):
        d = Dataset(np.array([1], dtype=np.int8), np.zeros((1, 0)), np.zeros((1, 0)), [], [], np.zeros(0), np.ones(0))
        s = state(beta=[0.0], latent=[2.0])
        assert log_likelihood(s, d) == pytest.approx(-0.5 * math.log(2 * math.pi) - 2.0, abs=1e-14)

    @given(st.integers(0, 4), st.floats(0.01, 3.0))
    def test_monotone_in_residual(self, i, bump):
        d = raw_data([1] * 5)
        lat = np.array([0.5, 1.0, 1.5, 2.0, 2.5])
        base = log_likelihood(state(beta=[0.0], latent=lat), d)
        lat2 = lat.copy()
        lat2[i] += bump
        assert log_likelihood(state(beta=[0.0], latent=lat2), d) < base


class TestPrior:
    def test_intercept_only_value(self):
        h = Hyperparams(25, 25, 25)
        s = state(beta=[0.0], n=2)
        assert log_prior(s, h) == pytest.approx(-0.5 * math.log(2 * math.pi * 25), abs=1e-14)
        d = raw_data([0, 1], x=np.zeros((2, 4)), z=np.zeros((2, 3)))
        const = -math.log(5) - math.log(4)
        assert log_prior(s, h, d) == pytest.approx(-0.5 * math.log(2 * math.pi * 25) + const, abs=1e-14)

    def test_variance_change_closed_form(self):
        s = state(beta=[1.7], n=1)
        diff = log_prior(s, Hyperparams(50, 1, 1)) - log_prior(s, Hyperparams(25, 1, 1))
        expected = -0.5 * math.log(2) - 0.5 * 1.7**2 * (1 / 50 - 1 / 25)
        assert diff == pytest.approx(expected, abs=1e-14)

    def test_model_prior_against_combinations(self):
        g, m = 7, 5
        for P in range(g + 1):
            for K in range(m + 1):
                ref = -math.log((g + 1) * math.comb(g, P)) - math.log((m + 1) * math.comb(m, K))
                assert log_model_prior(P, K, g, m) == pytest.approx(ref, abs=1e-12)

    def test_model_prior_sums_to_one(self):
        g, m = 6, 4
        total = sum(math.comb(g, P) * math.comb(m, K) * math.exp(log_model_prior(P, K, g, m))
                    for P in range(g + 1) for K in range(m + 1))
        assert total == pytest.approx(1.0, abs=1e-12)

    def test_size_prior_uniform(self):
        from ddrj.model import log_size_prior
        assert log_size_prior(0, 2, 10, 9) == log_size_prior(0, 3, 10, 9)

    def test_hyperparams_positive(self):
        with pytest.raises(ValueError):
            Hyperparams(0.0, 1.0, 1.0)


class TestFullConditionals:
    def test_beta_scalar_example(self):
        d = raw_data([1, 1, 0, 1])
        s = state(beta=[0.0], latent=[1.0, 0.5, -0.5, 1.0])
        mean, cov = full_conditional_beta(s, d, Hyperparams(100, 1, 1))
        assert cov[0, 0] == pytest.approx(1 / (0.01 + 4), rel=1e-14)
        assert mean[0] == pytest.approx(2 / (0.01 + 4), rel=1e-14)
        assert cov[0, 0] == pytest.approx(0.24938, abs=1e-5)
        assert mean[0] == pytest.approx(0.49875, abs=1e-5)

    def test_beta_ols_limit(self):
        rng = np.random.default_rng(3)
        d = raw_data(rng.integers(0, 2, 12), rng.normal(size=(12, 2)))
        s = state([0, 1], beta=[0, 0, 0], latent=rng.normal(size=12))
        _, cov = full_conditional_beta(s, d, Hyperparams(1e12, 1, 1))
        D = np.column_stack([np.ones(12), d.x])
        np.testing.assert_allclose(np.linalg.inv(cov), D.T @ D, rtol=1e-8, atol=1e-8)

    def test_beta_two_by_two_by_hand(self):
        x = np.array([[-1.0], [1.0], [-1.0], [1.0], [0.0]])
        d = raw_data([0, 1, 0, 1, 1], x)
        lat = np.array([-1.0, 2.0, -0.5, 1.0, 0.5])
        mean, cov = full_conditional_beta(state([0], beta=[0, 0], latent=lat), d, Hyperparams(4, 1, 1))
        a, b, c = 5 + 0.25, 0.0, 4 + 0.25
        inv = np.array([[c, -b], [-b, a]]) / (a * c - b * b)
        np.testing.assert_allclose(cov, inv, rtol=1e-13)
        rhs = np.array([lat.sum(), x[:, 0] @ lat])
        np.testing.assert_allclose(mean, inv @ rhs, rtol=1e-13)

    def test_alpha_empty(self):
        d = raw_data([0, 1], z=[[0], [1]])
        mean, cov = full_conditional_alpha(state(n=2), d, Hyperparams())
        assert mean.shape == (0,) and cov.shape == (0, 0)

    def test_alpha_all_heterozygous(self):
        d = raw_data([0, 1, 1], z=[[0], [0], [0]])
        mean, cov = full_conditional_alpha(state(snps=[0], alpha=[0], delta=[0], latent=[-1, 1, 2]), d,
                                           Hyperparams(1, 25, 1))
        assert cov[0, 0] == pytest.approx(25.0)
        assert mean[0] == 0.0

    def test_alpha_scalar_example(self):
        z = np.array([[1.0], [-1.0], [1.0], [-1.0]])
        d = raw_data([1, 0, 1, 0], z=z)
        lat = np.array([1.2, -0.4, 0.9, -1.1])
        s = state(snps=[0], beta=[0.3], alpha=[0], delta=[0.5], latent=lat)
        mean, _ = full_conditional_alpha(s, d, Hyperparams(1, 25, 1))
        r = lat - 0.3 - 0.5 * (1 - np.abs(z[:, 0]))
        assert mean[0] == pytest.approx((z[:, 0] @ r) / (0.04 + 4), rel=1e-14)

    def test_delta_empty_and_homozygous(self):
        d = raw_data([0, 1], z=[[1], [-1]])
        mean, cov = full_conditional_delta(state(n=2), d, Hyperparams())
        assert mean.size == 0
        mean, cov = full_conditional_delta(state(snps=[0], alpha=[0], delta=[0], latent=[-1, 1]), d,
                                           Hyperparams(1, 1, 9))
        assert mean[0] == 0.0 and cov[0, 0] == pytest.approx(9.0)

    def test_delta_scalar_example(self):
        z = np.array([[0.0], [1.0], [0.0], [0.0]])
        d = raw_data([1, 0, 1, 0], z=z)
        lat = np.array([1.0, -0.5, 2.0, -0.3])
        s = state(snps=[0], beta=[0.2], alpha=[0.7], delta=[0.0], latent=lat)
        mean, cov = full_conditional_delta(s, d, Hyperparams(1, 1, 10))
        w = 1 - np.abs(z[:, 0])
        r = lat - 0.2 - 0.7 * z[:, 0]
        assert cov[0, 0] == pytest.approx(1 / (0.1 + 3), rel=1e-14)
        assert mean[0] == pytest.approx((w @ r) / (0.1 + 3), rel=1e-14)

    @settings(max_examples=60, deadline=None)
    @given(seed=st.integers(0, 2**31), P=st.integers(0, 3), K=st.integers(0, 3), n=st.integers(4, 20))
    def test_normal_equation_identity(self, seed, P, K, n):
        rng = np.random.default_rng(seed)
        d = raw_data(rng.integers(0, 2, n), rng.normal(size=(n, 3)), rng.choice([-1.0, 0.0, 1.0], (n, 3)))
        h = Hyperparams(*rng.uniform(0.5, 50, 3))
        rois, snps = tuple(range(P)), tuple(range(K))
        s = state(rois, snps, rng.normal(size=P + 1), rng.normal(size=K), rng.normal(size=K), rng.normal(size=n))
        X1 = np.column_stack([np.ones(n), d.x[:, list(rois)]])
        Z = d.z[:, list(snps)]
        W = d.w[:, list(snps)]
        checks = [
            (full_conditional_beta, X1, s.latent - Z @ s.alpha - W @ s.delta),
            (full_conditional_alpha, Z, s.latent - X1 @ s.beta - W @ s.delta),
            (full_conditional_delta, W, s.latent - X1 @ s.beta - Z @ s.alpha),
        ]
        for fn, D, r in checks:
            mean, cov = fn(s, d, h)
            if mean.size == 0:
                continue
            lhs = np.linalg.solve(cov, mean)
            assert np.max(np.abs(lhs - D.T @ r)) <= 1e-10 * max(1.0, np.max(np.abs(D.T @ r)))


class TestGibbs:
    def test_latent_signs(self):
        rng = make_rng(0)
        y = np.array([1, 0] * 50)
        d = raw_data(y)
        lat = gibbs_update_latent(state(beta=[0.3], n=100), d, rng)
        assert np.all(lat[y == 1] >= 0) and np.all(lat[y == 0] <= 0)

    def test_half_normal_mean_negative_side(self):
        d = raw_data(np.zeros(100_000, dtype=int))
        lat = gibbs_update_latent(state(beta=[0.0], n=100_000), d, make_rng(1))
        assert abs(lat.mean() + math.sqrt(2 / math.pi)) < 0.01

    def test_determinism(self):
        d = raw_data([0, 1, 1, 0])
        a = gibbs_update_latent(state(beta=[0.1], n=4), d, make_rng(5))
        b = gibbs_update_latent(state(beta=[0.1], n=4), d, make_rng(5))
        np.testing.assert_array_equal(a, b)

    def test_sweep_preserves_sets(self):
        rng = np.random.default_rng(4)
        d = Dataset.from_arrays(rng.integers(0, 2, 30), rng.normal(size=(30, 3)), rng.choice([-1, 0, 1], (30, 2)))
        s = initial_state(d)
        s = ModelState((2, 0), (1,), np.zeros(3), np.zeros(1), np.zeros(1), s.latent)
        out = gibbs_sweep(s, d, Hyperparams(), make_rng(0))
        assert out.active_rois == (2, 0) and out.active_snps == (1,)
        assert out.beta.shape == (3,) and out.alpha.shape == (1,)
        assert np.all((out.latent >= 0) == (d.y == 1))

    def test_intercept_only_sweep_touches_only_intercept(self):
        d = raw_data([0, 1, 1])
        s0 = initial_state(d)
        s1 = gibbs_sweep(s0, d, Hyperparams(), make_rng(0))
        assert s1.P == 0 and s1.K == 0 and s1.beta.shape == (1,)

    def test_intercept_converges_to_probit_mle(self):
        # intercept-only probit MLE is Phi^{-1}(ybar)
        from scipy.stats import norm
        y = np.array([1] * 140 + [0] * 60)
        d = raw_data(y)
        rng = make_rng(2)
        s = initial_state(d)
        draws = []
        for it in range(3000):
            s = gibbs_sweep(s, d, Hyperparams(), rng)
            if it >= 500:
                draws.append(s.beta[0])
        assert abs(np.mean(draws) - norm.ppf(0.7)) < 0.05

    def test_jittered_start(self):
        d = raw_data([0, 1, 1, 0])
        s = initial_state(d, make_rng(0), jitter=True)
        assert np.all((s.latent > 0) == (d.y == 1))
        assert -1 <= s.beta[0] <= 1


class TestJointConditional:
    def test_matches_dense_formula(self):
        rng = np.random.default_rng(5)
        d = Dataset.from_arrays(rng.integers(0, 2, 15), rng.normal(size=(15, 3)), rng.choice([-1, 0, 1], (15, 2)))
        h = Hyperparams(4.0, 9.0, 16.0)
        lat = rng.normal(size=15)
        q = joint_conditional((1, 2), (0,), lat, d, h)
        D = design((1, 2), (0,), d)
        V = np.diag([4.0, 4.0, 4.0, 9.0, 16.0])
        cov = np.linalg.inv(np.linalg.inv(V) + D.T @ D)
        np.testing.assert_allclose(q.mean, cov @ D.T @ lat, rtol=1e-10)
        x = rng.normal(size=5)
        diff = x - q.mean
        ref = -0.5 * (5 * math.log(2 * math.pi) + np.linalg.slogdet(cov)[1] + diff @ np.linalg.solve(cov, diff))
        assert q.logpdf(x) == pytest.approx(ref, rel=1e-10)

    def test_design_column_order(self):
        d = Dataset.from_arrays([0, 1, 1], x=[[1, 2], [3, 4], [5, 7]], z=[[1, 0], [0, -1], [-1, 1]], standardize=False)
        D = design((1,), (1, 0), d)
        np.testing.assert_array_equal(D, [[1, 2, 0, 1, 1, 0], [1, 4, -1, 0, 0, 1], [1, 7, 1, -1, 0, 0]])
