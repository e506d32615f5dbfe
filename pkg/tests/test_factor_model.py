"""Factor-model estimation tests on synthetic data with known structure."""

from __future__ import annotations

import numpy as np
import pytest

from helpers import (
    make_series,
    noiseless_series,
    orthonormal_loading,
    random_loading_set,
    subspace_distance,
)
from tensorcast.factor_model import (
    FactorSeries,
    LoadingSet,
    Ranks,
    _stack_unfoldings,
    extract_factors,
    fit_factor_model,
    fitted_values,
    in_sample_mse,
    initial_loadings,
    load_model,
    projected_loadings,
    reconstruct_common,
    save_model,
    select_ranks,
)
from tensorcast.panel import Standardization, destandardize, estimate_standardization, standardize
from tensorcast.tensor import kron, unfold


class TestRanks:
    def test_rejects_nonpositive(self):
        with pytest.raises(ValueError):
            Ranks(0, (1,))
        with pytest.raises(ValueError):
            Ranks(1, (1, 0))

    def test_validates_against_dims(self):
        Ranks(2, (1, 2)).validate_against((3, 4, 5))
        with pytest.raises(ValueError):
            Ranks(4, (1, 2)).validate_against((3, 4, 5))
        with pytest.raises(ValueError):
            Ranks(2, (1, 6)).validate_against((3, 4, 5))
        with pytest.raises(ValueError):
            Ranks(2, (1,)).validate_against((3, 4, 5))


class TestStackUnfoldings:
    def test_matches_per_period_unfold(self):
        rng = np.random.default_rng(0)
        values = rng.standard_normal((4, 3, 5, 2))
        for mode in range(3):
            stacked = _stack_unfoldings(values, mode)
            for t in range(4):
                np.testing.assert_array_equal(stacked[t], unfold(values[t], mode))


class TestInitialLoadings:
    def test_rank_one_b_hat_spans_kron_of_seasonal_loadings(self):
        rng = np.random.default_rng(1)
        ts, loadings, _ = noiseless_series(rng, (5, 4, 6), (1, 1, 1), t=50)
        init = initial_loadings(ts, Ranks(1, (1, 1)))
        target = kron(loadings.b[1], loadings.b[0])
        assert subspace_distance(init.b_hat, target) < 1e-10

    def test_zero_series_is_degenerate(self):
        ts = make_series(np.zeros((1, 3, 4, 5)))
        with pytest.raises(ValueError, match="degenerate"):
            initial_loadings(ts, Ranks(1, (1, 1)))

    def test_matrix_case_gamma_spans_cross_section_loading(self):
        rng = np.random.default_rng(2)
        ts, loadings, _ = noiseless_series(rng, (6, 8), (1, 1), t=40)
        init = initial_loadings(ts, Ranks(1, (1,)))
        assert init.gamma_hat[0].shape == (6, 1)
        assert subspace_distance(init.gamma_hat[0], loadings.lam) < 1e-10

    def test_scale_factors(self):
        rng = np.random.default_rng(3)
        ts, _, _ = noiseless_series(rng, (5, 4, 6), (2, 2, 2), t=60, noise_sd=0.1)
        init = initial_loadings(ts, Ranks(2, (2, 2)))
        s_total = 24
        np.testing.assert_allclose(
            init.b_hat.T @ init.b_hat, s_total * np.eye(4), atol=1e-8 * s_total
        )
        np.testing.assert_allclose(
            init.gamma_hat[0].T @ init.gamma_hat[0], 30 * np.eye(4), atol=1e-8 * 30
        )


class TestProjectedLoadings:
    def test_noiseless_recovery_of_seasonal_span(self):
        rng = np.random.default_rng(4)
        ts, loadings, _ = noiseless_series(rng, (9, 7, 24), (1, 1, 2), t=80)
        ranks = Ranks(1, (1, 2))
        fit = projected_loadings(ts, initial_loadings(ts, ranks), ranks)
        assert subspace_distance(fit.b[1], loadings.b[1]) < 1e-8
        assert subspace_distance(fit.b[0], loadings.b[0]) < 1e-8
        assert subspace_distance(fit.lam, loadings.lam) < 1e-8

    def test_refit_on_fitted_component_preserves_spans(self):
        rng = np.random.default_rng(5)
        ts, _, _ = noiseless_series(rng, (6, 5, 8), (2, 1, 2), t=100, noise_sd=0.5)
        ranks = Ranks(2, (1, 2))
        fit = projected_loadings(ts, initial_loadings(ts, ranks), ranks)
        common = reconstruct_common(extract_factors(ts, fit).values, fit)
        refit_input = make_series(common)
        refit = projected_loadings(refit_input, initial_loadings(refit_input, ranks), ranks)
        assert subspace_distance(fit.lam, refit.lam) < 1e-8
        assert subspace_distance(fit.b[0], refit.b[0]) < 1e-8
        assert subspace_distance(fit.b[1], refit.b[1]) < 1e-8

    def test_full_rank_cross_section_scale(self):
        rng = np.random.default_rng(6)
        ts, _, _ = noiseless_series(rng, (4, 5, 6), (4, 1, 1), t=50)
        ranks = Ranks(4, (1, 1))
        fit = projected_loadings(ts, initial_loadings(ts, ranks), ranks)
        np.testing.assert_allclose(fit.lam.T @ fit.lam, 4 * np.eye(4), atol=1e-10 * 4)

    def test_nonconforming_initial_basis_rejected(self):
        rng = np.random.default_rng(7)
        ts, _, _ = noiseless_series(rng, (5, 4, 6), (1, 1, 1), t=30)
        init = initial_loadings(ts, Ranks(1, (1, 1)))
        with pytest.raises(ValueError, match="conform"):
            projected_loadings(ts, init, Ranks(1, (1, 2)))


class TestExtractFactors:
    def test_zero_input_gives_zero_factors(self):
        rng = np.random.default_rng(8)
        loadings = random_loading_set(rng, (5, 4, 6), (2, 1, 2))
        ts = make_series(np.zeros((7, 5, 4, 6)))
        f = extract_factors(ts, loadings)
        np.testing.assert_array_equal(f.values, np.zeros((7, 2, 1, 2)))

    def test_true_loadings_invert_noiseless_model(self):
        rng = np.random.default_rng(9)
        ts, loadings, factors = noiseless_series(rng, (5, 4, 6), (2, 2, 3), t=40)
        f = extract_factors(ts, loadings)
        np.testing.assert_allclose(f.values, factors, atol=1e-10)

    def test_complete_basis_reconstructs_exactly(self):
        rng = np.random.default_rng(10)
        loadings = random_loading_set(rng, (3, 4, 5), (3, 4, 5))
        values = rng.standard_normal((6, 3, 4, 5))
        ts = make_series(values)
        f = extract_factors(ts, loadings)
        np.testing.assert_allclose(reconstruct_common(f.values, loadings), values, atol=1e-10)

    def test_dims_mismatch(self):
        rng = np.random.default_rng(11)
        loadings = random_loading_set(rng, (5, 4, 6), (1, 1, 1))
        with pytest.raises(ValueError):
            extract_factors(make_series(np.zeros((3, 5, 4, 7))), loadings)


class TestFittedValues:
    def test_zero_factors_give_mu(self):
        rng = np.random.default_rng(12)
        loadings = random_loading_set(rng, (3, 4, 5), (1, 1, 1))
        z = Standardization(
            mu=rng.uniform(10, 20, (3, 4, 5)), sigma=rng.uniform(0.5, 2, (3, 4, 5))
        )
        f = FactorSeries(
            values=np.zeros((4, 1, 1, 1)),
            period_starts=np.zeros(4, dtype="datetime64[h]"),
            provider_ids=["a", "b", "c"],
        )
        np.testing.assert_array_equal(
            fitted_values(f, loadings, z).values, np.broadcast_to(z.mu, (4, 3, 4, 5))
        )

    def test_end_to_end_noiseless_pipeline(self):
        # With a single multi-rank mode the per-cell standardization preserves
        # the factor structure exactly, so the fit must reproduce the data.
        rng = np.random.default_rng(13)
        ts, loadings, _ = noiseless_series(rng, (5, 4, 6), (1, 1, 2), t=60)
        mu = rng.uniform(50, 150, (5, 4, 6))
        sigma = rng.uniform(0.5, 3.0, (5, 4, 6))
        raw = destandardize(ts, Standardization(mu=mu, sigma=sigma))
        model, factors = fit_factor_model(raw, Ranks(1, (1, 2)))
        fit = fitted_values(factors, model.loadings, model.standardization)
        rel = np.linalg.norm(fit.values - raw.values) / np.linalg.norm(raw.values)
        assert rel < 1e-8

    def test_sign_flip_invariance(self):
        rng = np.random.default_rng(14)
        loadings = random_loading_set(rng, (5, 4, 6), (2, 1, 2))
        factors = rng.standard_normal((7, 2, 1, 2))
        z = Standardization(mu=np.zeros((5, 4, 6)), sigma=np.ones((5, 4, 6)))
        starts = np.zeros(7, dtype="datetime64[h]")
        f = FactorSeries(values=factors, period_starts=starts, provider_ids=list("abcde"))
        base = fitted_values(f, loadings, z).values

        flipped = LoadingSet(
            lam=loadings.lam * np.array([-1.0, 1.0]), b=[m.copy() for m in loadings.b]
        )
        factors_flipped = factors.copy()
        factors_flipped[:, 0] *= -1.0
        f2 = FactorSeries(values=factors_flipped, period_starts=starts, provider_ids=list("abcde"))
        np.testing.assert_allclose(fitted_values(f2, flipped, z).values, base, atol=1e-12)


class TestRotationInvariance:
    def test_fitted_component_invariant_under_joint_rotation(self):
        rng = np.random.default_rng(15)
        loadings = random_loading_set(rng, (5, 4, 6), (2, 1, 2))
        factors = rng.standard_normal((7, 2, 1, 2))
        base = reconstruct_common(factors, loadings)
        q, _ = np.linalg.qr(rng.standard_normal((2, 2)))
        rotated = LoadingSet(lam=loadings.lam.copy(), b=[loadings.b[0].copy(), loadings.b[1] @ q])
        # Rotate the matching factor mode the opposite way: mode 3 of (t, r, k1, k2).
        factors_rot = np.einsum("trjk,kl->trjl", factors, q)
        np.testing.assert_allclose(
            reconstruct_common(factors_rot, rotated), base, atol=1e-10
        )


class TestSelectRanks:
    def test_recovers_planted_ranks(self):
        rng = np.random.default_rng(16)
        ts, _, _ = noiseless_series(rng, (9, 7, 24), (1, 1, 2), t=100, noise_sd=1e-3)
        assert select_ranks(ts, r_max=3, k_max=(3, 3)) == Ranks(1, (1, 2))

    def test_white_noise_selects_rank_one(self):
        rng = np.random.default_rng(17)
        ts = make_series(rng.standard_normal((200, 6, 5, 8)))
        assert select_ranks(ts, r_max=3, k_max=(3, 3)) == Ranks(1, (1, 1))

    def test_candidate_bounds(self):
        ts = make_series(np.ones((5, 3, 4, 5)) + np.arange(5).reshape(-1, 1, 1, 1))
        with pytest.raises(ValueError):
            select_ranks(ts, r_max=3, k_max=(2, 2))
        with pytest.raises(ValueError):
            select_ranks(ts, r_max=2, k_max=(4, 2))

    def test_zero_series_errors(self):
        ts = make_series(np.zeros((5, 3, 4, 5)))
        with pytest.raises(ValueError):
            select_ranks(ts, r_max=2, k_max=(2, 2))


class TestInSampleMse:
    def test_identical_series_score_zero(self):
        rng = np.random.default_rng(18)
        ts = make_series(rng.standard_normal((4, 2, 3, 5)))
        assert in_sample_mse(ts, ts) == 0.0

    def test_constant_offset(self):
        rng = np.random.default_rng(19)
        ts = make_series(rng.standard_normal((4, 2, 3, 5)))
        shifted = make_series(ts.values + 0.5)
        assert in_sample_mse(ts, shifted) == pytest.approx(0.25)

    def test_matches_loop_oracle(self):
        rng = np.random.default_rng(20)
        a = make_series(rng.standard_normal((3, 2, 2, 4)))
        b = make_series(rng.standard_normal((3, 2, 2, 4)))
        total, count = 0.0, 0
        for t in range(3):
            for idx in np.ndindex(2, 2, 4):
                total += (a.values[(t, *idx)] - b.values[(t, *idx)]) ** 2
                count += 1
        assert in_sample_mse(a, b) == pytest.approx(total / count, abs=1e-12)

    def test_shape_mismatch(self):
        with pytest.raises(ValueError):
            in_sample_mse(make_series(np.zeros((2, 1, 2, 2))), make_series(np.zeros((2, 1, 2, 3))))


class TestNestedRankFit:
    def test_extra_seasonal_rank_never_hurts_in_sample(self):
        rng = np.random.default_rng(21)
        ts, _, _ = noiseless_series(rng, (6, 5, 8), (1, 1, 2), t=80, noise_sd=1.0)
        z = Standardization(mu=np.zeros((6, 5, 8)), sigma=np.ones((6, 5, 8)))
        ranks2 = Ranks(1, (1, 2))
        fit2 = projected_loadings(ts, initial_loadings(ts, ranks2), ranks2)
        fitted2 = fitted_values(extract_factors(ts, fit2), fit2, z)
        # Nested comparison: drop the trailing column of the hour loading.
        fit1 = LoadingSet(lam=fit2.lam.copy(), b=[fit2.b[0].copy(), fit2.b[1][:, :1].copy()])
        fitted1 = fitted_values(extract_factors(ts, fit1), fit1, z)
        assert in_sample_mse(ts, fitted2) <= in_sample_mse(ts, fitted1)


class TestLoadingConsistency:
    def test_loading_error_shrinks_with_sample_size(self):
        # Median subspace error over several seeds must drop from T=100 to T=400.
        dims, ranks = (8, 6, 10), (1, 1, 2)
        errors = {100: [], 400: []}
        for seed in range(7):
            rng = np.random.default_rng(100 + seed)
            loadings = random_loading_set(rng, dims, ranks)
            for t in errors:
                factors = rng.standard_normal((t, *ranks))
                values = reconstruct_common(factors, loadings)
                values = values + 0.8 * rng.standard_normal(values.shape)
                ts = make_series(values)
                r = Ranks(1, (1, 2))
                fit = projected_loadings(ts, initial_loadings(ts, r), r)
                errors[t].append(subspace_distance(fit.lam, loadings.lam))
        assert np.median(errors[400]) < np.median(errors[100])


class TestModelArchive:
    def test_round_trip_reproduces_fits(self, tmp_path):
        rng = np.random.default_rng(22)
        ts, _, _ = noiseless_series(rng, (5, 4, 6), (2, 1, 2), t=50, noise_sd=0.3)
        raw = destandardize(
            ts,
            Standardization(
                mu=rng.uniform(10, 20, (5, 4, 6)), sigma=rng.uniform(0.5, 2, (5, 4, 6))
            ),
        )
        model, factors = fit_factor_model(raw, Ranks(2, (1, 2)))
        path = tmp_path / "model.npz"
        save_model(path, model)
        loaded = load_model(path)
        assert loaded.ranks == model.ranks
        assert loaded.provider_ids == model.provider_ids
        np.testing.assert_array_equal(loaded.loadings.lam, model.loadings.lam)
        for a, b in zip(loaded.loadings.b, model.loadings.b):
            np.testing.assert_array_equal(a, b)
        np.testing.assert_array_equal(loaded.standardization.mu, model.standardization.mu)
        np.testing.assert_array_equal(loaded.standardization.sigma, model.standardization.sigma)
        xs = standardize(raw, loaded.standardization)
        refit = extract_factors(xs, loaded.loadings)
        np.testing.assert_array_equal(refit.values, factors.values)


class TestFitFactorModel:
    def test_auto_rank_selection(self):
        rng = np.random.default_rng(23)
        ts, loadings, _ = noiseless_series(rng, (9, 7, 24), (1, 1, 2), t=100, noise_sd=1e-3)
        mu = rng.uniform(10, 20, (9, 7, 24))
        raw = destandardize(ts, Standardization(mu=mu, sigma=np.ones((9, 7, 24))))
        model, _ = fit_factor_model(raw)
        assert model.ranks == Ranks(1, (1, 2))

    def test_standardization_estimated_from_input(self):
        rng = np.random.default_rng(24)
        ts, _, _ = noiseless_series(rng, (5, 4, 6), (1, 1, 1), t=60, noise_sd=0.2)
        model, _ = fit_factor_model(ts, Ranks(1, (1, 1)))
        z = estimate_standardization(ts)
        np.testing.assert_array_equal(model.standardization.mu, z.mu)
        np.testing.assert_array_equal(model.standardization.sigma, z.sigma)
