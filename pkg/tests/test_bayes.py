"""Evidence-driven kernel weighting: objective, updates, fixed point."""

import numpy as np
import pytest
from numpy.testing import assert_allclose

from conftest import make_regression_problem, make_signal_noise_problem, random_psd
from mklkit import (
    BayesOptions,
    KernelBank,
    ValidationError,
    bayes_g_numeric,
    bayes_h_value,
    combine,
    fit_bayes,
    mackay_d_step,
    mackay_f_step,
    neg_log_marginal,
    split_objective,
)

SCALAR_BANK = KernelBank([np.array([[1.0]])])
SCALAR_Y = np.array([2.0])


def _random_instance(seed, n=6, m=3):
    rng = np.random.default_rng(seed)
    mats = [random_psd(rng, n) + 0.1 * np.eye(n) for _ in range(m)]
    d = rng.uniform(0.1, 2.0, size=m)
    y = rng.standard_normal(n)
    sigma2 = rng.uniform(0.2, 1.5)
    return KernelBank(mats), d, sigma2, y


class TestObjective:
    def test_zero_weights_unit_noise_zero_labels(self):
        bank = KernelBank([np.eye(3)])
        assert neg_log_marginal(bank, [0.0], 1.0, np.zeros(3)) == pytest.approx(0.0)

    def test_scalar_example(self):
        # Kbar = 2: 0.5 * 4/2 + 0.5 * log 2
        val = neg_log_marginal(SCALAR_BANK, [1.0], 1.0, SCALAR_Y)
        assert val == pytest.approx(1.0 + 0.5 * np.log(2.0), rel=1e-12)

    def test_sigma2_must_be_positive(self):
        with pytest.raises(ValidationError):
            neg_log_marginal(SCALAR_BANK, [1.0], 0.0, SCALAR_Y)

    def test_quadratic_bound_tight_at_posterior(self):
        # the penalized split objective upper-bounds the quadratic form and
        # touches it at the posterior mean
        bank, d, sigma2, y = _random_instance(0)
        mats = [np.asarray(k) for k in bank]
        kbar = combine(mats, d, sigma2=sigma2)
        quad = 0.5 * float(y @ np.linalg.solve(kbar, y))
        k0 = combine(mats, d)

        def split_at(beta):
            fit = y - k0 @ beta
            return 0.5 * (float(beta @ k0 @ beta) + float(fit @ fit) / sigma2)

        rng = np.random.default_rng(1)
        for _ in range(10):
            assert split_at(rng.standard_normal(len(y))) >= quad - 1e-10
        beta_star = np.linalg.solve(kbar, y)
        assert split_at(beta_star) == pytest.approx(quad, rel=1e-10)
        assert split_objective(bank, d, sigma2, y) == pytest.approx(quad, rel=1e-10)

    def test_decomposition(self):
        # objective = penalized split fit + half the log-det penalty
        for seed in range(20):
            bank, d, sigma2, y = _random_instance(seed)
            total = neg_log_marginal(bank, d, sigma2, y)
            parts = split_objective(bank, d, sigma2, y) \
                + 0.5 * bayes_h_value(bank, d, sigma2)
            assert total == pytest.approx(parts, rel=1e-8)


class TestLogDetPenalty:
    def test_zero_weights(self):
        bank = KernelBank([np.eye(4), np.eye(4)])
        assert bayes_h_value(bank, [0.0, 0.0], 2.0) == pytest.approx(4 * np.log(2.0))

    def test_scalar(self):
        assert bayes_h_value(SCALAR_BANK, [1.0], 1.0) == pytest.approx(np.log(2.0))

    def test_midpoint_concavity(self):
        rng = np.random.default_rng(2)
        bank = KernelBank([random_psd(rng, 5) for _ in range(3)])
        for _ in range(20):
            da = rng.uniform(0.05, 3.0, size=3)
            db = rng.uniform(0.05, 3.0, size=3)
            mid = bayes_h_value(bank, (da + db) / 2.0, 1.0)
            mean = (bayes_h_value(bank, da, 1.0) + bayes_h_value(bank, db, 1.0)) / 2.0
            assert mid >= mean - 1e-9

    def test_numeric_weight_form_is_tight_lower_bound(self):
        # half (sum x/d + logdet) dominates the numeric value and touches it
        # at the minimizing weights
        rng = np.random.default_rng(3)
        bank, _, sigma2, _ = _random_instance(3)
        x = rng.uniform(0.1, 2.0, size=3)
        res = bayes_g_numeric(bank, sigma2, x)

        def weight_form(d):
            return 0.5 * float((x / d).sum()) + 0.5 * bayes_h_value(bank, d, sigma2)

        for _ in range(10):
            d = rng.uniform(0.05, 3.0, size=3)
            assert weight_form(d) >= res.value - 1e-9
        assert weight_form(np.exp(res.eta)) == pytest.approx(res.value, abs=1e-5)


class TestUpdates:
    def test_posterior_split_scalar(self):
        parts, x = mackay_f_step(SCALAR_BANK, [1.0], 1.0, SCALAR_Y)
        assert parts[0, 0] == pytest.approx(1.0)
        assert x[0] == pytest.approx(1.0)

    def test_zero_weight_gives_zero_part(self):
        bank = KernelBank([np.eye(3), np.eye(3)])
        parts, x = mackay_f_step(bank, [0.0, 1.0], 1.0, np.ones(3))
        assert_allclose(parts[0], 0.0)
        assert x[0] == 0.0

    def test_residual_identity(self):
        # y minus the full split equals sigma2 Kbar^{-1} y
        bank, d, sigma2, y = _random_instance(4)
        parts, _ = mackay_f_step(bank, d, sigma2, y)
        kbar = combine([np.asarray(k) for k in bank], d, sigma2=sigma2)
        assert_allclose(y - parts.sum(axis=0),
                        sigma2 * np.linalg.solve(kbar, y), rtol=1e-10)

    def test_reweighting_scalar(self):
        # x/(d tr(Kbar^{-1} K)) = 1 / (1 * 1/2) = 2
        d_new = mackay_d_step(SCALAR_BANK, [1.0], 1.0, [1.0])
        assert d_new[0] == pytest.approx(2.0)

    def test_zero_weight_is_absorbing(self):
        bank = KernelBank([np.eye(3), np.eye(3)])
        d_new = mackay_d_step(bank, [0.0, 1.0], 1.0, [0.0, 0.5])
        assert d_new[0] == 0.0
        assert d_new[1] > 0.0

    def test_reweighting_nonnegative(self):
        for seed in range(10):
            bank, d, sigma2, y = _random_instance(seed)
            _, x = mackay_f_step(bank, d, sigma2, y)
            assert np.all(mackay_d_step(bank, d, sigma2, x) >= 0.0)

    def test_scalar_fixed_point_is_objective_minimum(self):
        # iterate the two updates by hand; the rest point minimizes the
        # one-dimensional objective (at d = 3 for this instance)
        d = np.array([1.0])
        for _ in range(60):
            _, x = mackay_f_step(SCALAR_BANK, d, 1.0, SCALAR_Y)
            d = mackay_d_step(SCALAR_BANK, d, 1.0, x)
        assert d[0] == pytest.approx(3.0, abs=1e-8)
        grid = np.geomspace(0.05, 50.0, 20001)
        vals = [neg_log_marginal(SCALAR_BANK, [g], 1.0, SCALAR_Y) for g in grid]
        assert abs(grid[int(np.argmin(vals))] - d[0]) < 1e-2


class TestFixedPointLoop:
    def test_scalar_first_update_and_limit(self):
        state, model = fit_bayes(SCALAR_BANK, SCALAR_Y, 1.0)
        assert state.converged and not state.warned
        assert state.d[0] == pytest.approx(3.0, abs=1e-4)
        # the first update doubles the unit starting weight
        assert state.nll_trace[1] == pytest.approx(
            neg_log_marginal(SCALAR_BANK, [2.0], 1.0, SCALAR_Y), rel=1e-12)
        assert model.method == "mackay"
        assert model.spec is None
        assert model.metadata["nll"] == pytest.approx(state.nll_trace[-1], rel=1e-9)

    def test_zero_labels_switch_everything_off(self):
        bank = KernelBank([np.eye(4), np.eye(4)])
        state, _ = fit_bayes(bank, np.zeros(4), 1.0)
        assert_allclose(state.d, 0.0)

    def test_model_scores_are_posterior_mean(self):
        bank, _, sigma2, y = _random_instance(5)
        state, model = fit_bayes(bank, y, sigma2)
        kbar = combine([np.asarray(k) for k in bank], state.d, sigma2=sigma2)
        assert_allclose(model.training_scores(),
                        y - sigma2 * np.linalg.solve(kbar, y), atol=1e-8)
        assert_allclose(model.training_scores(), state.parts.sum(axis=0), atol=1e-8)

    def test_objective_never_ends_above_start(self):
        for seed in range(20):
            x, y, bank = make_regression_problem(seed)
            state, _ = fit_bayes(bank, y, 0.05)
            assert state.nll_trace[-1] <= state.nll_trace[0] + 1e-9

    def test_planted_signal_suppresses_distractor(self):
        _, y, bank = make_signal_noise_problem()
        state, _ = fit_bayes(bank, y, 0.01)
        assert state.d[1] <= 1e-3 * state.d[0]

    def test_two_kernel_grid_oracle(self):
        _, y, bank = make_signal_noise_problem(seed=7, n=20)
        state, _ = fit_bayes(bank, y, 0.05,
                             options=BayesOptions(max_iter=2000, tol=1e-10))
        grid = np.concatenate([[0.0], np.geomspace(1e-5, 10.0, 60)])
        best = min(neg_log_marginal(bank, [a, b], 0.05, y)
                   for a in grid for b in grid)
        got = state.nll_trace[-1]
        assert got <= best + 1e-4 * max(1.0, abs(best))

    def test_non_descending_loop_falls_back(self, monkeypatch):
        import mklkit.bayes as bayes_mod

        counter = {"k": 3.0}

        def climbing(bank, d, sigma2, x):
            counter["k"] += 1.0
            return np.array([counter["k"]])

        monkeypatch.setattr(bayes_mod, "mackay_d_step", climbing)
        with pytest.warns(RuntimeWarning, match="best weights"):
            state, _ = fit_bayes(SCALAR_BANK, SCALAR_Y, 1.0)
        assert state.warned
        assert not state.converged
        # d = 4 was the best value seen before the objective kept climbing
        assert state.d[0] == pytest.approx(4.0)

    def test_label_validation(self):
        with pytest.raises(ValidationError):
            fit_bayes(SCALAR_BANK, np.array([1.0, 2.0]), 1.0)
        with pytest.raises(ValidationError):
            fit_bayes(SCALAR_BANK, np.array([np.nan]), 1.0)
