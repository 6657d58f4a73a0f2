import math

import numpy as np
import pytest

from infogreedy.errors import NumericalError, ValidationError
from infogreedy.gaussian import GaussianBelief, mutual_info_gaussian, posterior_update
from infogreedy.gmm import (GmmBelief, GradientAscentConfig, batch_directions, batch_log_weights,
                            classify, conditional_mi_estimate, conditional_mi_exact,
                            gmm_entropy_approx, gmm_posterior_update, gradient_ascent_direction,
                            greedy_heuristic_direction, hedge_weight_update, high_noise_direction,
                            mi_gradient, mmse_integrand_g, run_gmm_session, sample_gmm)
from infogreedy.linalg import make_rng

LOG_2PIE = math.log(2 * math.pi * math.e)


def random_cov(n, rng, ridge=0.1):
    g = rng.standard_normal((n, n))
    return g @ g.T / n + ridge * np.eye(n)


def random_mixture(c, n, rng, scale=1.0):
    w = rng.dirichlet(np.ones(c))
    return GmmBelief(w, scale * rng.standard_normal((c, n)), np.stack([random_cov(n, rng) for _ in range(c)]))


class TestBelief:
    def test_rejects_bad_weights(self):
        with pytest.raises(ValidationError):
            GmmBelief([0.5, 0.6], np.zeros((2, 2)), np.stack([np.eye(2)] * 2))

    def test_rejects_shape_mismatch(self):
        with pytest.raises(ValidationError):
            GmmBelief([1.0], np.zeros((1, 3)), np.eye(2)[None])

    def test_mixture_moments(self):
        b = GmmBelief([0.5, 0.5], [[1.0, 0.0], [-1.0, 0.0]], np.stack([np.eye(2)] * 2))
        np.testing.assert_allclose(b.mixture_mean(), [0, 0])
        np.testing.assert_allclose(b.mixture_cov(), np.diag([2.0, 1.0]))


class TestPosteriorUpdate:
    def test_single_component_matches_gaussian(self):
        rng = make_rng(0)
        cov = random_cov(5, rng)
        mean = rng.standard_normal(5)
        g = GaussianBelief(mean, cov)
        b = GmmBelief([1.0], mean[None], cov[None])
        for _ in range(4):
            a = rng.standard_normal(5)
            y = float(rng.standard_normal())
            g = posterior_update(g, a, y, 0.04)
            b = gmm_posterior_update(b, a, y, 0.2)
            assert np.max(np.abs(b.means[0] - g.mean)) < 1e-12
            assert np.max(np.abs(b.covs[0] - g.cov)) < 1e-12
            assert b.weights[0] == 1.0

    def test_identical_components_keep_weights(self):
        rng = make_rng(1)
        cov, mean = random_cov(3, rng), rng.standard_normal(3)
        b = GmmBelief([0.25, 0.25, 0.5], np.stack([mean] * 3), np.stack([cov] * 3))
        for _ in range(3):
            b = gmm_posterior_update(b, rng.standard_normal(3), float(rng.standard_normal()), 0.1)
        np.testing.assert_allclose(b.weights, [0.25, 0.25, 0.5], rtol=1e-12)

    def test_incremental_equals_batch(self):
        rng = make_rng(2)
        prior = random_mixture(3, 6, rng, scale=0.5)
        b = prior
        for _ in range(5):
            b = gmm_posterior_update(b, rng.standard_normal(6), float(rng.standard_normal()), 0.3)
        logw = batch_log_weights(prior, b.directions, b.outcomes, 0.3)
        np.testing.assert_allclose(np.log(b.weights), logw, atol=1e-10)
        assert b.directions.shape == (5, 6) and b.outcomes.shape == (5,)

    def test_hedge_ratio_independent_of_outcome(self):
        rng = make_rng(3)
        b = random_mixture(3, 4, rng)
        a = rng.standard_normal(4)
        ratios = []
        for y in (-1.0, 0.3, 2.5):
            exact = gmm_posterior_update(b, a, y, 0.5).weights
            ratios.append(exact / hedge_weight_update(b, a, y, 0.5))
            ratios[-1] /= ratios[-1][0]
        np.testing.assert_allclose(ratios[0], ratios[1], rtol=1e-10)
        np.testing.assert_allclose(ratios[0], ratios[2], rtol=1e-10)
        s = np.array([a @ c @ a + 0.25 for c in b.covs])
        np.testing.assert_allclose(ratios[0], np.sqrt(s[0] / s), rtol=1e-10)

    def test_vanishing_weights_raise(self):
        b = GmmBelief([1.0, 0.0], np.zeros((2, 1)), np.stack([np.eye(1)] * 2))
        with pytest.raises(NumericalError):
            gmm_posterior_update(b, [1.0], 1e200, 1e-3)

    def test_rejects_zero_noise(self):
        b = GmmBelief([1.0], np.zeros((1, 2)), np.eye(2)[None])
        with pytest.raises(ValidationError):
            gmm_posterior_update(b, [1.0, 0.0], 0.0, 0.0)


class TestHeuristics:
    def test_greedy_uses_most_probable_component(self):
        b = GmmBelief([0.6, 0.4], np.zeros((2, 2)), np.stack([np.diag([1.0, 2.0]), np.diag([3.0, 1.0])]))
        np.testing.assert_allclose(greedy_heuristic_direction(b), [0, 1])

    def test_high_noise_uses_average(self):
        b = GmmBelief([0.5, 0.5], np.zeros((2, 2)), np.stack([np.diag([1.0, 0.0]), np.diag([0.0, 3.0])]))
        np.testing.assert_allclose(high_noise_direction(b), [0, 1])

    def test_classify_tie_breaks_low(self):
        b = GmmBelief([0.5, 0.5], [[1.0], [2.0]], np.stack([np.eye(1)] * 2))
        c, mean = classify(b)
        assert c == 0 and mean[0] == 1.0

    def test_batch_directions(self):
        b = GmmBelief([1.0], np.zeros((1, 3)), np.diag([1.0, 3.0, 2.0])[None])
        np.testing.assert_allclose(batch_directions(b, 2), [[0, 1, 0], [0, 0, 1]])


class TestMmse:
    def test_psd(self):
        rng = make_rng(4)
        b = random_mixture(3, 5, rng)
        for y in (-2.0, 0.0, 4.0):
            g = mmse_integrand_g(b, rng.standard_normal(5), y, 0.3)
            assert np.min(np.linalg.eigvalsh(g)) >= -1e-12

    def test_single_component_is_posterior_cov(self):
        rng = make_rng(5)
        cov = random_cov(4, rng)
        a = rng.standard_normal(4)
        b = GmmBelief([1.0], np.zeros((1, 4)), cov[None])
        post = posterior_update(GaussianBelief(np.zeros(4), cov), a, 0.0, 0.09)
        np.testing.assert_allclose(mmse_integrand_g(b, a, 1.7, 0.3), post.cov, atol=1e-12)

    def test_high_noise_limit_is_mixture_cov(self):
        rng = make_rng(6)
        b = random_mixture(3, 4, rng)
        g = mmse_integrand_g(b, rng.standard_normal(4), 0.0, 1e6)
        np.testing.assert_allclose(g, b.mixture_cov(), atol=1e-8)


class TestGradient:
    def test_single_component_exact(self):
        rng = make_rng(7)
        cov = random_cov(4, rng)
        a = rng.standard_normal(4)
        b = GmmBelief([1.0], np.zeros((1, 4)), cov[None])
        post = posterior_update(GaussianBelief(np.zeros(4), cov), a, 0.0, 0.25)
        np.testing.assert_allclose(mi_gradient(b, a, 0.5, 10, rng), post.cov @ a / 0.25, atol=1e-10)

    def test_matches_gaussian_mi_derivative(self):
        rng = make_rng(8)
        cov = random_cov(3, rng)
        a = rng.standard_normal(3)
        b = GmmBelief([1.0], np.zeros((1, 3)), cov[None])
        h = 1e-6
        fd = [(mutual_info_gaussian(a + h * e, cov, 0.04) - mutual_info_gaussian(a - h * e, cov, 0.04)) / (2 * h)
              for e in np.eye(3)]
        np.testing.assert_allclose(mi_gradient(b, a, 0.2, 5, rng), fd, rtol=1e-6)

    def test_zero_direction(self):
        b = random_mixture(2, 3, make_rng(9))
        np.testing.assert_array_equal(mi_gradient(b, np.zeros(3), 0.1, 50, make_rng(0)), np.zeros(3))

    def test_stderr_halves_with_four_times_samples(self):
        b = random_mixture(3, 4, make_rng(10), scale=2.0)
        a = np.array([0.5, -0.5, 0.5, 0.5])
        _, se1 = mi_gradient(b, a, 0.3, 2000, make_rng(11), return_stderr=True)
        _, se4 = mi_gradient(b, a, 0.3, 8000, make_rng(12), return_stderr=True)
        ratio = np.linalg.norm(se4) / np.linalg.norm(se1)
        assert 0.4 < ratio < 0.6

    def test_deterministic_with_seed(self):
        b = random_mixture(3, 4, make_rng(13))
        a = np.ones(4) / 2
        assert mi_gradient(b, a, 0.1, 100, make_rng(5)).tobytes() == mi_gradient(b, a, 0.1, 100, make_rng(5)).tobytes()


class TestEntropy:
    def test_single_component_is_gaussian_entropy(self):
        cov = random_cov(4, make_rng(14))
        b = GmmBelief([1.0], np.zeros((1, 4)), cov[None])
        expected = 0.5 * (4 * LOG_2PIE + np.linalg.slogdet(cov)[1])
        assert gmm_entropy_approx(b, reg=0.0) == pytest.approx(expected, rel=1e-12)

    def test_two_separated_components_add_one_bit(self):
        cov = 10.0 * np.eye(3)
        b = GmmBelief([0.5, 0.5], [[0, 0, 0], [1e4, 0, 0]], np.stack([cov, cov]))
        h = 0.5 * (3 * LOG_2PIE + 3 * math.log(10))
        assert gmm_entropy_approx(b, reg=0.0) == pytest.approx(h + math.log(2), abs=1e-2)

    def test_one_dimensional_against_quadrature(self):
        var = 2500.0
        b = GmmBelief([0.5, 0.5], [[-2000.0], [2000.0]], np.stack([[[var]], [[var]]]))
        y = np.linspace(-3000, 3000, 200001)
        p = 0.5 * sum(np.exp(-(y - m) ** 2 / (2 * var)) for m in (-2000.0, 2000.0)) / math.sqrt(2 * math.pi * var)
        with np.errstate(divide="ignore", invalid="ignore"):
            h = -np.trapezoid(np.where(p > 0, p * np.log(p), 0.0), y)
        assert gmm_entropy_approx(b, reg=0.0) == pytest.approx(h, abs=5e-3)

    def test_rank_deficient_component_uses_its_rank(self):
        b = GmmBelief([1.0], np.zeros((1, 3)), np.diag([2.0, 0.0, 0.0])[None])
        assert gmm_entropy_approx(b, reg=0.0) == pytest.approx(0.5 * (LOG_2PIE + math.log(2.0)))

    def test_nonpositive_argument_names_component(self):
        b = GmmBelief([0.5, 0.5], np.zeros((2, 2)), np.stack([1e-4 * np.eye(2)] * 2))
        with pytest.raises(NumericalError, match="component 0"):
            gmm_entropy_approx(b)


class TestConditionalMi:
    def test_exact_single_component(self):
        rng = make_rng(15)
        cov = random_cov(4, rng)
        a = rng.standard_normal(4)
        b = GmmBelief([1.0], rng.standard_normal((1, 4)), cov[None])
        assert conditional_mi_exact(b, a, 0.3) == pytest.approx(mutual_info_gaussian(a, cov, 0.09), abs=1e-8)

    def test_estimate_single_component(self):
        rng = make_rng(16)
        cov = random_cov(4, rng)
        a = rng.standard_normal(4)
        b = GmmBelief([1.0], np.zeros((1, 4)), cov[None])
        assert conditional_mi_estimate(b, a, 0.3, reg=0.0) == pytest.approx(
            mutual_info_gaussian(a, cov, 0.09), abs=1e-8)

    def test_separated_mixture_estimate_close_to_exact(self):
        cov = np.diag([100.0, 50.0])
        b = GmmBelief([0.5, 0.5], [[-500.0, 0.0], [500.0, 0.0]], np.stack([cov, cov]))
        a = np.array([1.0, 0.0])
        exact = conditional_mi_exact(b, a, 1.0)
        assert exact == pytest.approx(math.log(2) + 0.5 * math.log(101), abs=1e-6)
        assert conditional_mi_estimate(b, a, 1.0, reg=0.0) == pytest.approx(exact, abs=2e-2)

    def test_orthogonal_direction_carries_no_information(self):
        b = GmmBelief([1.0], np.zeros((1, 2)), np.diag([1.0, 0.0])[None])
        assert conditional_mi_exact(b, [0.0, 1.0], 0.1) == pytest.approx(0.0, abs=1e-12)


class TestGradientAscent:
    def test_single_component_finds_leading_eigenvector(self):
        b = GmmBelief([1.0], np.zeros((1, 3)), np.diag([3.0, 1.0, 0.5])[None])
        cfg = GradientAscentConfig(step_size=1.0, tolerance=1e-9, mc_samples=4, max_steps=200)
        a = gradient_ascent_direction(b, 1.0, cfg, make_rng(0), init=np.array([0.3, 0.8, 0.5]))
        assert abs(a[0]) > 0.999
        assert np.linalg.norm(a) == pytest.approx(1.0)

    def test_never_decreases_information(self):
        rng = make_rng(17)
        b = random_mixture(3, 5, rng)
        init = greedy_heuristic_direction(b)
        cfg = GradientAscentConfig(mc_samples=200, max_steps=10)
        a = gradient_ascent_direction(b, 0.1, cfg, rng)
        assert conditional_mi_exact(b, a, 0.1) >= conditional_mi_exact(b, init, 0.1) - 1e-12

    def test_config_validation(self):
        with pytest.raises(ValidationError):
            GradientAscentConfig(step_size=0.0)


class TestSession:
    @pytest.mark.parametrize("method", ["greedy", "gradient", "random", "high_noise", "batch"])
    def test_shapes_and_norms(self, method):
        rng = make_rng(18)
        prior = random_mixture(2, 4, rng)
        _, x = sample_gmm(prior, rng)
        cfg = GradientAscentConfig(mc_samples=50, max_steps=3)
        tr = run_gmm_session(x, prior, 0.1, 3, method, rng, cfg)
        assert tr.directions.shape == (3, 4) and tr.outcomes.shape == (3,)
        np.testing.assert_allclose(np.linalg.norm(tr.directions, axis=1), 1.0)
        assert np.all(tr.info_gains >= 0)
        assert tr.label in (0, 1)

    def test_unknown_method(self):
        prior = random_mixture(2, 2, make_rng(0))
        with pytest.raises(ValidationError):
            run_gmm_session(np.zeros(2), prior, 0.1, 1, "oracle", make_rng(0))

    def test_sample_with_weight_override(self):
        prior = random_mixture(3, 2, make_rng(19))
        rng = make_rng(20)
        labels = [sample_gmm(prior, rng, weights=[0, 0, 1])[0] for _ in range(20)]
        assert set(labels) == {2}
