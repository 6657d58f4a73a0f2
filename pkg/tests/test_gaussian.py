import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from infogreedy.errors import NumericalError, ValidationError
from infogreedy.gaussian import (ColoredAfter, ColoredBefore, GaussianBelief, StopReason, WhiteAfter,
                                 WhiteBefore, generalized_eigenvalues, generalized_leading,
                                 measurement_budget, mode_matching_direction, mutual_info_gaussian,
                                 posterior_update, run_fixed_directions, run_session,
                                 select_direction, stopping_threshold)
from infogreedy.linalg import chi2_quantile, make_rng, sample_mvn, sym_eig


def lowrank(n, r, rng):
    g = rng.standard_normal((n, r))
    return g @ g.T / n


class TestMutualInfo:
    def test_unit(self):
        assert mutual_info_gaussian([1, 0], np.eye(2), 1.0) == pytest.approx(0.5 * math.log(2))

    def test_zero_vector(self):
        assert mutual_info_gaussian([0, 0], np.eye(2), 1.0) == 0.0

    def test_diagonal(self):
        assert mutual_info_gaussian([1, 0], np.diag([4.0, 1.0]), 1.0) == pytest.approx(0.5 * math.log(5))

    def test_rejects_nonpositive_noise(self):
        with pytest.raises(ValidationError):
            mutual_info_gaussian([1, 0], np.eye(2), 0.0)


class TestPosteriorUpdate:
    def test_scalar_kalman(self):
        b = posterior_update(GaussianBelief(np.zeros(2), np.eye(2)), [1, 0], 1.0, 1.0)
        np.testing.assert_allclose(b.mean, [0.5, 0])
        np.testing.assert_allclose(b.cov, np.diag([0.5, 1.0]))

    def test_orthogonal_direction_is_uninformative(self):
        prior = GaussianBelief(np.array([1.0, 2.0, 0.0]), np.diag([1.0, 2.0, 0.0]))
        b = posterior_update(prior, [0, 0, 1], 0.0, 0.5)
        np.testing.assert_array_equal(b.cov, prior.cov)
        np.testing.assert_array_equal(b.mean, prior.mean)

    def test_zero_denominator(self):
        with pytest.raises(NumericalError):
            posterior_update(GaussianBelief(np.zeros(2), np.diag([1.0, 0.0])), [0, 1], 0.0, 0.0)

    def test_eigenvalue_identity(self):
        rng = make_rng(0)
        cov = lowrank(6, 6, rng)
        dec = sym_eig(cov)
        beta, var = 2.5, 0.3
        u, lam = dec.eigenvectors[:, 1], dec.eigenvalues[1]
        b = posterior_update(GaussianBelief(np.zeros(6), cov), math.sqrt(beta) * u, 0.0, var)
        w = dec.eigenvalues.copy()
        w[1] = lam * var / (beta * lam + var)
        expected = (dec.eigenvectors * w) @ dec.eigenvectors.T
        assert np.linalg.norm(b.cov - expected) < 1e-10

    @settings(max_examples=30, deadline=None)
    @given(st.integers(0, 2**32 - 1))
    def test_psd_and_trace_nonincreasing(self, seed):
        rng = make_rng(seed)
        b = GaussianBelief(np.zeros(5), lowrank(5, 3, rng))
        for _ in range(6):
            a = rng.standard_normal(5)
            new = posterior_update(b, a, float(rng.standard_normal()), float(rng.uniform(0.01, 1)))
            new.check_psd(rtol=1e-9)
            assert np.trace(new.cov) <= np.trace(b.cov) + 1e-12
            b = new


class TestSelectDirection:
    def test_white_after_example(self):
        b = GaussianBelief(np.zeros(2), np.diag([4.0, 1.0]))
        sel = select_direction(b, WhiteAfter(0.1), 0.1, 0.95)
        np.testing.assert_allclose(sel.direction, [1, 0])
        expected = (chi2_quantile(0.95, 2) / 0.01 - 0.25) * 0.01
        assert sel.power == pytest.approx(expected, rel=1e-12)
        assert sel.power == pytest.approx(5.989, abs=1e-3)
        assert sel.noise_var == pytest.approx(0.01)
        np.testing.assert_allclose(sel.vector, math.sqrt(expected) * np.array([1, 0]))

    def test_white_after_power_lands_on_threshold(self):
        b = GaussianBelief(np.zeros(2), np.diag([4.0, 1.0]))
        sel = select_direction(b, WhiteAfter(0.1), 0.1, 0.95)
        post = posterior_update(b, sel.vector, 0.0, sel.noise_var)
        assert np.linalg.eigvalsh(post.cov)[0] == pytest.approx(stopping_threshold(0.1, 0.95, 2), rel=1e-10)

    def test_white_before_rank_one(self):
        v = np.array([1.0, -2.0, 2.0])
        sel = select_direction(GaussianBelief(np.zeros(3), np.outer(v, v)), WhiteBefore(0.1), 0.1, 0.95)
        np.testing.assert_allclose(np.abs(sel.direction), np.abs(v) / 3, atol=1e-12)
        assert sel.power == float(max(1, math.ceil((1 / stopping_threshold(0.1, 0.95, 3) - 1 / 9) * 0.01)))

    def test_colored_before_identity_matches_white(self):
        cov = lowrank(5, 3, make_rng(1))
        b = GaussianBelief(np.zeros(5), cov)
        w = select_direction(b, WhiteBefore(1.0), 0.1, 0.95)
        c = select_direction(b, ColoredBefore(np.eye(5)), 0.1, 0.95)
        assert abs(abs(w.direction @ c.direction) - 1) < 1e-10

    @pytest.mark.parametrize("sigma", [0.05, 0.3])
    def test_colored_before_scaled_identity_matches_white(self, sigma):
        cov = lowrank(5, 5, make_rng(2))
        b = GaussianBelief(np.zeros(5), cov)
        w = select_direction(b, WhiteBefore(sigma), 0.1, 0.95)
        c = select_direction(b, ColoredBefore(sigma ** 2 * np.eye(5)), 0.1, 0.95)
        assert abs(abs(w.direction @ c.direction) - 1) < 1e-10
        assert c.power == w.power
        assert c.noise_var == pytest.approx(sigma ** 2)

    def test_singular_noise_cov_rejected(self):
        with pytest.raises(ValidationError):
            ColoredBefore(np.diag([1.0, 0.0]))
        with pytest.raises(ValidationError):
            ColoredAfter(np.diag([1.0, 0.0]))

    def test_colored_after_mode_matching(self):
        rng = make_rng(3)
        cov = lowrank(4, 4, rng)
        wcov = lowrank(4, 4, rng) + 0.1 * np.eye(4)
        sel = select_direction(GaussianBelief(np.zeros(4), cov), ColoredAfter(wcov), 0.1, 0.95)
        sx, sw = sym_eig(cov), sym_eig(wcov)
        u = sx.eigenvectors @ (np.sqrt(sw.eigenvalues) * (sw.eigenvectors.T @ np.eye(4)[0]))
        np.testing.assert_allclose(sel.direction, u / np.linalg.norm(u), atol=1e-12)
        assert sel.noise_var == pytest.approx(wcov[0, 0])
        np.testing.assert_allclose(mode_matching_direction(cov, wcov), sel.direction)

    def test_generalized_leading(self):
        rng = make_rng(4)
        cov = lowrank(5, 5, rng)
        wcov = lowrank(5, 5, rng) + 0.2 * np.eye(5)
        lam, v = generalized_leading(cov, wcov)
        np.testing.assert_allclose(np.linalg.solve(wcov, cov @ v), lam * v, atol=1e-9)
        eig = np.sort(np.linalg.eigvals(np.linalg.solve(wcov, cov)).real)[::-1]
        np.testing.assert_allclose(generalized_eigenvalues(cov, wcov), eig, rtol=1e-8)

    def test_already_converged_raises(self):
        b = GaussianBelief(np.zeros(2), np.diag([1e-9, 0.0]))
        with pytest.raises(ValidationError):
            select_direction(b, WhiteAfter(0.1), 0.1, 0.95)


class TestBudget:
    def test_exact_count_small_noise(self):
        delta = stopping_threshold(0.1, 0.95, 1)
        assert measurement_budget([1.0], WhiteBefore(0.0), 0.1, 0.95) == 1
        assert measurement_budget([delta / 2], WhiteBefore(math.sqrt(delta / 2)), 0.1, 0.95) == 0
        assert measurement_budget([1.0], WhiteAfter(0.0), 0.1, 0.95) == 1

    def test_all_below_threshold(self):
        delta = stopping_threshold(0.1, 0.95, 3)
        lam = [delta * 0.9, delta * 0.5, 0.0]
        assert measurement_budget(lam, WhiteBefore(0.5), 0.1, 0.95) == 0
        assert measurement_budget(lam, WhiteAfter(0.5), 0.1, 0.95) == 0.0

    def test_white_before_formula(self):
        lam = np.array([1.0, 0.5, 0.0])
        sigma, n = 0.2, 3
        inv = 1 / stopping_threshold(0.1, 0.95, n)
        expected = sum(max(0, math.ceil((inv - 1 / l) * sigma ** 2)) for l in lam[:2])
        assert measurement_budget(lam, WhiteBefore(sigma), 0.1, 0.95) == expected

    def test_white_after_power(self):
        lam = np.array([2.0, 0.3])
        inv = 1 / stopping_threshold(0.1, 0.95, 2)
        expected = sum((inv - 1 / l) * 0.01 for l in lam)
        assert measurement_budget(lam, WhiteAfter(0.1), 0.1, 0.95) == pytest.approx(expected)

    def test_colored_before_formula(self):
        wcov = np.diag([2.0, 0.5])
        lam = np.array([3.0, 0.1])
        inv = 1 / stopping_threshold(0.1, 0.95, 2)
        expected = sum(math.ceil(2.0 * inv - 1 / l) for l in lam)
        assert measurement_budget(lam, ColoredBefore(wcov), 0.1, 0.95) == expected

    def test_rejects_negative(self):
        with pytest.raises(ValidationError):
            measurement_budget([-1.0], WhiteAfter(0.1), 0.1, 0.95)


class TestSession:
    def test_noiseless_exact_recovery(self):
        rng = make_rng(5)
        cov = lowrank(8, 3, rng)
        x = sample_mvn(np.zeros(8), cov, rng)
        tr = run_session(x, GaussianBelief(np.zeros(8), cov), WhiteAfter(0.0), 0.1, 0.95, 50, rng)
        assert tr.num_steps == 3
        np.testing.assert_allclose(tr.estimate, x, atol=1e-9)
        assert tr.stop_reason is StopReason.INFO_THRESHOLD

    @pytest.mark.parametrize("noise", [WhiteAfter(0.05), WhiteBefore(0.05)])
    def test_transcript_invariants(self, noise):
        rng = make_rng(6)
        cov = lowrank(6, 4, rng)
        tr = run_session(None, GaussianBelief(np.zeros(6), cov), noise, 0.1, 0.95, 100, rng)
        for r in tr.records:
            assert np.linalg.norm(r.direction) == pytest.approx(1.0, abs=1e-10)
            assert r.info_gain >= 0
            assert r.power > 0
        np.testing.assert_array_equal(tr.estimate, tr.belief.mean)
        assert tr.stop_reason is StopReason.INFO_THRESHOLD
        assert sym_eig(tr.belief.cov).eigenvalues[0] <= stopping_threshold(0.1, 0.95, 6) * (1 + 1e-9)

    def test_budget_matches_theorem_white(self):
        rng = make_rng(7)
        cov = lowrank(10, 4, rng)
        prior = GaussianBelief(np.zeros(10), cov)
        lam = sym_eig(cov).eigenvalues
        for noise in (WhiteAfter(0.05), WhiteBefore(0.05)):
            tr = run_session(None, prior, noise, 0.1, 0.95, 100, rng)
            assert tr.total_power <= measurement_budget(lam, noise, 0.1, 0.95) * (1 + 1e-9)

    def test_power_splitting(self):
        rng = make_rng(8)
        cov = lowrank(5, 5, rng)
        b = GaussianBelief(np.zeros(5), cov)
        u = rng.standard_normal(5)
        u /= np.linalg.norm(u)
        b1, b2 = 0.7, 1.9
        split = posterior_update(posterior_update(b, math.sqrt(b1) * u, 0.3, 0.2), math.sqrt(b2) * u, -0.1, 0.2)
        joint = posterior_update(b, math.sqrt(b1 + b2) * u, 0.0, 0.2)
        assert np.linalg.norm(split.cov - joint.cov) < 1e-10

    def test_max_iterations_and_budget_stop(self):
        rng = make_rng(9)
        cov = lowrank(6, 6, rng)
        prior = GaussianBelief(np.zeros(6), cov)
        tr = run_session(None, prior, WhiteAfter(0.01), 0.1, 0.95, 2, rng)
        assert tr.num_steps == 2 and tr.stop_reason is StopReason.MAX_ITERATIONS
        tr = run_session(None, prior, WhiteAfter(0.01), 0.1, 0.95, 50, rng, fixed_power=1.0, budget=3.0)
        assert tr.stop_reason is StopReason.BUDGET_EXHAUSTED and tr.total_power == 3.0

    def test_callable_signal_source(self):
        rng = make_rng(10)
        cov = lowrank(4, 2, rng)
        x = np.array([1.0, 2.0, 3.0, 4.0])
        tr = run_session(lambda r: x, GaussianBelief(np.zeros(4), cov), WhiteAfter(0.0), 0.1, 0.95, 10, rng)
        assert tr.num_steps == 2

    def test_rejects_bad_max_iter(self):
        with pytest.raises(ValidationError):
            run_session(None, GaussianBelief(np.zeros(2), np.eye(2)), WhiteAfter(0.1), 0.1, 0.95, 0, make_rng(0))

    @pytest.mark.parametrize("kind", ["white_after", "white_before", "colored_before"])
    def test_greedy_optimality_against_random_probes(self, kind):
        rng = make_rng(11)
        n = 8
        cov = lowrank(n, 5, rng)
        wcov = lowrank(n, n, rng) + 0.05 * np.eye(n)
        noise = {"white_after": WhiteAfter(0.1), "white_before": WhiteBefore(0.1),
                 "colored_before": ColoredBefore(wcov)}[kind]

        def unit_var(d):
            return float(d @ wcov @ d) if kind == "colored_before" else 0.01

        steps = []
        run_session(None, GaussianBelief(np.zeros(n), cov), noise, 0.05, 0.95, 6, rng,
                    on_step=lambda rec, b: steps.append(rec))
        b = GaussianBelief(np.zeros(n), cov)
        probes = rng.standard_normal((100, n))
        probes /= np.linalg.norm(probes, axis=1, keepdims=True)
        for rec in steps:
            d = rec.direction
            best = mutual_info_gaussian(d, b.cov, unit_var(d))
            assert all(best >= mutual_info_gaussian(p, b.cov, unit_var(p)) - 1e-12 for p in probes)
            b = posterior_update(b, d, rec.outcome, unit_var(d) / rec.power if kind != "white_after"
                                 else 0.01 / rec.power)

    def test_fixed_directions_with_callable_noise(self):
        rng = make_rng(12)
        cov = lowrank(3, 3, rng)
        x = np.array([0.1, -0.2, 0.3])
        b = run_fixed_directions(x, GaussianBelief(np.zeros(3), cov), np.eye(3), lambda d: 0.0, rng)
        np.testing.assert_allclose(b.mean, x, atol=1e-9)
