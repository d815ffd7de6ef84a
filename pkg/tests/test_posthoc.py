"""Alignment, summaries, selection scores, and recovery metrics."""

import itertools

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from bicnet import posthoc
from bicnet.types import ValidationError


class TestGreedyAssign:
    def test_identity_scores(self):
        np.testing.assert_array_equal(
            posthoc.greedy_assign(np.eye(3)), [0, 1, 2]
        )

    def test_swap(self):
        score = np.array([[0.1, 0.9], [0.8, 0.2]])
        np.testing.assert_array_equal(posthoc.greedy_assign(score), [1, 0])

    def test_tie_break_row_then_column(self):
        perm = posthoc.greedy_assign(np.ones((3, 3)))
        np.testing.assert_array_equal(perm, [0, 1, 2])

    def test_rejects_rectangular(self):
        with pytest.raises(ValidationError):
            posthoc.greedy_assign(np.ones((2, 3)))

    @given(st.integers(0, 10_000), st.integers(2, 6))
    @settings(max_examples=60, deadline=None)
    def test_against_exhaustive_search(self, seed, k):
        """Greedy matching is a valid permutation and keeps the classic
        factor-two guarantee against the best permutation."""
        score = np.random.default_rng(seed).random((k, k))
        perm = posthoc.greedy_assign(score)
        assert sorted(perm) == list(range(k))
        got = sum(score[perm[c], c] for c in range(k))
        best = max(
            sum(score[p[c], c] for c in range(k))
            for p in itertools.permutations(range(k))
        )
        assert got >= 0.5 * best - 1e-12

    @given(st.integers(0, 10_000), st.integers(2, 6))
    @settings(max_examples=60, deadline=None)
    def test_recovers_dominant_structure(self, seed, k):
        """With a clearly dominant entry per column the greedy pass finds
        the planted assignment exactly."""
        gen = np.random.default_rng(seed)
        planted = gen.permutation(k)
        score = 0.3 * gen.random((k, k))
        score[planted, np.arange(k)] += 0.7
        np.testing.assert_array_equal(posthoc.greedy_assign(score), planted)


class TestAlignmentPlan:
    @given(st.integers(0, 10_000), st.integers(1, 5))
    @settings(max_examples=60, deadline=None)
    def test_inverse_restores(self, seed, k):
        gen = np.random.default_rng(seed)
        perm = gen.permutation(k)
        flips = gen.choice([-1.0, 1.0], size=k)
        plan = posthoc.AlignmentPlan(perm=perm, flips=flips)
        arr = gen.normal(size=(3, 4, k))
        restored = plan.inverse().apply_columns(plan.apply_columns(arr))
        np.testing.assert_allclose(restored, arr)
        path = gen.normal(size=(k, 7))
        restored = plan.inverse().apply_rows(plan.apply_rows(path))
        np.testing.assert_allclose(restored, path)

    def test_identity_property(self):
        plan = posthoc.AlignmentPlan(np.arange(3), np.ones(3))
        assert plan.is_identity
        assert not posthoc.AlignmentPlan(np.array([1, 0, 2]), np.ones(3)).is_identity
        assert not posthoc.AlignmentPlan(np.arange(3), np.array([1.0, -1.0, 1.0])).is_identity


class TestPlanForDraw:
    def test_recovers_planted_permutation(self):
        gen = np.random.default_rng(0)
        ref = gen.normal(size=(2, 8, 3))
        perm = np.array([2, 0, 1])
        flips = np.array([-1.0, 1.0, -1.0])
        shuffled = (ref[..., perm] * flips) + 0.01 * gen.normal(size=ref.shape)
        plan = posthoc.plan_for_draw(shuffled, ref)
        # aligned column i must be the shuffled column that carries ref i
        np.testing.assert_array_equal(plan.perm, np.argsort(perm))
        aligned = plan.apply_columns(shuffled)
        for k in range(3):
            a = aligned[..., k].ravel()
            b = ref[..., k].ravel()
            assert abs(np.corrcoef(a, b)[0, 1]) > 0.99
        # signs follow the peak-positive convention, not the reference
        flat = aligned.reshape(-1, 3)
        peaks = np.abs(flat).argmax(axis=0)
        assert np.all(flat[peaks, np.arange(3)] > 0)

    def test_sign_convention_largest_entry_positive(self):
        ref = np.array([[1.0, 0.0], [0.0, 1.0], [0.5, -0.2]])
        draw = -ref  # perfectly anticorrelated columns
        plan = posthoc.plan_for_draw(draw, ref)
        aligned = plan.apply_columns(draw)
        peaks = np.abs(aligned).argmax(axis=0)
        assert np.all(aligned[peaks, np.arange(2)] > 0)

    def test_shape_mismatch(self):
        with pytest.raises(ValidationError):
            posthoc.plan_for_draw(np.ones((3, 2)), np.ones((4, 2)))


class TestAlignDraws:
    def test_label_switched_draws_collapse(self):
        gen = np.random.default_rng(1)
        base = gen.normal(size=(1, 6, 3))
        draws = np.repeat(base, 40, axis=0)
        factors = np.repeat(gen.normal(size=(1, 1, 3, 10)), 40, axis=0)
        mu = np.repeat(gen.normal(size=(1, 2, 1, 3)), 40, axis=0)
        perms = [np.random.default_rng(i).permutation(3) for i in range(40)]
        flips = [np.random.default_rng(100 + i).choice([-1.0, 1.0], 3)
                 for i in range(40)]
        for i in range(40):
            draws[i] = draws[i][..., perms[i]] * flips[i]
            factors[i] = factors[i][..., perms[i], :] * flips[i][:, None]
            mu[i] = mu[i][..., perms[i]]
        out = posthoc.align_draws(
            draws, base[0], factor_draws=factors, mu_draws=mu
        )
        for key in ("loadings", "factors", "sv_mu"):
            spread = out[key].std(axis=0).max()
            assert spread < 1e-12, key

    def test_log_vol_alignment_ignores_sign(self):
        gen = np.random.default_rng(2)
        lam = gen.normal(size=(1, 5, 2))
        lv = gen.normal(size=(1, 1, 2, 6))
        flipped = lam * -1.0
        out = posthoc.align_draws(
            np.stack([lam[0], flipped[0]]), lam[0],
            log_vol_draws=np.concatenate([lv, lv]),
        )
        np.testing.assert_allclose(out["log_vol"][0], out["log_vol"][1])
        np.testing.assert_allclose(out["loadings"][0], out["loadings"][1])


class TestPosteriorSummary:
    def test_median_and_interval(self):
        draws = np.arange(1, 102, dtype=float)[:, None]  # 1..101
        out = posthoc.posterior_summary(draws, level=0.9)
        assert out["estimate"][0] == 51.0
        assert out["lower"][0] == pytest.approx(6.0)
        assert out["upper"][0] == pytest.approx(96.0)

    def test_mean_estimator(self):
        draws = np.array([[1.0], [3.0]])
        assert posthoc.posterior_summary(draws, "mean")["estimate"][0] == 2.0

    def test_too_few_draws(self):
        with pytest.raises(ValidationError, match="2 draws"):
            posthoc.posterior_summary(np.ones((1, 3)))

    def test_unknown_estimator(self):
        with pytest.raises(ValidationError, match="estimator"):
            posthoc.posterior_summary(np.ones((5, 2)), "mode")


class TestThresholdGroupMap:
    def test_boundary_inclusive(self):
        pi0 = np.array([[0.5, 0.499], [0.9, 0.1]])
        out = posthoc.threshold_group_map(pi0, 0.5)
        np.testing.assert_array_equal(out, [[True, False], [True, False]])

    def test_monotone_in_threshold(self):
        gen = np.random.default_rng(3)
        pi0 = gen.random((6, 3))
        prev = posthoc.threshold_group_map(pi0, 0.1)
        for thr in (0.3, 0.6, 0.95):
            cur = posthoc.threshold_group_map(pi0, thr)
            assert np.all(prev | ~cur)  # cur is a subset of prev
            prev = cur

    @pytest.mark.parametrize("bad", [0.0, 1.0, -0.2, 1.5])
    def test_threshold_range(self, bad):
        with pytest.raises(ValidationError):
            posthoc.threshold_group_map(np.ones((2, 2)) * 0.5, bad)


class TestModelSelection:
    def test_parameter_count_example(self):
        """9 confident loadings + one subject/condition block of
        6 regions and 3 factors: 9 + 1*1*(6 + 9) = 24."""
        incl = np.zeros((1, 6, 3))
        incl.ravel()[:9] = 0.99
        assert posthoc.count_parameters(incl, n_conditions=1) == 24

    def test_parameter_count_threshold_is_half(self):
        incl = np.full((2, 4, 2), 0.499)
        base = 2 * 2 * (4 + 6)
        assert posthoc.count_parameters(incl, 2) == base
        incl[0, 0, 0] = 0.5
        assert posthoc.count_parameters(incl, 2) == base + 1

    def test_scores_degenerate_posterior(self):
        """If every draw equals the plug-in, DIC collapses to the fixed
        deviance and p_eff to zero."""
        ll = np.full(50, -123.4)
        out = posthoc.model_selection_scores(ll, -123.4, 10, 200)
        assert out["p_eff"] == pytest.approx(0.0)
        assert out["dic"] == pytest.approx(246.8)
        assert out["aic"] == pytest.approx(246.8 + 20.0)
        assert out["bic"] == pytest.approx(246.8 + 10 * np.log(200))

    def test_scores_use_mean_deviance(self):
        out = posthoc.model_selection_scores(
            np.array([-10.0, -14.0]), -10.0, 0, 10
        )
        # mean deviance 24, fixed deviance 20
        assert out["dic"] == pytest.approx(28.0)
        assert out["p_eff"] == pytest.approx(4.0)

    def test_no_draws(self):
        with pytest.raises(ValidationError):
            posthoc.model_selection_scores(np.empty(0), 0.0, 1, 10)

    def test_elbow_plain_minimum(self):
        assert posthoc.pick_elbow([2, 3, 4, 5], [10.0, 4.0, 4.5, 4.4]) == 3

    def test_elbow_prefers_smaller_within_spread(self):
        k = posthoc.pick_elbow(
            [2, 3, 4, 5], [10.0, 4.5, 4.0, 4.2], spreads=[0.1, 0.8, 0.8, 0.1]
        )
        assert k == 3  # 4.5 <= 4.0 + 0.8

    def test_elbow_unsorted_input(self):
        assert posthoc.pick_elbow([5, 2, 3], [4.4, 10.0, 4.0]) == 3


class TestRecoveryMetrics:
    def test_mae_example(self):
        assert posthoc.mae(np.array([1.0, 2.0]), np.array([0.0, 4.0])) == 1.5

    def test_mae_shape_check(self):
        with pytest.raises(ValidationError, match="shape"):
            posthoc.mae(np.ones(3), np.ones(4))

    def test_rmse_reconstruction_example(self):
        # error matrix of all ones over N=6 regions: sqrt(6T/T) = sqrt(6)
        lam_hat = np.ones((6, 1))
        f_hat = np.ones((1, 50))
        lam = np.zeros((6, 1))
        f = np.zeros((1, 50))
        assert posthoc.rmse_reconstruction(lam_hat, f_hat, lam, f) == pytest.approx(
            np.sqrt(6.0)
        )

    def test_align_to_truth_signs_from_correlation(self):
        gen = np.random.default_rng(4)
        truth = gen.normal(size=(8, 3))
        est = -truth[:, [1, 2, 0]]
        plan = posthoc.align_to_truth(est, truth)
        aligned = plan.apply_columns(est)
        np.testing.assert_allclose(aligned, truth)
        assert posthoc.mae(aligned, truth) < 1e-12


class TestJaccard:
    def test_examples(self):
        assert posthoc.jaccard({1, 2, 3}, {2, 3, 4}) == pytest.approx(0.5)
        assert posthoc.jaccard({1, 2, 3}, {3, 4, 5, 6}) == pytest.approx(1 / 6)
        assert posthoc.jaccard({1}, {1}) == 1.0
        assert posthoc.jaccard({1}, {2}) == 0.0
        assert posthoc.jaccard(set(), set()) == 0.0

    @given(st.sets(st.integers(0, 20)), st.sets(st.integers(0, 20)))
    @settings(max_examples=100, deadline=None)
    def test_properties(self, a, b):
        j = posthoc.jaccard(a, b)
        assert 0.0 <= j <= 1.0
        assert j == posthoc.jaccard(b, a)
        if a == b and a:
            assert j == 1.0

    def test_match_maps(self):
        maps_a = [{0, 1}, {2, 3}, {4}]
        maps_b = [{4, 5}, {0, 1}, {2}]
        out = posthoc.match_maps(maps_a, maps_b)
        np.testing.assert_array_equal(out["assignment"], [2, 0, 1])
        assert out["similarities"][1] == 1.0
        assert out["mean"] == pytest.approx((0.5 + 1.0 + 0.5) / 3)
        assert out["sd"] == pytest.approx(np.std([0.5, 1.0, 0.5], ddof=1))

    def test_match_maps_length_check(self):
        with pytest.raises(ValidationError):
            posthoc.match_maps([{1}], [{1}, {2}])


class TestLaggedCrosscorr:
    def test_recovers_planted_shift(self):
        gen = np.random.default_rng(5)
        stim = (gen.random(300) < 0.5).astype(float)
        amp = np.roll(stim, 5) + 0.05 * gen.normal(size=300)
        lag, curve = posthoc.lagged_crosscorr(amp, stim, max_lag=20)
        assert lag == 5
        assert curve[4] > 0.9

    def test_sampling_interval_conversion(self):
        # a 17.28 s latency at a 0.72 s sampling interval is 24 steps
        assert round(17.28 / 0.72) == 24

    def test_white_noise_has_weak_curve(self):
        gen = np.random.default_rng(6)
        lag, curve = posthoc.lagged_crosscorr(
            gen.normal(size=2000), gen.normal(size=2000), max_lag=30
        )
        assert np.max(np.abs(curve)) < 0.1

    def test_constant_series_rejected(self):
        with pytest.raises(ValidationError, match="constant"):
            posthoc.lagged_crosscorr(np.ones(50), np.arange(50.0), 5)

    def test_bad_lag(self):
        with pytest.raises(ValidationError, match="max_lag"):
            posthoc.lagged_crosscorr(np.arange(10.0), np.arange(10.0), 10)
