import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from oracles import pair_count_auc, random_score_set, sweep_eer, sweep_min_dcf, sweep_points
from svbench.errors import MetricsError
from svbench.metrics import (
    DcfParams,
    ScoreSet,
    auc,
    eer,
    eer_threshold,
    min_dcf,
    min_dcf_detail,
    roc,
    roc_trapezoid_auc,
)


def score_set(targets, nontargets):
    scores = np.concatenate([targets, nontargets]).astype(float)
    labels = np.array([True] * len(targets) + [False] * len(nontargets))
    return ScoreSet(scores, labels)


class TestScoreSet:
    def test_needs_both_labels(self):
        with pytest.raises(MetricsError, match="at least one target"):
            ScoreSet(np.array([0.1, 0.2]), np.array([True, True]))

    def test_rejects_out_of_range(self):
        with pytest.raises(MetricsError, match="cosine range"):
            ScoreSet(np.array([1.5, 0.0]), np.array([True, False]))

    def test_rejects_nan(self):
        with pytest.raises(MetricsError, match="finite"):
            ScoreSet(np.array([np.nan, 0.0]), np.array([True, False]))


class TestRoc:
    def test_separable_reaches_origin(self):
        curve = roc(score_set([1.0, 1.0], [0.0, 0.0]))
        assert ((curve.far == 0) & (curve.frr == 0)).any()

    def test_all_equal_scores_tie_convention(self):
        curve = roc(score_set([0.5], [0.5, 0.5]))
        at = np.where(curve.thresholds == 0.5)[0][0]
        assert curve.far[at] == 1.0  # score >= t accepts
        assert curve.frr[at] == 0.0

    def test_matches_sweep_oracle(self):
        rng = np.random.default_rng(1)
        for _ in range(25):
            scores, labels = random_score_set(rng, max_scores=30)
            ss = ScoreSet(scores, labels)
            curve = roc(ss)
            want = sweep_points(ss.target_scores, ss.nontarget_scores)
            assert len(want) == len(curve.thresholds)
            for i, (t, far, frr) in enumerate(want):
                assert curve.thresholds[i] == t
                assert curve.far[i] == pytest.approx(far, abs=1e-12)
                assert curve.frr[i] == pytest.approx(frr, abs=1e-12)

    def test_monotone_endpoints(self):
        rng = np.random.default_rng(5)
        scores, labels = random_score_set(rng)
        curve = roc(ScoreSet(scores, labels))
        assert np.all(np.diff(curve.far) >= 0)
        assert np.all(np.diff(curve.frr) <= 0)
        assert curve.far[0] == 0.0 and curve.frr[0] == 1.0
        assert curve.far[-1] == 1.0 and curve.frr[-1] == 0.0


class TestEer:
    def test_perfectly_separated(self):
        assert eer(score_set([1.0, 0.9], [0.1, 0.2])) == 0.0

    def test_exact_crossing_one_third(self):
        assert eer(score_set([0.9, 0.8, 0.3], [0.7, 0.2, 0.1])) == pytest.approx(1 / 3, abs=1e-12)

    def test_label_swap_on_symmetric_scores(self):
        # Mirror-symmetric construction: swapping labels and negating scores
        # leaves the error geometry unchanged.
        targets = [0.8, 0.6, 0.1]
        nontargets = [-0.1, -0.6, -0.8]
        a = eer(score_set(targets, nontargets))
        b = eer(score_set([-s for s in nontargets], [-s for s in targets]))
        assert a == pytest.approx(b, abs=1e-12)

    def test_matches_sweep_oracle_randomized(self):
        rng = np.random.default_rng(2)
        for _ in range(200):
            scores, labels = random_score_set(rng)
            ss = ScoreSet(scores, labels)
            assert eer(ss) == pytest.approx(
                sweep_eer(ss.target_scores, ss.nontarget_scores), abs=1e-9)

    def test_monotone_transform_invariance(self):
        rng = np.random.default_rng(3)
        for _ in range(50):
            scores, labels = random_score_set(rng)
            base = eer(ScoreSet(scores, labels))
            warped = eer(ScoreSet(np.tanh(2.0 * scores), labels))
            assert warped == pytest.approx(base, abs=1e-12)

    @given(st.integers(min_value=0, max_value=10_000))
    @settings(max_examples=30, deadline=None)
    def test_range_property(self, seed):
        rng = np.random.default_rng(seed)
        scores, labels = random_score_set(rng)
        value = eer(ScoreSet(scores, labels))
        assert 0.0 <= value <= 1.0


class TestMinDcf:
    def test_perfectly_separated_is_zero(self):
        assert min_dcf(score_set([0.9, 0.8], [0.1, 0.0])) == 0.0

    def test_identical_scores_normalize_to_one(self):
        assert min_dcf(score_set([0.4, 0.4], [0.4, 0.4, 0.4])) == pytest.approx(1.0)

    def test_matches_sweep_oracle(self):
        rng = np.random.default_rng(4)
        params = DcfParams(p_target=0.01, c_miss=1.0, c_fa=1.0)
        for _ in range(200):
            scores, labels = random_score_set(rng)
            ss = ScoreSet(scores, labels)
            want = sweep_min_dcf(ss.target_scores, ss.nontarget_scores, 0.01, 1.0, 1.0)
            assert min_dcf(ss, params) == pytest.approx(min(want, 1.0), abs=1e-9)

    def test_normalized_at_most_one_and_zero_iff_eer_zero(self):
        rng = np.random.default_rng(6)
        for _ in range(100):
            scores, labels = random_score_set(rng)
            ss = ScoreSet(scores, labels)
            value = min_dcf(ss)
            assert 0.0 <= value <= 1.0
            assert (value == 0.0) == (eer(ss) == 0.0)

    def test_detail_reports_raw(self):
        detail = min_dcf_detail(score_set([0.9], [0.1]), DcfParams(0.5, 1.0, 1.0))
        assert detail["min_dcf"] == 0.0
        assert detail["min_cost"] == 0.0

    def test_param_validation(self):
        with pytest.raises(MetricsError):
            DcfParams(p_target=0.0)
        with pytest.raises(MetricsError):
            DcfParams(c_miss=-1.0)


class TestAuc:
    def test_perfectly_separated(self):
        assert auc(score_set([0.9, 0.8], [0.1, 0.2])) == 1.0

    def test_eight_ninths(self):
        assert auc(score_set([0.9, 0.8, 0.3], [0.7, 0.2, 0.1])) == pytest.approx(8 / 9, abs=1e-12)

    def test_all_ties_give_half(self):
        assert auc(score_set([0.4, 0.4], [0.4])) == 0.5

    def test_matches_pair_count_oracle(self):
        rng = np.random.default_rng(7)
        for _ in range(200):
            scores, labels = random_score_set(rng)
            ss = ScoreSet(scores, labels)
            want = pair_count_auc(ss.target_scores, ss.nontarget_scores)
            assert auc(ss) == pytest.approx(want, abs=1e-12)

    def test_equals_trapezoid_area(self):
        rng = np.random.default_rng(8)
        for _ in range(200):
            scores, labels = random_score_set(rng)
            ss = ScoreSet(scores, labels)
            assert auc(ss) == pytest.approx(roc_trapezoid_auc(roc(ss)), abs=1e-12)


class TestPermutationInvariance:
    def test_all_metrics(self):
        rng = np.random.default_rng(9)
        scores, labels = random_score_set(rng)
        ss = ScoreSet(scores, labels)
        perm = rng.permutation(len(scores))
        ps = ScoreSet(scores[perm], labels[perm])
        assert eer(ss) == eer(ps)
        assert min_dcf(ss) == min_dcf(ps)
        assert auc(ss) == auc(ps)


class TestEerThreshold:
    def test_separated_returns_midpoint(self):
        # crossing interval is (max nontarget, min target]
        tau = eer_threshold(score_set([0.9, 0.8], [0.2, 0.1]))
        assert tau == pytest.approx((0.8 + 0.2) / 2)

    def test_consistent_with_eer_location(self):
        rng = np.random.default_rng(10)
        for _ in range(100):
            scores, labels = random_score_set(rng)
            ss = ScoreSet(scores, labels)
            tau = eer_threshold(ss)
            tar, non = ss.target_scores, ss.nontarget_scores
            far = np.mean(non >= tau)
            frr = np.mean(tar < tau)
            # At the EER threshold the empirical rates bracket the EER value.
            e = eer(ss)
            assert min(far, frr) - 1e-9 <= e <= max(far, frr) + 1e-9

    def test_affine_transform_shifts_threshold(self):
        rng = np.random.default_rng(11)
        scores, labels = random_score_set(rng)
        ss = ScoreSet(scores, labels)
        tau = eer_threshold(ss)
        a, b = 0.5, 0.1
        shifted = ScoreSet(a * scores + b, labels)
        assert eer_threshold(shifted) == pytest.approx(a * tau + b, abs=1e-9)
