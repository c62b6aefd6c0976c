import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra import numpy as hnp

from ismcmc import (
    BadSimplex,
    EstimatorAccumulator,
    InvalidHoldingTime,
    JumpRecord,
    NegativeWeight,
    NonFinite,
    WeightedBatch,
    ZeroNormaliser,
    convex_combine,
    estimate,
    estimate_jump,
    scale_batch,
    subsample,
    variance_estimate,
)


def batch(theta, weights, draws=None, log_scale=0.0):
    weights = np.asarray(weights, dtype=float)
    if draws is None:
        draws = np.arange(weights.size, dtype=float)
    return WeightedBatch(theta=theta, weights=weights, draws=np.asarray(draws), log_scale=log_scale)


f_theta = lambda th, x: float(th[0])
f_draw = lambda th, x: float(x)


class TestWeightedBatch:
    def test_rejects_nan_weights(self):
        with pytest.raises(NonFinite):
            batch(0.0, [1.0, np.nan])

    def test_rejects_length_mismatch(self):
        with pytest.raises(ValueError):
            WeightedBatch(theta=0.0, weights=np.ones(2), draws=np.ones(3))

    def test_degenerate_zero_allows_neginf_scale(self):
        b = WeightedBatch(theta=0.0, weights=np.zeros(3), draws=np.zeros(3), log_scale=-np.inf)
        assert b.degenerate_zero

    def test_neginf_scale_needs_zero_weights(self):
        with pytest.raises(NonFinite):
            batch(0.0, [1.0], log_scale=-np.inf)


class TestEstimate:
    def test_single_batch_weighted_mean(self):
        b = batch(0.0, [1.0, 3.0], [2.0, 6.0])
        assert estimate([b], f_draw) == pytest.approx((2.0 + 18.0) / 4.0)

    def test_constant_function_returns_one(self):
        bs = [batch(float(k), [0.5, 1.5]) for k in range(4)]
        assert estimate(bs, lambda th, x: 1.0) == pytest.approx(1.0)

    def test_zero_normaliser(self):
        b = WeightedBatch(theta=0.0, weights=np.array([1.0, -1.0]), draws=np.zeros(2))
        with pytest.raises(ZeroNormaliser):
            estimate([b], f_draw)

    def test_all_collapsed(self):
        b = WeightedBatch(theta=0.0, weights=np.zeros(2), draws=np.zeros(2), log_scale=-np.inf)
        with pytest.raises(ZeroNormaliser):
            estimate([b, b], f_draw)

    def test_collapsed_batches_contribute_nothing(self):
        good = batch(1.0, [2.0], [5.0])
        dead = WeightedBatch(theta=2.0, weights=np.zeros(3), draws=np.zeros(3), log_scale=-np.inf)
        assert estimate([good, dead], f_draw) == pytest.approx(5.0)

    def test_multiple_functions_vectorised(self):
        bs = [batch(float(k), [1.0, 2.0], [k, k + 1.0]) for k in range(3)]
        out = estimate(bs, [f_theta, f_draw])
        assert out.shape == (2,)
        assert out[0] == pytest.approx(estimate(bs, f_theta))
        assert out[1] == pytest.approx(estimate(bs, f_draw))

    def test_huge_log_scales_do_not_overflow(self):
        bs = [batch(0.0, [1.0, 1.0], [1.0, 3.0], log_scale=5000.0),
              batch(0.0, [1.0, 1.0], [5.0, 7.0], log_scale=4990.0)]
        e = estimate(bs, f_draw)
        assert np.isfinite(e) and 1.0 < e < 7.0


class TestEstimateJump:
    def test_bit_identical_to_expanded(self):
        rng = np.random.default_rng(0)
        records = []
        expanded = []
        for k in range(20):
            b = batch(float(k), rng.uniform(0.1, 2.0, size=5), rng.normal(size=5),
                      log_scale=float(rng.normal() * 30))
            n = int(rng.integers(1, 6))
            records.append((JumpRecord(np.array([float(k)]), n), b))
            expanded.extend([b] * n)
        fs = [f_theta, f_draw]
        assert np.array_equal(estimate_jump(records, fs), estimate(expanded, fs))

    def test_rejects_zero_holding_time(self):
        r = JumpRecord(np.zeros(1), 0)
        with pytest.raises(InvalidHoldingTime):
            estimate_jump([(r, batch(0.0, [1.0]))], f_draw)

    def test_unit_holding_times_match_plain(self):
        bs = [batch(float(k), [1.0, 2.0]) for k in range(4)]
        records = [(JumpRecord(np.array([float(k)]), 1), b) for k, b in enumerate(bs)]
        assert estimate_jump(records, f_draw) == estimate(bs, f_draw)


class TestVariance:
    def test_zero_for_identical_batches(self):
        bs = [batch(0.0, [1.0, 1.0], [2.0, 4.0]) for _ in range(10)]
        e = estimate(bs, f_draw)
        rep = variance_estimate(bs, f_draw, e)
        assert rep.v_n == pytest.approx(0.0, abs=1e-25)

    def test_matches_direct_formula(self):
        rng = np.random.default_rng(1)
        bs = [batch(0.0, rng.uniform(0.1, 1.0, 3), rng.normal(size=3)) for _ in range(8)]
        e = estimate(bs, f_draw)
        xi = np.array([np.dot(b.weights, b.draws) for b in bs])
        xi1 = np.array([b.weights.sum() for b in bs])
        direct = np.sum((xi - xi1 * e) ** 2) / xi1.sum() ** 2
        rep = variance_estimate(bs, f_draw, e)
        assert rep.v_n == pytest.approx(direct)
        assert rep.n_times_v_n == pytest.approx(8 * direct)

    def test_ess_like_equals_n_for_equal_weights(self):
        bs = [batch(0.0, [1.0], [float(k)]) for k in range(16)]
        rep = variance_estimate(bs, f_draw, estimate(bs, f_draw))
        assert rep.ess_like == pytest.approx(16.0)


class TestAccumulator:
    def test_matches_batch_functions(self):
        rng = np.random.default_rng(2)
        bs = []
        acc = EstimatorAccumulator([f_theta, f_draw])
        holds = []
        for k in range(15):
            b = batch(float(k), rng.uniform(0.1, 1.0, 4), rng.normal(size=4),
                      log_scale=float(rng.normal() * 10))
            n = int(rng.integers(1, 4))
            acc.add(b, n)
            bs.extend([b] * n)
            holds.append(n)
        e = acc.estimate()
        ref = estimate(bs, [f_theta, f_draw])
        assert np.allclose(e, ref, rtol=1e-10)
        rep = acc.variance_report()
        ref_rep = variance_estimate(bs, [f_theta, f_draw], ref)
        assert np.allclose(rep.v_n, ref_rep.v_n, rtol=1e-8)

    def test_empty_raises(self):
        acc = EstimatorAccumulator([f_draw])
        with pytest.raises(ZeroNormaliser):
            acc.estimate()


class TestSubsample:
    def test_single_positive_weight_always_chosen(self):
        b = batch(0.0, [0.0, 5.0, 0.0], [1.0, 2.0, 3.0])
        for seed in range(5):
            s = subsample(b, np.random.default_rng(seed))
            assert s.draws[0] == 2.0
            assert s.weights[0] == 5.0

    def test_negative_weight_rejected(self):
        b = WeightedBatch(theta=0.0, weights=np.array([1.0, -0.5]), draws=np.zeros(2))
        with pytest.raises(NegativeWeight):
            subsample(b, np.random.default_rng(0))

    def test_total_weight_preserved(self):
        b = batch(0.0, [0.3, 0.7, 1.5], log_scale=2.0)
        s = subsample(b, np.random.default_rng(3))
        assert s.weights[0] == pytest.approx(2.5)
        assert s.log_scale == 2.0

    def test_frequencies_proportional_to_weights(self):
        b = batch(0.0, [1.0, 3.0], [0.0, 1.0])
        rng = np.random.default_rng(4)
        picks = np.array([subsample(b, rng).draws[0] for _ in range(4000)])
        assert abs(picks.mean() - 0.75) < 3 * 0.433 / np.sqrt(4000)


class TestConvexCombine:
    def test_bad_simplex(self):
        bs = [batch(0.0, [1.0]), batch(0.0, [1.0])]
        with pytest.raises(BadSimplex):
            convex_combine(bs, [0.7, 0.7])

    def test_estimates_combine(self):
        b1 = batch(0.0, [1.0, 1.0], [0.0, 2.0])
        b2 = batch(0.0, [2.0], [5.0], log_scale=1.0)
        mix = convex_combine([b1, b2], [0.25, 0.75])
        num = 0.25 * 2.0 + 0.75 * 2.0 * np.exp(1.0) * 5.0
        den = 0.25 * 2.0 + 0.75 * 2.0 * np.exp(1.0)
        assert estimate([mix], f_draw) == pytest.approx(num / den)

    def test_scale_batch_shifts_log_scale_only(self):
        b = batch(0.0, [1.0, 2.0])
        s = scale_batch(b, -3.0)
        assert s.log_scale == -3.0
        assert np.array_equal(s.weights, b.weights)


@settings(max_examples=60, deadline=None)
@given(
    weights=hnp.arrays(np.float64, st.integers(1, 8),
                       elements=st.floats(0.01, 50.0)),
    shift=st.floats(-200.0, 200.0),
)
def test_estimate_invariant_to_common_rescaling(weights, shift):
    draws = np.arange(weights.size, dtype=float)
    b1 = WeightedBatch(theta=0.0, weights=weights, draws=draws)
    b2 = scale_batch(b1, shift)
    assert estimate([b2], f_draw) == pytest.approx(estimate([b1], f_draw), rel=1e-9)


@settings(max_examples=60, deadline=None)
@given(
    weights=hnp.arrays(np.float64, st.integers(2, 8), elements=st.floats(0.01, 10.0)),
    values=hnp.arrays(np.float64, st.integers(2, 8), elements=st.floats(-50.0, 50.0)),
)
def test_estimate_stays_in_convex_hull(weights, values):
    n = min(weights.size, values.size)
    b = WeightedBatch(theta=0.0, weights=weights[:n], draws=values[:n])
    e = estimate([b], f_draw)
    assert values[:n].min() - 1e-9 <= e <= values[:n].max() + 1e-9
