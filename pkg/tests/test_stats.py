import math

import pytest
from hypothesis import given, settings
import hypothesis.strategies as st

from hiersearch.stats import (
    GaussianState,
    RewardTracker,
    StatsConfig,
    initial_gaussian,
    update_mean,
    update_reward_tracker,
    update_variance,
    update_variance_distance,
    update_variance_moment,
)

TOL = 1e-12


def cfg(**kw):
    return StatsConfig(**kw)


class TestMeanUpdate:
    def test_paper_literal_step(self):
        state = GaussianState(mean=0.5, var=1.0)
        tracker = RewardTracker(running_avg=0.6, count=3)
        out = update_mean(state, sampled=0.7, reward=0.8, tracker=tracker,
                          cfg=cfg(k=0.1), lower=0.0, upper=1.0)
        assert out.mean == pytest.approx(0.52, abs=TOL)

    def test_zero_delta_both_modes(self):
        state = GaussianState(mean=0.5, var=1.0)
        tracker = RewardTracker(running_avg=0.8, count=1)
        for mode in ("paper_literal", "sign_corrected"):
            out = update_mean(state, 0.9, 0.8, tracker, cfg(k=0.1, mean_sign_mode=mode), 0.0, 1.0)
            assert out.mean == pytest.approx(0.5, abs=TOL)

    def test_sign_corrected_flips_step(self):
        state = GaussianState(mean=0.5, var=1.0)
        tracker = RewardTracker(running_avg=0.0, count=1)
        out = update_mean(state, sampled=0.3, reward=0.2, tracker=tracker,
                          cfg=cfg(k=0.1, mean_sign_mode="sign_corrected"),
                          lower=0.0, upper=1.0)
        assert out.mean == pytest.approx(0.48, abs=TOL)

    def test_clamped_to_bounds(self):
        state = GaussianState(mean=0.95, var=1.0)
        tracker = RewardTracker(running_avg=0.0, count=1)
        out = update_mean(state, 0.99, 1.0, tracker, cfg(k=0.5), 0.0, 1.0)
        assert out.mean == 1.0

    def test_variance_untouched(self):
        state = GaussianState(mean=0.5, var=0.3)
        out = update_mean(state, 0.6, 0.9, RewardTracker(), cfg(), 0.0, 1.0)
        assert out.var == 0.3


class TestDistanceVariance:
    def test_boundary_zero_delta(self):
        state = GaussianState(mean=0.0, var=1.0)
        tracker = RewardTracker(running_avg=0.1, count=1)
        out = update_variance_distance(state, sampled=1.0, reward=0.9, tracker=tracker, cfg=cfg(k=0.5))
        assert out.var == pytest.approx(1.0, abs=TOL)

    def test_outside_case(self):
        state = GaussianState(mean=0.0, var=1.0)
        tracker = RewardTracker(running_avg=0.5, count=1)
        out = update_variance_distance(state, sampled=2.0, reward=0.7, tracker=tracker, cfg=cfg(k=0.5))
        assert out.var == pytest.approx(1.1, abs=TOL)

    def test_inside_case_worse_reward(self):
        state = GaussianState(mean=0.0, var=1.0)
        tracker = RewardTracker(running_avg=0.7, count=1)
        out = update_variance_distance(state, sampled=0.5, reward=0.5, tracker=tracker, cfg=cfg(k=0.5))
        assert out.var == pytest.approx(0.95, abs=TOL)

    @given(
        st.floats(min_value=-3.0, max_value=3.0, allow_nan=False),
        st.floats(min_value=-0.5, max_value=0.5, allow_nan=False),
    )
    def test_boundary_continuity(self, mean, reward_delta):
        # approaching |s - mean| = sigma from either side, the delta vanishes
        state = GaussianState(mean=mean, var=0.49)
        sigma = math.sqrt(state.var)
        tracker = RewardTracker(running_avg=0.0, count=1)
        c = cfg(k=1.0)
        for eps in (1e-6, -1e-6):
            out = update_variance_distance(state, mean + sigma + eps, reward_delta, tracker, c)
            assert abs(out.var - state.var) < 1e-5
        exact = update_variance_distance(state, mean + sigma, reward_delta, tracker, c)
        assert exact.var == pytest.approx(state.var, abs=TOL)


class TestMomentVariance:
    def test_zero_delta_when_estimator_matches(self):
        state = GaussianState(mean=0.0, var=1.0)
        tracker = RewardTracker(running_avg=0.2, count=1)
        out = update_variance_moment(state, sampled=1.0, reward=0.9, tracker=tracker, cfg=cfg(k=0.5))
        assert out.var == pytest.approx(1.0, abs=TOL)

    def test_growth_case(self):
        state = GaussianState(mean=0.0, var=1.0)
        tracker = RewardTracker(running_avg=0.5, count=1)
        out = update_variance_moment(state, sampled=2.0, reward=0.7, tracker=tracker, cfg=cfg(k=0.5))
        assert out.var == pytest.approx(1.3, abs=TOL)

    def test_floor_clamps_negative_result(self):
        # unclamped: 0.04 + 1 * ((0 - 0.04)/0.04) * 0.5 = -0.46
        state = GaussianState(mean=0.3, var=0.04)
        tracker = RewardTracker(running_avg=0.0, count=1)
        c = cfg(k=1.0, var_floor=1e-6)
        out = update_variance_moment(state, sampled=0.3, reward=0.5, tracker=tracker, cfg=c)
        assert out.var == c.var_floor


@st.composite
def update_streams(draw):
    n = draw(st.integers(min_value=1, max_value=30))
    return [
        (
            draw(st.floats(min_value=-5.0, max_value=5.0, allow_nan=False)),
            draw(st.floats(min_value=0.0, max_value=1.0, allow_nan=False)),
        )
        for _ in range(n)
    ]


class TestVariancePositivity:
    @given(update_streams(), st.sampled_from(["distance_based", "moment_based"]))
    @settings(max_examples=200)
    def test_floor_holds_over_any_stream(self, stream, strategy):
        c = cfg(k=2.0, var_floor=1e-6, variance_strategy=strategy)
        state = GaussianState(mean=0.0, var=0.05)
        tracker = RewardTracker()
        for sampled, reward in stream:
            state = update_variance(state, sampled, reward, tracker, c)
            tracker = update_reward_tracker(tracker, reward)
            assert state.var >= c.var_floor

    @given(st.floats(min_value=0.01, max_value=0.4, allow_nan=False))
    def test_reward_sign_monotonicity(self, gap):
        # with the sample outside the one-sigma interval, a bigger reward gap
        # grows the variance more, under either strategy
        state = GaussianState(mean=0.0, var=1.0)
        tracker = RewardTracker(running_avg=0.5, count=1)
        for fn in (update_variance_distance, update_variance_moment):
            lo = fn(state, 2.0, 0.5 + gap / 2, tracker, cfg(k=1.0))
            hi = fn(state, 2.0, 0.5 + gap, tracker, cfg(k=1.0))
            assert hi.var > lo.var


class TestRewardTracker:
    def test_first_observation(self):
        t = update_reward_tracker(RewardTracker(), 0.6)
        assert t.running_avg == pytest.approx(0.6, abs=TOL)
        assert t.count == 1

    def test_arithmetic_pair(self):
        t = RewardTracker()
        for r in (0.6, 0.8):
            t = update_reward_tracker(t, r)
        assert t.running_avg == pytest.approx(0.7, abs=TOL)

    def test_exponential(self):
        t = RewardTracker(mode="exponential", beta=0.9, running_avg=0.5, count=1)
        t = update_reward_tracker(t, 1.0)
        assert t.running_avg == pytest.approx(0.55, abs=TOL)

    def test_exponential_first_observation_seeds(self):
        t = update_reward_tracker(RewardTracker(mode="exponential", beta=0.9), 0.3)
        assert t.running_avg == pytest.approx(0.3, abs=TOL)

    @given(st.lists(st.floats(min_value=-1e3, max_value=1e3, allow_nan=False), min_size=1, max_size=50))
    def test_arithmetic_matches_brute_force_mean(self, rewards):
        t = RewardTracker()
        for r in rewards:
            t = update_reward_tracker(t, r)
        oracle = sum(rewards) / len(rewards)
        assert t.running_avg == pytest.approx(oracle, rel=1e-12, abs=1e-12)


class TestInitialGaussian:
    def test_sigma_fraction_of_range(self):
        g = initial_gaussian(0.0, 2.0, 0.5, cfg(init_sigma_fraction=0.25))
        assert g.mean == 0.5
        assert g.var == pytest.approx(0.25, abs=TOL)

    def test_degenerate_range_floored(self):
        g = initial_gaussian(1.0, 1.0, 1.0, cfg())
        assert g.var == cfg().var_floor
