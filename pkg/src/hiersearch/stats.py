"""Gaussian state per continuous feature and the running reward average.

Every update scales with (r_t - rbar): the gap between the latest reward and
the historical average.  The mean steps by k * (r_t - rbar), optionally signed
by the side of the mean the sample fell on.  Variance follows one of two
strategies: a distance heuristic keyed to whether the sample fell inside the
one-sigma interval, or a moment estimate comparing squared error against the
current variance.  Variance is floored, the mean is clamped to the feature's
bounds.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace

MEAN_SIGN_MODES = ("paper_literal", "sign_corrected")
VARIANCE_STRATEGIES = ("distance_based", "moment_based")
TRACKER_MODES = ("arithmetic", "exponential")


@dataclass(frozen=True)
class GaussianState:
    """Running (mean, variance) for one continuous feature."""

    mean: float
    var: float


@dataclass(frozen=True)
class RewardTracker:
    """Running average reward; arithmetic mean or exponential smoothing."""

    mode: str = "arithmetic"
    beta: float = 0.9
    running_avg: float = 0.0
    count: int = 0

    def __post_init__(self):
        if self.mode not in TRACKER_MODES:
            raise ValueError(f"tracker mode must be one of {TRACKER_MODES}")
        if not 0.0 < self.beta < 1.0:
            raise ValueError("beta must lie in (0, 1)")


@dataclass(frozen=True)
class StatsConfig:
    """Knobs for the mean/variance adaptation.

    k scales every update; var_floor keeps variances strictly positive;
    init_sigma_fraction sets the initial sigma as a fraction of a feature's
    bound range.
    """

    k: float = 0.5
    variance_strategy: str = "distance_based"
    var_floor: float = 1e-6
    mean_sign_mode: str = "paper_literal"
    init_sigma_fraction: float = 0.25
    tracker_mode: str = "arithmetic"
    tracker_beta: float = 0.9

    def __post_init__(self):
        if self.k <= 0:
            raise ValueError("k must be positive")
        if self.var_floor <= 0:
            raise ValueError("var_floor must be positive")
        if self.variance_strategy not in VARIANCE_STRATEGIES:
            raise ValueError(f"variance_strategy must be one of {VARIANCE_STRATEGIES}")
        if self.mean_sign_mode not in MEAN_SIGN_MODES:
            raise ValueError(f"mean_sign_mode must be one of {MEAN_SIGN_MODES}")
        if self.init_sigma_fraction <= 0:
            raise ValueError("init_sigma_fraction must be positive")
        if self.tracker_mode not in TRACKER_MODES:
            raise ValueError(f"tracker_mode must be one of {TRACKER_MODES}")
        if not 0.0 < self.tracker_beta < 1.0:
            raise ValueError("tracker_beta must lie in (0, 1)")

    def new_tracker(self) -> "RewardTracker":
        return RewardTracker(mode=self.tracker_mode, beta=self.tracker_beta)


def initial_gaussian(lower: float, upper: float, initial: float, cfg: StatsConfig) -> GaussianState:
    """State a fresh feature starts from: mean at its initial value, sigma a
    fixed fraction of the bound range (floored for degenerate ranges)."""
    sigma = cfg.init_sigma_fraction * (upper - lower)
    return GaussianState(mean=float(initial), var=max(sigma * sigma, cfg.var_floor))


def update_mean(
    state: GaussianState,
    sampled: float,
    reward: float,
    tracker: RewardTracker,
    cfg: StatsConfig,
    lower: float,
    upper: float,
) -> GaussianState:
    """mu <- mu + k * (r - rbar), optionally signed by (sampled - mu).

    The result is clamped to [lower, upper] so future mean-relative samples
    stay anchored inside the feature's bounds.
    """
    delta = cfg.k * (reward - tracker.running_avg)
    if cfg.mean_sign_mode == "sign_corrected":
        delta *= _sign(sampled - state.mean)
    return replace(state, mean=min(max(state.mean + delta, lower), upper))


def update_variance_distance(
    state: GaussianState,
    sampled: float,
    reward: float,
    tracker: RewardTracker,
    cfg: StatsConfig,
) -> GaussianState:
    """Distance heuristic: the update factor is |s - mu|/sigma - 1 outside the
    one-sigma interval and 1 - |s - mu|/sigma inside it; both vanish at the
    boundary, so the update is continuous there."""
    sigma = math.sqrt(state.var)
    ratio = abs(sampled - state.mean) / sigma
    factor = (ratio - 1.0) if ratio > 1.0 else (1.0 - ratio)
    new_var = state.var + cfg.k * factor * (reward - tracker.running_avg)
    return replace(state, var=max(new_var, cfg.var_floor))


def update_variance_moment(
    state: GaussianState,
    sampled: float,
    reward: float,
    tracker: RewardTracker,
    cfg: StatsConfig,
) -> GaussianState:
    """Moment estimate: step by k * ((s - mu)^2 - var)/var * (r - rbar)."""
    err = (sampled - state.mean) ** 2
    new_var = state.var + cfg.k * ((err - state.var) / state.var) * (reward - tracker.running_avg)
    return replace(state, var=max(new_var, cfg.var_floor))


def update_variance(
    state: GaussianState,
    sampled: float,
    reward: float,
    tracker: RewardTracker,
    cfg: StatsConfig,
) -> GaussianState:
    if cfg.variance_strategy == "moment_based":
        return update_variance_moment(state, sampled, reward, tracker, cfg)
    return update_variance_distance(state, sampled, reward, tracker, cfg)


def update_reward_tracker(tracker: RewardTracker, reward: float) -> RewardTracker:
    """Fold one reward into the running average.

    Arithmetic mode keeps the exact mean of everything observed; exponential
    mode smooths with beta (first observation seeds the average directly).
    """
    if tracker.mode == "arithmetic":
        avg = (tracker.running_avg * tracker.count + reward) / (tracker.count + 1)
    else:
        avg = reward if tracker.count == 0 else tracker.beta * tracker.running_avg + (1.0 - tracker.beta) * reward
    return replace(tracker, running_avg=avg, count=tracker.count + 1)


def _sign(x: float) -> float:
    if x > 0:
        return 1.0
    if x < 0:
        return -1.0
    return 0.0
