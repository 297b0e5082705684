"""Hierarchical architecture/hyperparameter search with Q-table-adaptive mutation."""

from .space import (
    Candidate,
    ParamKind,
    ParamSpec,
    SearchSpace,
    decode_arch_index,
    effective_arch_index,
    initial_candidate,
    load_space,
    validate_candidate,
)
from .policy import (
    MutationPolicyConfig,
    MutationRecord,
    QTable,
    cumulative_q,
    mutate_candidate,
    mutate_value,
    mutation_probability,
    select_action,
)
from .stats import (
    GaussianState,
    RewardTracker,
    StatsConfig,
    update_mean,
    update_reward_tracker,
    update_variance_distance,
    update_variance_moment,
)

__version__ = "0.1.0"

__all__ = [
    "Candidate",
    "GaussianState",
    "MutationPolicyConfig",
    "MutationRecord",
    "ParamKind",
    "ParamSpec",
    "QTable",
    "RewardTracker",
    "SearchSpace",
    "StatsConfig",
    "cumulative_q",
    "decode_arch_index",
    "effective_arch_index",
    "initial_candidate",
    "load_space",
    "mutate_candidate",
    "mutate_value",
    "mutation_probability",
    "select_action",
    "update_mean",
    "update_reward_tracker",
    "update_variance_distance",
    "update_variance_moment",
    "validate_candidate",
]
