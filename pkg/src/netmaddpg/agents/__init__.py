"""MADDPG and its decentralized variants."""

from .audit import AccessLog, AuditedEnv
from .runtime import ALGORITHMS, SETTINGS, AgentRuntime, NoiseSpec, TeamAssignment, TrainerConfig, make_agent
from .trainer import (
    EvalResult,
    MetricsRow,
    Trainer,
    TrainingDiverged,
    TrainResult,
    evaluate,
    greedy_policy,
    random_policy,
    score_groups,
    train,
)
from .updates import (
    actor_update_centralized,
    actor_update_mixed,
    actor_update_surrogate,
    critic_loss_and_grad,
    critic_target_centralized,
    critic_target_decentralized,
    critic_update,
    policy_objective_and_grad,
    select_action,
)
