from .agent import Learner, LearnerConfig, Networks, NonFiniteTrainingError, build_networks
from .buffer import Batch, ReplayBuffer, Transition
from .lagrangian import LagrangianState, PIDGains, pid_update_lambda
from .losses import (
    actor_loss,
    combined_actor_loss,
    cql_critic_loss,
    cql_penalty,
    critic_loss,
    intervention_penalty_loss,
    td_target,
)

__all__ = [
    "Batch",
    "LagrangianState",
    "Learner",
    "LearnerConfig",
    "Networks",
    "NonFiniteTrainingError",
    "PIDGains",
    "ReplayBuffer",
    "Transition",
    "actor_loss",
    "build_networks",
    "combined_actor_loss",
    "cql_critic_loss",
    "cql_penalty",
    "critic_loss",
    "intervention_penalty_loss",
    "pid_update_lambda",
    "td_target",
]
