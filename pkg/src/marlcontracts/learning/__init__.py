"""Policy-gradient learners and the four training protocols."""

from .ppo import Batch, Hyperparams, PPOLearner, clipped_surrogate, policy_gradient_update
from .protocols import (
    EvalStats,
    NegotiationResult,
    Stage1Result,
    TrainReport,
    evaluate_policies,
    negotiation_train_stage2,
    subgame_train_stage1,
    train_contracting,
    train_gifting,
    train_joint,
    train_separate,
)

__all__ = [
    "Batch",
    "EvalStats",
    "Hyperparams",
    "NegotiationResult",
    "PPOLearner",
    "Stage1Result",
    "TrainReport",
    "clipped_surrogate",
    "evaluate_policies",
    "negotiation_train_stage2",
    "policy_gradient_update",
    "subgame_train_stage1",
    "train_contracting",
    "train_gifting",
    "train_joint",
    "train_separate",
]
