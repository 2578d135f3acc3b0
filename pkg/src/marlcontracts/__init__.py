"""Voluntary, binding reward-transfer contracts for Markov games.

The toolkit augments N-agent Markov games with contract proposal and
acceptance phases, solves the resulting one-shot contracting games exactly
by backward induction, and trains independent policy-gradient learners
through the two-stage subgame protocol, alongside separate, joint, and
gifting baselines.
"""

from .contracts import (
    Contract,
    ContractSpace,
    add_signing_transfer,
    forcing_contract,
    null_contract,
    null_only_family,
    transfer_delta,
)
from .augmentation import (
    AugmentedGame,
    AugmentedState,
    InitiationDynamics,
    augment_general,
    augment_single_proposer,
    gifting_augment,
)
from .game import (
    ActionSpace,
    MarkovGame,
    Trajectory,
    discounted_returns,
    has_detectable_deviators,
    rollout,
    welfare,
)
from .equilibrium import (
    SpeSolution,
    StageGame,
    apply_contract_to_stage_game,
    enumerate_pure_nash,
    max_welfare_bruteforce,
    proposer_value_upper_bound,
    solve_contract_spe,
    solve_stage_equilibrium,
    verify_theorem1,
)

__all__ = [
    "ActionSpace",
    "AugmentedGame",
    "AugmentedState",
    "Contract",
    "ContractSpace",
    "InitiationDynamics",
    "MarkovGame",
    "SpeSolution",
    "StageGame",
    "Trajectory",
    "add_signing_transfer",
    "apply_contract_to_stage_game",
    "augment_general",
    "augment_single_proposer",
    "discounted_returns",
    "enumerate_pure_nash",
    "forcing_contract",
    "gifting_augment",
    "has_detectable_deviators",
    "max_welfare_bruteforce",
    "null_contract",
    "null_only_family",
    "proposer_value_upper_bound",
    "rollout",
    "solve_contract_spe",
    "solve_stage_equilibrium",
    "transfer_delta",
    "verify_theorem1",
    "welfare",
]

__version__ = "0.1.0"
