"""Public goods dilemma: continuous investments with a shared return.

Each step every agent invests a_i in [0, 1] and receives
1.2 * mean(investments) - a_i, so full investment is socially optimal while
zero investment is each agent's selfish best response.
"""

from __future__ import annotations

import numpy as np

from ..contracts import ContractSpace, make_space
from ..game import ActionSpace, MarkovGame

PG_HORIZON = 100
PG_RETURN = 1.2
PG_TAX_MAX = 1.2


def investments(joint_action) -> np.ndarray:
    """Flatten a joint action of scalars/1-vectors into an (N,) float array."""
    return np.array([float(np.asarray(a).reshape(-1)[0]) for a in joint_action])


def pg_rewards(invest: np.ndarray) -> np.ndarray:
    return PG_RETURN * invest.mean() - invest


def tax_family(num_agents: int) -> ContractSpace:
    """Tax theta per unit not invested; proceeds split evenly among agents."""

    def delta(params, state, joint_action):
        theta = float(params[0])
        shortfall = 1.0 - investments(joint_action)
        pool = theta * shortfall.sum()
        return pool / num_agents - theta * shortfall

    return make_space(
        family_id="pg_tax",
        param_bounds=[(0.0, PG_TAX_MAX)],
        num_agents=num_agents,
        delta_fn=delta,
        meta={"description": "tax per unit not invested, redistributed evenly"},
    )


def make_public_goods(num_agents: int, horizon: int = PG_HORIZON) -> tuple[MarkovGame, ContractSpace]:
    if num_agents < 2:
        raise ValueError("public goods needs at least 2 agents")

    space = ActionSpace(low=np.zeros(1), high=np.ones(1))

    def transition(state, joint_action, rng):
        return state + 1

    def reward(state, joint_action):
        return pg_rewards(investments(joint_action))

    def is_terminal(state):
        return state >= horizon

    def observe(state, agent):
        return np.array([1.0, state / horizon])

    game = MarkovGame(
        num_agents=num_agents,
        action_spaces=(space,) * num_agents,
        initial_state=0,
        transition=transition,
        reward=reward,
        discount=0.99,
        horizon=horizon,
        reward_bound=PG_RETURN,
        env_id="public_goods",
        is_terminal=is_terminal,
        observe=observe,
        obs_dim=2,
        meta={
            "horizon": horizon,
            "reward_bound": PG_RETURN,
            "contract_family": "tax per unit not invested, theta in [0, 1.2]",
            "gifting_bound": PG_TAX_MAX,
            "optimal_per_step_welfare": (PG_RETURN - 1.0) * num_agents,
        },
    )
    return game, tax_family(num_agents)
