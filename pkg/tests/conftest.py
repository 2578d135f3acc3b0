import numpy as np
import pytest

from marlcontracts.envs.matrix import make_pd, make_stag_hunt
from marlcontracts.envs.public_goods import make_public_goods
from marlcontracts.game import ActionSpace, MarkovGame


@pytest.fixture
def pd2():
    game, space = make_pd(2)
    return game, space


@pytest.fixture
def pd4():
    game, space = make_pd(4)
    return game, space


@pytest.fixture
def stag_hunt():
    game, space = make_stag_hunt()
    return game, space


@pytest.fixture
def public_goods2():
    game, space = make_public_goods(2)
    return game, space


def two_state_chain(p_forward: float = 0.7) -> MarkovGame:
    """Tiny stochastic 2-agent game used for distributional tests.

    States 0 and 1; the joint action biases a random walk between them.
    """
    states = (0, 1)

    def transition(state, joint_action, rng):
        bias = 0.2 * (joint_action[0] - joint_action[1])
        p = min(max(p_forward + bias, 0.05), 0.95)
        return 1 - state if rng.random() < p else state

    def transition_support(state, joint_action):
        return [0, 1]

    def reward(state, joint_action):
        return np.array([1.0 if state == 1 else 0.0, float(joint_action[0])])

    def observe(state, agent):
        return np.array([1.0, float(state)])

    return MarkovGame(
        num_agents=2,
        action_spaces=(ActionSpace(labels=("a", "b")),) * 2,
        initial_state=0,
        transition=transition,
        reward=reward,
        discount=0.9,
        horizon=20,
        reward_bound=1.0,
        env_id="chain",
        states=states,
        transition_support=transition_support,
        observe=observe,
        obs_dim=2,
    )


@pytest.fixture
def chain_game():
    return two_state_chain()
