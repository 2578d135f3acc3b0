"""One-shot matrix domains: Prisoner's Dilemma and Stag Hunt.

The games are wrapped as tiny Markov games whose terminal state encodes the
joint action played, so deviations are visible in the state and post-play
stages (gifting) can condition on the outcome.
"""

from __future__ import annotations

import itertools

import numpy as np

from ..contracts import ContractSpace, make_space
from ..game import ActionSpace, MarkovGame

START = ("start",)

COOPERATE, DEFECT = 0, 1

# Two-agent Prisoner's Dilemma payoffs, row player first.
PD2_TABLE = {
    (COOPERATE, COOPERATE): (-1.0, -1.0),
    (COOPERATE, DEFECT): (-3.0, 0.0),
    (DEFECT, COOPERATE): (0.0, -3.0),
    (DEFECT, DEFECT): (-2.0, -2.0),
}

# Stag Hunt, exactly as printed: note (C,D) favors the C player, which makes
# C dominant. canonical=True restores the usual risk trade-off.
STAG_HUNT_TABLE = {
    (0, 0): (4.0, 4.0),
    (0, 1): (3.0, 1.0),
    (1, 0): (1.0, 3.0),
    (1, 1): (2.0, 2.0),
}
STAG_HUNT_CANONICAL = {
    (0, 0): (4.0, 4.0),
    (0, 1): (1.0, 3.0),
    (1, 0): (3.0, 1.0),
    (1, 1): (2.0, 2.0),
}

MATRIX_HORIZON = 2  # one matrix step plus the post-play gifting slot


def payoff_tensor(table: dict, num_agents: int, n_actions: int = 2) -> np.ndarray:
    shape = (n_actions,) * num_agents + (num_agents,)
    out = np.zeros(shape)
    for profile, rewards in table.items():
        out[profile] = rewards
    return out


def pd_table(num_agents: int) -> dict:
    """Payoff table for the N-agent dilemma.

    N=2 is the classic table; for N>2 all-cooperate pays N each, all-defect
    pays 1 each, and in mixed profiles defectors get N+1 while cooperators
    get 0.
    """
    if num_agents < 2:
        raise ValueError("Prisoner's Dilemma needs at least 2 agents")
    if num_agents == 2:
        return dict(PD2_TABLE)
    table = {}
    for profile in itertools.product((COOPERATE, DEFECT), repeat=num_agents):
        defectors = sum(profile)
        if defectors == 0:
            rewards = (float(num_agents),) * num_agents
        elif defectors == num_agents:
            rewards = (1.0,) * num_agents
        else:
            rewards = tuple(
                float(num_agents + 1) if a == DEFECT else 0.0 for a in profile
            )
        table[profile] = rewards
    return table


def matrix_markov_game(
    table: dict,
    labels: tuple[str, ...],
    env_id: str,
    merge_terminal: bool = False,
    meta: dict | None = None,
) -> MarkovGame:
    """Wrap a payoff table as a one-shot Markov game.

    The terminal state records the joint action unless ``merge_terminal``
    collapses every outcome into a single terminal state (used to exercise
    the no-detectability case).
    """
    profiles = sorted(table.keys())
    num_agents = len(profiles[0])
    n_actions = len(labels)
    r_max = max(abs(v) for rewards in table.values() for v in rewards)

    end_states = (
        [("end",)] if merge_terminal else [("end",) + p for p in profiles]
    )
    states = (START,) + tuple(end_states)

    def transition(state, joint_action, rng):
        if state != START:
            return state
        return ("end",) if merge_terminal else ("end",) + tuple(joint_action)

    def transition_support(state, joint_action):
        return [transition(state, joint_action, None)] if state == START else []

    def reward(state, joint_action):
        if state != START:
            return np.zeros(num_agents)
        return np.asarray(table[tuple(joint_action)], dtype=float)

    def is_terminal(state):
        return state != START

    n_profiles = n_actions ** num_agents
    obs_dim = 1 + n_profiles

    def observe(state, agent):
        feats = np.zeros(obs_dim)
        feats[0] = 1.0
        if state != START and not merge_terminal:
            idx = 0
            for a in state[1:]:
                idx = idx * n_actions + a
            feats[1 + idx] = 1.0
        return feats

    full_meta = {"matrix_game": True, **dict(meta or {})}
    return MarkovGame(
        num_agents=num_agents,
        action_spaces=tuple(ActionSpace(labels=labels) for _ in range(num_agents)),
        initial_state=START,
        transition=transition,
        reward=reward,
        discount=0.99,
        horizon=MATRIX_HORIZON,
        reward_bound=r_max,
        env_id=env_id,
        states=states,
        transition_support=transition_support,
        is_terminal=is_terminal,
        observe=observe,
        obs_dim=obs_dim,
        meta=full_meta,
    )


def defector_fine_family(num_agents: int, max_fine: float, env_id: str) -> ContractSpace:
    """Fine theta charged to each defector, split evenly among the others."""

    def delta(params, state, joint_action):
        theta = float(params[0])
        out = np.zeros(num_agents)
        if theta == 0.0:
            return out
        for i, a in enumerate(tuple(joint_action)):
            if a == DEFECT:
                out[i] -= theta
                out += np.where(np.arange(num_agents) == i, 0.0, theta / (num_agents - 1))
        return out

    return make_space(
        family_id=f"{env_id}_fine",
        param_bounds=[(0.0, max_fine)],
        num_agents=num_agents,
        delta_fn=delta,
        meta={"description": "fine per defecting agent, shared by the others"},
    )


def make_pd(num_agents: int) -> tuple[MarkovGame, ContractSpace]:
    """N-agent Prisoner's Dilemma with the defection-fine contract family."""
    table = pd_table(num_agents)
    r_max = 3.0 if num_agents == 2 else float(num_agents + 1)
    game = matrix_markov_game(
        table,
        labels=("C", "D"),
        env_id="pd",
        meta={
            "horizon": MATRIX_HORIZON,
            "reward_bound": r_max,
            "contract_family": "fine on defection, theta in [0, N]",
            "gifting_bound": float(num_agents),
        },
    )
    space = defector_fine_family(num_agents, max_fine=float(num_agents), env_id="pd")
    return game, space


def make_stag_hunt(canonical: bool = False) -> tuple[MarkovGame, ContractSpace]:
    """Two-agent Stag Hunt (printed table by default) with a fine family."""
    table = STAG_HUNT_CANONICAL if canonical else STAG_HUNT_TABLE
    game = matrix_markov_game(
        table,
        labels=("C", "D"),
        env_id="stag_hunt",
        meta={
            "horizon": MATRIX_HORIZON,
            "reward_bound": 4.0,
            "canonical": canonical,
            "contract_family": "fine on playing D, theta in [0, 4]",
            "gifting_bound": 4.0,
        },
    )
    space = defector_fine_family(2, max_fine=4.0, env_id="stag_hunt")
    return game, space
