"""Contract augmentation of Markov games, plus the gifting baseline.

An augmented episode interleaves negotiation phases (propose, then
accept/reject) with ordinary play. Negotiation steps freeze the base state,
are undiscounted, and do not count toward the play horizon. The general
form lets initiation dynamics open a new negotiation or void the active
contract after any play step; the single-proposer game of the main
construction is the special case "agent 1 proposes once, at the start".
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Any, Callable, Mapping

import numpy as np

from .contracts import Contract, ContractSpace
from .game import ActionSpace, JointAction, MarkovGame, State
from .rng import RolloutStream

PROPOSE = "propose"
AWAIT = "await"
PLAY = "play"

CONTINUE = "continue"
VOID = "void"

REJECT_ACTION, ACCEPT_ACTION = 0, 1
_ACCEPT_SPACE = ActionSpace(labels=("reject", "acc"))


@dataclass(frozen=True)
class AugmentedState:
    """State of the augmented game: exactly one phase.

    propose: ``proposer`` picks contract params at frozen ``base_state``.
    await:   ``pending`` awaits the non-proposers' accept/reject votes.
    play:    the base game runs with ``contract`` in force (None = null).
    """

    phase: str
    base_state: State
    proposer: int | None = None
    pending: Contract | None = None
    contract: Contract | None = None

    def active_params(self, space: ContractSpace) -> np.ndarray:
        """Parameters featurized into observations for the current phase."""
        if self.phase == AWAIT and self.pending is not None:
            return _params_or_zero(self.pending, space)
        if self.phase == PLAY and self.contract is not None:
            return _params_or_zero(self.contract, space)
        return np.zeros(space.num_params)


def _params_or_zero(contract: Contract, space: ContractSpace) -> np.ndarray:
    if contract.is_null or contract.params.size != space.num_params:
        return np.zeros(space.num_params)
    return contract.params


@dataclass(frozen=True)
class InitiationDynamics:
    """When negotiations open, who proposes, and when contracts dissolve.

    ``at_init`` is a distribution over {agent index, None} deciding whether
    the episode opens with a proposal. ``at_step(contract, state, action)``
    returns a distribution over agent indices (freeze into a new proposal),
    CONTINUE (keep the contract) and VOID (dissolve it); it is sampled after
    every play step.
    """

    at_init: tuple[tuple[Any, float], ...]
    at_step: Callable[[Contract | None, State, JointAction], tuple[tuple[Any, float], ...]]

    def __post_init__(self):
        _check_distribution(self.at_init)

    def sample_init(self, rng: np.random.Generator):
        return _sample_distribution(self.at_init, rng)

    def sample_step(self, contract, state, action, rng: np.random.Generator):
        dist = self.at_step(contract, state, action)
        _check_distribution(dist)
        return _sample_distribution(dist, rng)


def _check_distribution(dist) -> None:
    total = sum(p for _, p in dist)
    if abs(total - 1.0) > 1e-9 or any(p < -1e-12 for _, p in dist):
        raise ValueError(f"initiation distribution not normalized: {dist}")


def _sample_distribution(dist, rng: np.random.Generator):
    outcomes = [o for o, _ in dist]
    probs = np.array([p for _, p in dist], dtype=float)
    probs = probs / probs.sum()
    return outcomes[int(rng.choice(len(outcomes), p=probs))]


def single_proposer_dynamics(proposer: int = 0) -> InitiationDynamics:
    """Agent ``proposer`` proposes once at the start; contracts never end."""
    return InitiationDynamics(
        at_init=((proposer, 1.0),),
        at_step=lambda contract, state, action: ((CONTINUE, 1.0),),
    )


def void_with_probability(p: float, proposer: int = 0) -> InitiationDynamics:
    """Single opening proposal; the live contract dissolves w.p. p per step."""
    return InitiationDynamics(
        at_init=((proposer, 1.0),),
        at_step=lambda contract, state, action: (
            ((VOID, p), (CONTINUE, 1.0 - p)) if contract is not None else ((CONTINUE, 1.0),)
        ),
    )


def repropose_after(states=None, proposer: int = 0) -> InitiationDynamics:
    """The same agent re-proposes after every state in ``states`` (None = all)."""
    allowed = None if states is None else set(states)

    def at_step(contract, state, action):
        if allowed is None or state in allowed:
            return ((proposer, 1.0),)
        return ((CONTINUE, 1.0),)

    return InitiationDynamics(at_init=((proposer, 1.0),), at_step=at_step)


def unanimity_rule(votes: Mapping[int, int]) -> bool:
    return all(v == ACCEPT_ACTION for v in votes.values())


def quota_rule(quota: int) -> Callable[[Mapping[int, int]], bool]:
    """Accept when at least ``quota`` non-proposers vote acc."""

    def rule(votes: Mapping[int, int]) -> bool:
        return sum(1 for v in votes.values() if v == ACCEPT_ACTION) >= quota

    return rule


@dataclass(frozen=True)
class AugmentedGame:
    """A base game wrapped with contract proposal/acceptance/play phases.

    Exposes the MarkovGame rollout protocol. Play-phase transitions equal
    the base game's; play rewards are base rewards plus the active
    contract's transfer; the signing transfer is paid once at acceptance.
    ``horizon`` counts play steps only.
    """

    base: MarkovGame
    contract_space: ContractSpace
    dynamics: InitiationDynamics
    acceptance_rule: Callable[[Mapping[int, int]], bool] = unanimity_rule
    meta: Mapping[str, Any] = field(default_factory=dict)

    @property
    def num_agents(self) -> int:
        return self.base.num_agents

    @property
    def discount(self) -> float:
        return self.base.discount

    @property
    def horizon(self) -> int:
        return self.base.horizon

    @property
    def reward_bound(self) -> float:
        return self.base.reward_bound

    @property
    def env_id(self) -> str:
        return self.base.env_id + "+contracts"

    @property
    def action_spaces(self) -> tuple[ActionSpace, ...]:
        return self.base.action_spaces

    @property
    def proposal_space(self) -> ActionSpace:
        bounds = self.contract_space.param_bounds
        return ActionSpace(
            low=np.array([lo for lo, _ in bounds]),
            high=np.array([hi for _, hi in bounds]),
        )

    @property
    def obs_dim(self) -> int:
        return self.base.obs_dim + self.contract_space.num_params

    def observe(self, state: AugmentedState, agent: int) -> np.ndarray:
        base_obs = self.base.observe(state.base_state, agent)
        return np.concatenate([base_obs, self._norm_params(state)])

    def _norm_params(self, state: AugmentedState) -> np.ndarray:
        params = state.active_params(self.contract_space)
        lo = np.array([b[0] for b in self.contract_space.param_bounds])
        hi = np.array([b[1] for b in self.contract_space.param_bounds])
        span = np.where(hi > lo, hi - lo, 1.0)
        return (params - lo) / span

    @property
    def initial_state(self) -> AugmentedState:
        # Deterministic only when at_init is; rollout uses sample_initial_state.
        return self._initial_for(self.dynamics.at_init[0][0])

    def _initial_for(self, opener) -> AugmentedState:
        s0 = self.base.initial_state
        if opener is None:
            return AugmentedState(PLAY, s0, contract=None)
        return AugmentedState(PROPOSE, s0, proposer=int(opener))

    def sample_initial_state(self, stream: RolloutStream) -> AugmentedState:
        opener = self.dynamics.sample_init(stream.env(-1))
        return self._initial_for(opener)

    def is_terminal(self, state: AugmentedState) -> bool:
        return state.phase == PLAY and self.base.is_terminal(state.base_state)

    def is_negotiation_state(self, state: AugmentedState) -> bool:
        return state.phase != PLAY

    def action_space_for(self, state: AugmentedState, agent: int) -> ActionSpace | None:
        if state.phase == PROPOSE:
            return self.proposal_space if agent == state.proposer else None
        if state.phase == AWAIT:
            return _ACCEPT_SPACE if agent != state.proposer else None
        return self.base.action_space_for(state.base_state, agent)

    def reward(self, state: AugmentedState, joint_action) -> np.ndarray:
        n = self.num_agents
        if state.phase == PROPOSE:
            return np.zeros(n)
        if state.phase == AWAIT:
            votes = self._votes(state, joint_action)
            if self.acceptance_rule(votes):
                return np.asarray(state.pending.signing_delta, dtype=float)
            return np.zeros(n)
        base_r = np.asarray(self.base.reward(state.base_state, joint_action), dtype=float)
        if state.contract is not None and not state.contract.is_null:
            base_r = base_r + np.asarray(
                state.contract.delta(state.base_state, joint_action), dtype=float
            )
        return base_r

    def _votes(self, state: AugmentedState, joint_action) -> dict[int, int]:
        return {
            i: int(joint_action[i])
            for i in range(self.num_agents)
            if i != state.proposer
        }

    def transition(self, state: AugmentedState, joint_action, rng) -> AugmentedState:
        if state.phase == PROPOSE:
            params = self.contract_space.clip(joint_action[state.proposer])
            pending = self.contract_space.make(params)
            return AugmentedState(
                AWAIT, state.base_state, proposer=state.proposer, pending=pending
            )
        if state.phase == AWAIT:
            votes = self._votes(state, joint_action)
            accepted = self.acceptance_rule(votes)
            return AugmentedState(
                PLAY,
                state.base_state,
                contract=state.pending if accepted else None,
            )
        next_base = self.base.transition(state.base_state, joint_action, rng)
        if self.base.is_terminal(next_base):
            return AugmentedState(PLAY, next_base, contract=state.contract)
        outcome = self.dynamics.sample_step(
            state.contract, state.base_state, joint_action, rng
        )
        if outcome == CONTINUE:
            return AugmentedState(PLAY, next_base, contract=state.contract)
        if outcome == VOID:
            return AugmentedState(PLAY, next_base, contract=None)
        return AugmentedState(PROPOSE, next_base, proposer=int(outcome))


def augment_single_proposer(base: MarkovGame, space: ContractSpace) -> AugmentedGame:
    """The single-proposer contracting game: agent 0 proposes at the start,
    all other agents must accept for the contract to bind for the episode."""
    return AugmentedGame(
        base=base,
        contract_space=space,
        dynamics=single_proposer_dynamics(proposer=0),
    )


def augment_general(
    base: MarkovGame,
    space: ContractSpace,
    dynamics: InitiationDynamics,
    acceptance_rule: Callable[[Mapping[int, int]], bool] = unanimity_rule,
) -> AugmentedGame:
    """Contract augmentation under arbitrary initiation dynamics."""
    return AugmentedGame(
        base=base,
        contract_space=space,
        dynamics=dynamics,
        acceptance_rule=acceptance_rule,
    )


# --- gifting -----------------------------------------------------------------

GIFT_STEP_STATE = "gift_step"


def gifting_augment(base: MarkovGame, max_gift: float) -> MarkovGame:
    """Let agents hand away reward directly; equilibria are unchanged.

    Every agent's action gains a gift vector in [0, max_gift]^(N-1); gifts
    subtract from the giver and add to the recipients. One-shot matrix games
    gain a dedicated post-play gifting step; all other games apply gifts
    alongside every base step.
    """
    if max_gift < 0:
        raise ValueError("max_gift must be nonnegative")
    if max_gift == 0:
        # a zero-width gift box is no augmentation at all
        return base
    n = base.num_agents
    gift_dim = n - 1

    def gift_transfers(joint_action) -> np.ndarray:
        out = np.zeros(n)
        if max_gift == 0:
            return out
        for i, action in enumerate(joint_action):
            gifts = np.asarray(_gift_part(base, i, action), dtype=float)
            gifts = np.clip(gifts, 0.0, max_gift)
            out[i] -= gifts.sum()
            recipients = [j for j in range(n) if j != i]
            out[recipients] += gifts
        return out

    matrix_style = bool(base.meta.get("matrix_game"))

    spaces = tuple(
        _with_gift_box(sp, gift_dim, max_gift) for sp in base.action_spaces
    )

    if matrix_style:
        # play the matrix, then one explicit gifting step on the outcome state
        def transition(state, joint_action, rng):
            if state == base.initial_state:
                inner = tuple(_base_part(base, i, a) for i, a in enumerate(joint_action))
                return (GIFT_STEP_STATE, base.transition(state, inner, rng))
            if isinstance(state, tuple) and state and state[0] == GIFT_STEP_STATE:
                return state[1]
            return state

        def reward(state, joint_action):
            if state == base.initial_state:
                inner = tuple(_base_part(base, i, a) for i, a in enumerate(joint_action))
                return np.asarray(base.reward(state, inner), dtype=float)
            if isinstance(state, tuple) and state and state[0] == GIFT_STEP_STATE:
                return gift_transfers(joint_action)
            return np.zeros(n)

        def is_terminal(state):
            if isinstance(state, tuple) and state and state[0] == GIFT_STEP_STATE:
                return False
            return state != base.initial_state and base.is_terminal(state)

        def observe(state, agent):
            if isinstance(state, tuple) and state and state[0] == GIFT_STEP_STATE:
                return base.observe(state[1], agent)
            return base.observe(state, agent)

        states = None  # the gift stage makes the state space non-enumerated
    else:
        def transition(state, joint_action, rng):
            inner = tuple(_base_part(base, i, a) for i, a in enumerate(joint_action))
            return base.transition(state, inner, rng)

        def reward(state, joint_action):
            inner = tuple(_base_part(base, i, a) for i, a in enumerate(joint_action))
            return np.asarray(base.reward(state, inner), dtype=float) + gift_transfers(
                joint_action
            )

        is_terminal = base.is_terminal
        observe = base.observe
        states = None

    return MarkovGame(
        num_agents=n,
        action_spaces=spaces,
        initial_state=base.initial_state,
        transition=transition,
        reward=reward,
        discount=base.discount,
        horizon=base.horizon,
        reward_bound=base.reward_bound,
        env_id=base.env_id + "+gifting",
        states=states,
        is_terminal=is_terminal,
        observe=observe,
        obs_dim=base.obs_dim,
        meta={**dict(base.meta), "max_gift": max_gift},
    )


def _with_gift_box(space: ActionSpace, gift_dim: int, max_gift: float) -> ActionSpace:
    lo = np.zeros(gift_dim)
    hi = np.full(gift_dim, max(max_gift, 1e-9))
    if space.low is not None:
        lo = np.concatenate([space.low, lo])
        hi = np.concatenate([space.high, hi])
    return ActionSpace(labels=space.labels, low=lo, high=hi)


def _base_part(base: MarkovGame, agent: int, action):
    """Strip the gift components off an augmented action."""
    space = base.action_spaces[agent]
    if space.labels is not None and space.low is None:
        idx, _ = _split_hybrid(action)
        return idx
    if space.low is not None:
        _, vec = _split_hybrid(action)
        return np.asarray(vec, dtype=float)[: space.box_dim]
    return action


def _gift_part(base: MarkovGame, agent: int, action) -> np.ndarray:
    space = base.action_spaces[agent]
    if space.labels is not None and space.low is None:
        _, vec = _split_hybrid(action)
        return np.asarray(vec, dtype=float)
    _, vec = _split_hybrid(action)
    return np.asarray(vec, dtype=float)[space.box_dim :]


def _split_hybrid(action):
    if isinstance(action, tuple) and len(action) == 2:
        return action
    arr = np.asarray(action, dtype=float)
    if arr.ndim == 0:
        return int(arr), None
    return None, arr
