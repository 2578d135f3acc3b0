"""Core abstractions for N-agent Markov games.

A game is an immutable record of functions: a transition sampler, a reward
vector function, and per-agent action spaces, together with a fixed initial
state, a discount factor and an episode horizon. Rollouts, discounted
returns, welfare and the detectable-deviators predicate live here.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Any, Callable, Mapping, Sequence

import numpy as np

from .errors import InvalidActionError, UnsupportedOperationError
from .rng import RolloutStream, as_stream

JointAction = tuple
State = Any

# Discounted per-agent returns; one entry per agent.
ValueVector = np.ndarray


@dataclass(frozen=True)
class ActionSpace:
    """Per-agent action space: discrete labels, a continuous box, or both.

    Pure discrete actions are integer indices into ``labels``; pure box
    actions are 1-d float arrays within [low, high]; hybrid actions are
    (index, array) pairs. Hybrid spaces appear only through the gifting
    augmentation, where a discrete base action gains a gift vector.
    """

    labels: tuple[str, ...] | None = None
    low: np.ndarray | None = None
    high: np.ndarray | None = None

    def __post_init__(self):
        if self.labels is None and self.low is None:
            raise ValueError("ActionSpace needs labels, bounds, or both")
        if self.labels is not None and len(self.labels) == 0:
            raise ValueError("discrete label list must be non-empty")
        if (self.low is None) != (self.high is None):
            raise ValueError("box bounds must give both low and high")
        if self.low is not None:
            lo = np.atleast_1d(np.asarray(self.low, dtype=float))
            hi = np.atleast_1d(np.asarray(self.high, dtype=float))
            if lo.shape != hi.shape:
                raise ValueError("low/high shape mismatch")
            if not (np.all(np.isfinite(lo)) and np.all(np.isfinite(hi))):
                raise ValueError("box bounds must be finite")
            if not np.all(lo < hi):
                raise ValueError("box bounds must satisfy low < high")
            object.__setattr__(self, "low", lo)
            object.__setattr__(self, "high", hi)

    @property
    def n_labels(self) -> int:
        return 0 if self.labels is None else len(self.labels)

    @property
    def box_dim(self) -> int:
        return 0 if self.low is None else int(self.low.size)

    def split(self, action) -> tuple[int | None, np.ndarray | None]:
        """Normalize an action into its (discrete index, box vector) parts."""
        if self.labels is not None and self.low is not None:
            idx, vec = action
            return int(idx), np.atleast_1d(np.asarray(vec, dtype=float))
        if self.labels is not None:
            return int(action), None
        return None, np.atleast_1d(np.asarray(action, dtype=float))

    def contains(self, action) -> bool:
        try:
            idx, vec = self.split(action)
        except (TypeError, ValueError):
            return False
        if self.labels is not None:
            if idx is None or not 0 <= idx < len(self.labels):
                return False
        if self.low is not None:
            if vec is None or vec.shape != self.low.shape:
                return False
            if not (np.all(vec >= self.low - 1e-12) and np.all(vec <= self.high + 1e-12)):
                return False
        return True

    def sample(self, rng: np.random.Generator):
        idx = int(rng.integers(self.n_labels)) if self.labels is not None else None
        vec = rng.uniform(self.low, self.high) if self.low is not None else None
        if idx is not None and vec is not None:
            return (idx, vec)
        return idx if idx is not None else vec


def _never_terminal(state) -> bool:
    return False


@dataclass(frozen=True)
class MarkovGame:
    """N-agent stochastic game with a fixed initial state.

    ``transition(state, joint_action, rng) -> next_state`` and
    ``reward(state, joint_action) -> (N,) array`` define the dynamics.
    ``states`` and ``transition_support`` are set only for finite games and
    make exact solving and the detectability predicate available.
    ``observe(state, agent) -> features`` is the engineered feature map the
    learners train on.
    """

    num_agents: int
    action_spaces: tuple[ActionSpace, ...]
    initial_state: State
    transition: Callable[[State, JointAction, np.random.Generator], State]
    reward: Callable[[State, JointAction], np.ndarray]
    discount: float = 0.99
    horizon: int = 1
    reward_bound: float = 1.0
    env_id: str = "custom"
    states: tuple | None = None
    transition_support: Callable[[State, JointAction], Sequence[State]] | None = None
    is_terminal: Callable[[State], bool] = _never_terminal
    observe: Callable[[State, int], np.ndarray] | None = None
    obs_dim: int = 0
    meta: Mapping[str, Any] = field(default_factory=dict)
    # optional fused (state, joint_action, rng) -> (reward, next_state);
    # must agree with reward/transition, saves recomputing shared kinematics
    step: Callable[[State, JointAction, np.random.Generator], tuple] | None = None

    def __post_init__(self):
        if self.num_agents < 1:
            raise ValueError("num_agents must be positive")
        if len(self.action_spaces) != self.num_agents:
            raise ValueError("need one action space per agent")
        if not 0.0 <= self.discount < 1.0:
            raise ValueError("discount must lie in [0, 1)")
        if self.horizon < 1:
            raise ValueError("horizon must be positive")

    def action_space_for(self, state: State, agent: int) -> ActionSpace | None:
        """Active action space in ``state``; None means the action is ignored."""
        return self.action_spaces[agent]

    def is_negotiation_state(self, state: State) -> bool:
        """Negotiation steps exist only in augmented games; base games have none."""
        return False

    def sample_initial_state(self, stream: RolloutStream) -> State:
        return self.initial_state

    @property
    def is_finite(self) -> bool:
        return self.states is not None and all(
            sp.labels is not None and sp.low is None for sp in self.action_spaces
        )


@dataclass(frozen=True)
class Trajectory:
    """Rollout record: one (state, joint action, reward vector) per step.

    ``discount_powers[t]`` is the exponent of the discount factor applied to
    step t's reward. For base games it is simply t; augmented games hold it
    constant through negotiation steps, which are undiscounted.
    """

    steps: tuple[tuple[State, JointAction, np.ndarray], ...]
    terminal: bool = False
    discount_powers: tuple[int, ...] | None = None

    def __len__(self) -> int:
        return len(self.steps)

    def rewards(self) -> np.ndarray:
        """(T, N) matrix of per-step reward vectors."""
        if not self.steps:
            return np.zeros((0, 0))
        return np.stack([r for (_, _, r) in self.steps])

    def powers(self) -> np.ndarray:
        if self.discount_powers is not None:
            return np.asarray(self.discount_powers)
        return np.arange(len(self.steps))


def rollout(game: MarkovGame, policy_profile: Sequence[Callable], stream) -> Trajectory:
    """Roll one episode, drawing actions from per-agent samplers.

    Each sampler is called as ``policy(state, rng)`` with its own
    counter-based substream. Actions are validated against the active
    action space; negotiation steps (augmented games) do not count toward
    the play horizon and do not advance the discount exponent.
    """
    if len(policy_profile) != game.num_agents:
        raise ValueError(
            f"policy profile has {len(policy_profile)} entries for "
            f"{game.num_agents} agents"
        )
    stream = as_stream(stream)
    state = game.sample_initial_state(stream)
    steps: list[tuple[State, JointAction, np.ndarray]] = []
    powers: list[int] = []
    play_t = 0
    raw_t = 0
    raw_cap = 3 * game.horizon + 3  # propose+accept around every play step, plus init
    fused = getattr(game, "step", None)
    while play_t < game.horizon and raw_t < raw_cap and not game.is_terminal(state):
        actions = []
        for i, policy in enumerate(policy_profile):
            action = policy(state, stream.agent(i, raw_t))
            space = game.action_space_for(state, i)
            if space is not None and not space.contains(action):
                raise InvalidActionError(
                    f"agent {i} produced action {action!r} outside its action space"
                )
            actions.append(action)
        joint = tuple(actions)
        if fused is not None:
            reward, next_state = fused(state, joint, stream.env(raw_t))
            reward = np.asarray(reward, dtype=float)
        else:
            reward = np.asarray(game.reward(state, joint), dtype=float)
            next_state = game.transition(state, joint, stream.env(raw_t))
        steps.append((state, joint, reward))
        powers.append(play_t)
        if not game.is_negotiation_state(state):
            play_t += 1
        raw_t += 1
        state = next_state
    return Trajectory(tuple(steps), terminal=game.is_terminal(state), discount_powers=tuple(powers))


def discounted_returns(trajectory: Trajectory, discount: float) -> ValueVector:
    """Per-agent discounted return of a finite trajectory.

    V_i = sum_t gamma^p(t) * r_{t,i}, with p(t) the trajectory's discount
    power for step t. Empty trajectories return a zero vector.
    """
    if not 0.0 <= discount < 1.0:
        raise ValueError("discount must lie in [0, 1)")
    if len(trajectory) == 0:
        return np.zeros(0)
    rewards = trajectory.rewards()
    weights = discount ** trajectory.powers().astype(float)
    return weights @ rewards


def welfare(values: ValueVector) -> float:
    """Total (social) reward: the sum of per-agent values."""
    return float(np.sum(values))


def undiscounted_totals(trajectory: Trajectory) -> np.ndarray:
    """Per-agent raw reward sums; the quantity reported as episode reward."""
    if len(trajectory) == 0:
        return np.zeros(0)
    return trajectory.rewards().sum(axis=0)


def has_detectable_deviators(game: MarkovGame, target_profile: Mapping[State, JointAction]) -> bool:
    """Whether any single-agent deviation from the profile shows in the state.

    True iff at every nonterminal state the support of the on-profile
    transition and, for each agent, the union of supports over that agent's
    deviations, are pairwise disjoint. Requires a finite game exposing its
    transition supports.
    """
    if not game.is_finite or game.transition_support is None:
        raise UnsupportedOperationError(
            "detectability is decidable only for finite games exposing supports"
        )
    for state in game.states:
        if game.is_terminal(state):
            continue
        profile_action = tuple(target_profile[state])
        on_path = frozenset(game.transition_support(state, profile_action))
        sets = [on_path]
        for i in range(game.num_agents):
            union: set = set()
            for alt in range(game.action_spaces[i].n_labels):
                if alt == profile_action[i]:
                    continue
                deviated = profile_action[:i] + (alt,) + profile_action[i + 1 :]
                union.update(game.transition_support(state, deviated))
            sets.append(frozenset(union))
        for a in range(len(sets)):
            for b in range(a + 1, len(sets)):
                if sets[a] & sets[b]:
                    return False
    return True
