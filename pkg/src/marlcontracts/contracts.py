"""Contracts: binding, zero-sum reward transfers over states and actions.

A contract maps every (state, joint action) of a base game to a zero-sum
vector of per-agent reward deltas, plus a one-time zero-sum signing vector
paid at unanimous acceptance. Families of contracts are addressed by a
string id and a parameter box.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass, field
from typing import Callable, Mapping

import numpy as np

from .errors import UnsupportedOperationError
from .game import JointAction, MarkovGame, State

NULL_FAMILY = "null"


def _zero_delta_for(n: int) -> Callable:
    def delta(state, joint_action):
        return np.zeros(n)

    return delta


@dataclass(frozen=True)
class Contract:
    """A single contract: per-step transfer rule plus a signing transfer.

    ``delta(state, joint_action)`` returns the (N,) vector added to the
    base rewards while the contract is in force; components sum to zero.
    ``signing_delta`` is added once, at the moment of unanimous acceptance.
    """

    family_id: str
    params: np.ndarray
    delta: Callable[[State, JointAction], np.ndarray]
    signing_delta: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "params", np.atleast_1d(np.asarray(self.params, dtype=float)))
        object.__setattr__(
            self, "signing_delta", np.asarray(self.signing_delta, dtype=float)
        )

    @property
    def is_null(self) -> bool:
        return self.family_id == NULL_FAMILY

    def describe(self) -> str:
        inner = ",".join(f"{p:g}" for p in self.params)
        return f"{self.family_id}({inner})"


def null_contract(num_agents: int) -> Contract:
    """The always-available contract with all-zero transfers."""
    return Contract(
        family_id=NULL_FAMILY,
        params=np.zeros(0),
        delta=_zero_delta_for(num_agents),
        signing_delta=np.zeros(num_agents),
    )


def transfer_delta(contract: Contract, state: State, joint_action: JointAction) -> np.ndarray:
    """Per-agent reward transfer for one step; zeros for the null contract."""
    if contract.is_null:
        return np.zeros(contract.signing_delta.size)
    return np.asarray(contract.delta(state, joint_action), dtype=float)


@dataclass(frozen=True)
class ContractSpace:
    """A parametrized family of contracts over a closed parameter box.

    ``make(params)`` builds the concrete contract; the null contract is a
    member of every space. ``grid(step)`` discretizes the box covering both
    endpoints of every interval; ``sample(rng)`` draws params uniformly.
    """

    family_id: str
    param_bounds: tuple[tuple[float, float], ...]
    make: Callable[[np.ndarray], Contract]
    num_agents: int
    meta: Mapping[str, object] = field(default_factory=dict)

    def __post_init__(self):
        for lo, hi in self.param_bounds:
            if not (np.isfinite(lo) and np.isfinite(hi) and lo <= hi):
                raise ValueError(f"bad parameter interval [{lo}, {hi}]")

    @property
    def num_params(self) -> int:
        return len(self.param_bounds)

    def null(self) -> Contract:
        return null_contract(self.num_agents)

    def clip(self, params) -> np.ndarray:
        arr = np.atleast_1d(np.asarray(params, dtype=float))
        lo = np.array([b[0] for b in self.param_bounds])
        hi = np.array([b[1] for b in self.param_bounds])
        return np.clip(arr, lo, hi)

    def contains_params(self, params) -> bool:
        arr = np.atleast_1d(np.asarray(params, dtype=float))
        if arr.shape != (self.num_params,):
            return False
        return all(
            lo - 1e-12 <= v <= hi + 1e-12 for v, (lo, hi) in zip(arr, self.param_bounds)
        )

    def sample(self, rng: np.random.Generator) -> Contract:
        params = np.array([rng.uniform(lo, hi) for lo, hi in self.param_bounds])
        return self.make(params)

    def axis_points(self, step: float) -> list[np.ndarray]:
        if step <= 0:
            raise ValueError("grid step must be positive")
        axes = []
        for lo, hi in self.param_bounds:
            pts = list(np.arange(lo, hi + step * 1e-9, step))
            if not pts or pts[-1] < hi - 1e-12:
                pts.append(hi)
            axes.append(np.asarray(pts))
        return axes

    def grid(self, step: float) -> list[Contract]:
        """All contracts on the step-spaced lattice, endpoints included."""
        return [
            self.make(np.array(combo))
            for combo in itertools.product(*self.axis_points(step))
        ]


def make_space(
    family_id: str,
    param_bounds,
    num_agents: int,
    delta_fn: Callable[[np.ndarray, State, JointAction], np.ndarray],
    signing_fn: Callable[[np.ndarray], np.ndarray] | None = None,
    meta: Mapping[str, object] | None = None,
) -> ContractSpace:
    """Build a ContractSpace from a parametric transfer rule.

    ``delta_fn(params, state, joint_action)`` gives the step transfer;
    ``signing_fn(params)``, if present, the signing transfer (zeros
    otherwise).
    """

    def make(params: np.ndarray) -> Contract:
        params = np.atleast_1d(np.asarray(params, dtype=float))

        def delta(state, joint_action, _p=params):
            return delta_fn(_p, state, joint_action)

        signing = signing_fn(params) if signing_fn is not None else np.zeros(num_agents)
        return Contract(family_id, params, delta, signing)

    return ContractSpace(
        family_id=family_id,
        param_bounds=tuple((float(lo), float(hi)) for lo, hi in param_bounds),
        make=make,
        num_agents=num_agents,
        meta=dict(meta or {}),
    )


def null_only_family(num_agents: int) -> ContractSpace:
    """The degenerate family containing nothing but the null contract."""
    return ContractSpace(
        family_id=NULL_FAMILY,
        param_bounds=(),
        make=lambda params: null_contract(num_agents),
        num_agents=num_agents,
    )


def add_signing_transfer(space: ContractSpace, bound: float, proposer: int = 0) -> ContractSpace:
    """Extend a family with a signing-transfer parameter t in [-bound, bound].

    Each non-proposer pays t to the proposer when the contract is accepted;
    negative t reverses the direction. The step-transfer rule is unchanged.
    """
    n = space.num_agents

    def make(params: np.ndarray) -> Contract:
        params = np.atleast_1d(np.asarray(params, dtype=float))
        inner = space.make(params[:-1])
        t = float(params[-1])
        signing = np.full(n, -t)
        signing[proposer] = t * (n - 1)
        signing = signing + inner.signing_delta
        return Contract(space.family_id + "+signing", params, inner.delta, signing)

    return ContractSpace(
        family_id=space.family_id + "+signing",
        param_bounds=space.param_bounds + ((-float(bound), float(bound)),),
        make=make,
        num_agents=n,
        meta=dict(space.meta),
    )


def forcing_contract(
    base: MarkovGame,
    optimal_profile: Mapping[State, JointAction],
    rejection_values: np.ndarray,
    proposer: int = 0,
) -> Contract:
    """Contract that makes the welfare-optimal profile self-enforcing.

    On-profile transfers are zero. A unilateral deviation by agent i moves
    reward_bound/(1-discount) from i to the others, outweighing anything
    the game itself can pay. The signing transfer hands the proposer each
    other agent's surplus V_i(profile) - V_i(rejection), so the proposer's
    value equals the welfare of the profile minus the others' rejection
    values.
    """
    if not base.is_finite:
        raise UnsupportedOperationError("forcing contracts need a finite base game")
    if not isinstance(optimal_profile, Mapping):
        raise UnsupportedOperationError(
            "optimal_profile must be a deterministic state -> joint action mapping"
        )
    n = base.num_agents
    rejection_values = np.asarray(rejection_values, dtype=float)
    optimal_values = evaluate_deterministic_profile(base, optimal_profile)
    fine = base.reward_bound / (1.0 - base.discount)
    profile = {s: tuple(a) for s, a in optimal_profile.items()}

    def delta(state, joint_action):
        out = np.zeros(n)
        target = profile.get(state)
        if target is None:
            return out
        joint_action = tuple(joint_action)
        if joint_action == target:
            return out
        deviators = [i for i in range(n) if joint_action[i] != target[i]]
        if len(deviators) != 1:
            return out
        d = deviators[0]
        out[:] = fine / (n - 1)
        out[d] = -fine
        return out

    signing = rejection_values - optimal_values
    signing[proposer] = -(
        np.sum(rejection_values) - rejection_values[proposer]
        - (np.sum(optimal_values) - optimal_values[proposer])
    )

    contract = Contract(
        family_id="forcing",
        params=np.zeros(0),
        delta=delta,
        signing_delta=signing,
    )
    return contract


def evaluate_deterministic_profile(
    game: MarkovGame, profile: Mapping[State, JointAction]
) -> np.ndarray:
    """Exact per-agent discounted values of a deterministic Markov profile.

    Requires deterministic transitions (singleton supports); follows the
    profile from the initial state up to the horizon.
    """
    if not game.is_finite or game.transition_support is None:
        raise UnsupportedOperationError("exact evaluation needs a finite game with supports")
    values = np.zeros(game.num_agents)
    state = game.initial_state
    for t in range(game.horizon):
        if game.is_terminal(state):
            break
        action = tuple(profile[state])
        values += (game.discount ** t) * np.asarray(game.reward(state, action), dtype=float)
        support = list(game.transition_support(state, action))
        if len(support) != 1:
            raise UnsupportedOperationError(
                "exact evaluation requires deterministic transitions"
            )
        state = support[0]
    return values
