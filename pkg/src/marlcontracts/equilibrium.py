"""Exact game-theoretic layer.

Pure-Nash enumeration over finite stage games, backward induction of the
one-shot contracting game over a discretized contract grid, the proposer
value bound, brute-force welfare maximization, and the social-optimality
check the whole construction promises.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass, field

import numpy as np

from .contracts import Contract, ContractSpace, transfer_delta
from .errors import NoPureEquilibriumError, UnsupportedOperationError, UnsupportedScaleError
from .game import MarkovGame

_EPS = 1e-9


@dataclass(frozen=True)
class StageGame:
    """Finite normal-form game: payoffs indexed by one action per agent.

    ``action_values[i][a]`` is what agent i's action index a means to a
    contract's transfer rule (defaults to the index itself).
    """

    payoffs: np.ndarray  # shape (|A_1|, ..., |A_N|, N)
    labels: tuple[tuple[str, ...], ...]
    action_values: tuple[tuple, ...] | None = None

    def __post_init__(self):
        object.__setattr__(self, "payoffs", np.asarray(self.payoffs, dtype=float))
        if self.payoffs.shape[-1] != len(self.labels):
            raise ValueError("payoff tensor/labels agent count mismatch")
        for i, labs in enumerate(self.labels):
            if self.payoffs.shape[i] != len(labs):
                raise ValueError(f"agent {i} label count mismatch")

    @property
    def num_agents(self) -> int:
        return len(self.labels)

    def profiles(self):
        return itertools.product(*(range(len(l)) for l in self.labels))

    def values_of(self, profile) -> tuple:
        if self.action_values is not None:
            return tuple(self.action_values[i][a] for i, a in enumerate(profile))
        return tuple(profile)

    def profile_label(self, profile) -> tuple[str, ...]:
        return tuple(self.labels[i][a] for i, a in enumerate(profile))


def stage_game_from_table(table: dict, labels: tuple[str, ...], action_values=None) -> StageGame:
    """Build a StageGame from a {profile: reward tuple} mapping."""
    profiles = sorted(table.keys())
    num_agents = len(profiles[0])
    n_actions = max(max(p) for p in profiles) + 1
    payoffs = np.zeros((n_actions,) * num_agents + (num_agents,))
    for profile, rewards in table.items():
        payoffs[profile] = rewards
    per_agent_labels = tuple(tuple(labels) for _ in range(num_agents))
    per_agent_values = (
        tuple(tuple(action_values) for _ in range(num_agents))
        if action_values is not None
        else None
    )
    return StageGame(payoffs, per_agent_labels, per_agent_values)


def enumerate_pure_nash(game: StageGame) -> list[tuple[int, ...]]:
    """All pure profiles from which no unilateral deviation strictly gains."""
    out = []
    for profile in game.profiles():
        stable = True
        for i in range(game.num_agents):
            own = game.payoffs[profile][i]
            for alt in range(len(game.labels[i])):
                if alt == profile[i]:
                    continue
                deviated = profile[:i] + (alt,) + profile[i + 1 :]
                if game.payoffs[deviated][i] > own + _EPS:
                    stable = False
                    break
            if not stable:
                break
        if stable:
            out.append(profile)
    return out


def apply_contract_to_stage_game(game: StageGame, contract: Contract) -> StageGame:
    """Shift the payoff table by the contract's transfer rule.

    The transfer is evaluated with a null state and the profile's action
    values, so only state-independent contract families apply here.
    """
    payoffs = game.payoffs.copy()
    for profile in game.profiles():
        delta = transfer_delta(contract, None, game.values_of(profile))
        payoffs[profile] = payoffs[profile] + delta
    return StageGame(payoffs, game.labels, game.action_values)


def solve_stage_equilibrium(game: StageGame) -> tuple[tuple[int, ...], np.ndarray]:
    """Deterministic selection: welfare-max pure Nash, then lexicographic."""
    equilibria = enumerate_pure_nash(game)
    if not equilibria:
        raise NoPureEquilibriumError("stage game has no pure Nash equilibrium")
    best = max(equilibria, key=lambda p: (float(game.payoffs[p].sum()), tuple(-x for x in p)))
    return best, game.payoffs[best].copy()


def maximin_values(game: StageGame) -> np.ndarray:
    """Fallback values when no pure equilibrium exists: each agent's maximin."""
    n = game.num_agents
    out = np.zeros(n)
    for i in range(n):
        best = -np.inf
        for own in range(len(game.labels[i])):
            worst = np.inf
            for profile in game.profiles():
                if profile[i] != own:
                    continue
                worst = min(worst, game.payoffs[profile][i])
            best = max(best, worst)
        out[i] = best
    return out


@dataclass(frozen=True)
class SpeSolution:
    """Solved subgame-perfect equilibrium of the one-shot contracting game."""

    contract: Contract
    accepted: bool
    acceptance: tuple[bool, ...]
    play_profile: tuple[int, ...]
    values: np.ndarray
    welfare: float
    rejection_profile: tuple[int, ...]
    rejection_values: np.ndarray
    grid_step: float
    proposer: int = 0
    used_maximin: bool = False

    def play_labels(self, game: StageGame) -> tuple[str, ...]:
        return game.profile_label(self.play_profile)


def _contract_sort_key(contract: Contract):
    # the null contract sorts before any parametrized one
    return (contract.params.size > 0, tuple(contract.params))


def solve_contract_spe(
    base: StageGame,
    family: ContractSpace,
    grid_step: float,
    proposer: int = 0,
) -> SpeSolution:
    """Backward induction over the discretized contract family.

    Rejection play is the selected equilibrium of the base game. A grid
    contract is accepted when every non-proposer weakly prefers its
    post-contract equilibrium value plus signing transfer to rejection
    (indifference accepts). Among accepted contracts the proposer takes the
    one maximizing its own value, smallest parameter vector first.
    """
    rejection_profile, rejection_values = solve_stage_equilibrium(base)
    n = base.num_agents

    candidates = [family.null()] + family.grid(grid_step)
    candidates.sort(key=_contract_sort_key)

    best: tuple | None = None
    for contract in candidates:
        shifted = apply_contract_to_stage_game(base, contract)
        used_maximin = False
        try:
            profile, play_values = solve_stage_equilibrium(shifted)
        except NoPureEquilibriumError:
            profile, play_values = rejection_profile, maximin_values(shifted)
            used_maximin = True
        totals = play_values + contract.signing_delta
        votes = tuple(
            bool(totals[i] >= rejection_values[i] - _EPS)
            for i in range(n)
            if i != proposer
        )
        if not all(votes):
            continue
        proposer_value = totals[proposer]
        if best is None or proposer_value > best[0] + _EPS:
            best = (proposer_value, contract, profile, totals, used_maximin)

    if best is None:
        # unreachable: the null contract reproduces rejection play and is
        # always accepted at indifference
        raise NoPureEquilibriumError("no acceptable contract, including null")

    _, contract, profile, totals, used_maximin = best
    acceptance = tuple(True for _ in range(n))
    return SpeSolution(
        contract=contract,
        accepted=True,
        acceptance=acceptance,
        play_profile=profile,
        values=totals,
        welfare=float(totals.sum()),
        rejection_profile=rejection_profile,
        rejection_values=rejection_values,
        grid_step=float(grid_step),
        proposer=proposer,
        used_maximin=used_maximin,
    )


def proposer_value_upper_bound(base: StageGame, proposer: int = 0) -> float:
    """Most value any accepted contract can hand the proposer:
    max welfare minus the other agents' rejection values."""
    _, rejection_values = solve_stage_equilibrium(base)
    _, max_welfare = max_welfare_bruteforce(base)
    others = sum(v for i, v in enumerate(rejection_values) if i != proposer)
    return float(max_welfare - others)


def max_welfare_bruteforce(game) -> tuple[tuple, float]:
    """Exact welfare maximizer by exhaustive search.

    Stage games enumerate joint actions. Small finite Markov games with
    deterministic transitions enumerate deterministic Markov profiles
    (horizon <= 3, |S|*|A| <= 1e4); the returned profile maps nonterminal
    states to joint actions.
    """
    if isinstance(game, StageGame):
        best, best_w = None, -np.inf
        for profile in game.profiles():
            w = float(game.payoffs[profile].sum())
            if w > best_w + _EPS or (best is None):
                best, best_w = profile, w
        return best, best_w
    return _max_welfare_markov(game)


def _max_welfare_markov(game: MarkovGame) -> tuple[dict, float]:
    if not game.is_finite or game.transition_support is None:
        raise UnsupportedOperationError("brute force needs a finite game with supports")
    if game.horizon > 3:
        raise UnsupportedScaleError("brute force is limited to horizon <= 3")
    nonterminal = [s for s in game.states if not game.is_terminal(s)]
    joint_actions = list(
        itertools.product(*(range(sp.n_labels) for sp in game.action_spaces))
    )
    if len(game.states) * len(joint_actions) > 10_000:
        raise UnsupportedScaleError("state-action space too large for brute force")
    if len(joint_actions) ** len(nonterminal) > 1_000_000:
        raise UnsupportedScaleError("profile space too large for brute force")

    from .contracts import evaluate_deterministic_profile

    best_profile, best_w = None, -np.inf
    for assignment in itertools.product(joint_actions, repeat=len(nonterminal)):
        profile = dict(zip(nonterminal, assignment))
        values = evaluate_deterministic_profile(game, profile)
        w = float(values.sum())
        if w > best_w + _EPS:
            best_profile, best_w = profile, w
    return best_profile, best_w


@dataclass(frozen=True)
class Theorem1Report:
    holds: bool
    gap: float
    tolerance: float
    max_welfare: float
    spe_welfare: float


def verify_theorem1(solution: SpeSolution, base: StageGame, tolerance: float | None = None) -> Theorem1Report:
    """Check that the solved SPE welfare matches the social optimum.

    The default tolerance is one grid step per agent, the residual a
    discretized contract family can leave.
    """
    _, max_welfare = max_welfare_bruteforce(base)
    gap = float(max_welfare - solution.welfare)
    tol = float(tolerance) if tolerance is not None else solution.grid_step * base.num_agents
    return Theorem1Report(
        holds=bool(abs(gap) <= tol),
        gap=gap,
        tolerance=tol,
        max_welfare=float(max_welfare),
        spe_welfare=float(solution.welfare),
    )


# --- gifting stays put -------------------------------------------------------


@dataclass(frozen=True)
class GiftingSpeReport:
    matrix_nash: list
    gift_stage_nash_is_zero: bool
    target_is_spe_outcome: bool
    values: np.ndarray = field(default=None)


def gifting_spe_outcome(
    base: StageGame, max_gift: float, gift_step: float, target_profile: tuple[int, ...]
) -> GiftingSpeReport:
    """Backward induction over a discretized post-play gifting stage.

    In the gift stage every unit given is a unit lost, so zero gifts are
    each agent's dominant choice in every subgame; the matrix stage then
    inherits the base game's equilibria unchanged. Reports whether
    ``target_profile`` (with zero gifts) survives as an SPE outcome.
    """
    n = base.num_agents
    gift_axis = list(np.arange(0.0, max_gift + gift_step * 1e-9, gift_step))
    if not gift_axis or gift_axis[-1] < max_gift - 1e-12:
        gift_axis.append(max_gift)
    per_agent = [
        list(itertools.product(gift_axis, repeat=n - 1)) for _ in range(n)
    ]

    def gift_payoffs(gift_profile) -> np.ndarray:
        out = np.zeros(n)
        for i, gifts in enumerate(gift_profile):
            out[i] -= sum(gifts)
            recipients = [j for j in range(n) if j != i]
            for j, g in zip(recipients, gifts):
                out[j] += g
        return out

    # gift-stage equilibrium (same for every matrix outcome: payoffs differ
    # by a constant), solved by exhaustive deviation checks
    gift_shape = tuple(len(p) for p in per_agent)
    gift_table = np.zeros(gift_shape + (n,))
    for idx in itertools.product(*(range(s) for s in gift_shape)):
        gift_table[idx] = gift_payoffs(tuple(per_agent[i][k] for i, k in enumerate(idx)))
    gift_game = StageGame(
        gift_table,
        tuple(tuple(str(g) for g in per_agent[i]) for i in range(n)),
    )
    gift_nash = enumerate_pure_nash(gift_game)
    zero_idx = tuple(0 for _ in range(n))
    zero_is_nash = zero_idx in gift_nash
    # zero gifts are strictly dominant, so the continuation value of every
    # gift subgame is the matrix payoff itself
    matrix_nash = enumerate_pure_nash(base)
    target_ok = zero_is_nash and tuple(target_profile) in matrix_nash
    return GiftingSpeReport(
        matrix_nash=matrix_nash,
        gift_stage_nash_is_zero=zero_is_nash,
        target_is_spe_outcome=bool(target_ok),
        values=base.payoffs[tuple(target_profile)].copy(),
    )
