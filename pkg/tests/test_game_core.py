"""Rollouts, returns, welfare, and the detectability predicate."""

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from marlcontracts.envs.matrix import make_pd, matrix_markov_game, pd_table
from marlcontracts.errors import InvalidActionError, UnsupportedOperationError
from marlcontracts.game import (
    ActionSpace,
    Trajectory,
    discounted_returns,
    has_detectable_deviators,
    rollout,
    undiscounted_totals,
    welfare,
)
from marlcontracts.rng import RolloutStream

from conftest import two_state_chain

ALWAYS_DEFECT = lambda state, rng: 1
ALWAYS_COOPERATE = lambda state, rng: 0


class TestActionSpace:
    def test_discrete_contains(self):
        sp = ActionSpace(labels=("x", "y"))
        assert sp.contains(0) and sp.contains(1)
        assert not sp.contains(2) and not sp.contains(-1)

    def test_box_contains(self):
        sp = ActionSpace(low=np.zeros(2), high=np.ones(2))
        assert sp.contains(np.array([0.5, 1.0]))
        assert not sp.contains(np.array([0.5, 1.1]))
        assert not sp.contains(np.array([0.5]))

    def test_invariants(self):
        with pytest.raises(ValueError):
            ActionSpace(labels=())
        with pytest.raises(ValueError):
            ActionSpace(low=np.zeros(1), high=np.zeros(1))
        with pytest.raises(ValueError):
            ActionSpace(low=np.array([0.0]), high=np.array([np.inf]))

    def test_hybrid(self):
        sp = ActionSpace(labels=("x", "y"), low=np.zeros(1), high=np.ones(1))
        assert sp.contains((1, np.array([0.3])))
        assert not sp.contains((2, np.array([0.3])))


class TestRollout:
    def test_pd_always_defect_single_step(self, pd2):
        game, _ = pd2
        for seed in (0, 1, 17):
            traj = rollout(game, [ALWAYS_DEFECT, ALWAYS_DEFECT], RolloutStream(seed))
            assert len(traj) == 1
            np.testing.assert_allclose(traj.steps[0][2], [-2.0, -2.0])

    def test_horizon_cap(self, public_goods2):
        game, _ = public_goods2
        policy = lambda state, rng: np.array([0.5])
        traj = rollout(game, [policy, policy], RolloutStream(3))
        assert len(traj) <= game.horizon
        assert len(traj) == game.horizon  # no early termination here

    def test_public_goods_full_investment(self, public_goods2):
        game, _ = public_goods2
        invest = lambda state, rng: np.array([1.0])
        traj = rollout(game, [invest, invest], RolloutStream(0))
        np.testing.assert_allclose(traj.steps[0][2], [0.2, 0.2])

    def test_invalid_action_names_agent(self, pd2):
        game, _ = pd2
        bad = lambda state, rng: 5
        with pytest.raises(InvalidActionError, match="agent 1"):
            rollout(game, [ALWAYS_DEFECT, bad], RolloutStream(0))

    def test_deterministic_given_seed(self, chain_game):
        pol = lambda state, rng: int(rng.integers(2))
        t1 = rollout(chain_game, [pol, pol], RolloutStream(42))
        t2 = rollout(chain_game, [pol, pol], RolloutStream(42))
        assert [s for s, _, _ in t1.steps] == [s for s, _, _ in t2.steps]
        assert all(a1 == a2 for (_, a1, _), (_, a2, _) in zip(t1.steps, t2.steps))

    def test_agent_streams_stable_under_extra_agents(self):
        """Agent 0's draws do not move when more agents join."""
        draws_two = RolloutStream(5).agent(0, 3).random(4)
        draws_many = RolloutStream(5).agent(0, 3).random(4)
        np.testing.assert_array_equal(draws_two, draws_many)
        other = RolloutStream(5).agent(1, 3).random(4)
        assert not np.allclose(draws_two, other)

    def test_wrong_profile_length(self, pd2):
        game, _ = pd2
        with pytest.raises(ValueError):
            rollout(game, [ALWAYS_DEFECT], RolloutStream(0))


class TestDiscountedReturns:
    def test_geometric(self):
        steps = (
            (0, (0, 0), np.array([1.0, 0.0])),
            (1, (0, 0), np.array([1.0, 0.0])),
        )
        traj = Trajectory(steps)
        np.testing.assert_allclose(discounted_returns(traj, 0.5), [1.5, 0.0])

    def test_empty(self):
        traj = Trajectory(())
        assert discounted_returns(traj, 0.9).shape == (0,)
        assert welfare(discounted_returns(traj, 0.9)) == 0.0

    def test_pd_single_step(self, pd2):
        game, _ = pd2
        traj = rollout(game, [ALWAYS_COOPERATE, ALWAYS_COOPERATE], RolloutStream(0))
        np.testing.assert_allclose(discounted_returns(traj, 0.99), [-1.0, -1.0])

    def test_negotiation_powers_respected(self):
        steps = (
            ("neg", (0, 0), np.array([1.0, -1.0])),
            ("play", (0, 0), np.array([2.0, 0.0])),
        )
        traj = Trajectory(steps, discount_powers=(0, 0))
        np.testing.assert_allclose(discounted_returns(traj, 0.5), [3.0, -1.0])

    @given(
        rewards=st.lists(
            st.tuples(
                st.floats(-5, 5, allow_nan=False), st.floats(-5, 5, allow_nan=False)
            ),
            max_size=12,
        ),
        gamma=st.floats(0.0, 0.99),
    )
    @settings(max_examples=60, deadline=None)
    def test_welfare_linearity(self, rewards, gamma):
        """welfare(returns) equals the discounted sum of per-step welfare."""
        steps = tuple((t, (0, 0), np.array(r)) for t, r in enumerate(rewards))
        traj = Trajectory(steps)
        lhs = welfare(discounted_returns(traj, gamma))
        rhs = sum(gamma ** t * sum(r) for t, r in enumerate(rewards))
        assert lhs == pytest.approx(rhs, abs=1e-9)

    def test_return_bound(self, pd4):
        game, _ = pd4
        profile = [lambda s, r: 1] * 4
        traj = rollout(game, profile, RolloutStream(0))
        values = discounted_returns(traj, game.discount)
        assert np.all(np.abs(values) <= game.reward_bound * game.horizon + 1e-9)


class TestWelfare:
    def test_sum(self):
        assert welfare(np.array([-1.0, -1.0])) == -2.0

    def test_fig3b_values(self):
        assert welfare(np.array([0.0, -2.0])) == -2.0

    def test_stag_hunt_optimum(self):
        assert welfare(np.array([4.0, 4.0])) == 8.0


def _brute_force_detectable(game, profile):
    """Independent oracle: enumerate every (state, deviation) pair directly."""
    for s in game.states:
        if game.is_terminal(s):
            continue
        base = set(game.transition_support(s, profile[s]))
        union_by_agent = []
        for i in range(game.num_agents):
            union = set()
            for alt in range(game.action_spaces[i].n_labels):
                if alt == profile[s][i]:
                    continue
                a = list(profile[s])
                a[i] = alt
                union |= set(game.transition_support(s, tuple(a)))
            union_by_agent.append(union)
        pools = [base] + union_by_agent
        for x in range(len(pools)):
            for y in range(x + 1, len(pools)):
                if pools[x] & pools[y]:
                    return False
    return True


class TestDetectability:
    def test_outcome_encoding_is_detectable(self, pd2):
        game, _ = pd2
        profile = {game.initial_state: (0, 0)}
        assert has_detectable_deviators(game, profile) is True

    def test_merged_terminal_not_detectable(self):
        game = matrix_markov_game(pd_table(2), ("C", "D"), "pd", merge_terminal=True)
        profile = {game.initial_state: (0, 0)}
        assert has_detectable_deviators(game, profile) is False

    def test_agrees_with_brute_force(self, pd2, pd4, stag_hunt):
        for game, _ in (pd2, pd4, stag_hunt):
            for target in [(0,) * game.num_agents, (1,) * game.num_agents]:
                profile = {game.initial_state: target}
                assert has_detectable_deviators(game, profile) == _brute_force_detectable(
                    game, profile
                )
        merged = matrix_markov_game(pd_table(2), ("C", "D"), "pd", merge_terminal=True)
        profile = {merged.initial_state: (0, 1)}
        assert has_detectable_deviators(merged, profile) == _brute_force_detectable(
            merged, profile
        )

    def test_stochastic_chain_overlapping_supports(self, chain_game):
        profile = {0: (0, 0), 1: (0, 0)}
        assert has_detectable_deviators(chain_game, profile) is False

    def test_continuous_game_unsupported(self, public_goods2):
        game, _ = public_goods2
        with pytest.raises(UnsupportedOperationError):
            has_detectable_deviators(game, {0: (0, 0)})


def test_undiscounted_totals(pd2):
    game, _ = pd2
    traj = rollout(game, [ALWAYS_DEFECT, ALWAYS_COOPERATE], RolloutStream(0))
    np.testing.assert_allclose(undiscounted_totals(traj), [0.0, -3.0])
