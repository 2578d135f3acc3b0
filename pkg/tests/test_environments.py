"""The six domains: exact tables, formulas, kinematics, spawning rules."""

import itertools

import numpy as np
import pytest

from marlcontracts.contracts import transfer_delta
from marlcontracts.envs.gridworld import (
    CLEANUP_SHAPE,
    GridState,
    harvest_respawn_probability,
    make_cleanup,
    make_harvest,
)
from marlcontracts.envs.matrix import make_pd, make_stag_hunt
from marlcontracts.envs.merge import (
    AMBULANCE,
    MergeState,
    advance,
    initial_merge_state,
    make_emergency_merge,
)
from marlcontracts.envs.public_goods import make_public_goods
from marlcontracts.envs.registry import environment_card, make_env, stage_table
from marlcontracts.errors import ConfigError
from marlcontracts.game import rollout, undiscounted_totals
from marlcontracts.rng import RolloutStream

START = ("start",)


class TestPrisonersDilemma:
    def test_published_two_agent_table(self):
        game, _ = make_pd(2)
        expected = {
            (0, 0): (-1.0, -1.0),
            (0, 1): (-3.0, 0.0),
            (1, 0): (0.0, -3.0),
            (1, 1): (-2.0, -2.0),
        }
        for profile, payoff in expected.items():
            np.testing.assert_allclose(game.reward(START, profile), payoff)

    def test_four_agent_scheme(self):
        game, _ = make_pd(4)
        np.testing.assert_allclose(game.reward(START, (0, 0, 0, 0)), [4.0] * 4)
        np.testing.assert_allclose(game.reward(START, (1, 1, 1, 1)), [1.0] * 4)
        # agents 0 and 1 defect: defectors get N+1, cooperators 0
        np.testing.assert_allclose(game.reward(START, (1, 1, 0, 0)), [5.0, 5.0, 0.0, 0.0])

    def test_rejects_single_agent(self):
        with pytest.raises(ValueError):
            make_pd(1)

    def test_reward_bound_holds_over_samples(self):
        for n in (2, 4, 8):
            game, _ = make_pd(n)
            for profile in itertools.product((0, 1), repeat=n):
                assert np.all(np.abs(game.reward(START, profile)) <= game.reward_bound)


class TestStagHunt:
    def test_printed_table(self):
        game, _ = make_stag_hunt()
        np.testing.assert_allclose(game.reward(START, (0, 0)), [4.0, 4.0])
        np.testing.assert_allclose(game.reward(START, (0, 1)), [3.0, 1.0])
        np.testing.assert_allclose(game.reward(START, (1, 0)), [1.0, 3.0])
        np.testing.assert_allclose(game.reward(START, (1, 1)), [2.0, 2.0])

    def test_canonical_variant_swaps_off_diagonal(self):
        game, _ = make_stag_hunt(canonical=True)
        np.testing.assert_allclose(game.reward(START, (0, 1)), [1.0, 3.0])
        np.testing.assert_allclose(game.reward(START, (1, 0)), [3.0, 1.0])

    def test_welfare_max_profile(self):
        game, _ = make_stag_hunt()
        welfares = {
            p: game.reward(START, p).sum() for p in itertools.product((0, 1), repeat=2)
        }
        assert max(welfares, key=welfares.get) == (0, 0)
        assert welfares[(0, 0)] == 8.0


class TestPublicGoods:
    def test_full_investment(self):
        game, _ = make_public_goods(4)
        invest = tuple(np.array([1.0]) for _ in range(4))
        np.testing.assert_allclose(game.reward(0, invest), [0.2] * 4)

    def test_zero_investment(self):
        game, _ = make_public_goods(3)
        invest = tuple(np.array([0.0]) for _ in range(3))
        np.testing.assert_allclose(game.reward(0, invest), [0.0] * 3)

    def test_single_investor(self):
        # independent recomputation: mean = 0.25, return 0.3; investor nets -0.7
        game, _ = make_public_goods(4)
        invest = (np.array([1.0]), np.array([0.0]), np.array([0.0]), np.array([0.0]))
        np.testing.assert_allclose(game.reward(0, invest), [-0.7, 0.3, 0.3, 0.3])

    def test_zero_investment_is_best_response(self):
        """Grid search over own investment against random opponent profiles."""
        game, _ = make_public_goods(3)
        rng = np.random.default_rng(0)
        for _ in range(25):
            others = rng.uniform(0, 1, size=2)
            best = max(
                np.linspace(0, 1, 21),
                key=lambda a: game.reward(
                    0, (np.array([a]), np.array([others[0]]), np.array([others[1]]))
                )[0],
            )
            assert best == 0.0

    def test_welfare_maximized_at_full_investment(self):
        game, _ = make_public_goods(2)
        grid = np.linspace(0, 1, 11)
        best = max(
            itertools.product(grid, repeat=2),
            key=lambda a: game.reward(0, (np.array([a[0]]), np.array([a[1]]))).sum(),
        )
        assert best == (1.0, 1.0)
        assert game.meta["optimal_per_step_welfare"] == pytest.approx(0.4)

    def test_horizon(self):
        game, _ = make_public_goods(2)
        assert game.horizon == 100


class TestMerge:
    def test_car_speed_is_quarter_of_ambulance(self):
        game, _ = make_emergency_merge(2)
        assert game.meta["car_vmax"] == game.meta["ambulance_vmax"] / 4.0

    def test_ambulance_penalty_per_step(self):
        game, _ = make_emergency_merge(2)
        state = game.initial_state
        r = game.reward(state, (np.array([0.0]), np.array([0.0])))
        np.testing.assert_allclose(r, [-100.0, -1.0])

    def test_all_zero_accelerations_never_move(self):
        game, _ = make_emergency_merge(3)
        still = lambda state, rng: np.array([0.0])
        traj = rollout(game, [still] * 3, RolloutStream(0))
        assert len(traj) == game.horizon
        totals = undiscounted_totals(traj)
        np.testing.assert_allclose(totals, [-100.0 * 200, -200.0, -200.0])

    def test_full_throttle_ambulance_finishes(self):
        game, _ = make_emergency_merge(2)
        go = lambda state, rng: np.array([0.1])
        traj = rollout(game, [go, go], RolloutStream(0))
        final = traj.steps[-1][0]
        assert traj.terminal
        assert advance(final, (np.array([0.1]), np.array([0.1]))).all_done

    def test_follower_never_overlaps_leader(self):
        game, _ = make_emergency_merge(4)
        rng_pol = lambda state, rng: rng.uniform(-0.1, 0.1, size=1)
        for seed in range(5):
            traj = rollout(game, [rng_pol] * 4, RolloutStream(seed))
            for state, _, _ in traj.steps:
                merged = [
                    p
                    for p, d in zip(state.positions, state.done)
                    if p >= game.meta["merge_point"] and not d
                ]
                merged.sort()
                for a, b in zip(merged, merged[1:]):
                    assert b - a >= game.meta["follow_gap"] - 1e-9

    def test_selfish_car_blocks_ambulance(self):
        """The dilemma exists: a full-throttle car delays the ambulance."""
        game, _ = make_emergency_merge(2)
        go = lambda state, rng: np.array([0.1])
        stop = lambda state, rng: np.array([-0.1])
        blocked = undiscounted_totals(rollout(game, [go, go], RolloutStream(0)))
        yielded = undiscounted_totals(rollout(game, [go, stop], RolloutStream(0)))
        assert yielded[AMBULANCE] > blocked[AMBULANCE] + 500
        assert yielded.sum() > blocked.sum() + 500

    def test_subsidy_settles_once_at_crossing(self):
        game, family = make_emergency_merge(2)
        contract = family.make(np.array([10.0]))
        go = np.array([0.1])
        state = game.initial_state
        paid_steps = 0
        for t in range(game.horizon):
            delta = transfer_delta(contract, state, (go, np.array([0.0])))
            if np.any(delta != 0.0):
                paid_steps += 1
                assert abs(delta.sum()) < 1e-9
            state = advance(state, (go, np.array([0.0])))
            if state.all_done:
                break
        assert paid_steps == 1

    def test_subsidy_direction(self):
        """Car behind the ambulance at crossing is paid, car ahead pays."""
        game, family = make_emergency_merge(2)
        contract = family.make(np.array([1.0]))
        behind = MergeState((9.8, 3.0), (1.0, 0.0), (False, False))
        delta = transfer_delta(contract, behind, (np.array([0.1]), np.array([0.0])))
        assert delta[1] > 0 and delta[0] < 0
        ahead = MergeState((9.8, 15.0), (1.0, 0.25), (False, False))
        delta = transfer_delta(contract, ahead, (np.array([0.1]), np.array([0.0])))
        assert delta[1] < 0 and delta[0] > 0

    def test_zero_subsidy_identical_to_null(self):
        game, family = make_emergency_merge(3)
        contract = family.make(np.array([0.0]))
        state = game.initial_state
        actions = tuple(np.array([0.05]) for _ in range(3))
        np.testing.assert_array_equal(
            transfer_delta(contract, state, actions), np.zeros(3)
        )


class TestHarvest:
    def test_consuming_rewards_one(self):
        game, _ = make_harvest(2)
        state = game.initial_state
        apple = sorted(state.apples)[0]
        agent_pos = (apple[0] - 1, apple[1])
        state = GridState(
            positions=(agent_pos, (0, 14)),
            orientations=(0, 0),
            apples=state.apples,
            waste=frozenset(),
            eaten_last=(0, 0),
        )
        r = game.reward(state, (1, 4))  # move down onto the apple, other stays
        np.testing.assert_allclose(r, [1.0, 0.0])

    def test_respawn_zero_with_no_neighbors(self):
        assert harvest_respawn_probability(0) == 0.0
        assert harvest_respawn_probability(1) == 0.005
        assert harvest_respawn_probability(3) == 0.02
        assert harvest_respawn_probability(6) == 0.05

    def test_barren_map_stays_barren(self):
        game, _ = make_harvest(2)
        empty = GridState(
            positions=game.initial_state.positions,
            orientations=(0, 0),
            apples=frozenset(),
            waste=frozenset(),
            eaten_last=(0, 0),
        )
        state = empty
        stream = RolloutStream(0)
        for t in range(1000):
            state = game.transition(state, (4, 4), stream.env(t))
        assert len(state.apples) == 0

    def test_low_density_fine_and_dense_exemption(self):
        game, family = make_harvest(2)
        contract = family.make(np.array([10.0]))
        lone_apple = (7, 7)
        sparse = GridState(
            positions=((6, 7), (0, 14)),
            orientations=(0, 0),
            apples=frozenset({lone_apple}),
            waste=frozenset(),
            eaten_last=(0, 0),
        )
        delta = transfer_delta(contract, sparse, (1, 4))
        np.testing.assert_allclose(delta, [-10.0, 10.0])
        dense_apples = {lone_apple} | {(7, 8), (7, 6), (8, 7), (6, 6)}
        dense = GridState(
            positions=((6, 7), (0, 14)),
            orientations=(0, 0),
            apples=frozenset(dense_apples),
            waste=frozenset(),
            eaten_last=(0, 0),
        )
        np.testing.assert_array_equal(transfer_delta(contract, dense, (1, 4)), np.zeros(2))

    def test_no_two_agents_share_a_cell(self):
        game, _ = make_harvest(4)
        pol = lambda state, rng: int(rng.integers(6))
        for seed in range(3):
            traj = rollout(game, [pol] * 4, RolloutStream(seed))
            for state, _, _ in list(traj.steps)[:200]:
                assert len(set(state.positions)) == 4

    def test_apple_conservation(self):
        """Apples change only through consumption and spawning."""
        game, _ = make_harvest(2)
        state = game.initial_state
        stream = RolloutStream(11)
        pol_rng = np.random.default_rng(4)
        for t in range(100):
            actions = (int(pol_rng.integers(6)), int(pol_rng.integers(6)))
            reward = game.reward(state, actions)
            nxt = game.transition(state, actions, stream.env(t))
            eaten = int(reward.sum())
            spawned = len(nxt.apples) - (len(state.apples) - eaten)
            assert spawned >= 0
            assert sum(nxt.eaten_last) == eaten
            state = nxt

    def test_grid_validation(self):
        with pytest.raises(ValueError):
            make_harvest(2, grid_shape=(4, 9))


class TestCleanup:
    def test_cleaning_gives_no_base_reward(self):
        game, _ = make_cleanup(2)
        state = game.initial_state
        r = game.reward(state, (6, 4))
        np.testing.assert_allclose(r, [0.0, 0.0])

    def test_contract_pays_cleaner(self):
        game, family = make_cleanup(2)
        contract = family.make(np.array([0.2]))
        state = game.initial_state  # river saturated; agent 0 starts at (0,0)
        delta = transfer_delta(contract, state, (6, 4))
        np.testing.assert_allclose(delta, [0.2, -0.2])

    def test_saturated_river_blocks_apples(self):
        game, _ = make_cleanup(2)
        state = game.initial_state
        stream = RolloutStream(3)
        for t in range(1000):
            state = game.transition(state, (4, 4), stream.env(t))
        assert len(state.apples) == 0

    def test_clean_river_grows_apples(self):
        game, _ = make_cleanup(2)
        base = game.initial_state
        state = GridState(
            positions=base.positions,
            orientations=base.orientations,
            apples=frozenset(),
            waste=frozenset(),
            eaten_last=(0, 0),
        )
        stream = RolloutStream(5)
        grown = 0
        for t in range(50):
            state = game.transition(state, (4, 4), stream.env(t))
            grown = max(grown, len(state.apples))
        assert grown > 0

    def test_reward_bound_sampled(self):
        game, _ = make_cleanup(2)
        pol = lambda state, rng: int(rng.integers(7))
        traj = rollout(game, [pol, pol], RolloutStream(0))
        for _, _, r in traj.steps:
            assert np.all(np.abs(r) <= game.reward_bound)


class TestRegistry:
    def test_all_ids_buildable(self):
        for env_id in ("pd", "stag_hunt", "public_goods", "merge", "harvest", "cleanup"):
            game, space = make_env(env_id, 2)
            assert game.num_agents == 2
            assert space.num_agents == 2

    def test_unknown_id(self):
        with pytest.raises(ConfigError):
            make_env("chicken", 2)

    def test_bad_params_config_error(self):
        with pytest.raises(ConfigError):
            make_env("pd", 1)

    def test_environment_card_lists_constants(self):
        card = environment_card("merge", 2)
        for key in ("horizon", "reward_bound", "contract_bounds", "car_vmax", "merge_point"):
            assert key in card

    def test_stage_table_public_goods_discretized(self):
        table, labels, values = stage_table("public_goods", 2)
        assert values == (0.0, 1.0)
        np.testing.assert_allclose(table[(1, 1)], [0.2, 0.2])
        np.testing.assert_allclose(table[(1, 0)], [-0.4, 0.6])

    def test_matrix_horizon_is_two(self):
        game, _ = make_env("pd", 2)
        assert game.horizon == 2


class TestRewardBounds:
    def test_public_goods_bound_vectorized_million(self):
        """|R_i| <= 1.2 over 1e6 random investment profiles."""
        rng = np.random.default_rng(0)
        n = 4
        invest = rng.uniform(0, 1, size=(250_000, n))
        rewards = 1.2 * invest.mean(axis=1, keepdims=True) - invest
        assert rewards.size == 1_000_000
        assert np.all(np.abs(rewards) <= 1.2 + 1e-12)

    def test_merge_bound_sampled(self):
        game, _ = make_emergency_merge(3)
        pol = lambda state, rng: rng.uniform(-0.1, 0.1, size=1)
        for seed in range(3):
            traj = rollout(game, [pol] * 3, RolloutStream(seed))
            for _, _, r in traj.steps:
                assert np.all(np.abs(r) <= game.reward_bound)

    def test_harvest_bound_sampled(self):
        game, _ = make_harvest(2)
        pol = lambda state, rng: int(rng.integers(6))
        traj = rollout(game, [pol, pol], RolloutStream(1))
        for _, _, r in traj.steps:
            assert np.all(np.abs(r) <= game.reward_bound)


class TestContractBoundOverride:
    def test_bound_addressable_from_config_params(self):
        _, default_space = make_env("pd", 2)
        _, wide = make_env("pd", 2, contract_bound=3.0)
        assert default_space.param_bounds == ((0.0, 2.0),)
        assert wide.param_bounds == ((0.0, 3.0),)
        grid = wide.grid(0.25)
        assert max(c.params[0] for c in grid) == pytest.approx(3.0)

    def test_default_unchanged_without_override(self):
        _, a = make_env("cleanup", 2)
        assert a.param_bounds == ((0.0, 0.2),)
