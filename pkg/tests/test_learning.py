"""Learners and protocols: gradients, budgets, determinism, convergence."""

import numpy as np
import pytest

from marlcontracts.augmentation import augment_single_proposer
from marlcontracts.envs.matrix import make_pd
from marlcontracts.envs.public_goods import make_public_goods
from marlcontracts.errors import FrozenPolicyError, UnsupportedScaleError
from marlcontracts.game import ActionSpace
from marlcontracts.learning import (
    Hyperparams,
    PPOLearner,
    clipped_surrogate,
    evaluate_policies,
    negotiation_train_stage2,
    policy_gradient_update,
    subgame_train_stage1,
    train_contracting,
    train_gifting,
    train_joint,
    train_separate,
)
from marlcontracts.learning.policy import DistSnapshot
from marlcontracts.learning.ppo import Batch, loss_and_grads
from marlcontracts.rng import named_generator

FAST = Hyperparams(train_batch_size=1500, eval_episodes=40)


def small_hybrid_batch(learner, m=16, seed=11):
    rng = named_generator(seed, "fixture")
    obs = rng.normal(size=(m, learner.policy.net.sizes[0]))
    idx = rng.integers(learner.policy.n_labels, size=m) if learner.policy.n_labels else None
    u = rng.normal(size=(m, learner.policy.box_dim)) * 0.6 if learner.policy.box_dim else None
    snap, _ = learner.policy.dist(obs)
    old = DistSnapshot(
        logits=None if snap.logits is None else snap.logits + 0.05 * rng.normal(size=snap.logits.shape),
        mu=None if snap.mu is None else snap.mu + 0.05 * rng.normal(size=snap.mu.shape),
        sigma=None if snap.sigma is None else snap.sigma * 1.02,
    )
    return Batch(
        obs=obs,
        idx=idx,
        u=u,
        logp=learner.policy.logp(old, idx, u),
        advantages=rng.normal(size=m),
        value_targets=rng.normal(size=m),
        old=old,
    )


class TestClippedSurrogate:
    def test_positive_advantage_clips_high_ratio(self):
        assert clipped_surrogate(2.0, 1.0, 0.3) == pytest.approx(1.3)

    def test_negative_advantage_clips_low_ratio(self):
        assert clipped_surrogate(0.2, -1.0, 0.3) == pytest.approx(-0.7)

    def test_interior_ratio_unclipped(self):
        assert clipped_surrogate(1.1, 2.0, 0.3) == pytest.approx(2.2)


class TestGradientCheck:
    """Analytic gradients vs central finite differences, 2-state fixture."""

    @pytest.mark.parametrize(
        "space",
        [
            ActionSpace(labels=("a", "b")),
            ActionSpace(low=np.zeros(2), high=np.ones(2)),
            ActionSpace(labels=("a", "b", "c"), low=np.zeros(1), high=np.ones(1)),
        ],
        ids=["categorical", "box", "hybrid"],
    )
    def test_matches_finite_differences(self, space):
        hp = Hyperparams(minibatch_size=16, normalize_advantages=False)
        learner = PPOLearner(4, space, hp, seed=5, name="gc")
        batch = small_hybrid_batch(learner)

        def loss():
            l, *_ = loss_and_grads(learner.policy, learner.value, batch, hp, kl_coeff=0.2)
            return l

        _, pol_grads, val_grads, _, _ = loss_and_grads(
            learner.policy, learner.value, batch, hp, kl_coeff=0.2
        )
        eps = 1e-5  # balances truncation against float64 roundoff
        pick = named_generator(1, "pick")
        worst = 0.0
        for grads, params in ((pol_grads, learner.policy.params()), (val_grads, learner.value.params())):
            for g, p in zip(grads, params):
                flat = p.reshape(-1)
                for _ in range(min(10, flat.size)):
                    j = int(pick.integers(flat.size))
                    orig = flat[j]
                    flat[j] = orig + eps
                    up = loss()
                    flat[j] = orig - eps
                    down = loss()
                    flat[j] = orig
                    numeric = (up - down) / (2 * eps)
                    analytic = g.reshape(-1)[j]
                    rel = abs(numeric - analytic) / max(abs(numeric), abs(analytic), 1e-8)
                    worst = max(worst, rel)
        assert worst < 1e-4

    def test_positive_advantage_raises_action_probability(self):
        hp = Hyperparams(minibatch_size=32, sgd_iters=5)
        space = ActionSpace(labels=("a", "b"))
        learner = PPOLearner(2, space, hp, seed=9, name="ascent")
        obs = np.tile([1.0, 0.0], (32, 1))
        idx = np.zeros(32, dtype=int)
        old, _ = learner.policy.dist(obs)
        batch = Batch(
            obs=obs,
            idx=idx,
            u=None,
            logp=learner.policy.logp(old, idx, None),
            advantages=np.ones(32),
            value_targets=np.zeros(32),
            old=old,
        )
        before = np.exp(learner.policy.logp(old, np.zeros(1, dtype=int), None)[0])
        policy_gradient_update(learner, batch, hp)
        after_snap, _ = learner.policy.dist(obs[:1])
        after = np.exp(learner.policy.logp(after_snap, np.zeros(1, dtype=int), None)[0])
        assert after > before

    def test_nonfinite_loss_aborts_without_touching_params(self):
        hp = Hyperparams(minibatch_size=16)
        space = ActionSpace(labels=("a", "b"))
        learner = PPOLearner(3, space, hp, seed=2, name="abort")
        batch = small_hybrid_batch(learner, m=8)
        batch.advantages[3] = np.nan
        before = learner.policy.copy_params()
        stats = policy_gradient_update(learner, batch, hp)
        assert stats.aborted and "non-finite" in stats.diagnostic
        for old, new in zip(before, learner.policy.params()):
            np.testing.assert_array_equal(old, new)


class TestBudgetsAndDeterminism:
    def test_zero_budget_gives_empty_report(self, pd2):
        game, _ = pd2
        report = train_separate(game, FAST, budget=0, seed=0)
        assert report.iterations == []
        assert report.total_env_steps == 0
        assert report.final_eval is not None

    def test_budget_accounting_exact(self, pd2):
        game, _ = pd2
        report = train_separate(game, FAST, budget=3700, seed=1)
        assert report.total_env_steps == 3700

    def test_budget_exact_with_long_episodes(self):
        game, _ = make_public_goods(2, horizon=100)
        report = train_separate(game, FAST, budget=1050, seed=0)
        assert report.total_env_steps == 1050  # truncates the final episode

    def test_seed_determinism(self, pd2):
        game, _ = pd2
        a = train_separate(game, FAST, budget=3000, seed=3)
        b = train_separate(game, FAST, budget=3000, seed=3)
        np.testing.assert_array_equal(a.social_series(), b.social_series())
        assert a.final_eval.social_mean == b.final_eval.social_mean
        assert a.fingerprint == b.fingerprint

    def test_different_seeds_differ(self, pd2):
        game, _ = pd2
        a = train_separate(game, FAST, budget=3000, seed=3)
        b = train_separate(game, FAST, budget=3000, seed=4)
        assert not np.array_equal(a.social_series(), b.social_series())

    def test_stage1_budget_exact(self, pd2):
        game, space = pd2
        aug = augment_single_proposer(game, space)
        stage1 = subgame_train_stage1(aug, FAST, budget=2000, seed=0)
        assert stage1.steps_used == 2000

    def test_stage2_cap_enforced(self, pd2):
        game, space = pd2
        aug = augment_single_proposer(game, space)
        stage1 = subgame_train_stage1(aug, FAST, budget=2000, seed=0)
        with pytest.raises(ValueError):
            negotiation_train_stage2(aug, stage1, FAST, budget=500, seed=0)
        _, report = negotiation_train_stage2(aug, stage1, FAST, budget=200, seed=0)
        assert report.total_env_steps <= 200

    def test_stage2_requires_frozen(self, pd2):
        game, space = pd2
        aug = augment_single_proposer(game, space)
        stage1 = subgame_train_stage1(aug, FAST, budget=1000, seed=0)
        stage1.policies[0].net.weights[0] = stage1.policies[0].net.weights[0].copy()
        with pytest.raises(FrozenPolicyError):
            negotiation_train_stage2(aug, stage1, FAST, budget=100, seed=0)


class TestJoint:
    def test_joint_action_scale_guard(self):
        game, _ = make_pd(8)  # 2^8 = 256 joint labels
        with pytest.raises(UnsupportedScaleError):
            train_joint(game, FAST, budget=100, seed=0)

    def test_joint_smoke(self, pd2):
        """Joint learner runs, improves, and accounts steps exactly; the
        convergence-to-optimum check runs at full budget in acceptance."""
        game, _ = pd2
        report = train_joint(game, FAST, budget=9000, seed=0)
        assert report.total_env_steps == 9000
        assert report.num_agents == 2
        series = report.social_series()
        assert series[-1] >= series[0]


class TestEvaluate:
    def test_always_defect_social(self, pd2):
        game, _ = pd2
        pols = [lambda s, r: 1, lambda s, r: 1]
        stats = evaluate_policies(pols, game, episodes=100, seed=0)
        assert stats.social_mean == pytest.approx(-4.0)
        assert stats.social_std == pytest.approx(0.0)

    def test_stochastic_policies_have_spread(self, pd2):
        game, _ = pd2
        pols = [lambda s, r: int(r.integers(2))] * 2
        stats = evaluate_policies(pols, game, episodes=200, seed=0)
        assert stats.social_std > 0

    def test_scripted_optimum_matches_solver_welfare(self, pd2):
        """Cross-module consistency: replaying the SPE profile under the
        solved contract reproduces the solver's welfare."""
        from marlcontracts.contracts import add_signing_transfer
        from marlcontracts.envs.registry import stage_table
        from marlcontracts.equilibrium import solve_contract_spe, stage_game_from_table

        game, family = pd2
        table, labels, values = stage_table("pd", 2)
        stage = stage_game_from_table(table, labels, values)
        signed = add_signing_transfer(family, bound=6.0)
        sol = solve_contract_spe(stage, signed, grid_step=0.25)
        aug = augment_single_proposer(game, signed)

        def proposer(state, rng):
            if state.phase == "propose":
                return sol.contract.params
            if state.phase == "await":
                return 0
            return sol.play_profile[0]

        def acceptor(state, rng):
            if state.phase == "await":
                return 1
            if state.phase == "propose":
                return 0
            return sol.play_profile[1]

        stats = evaluate_policies([proposer, acceptor], aug, episodes=20, seed=0)
        assert stats.social_mean == pytest.approx(sol.welfare)
        np.testing.assert_allclose(stats.per_agent_mean, sol.values)
        assert stats.acceptance_rate == 1.0

    def test_requires_positive_episodes(self, pd2):
        game, _ = pd2
        with pytest.raises(ValueError):
            evaluate_policies([lambda s, r: 1] * 2, game, episodes=0, seed=0)


class TestStage1Conditioning:
    def test_observation_includes_contract_params(self, pd2):
        game, space = pd2
        aug = augment_single_proposer(game, space)
        assert aug.obs_dim == game.obs_dim + space.num_params

    def test_stage1_learns_conditional_play(self, pd2):
        """After stage 1 at reduced scale, play already separates by theta:
        cooperative under a high fine, defecting under none. (At the full
        200k budget the split saturates to 1.0/0.0; the acceptance suite
        exercises that regime through its welfare targets.)"""
        game, space = pd2
        aug = augment_single_proposer(game, space)
        hp = Hyperparams(train_batch_size=3000, eval_episodes=10)
        stage1 = subgame_train_stage1(aug, hp, budget=45_000, seed=0)
        rng = named_generator(99, "probe")

        def play_probs(theta):
            extra = np.array([theta / 2.0])
            cooperate = 0
            for _ in range(200):
                obs = np.concatenate([game.observe(game.initial_state, 0), extra])
                action, *_ = stage1.policies[0].act(obs, rng)
                cooperate += action == 0
            return cooperate / 200

        high, low = play_probs(2.0), play_probs(0.0)
        assert high - low >= 0.5
        assert high >= 0.7 and low <= 0.35


class TestGifting:
    def test_zero_gift_identical_to_separate(self, pd2):
        game, _ = pd2
        a = train_separate(game, FAST, budget=2000, seed=5)
        b = train_gifting(game, 0.0, FAST, budget=2000, seed=5)
        np.testing.assert_array_equal(a.social_series(), b.social_series())

    def test_gifting_runs_on_matrix_game(self, pd2):
        game, _ = pd2
        report = train_gifting(game, 2.0, FAST, budget=3000, seed=0)
        assert report.total_env_steps == 3000
        assert report.algorithm == "gifting"


class TestContractingEndToEnd:
    def test_small_scale_pd_beats_separate(self, pd2):
        """Desk-scale sanity: contracting clearly beats separate on PD."""
        game, space = pd2
        hp = Hyperparams(train_batch_size=3000, eval_episodes=60)
        contracting = train_contracting(game, space, hp, budget=45_000, seed=0)
        separate = train_separate(game, hp, budget=45_000, seed=0)
        assert contracting.final_eval.social_mean > separate.final_eval.social_mean + 1.0
        assert contracting.final_eval.acceptance_rate >= 0.8
        stage2 = [it for it in contracting.iterations if it.phase == "stage2"]
        assert stage2 and stage2[-1].theta_mean is not None
        assert contracting.total_env_steps <= 45_000 + 4500
