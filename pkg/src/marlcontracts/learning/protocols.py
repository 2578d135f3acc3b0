"""Training protocols: separate, joint, gifting, and two-stage contracting.

All protocols draw complete episodes (truncating only at a step budget
boundary, with a value bootstrap), count environment steps exactly, and
are deterministic given (config, seed). Reported social reward is the
undiscounted per-episode sum over agents, the quantity the analytic
optima refer to; discounting applies inside the learners only.
"""

from __future__ import annotations

import hashlib
from dataclasses import dataclass, field, replace

import numpy as np

from ..augmentation import (
    ACCEPT_ACTION,
    AWAIT,
    PLAY,
    PROPOSE,
    AugmentedGame,
    augment_single_proposer,
)
from ..contracts import ContractSpace
from ..errors import FrozenPolicyError, UnsupportedOperationError, UnsupportedScaleError
from ..game import ActionSpace, MarkovGame, rollout, undiscounted_totals
from ..rng import RolloutStream, named_generator
from .policy import DistSnapshot, Policy
from .ppo import Batch, Hyperparams, PPOLearner, policy_gradient_update


@dataclass
class IterationStats:
    iteration: int
    env_steps: int
    episodes: int
    mean_social: float
    per_agent: np.ndarray
    phase: str = "train"
    theta_mean: float | None = None
    theta_std: float | None = None
    acceptance_rate: float | None = None


@dataclass
class EvalStats:
    episodes: int
    social_mean: float
    social_std: float
    per_agent_mean: np.ndarray
    per_agent_std: np.ndarray
    acceptance_rate: float | None = None
    theta_mean: float | None = None


@dataclass
class TrainReport:
    env_id: str
    algorithm: str
    seed: int
    num_agents: int
    iterations: list[IterationStats] = field(default_factory=list)
    total_env_steps: int = 0
    final_policies: dict = field(default_factory=dict)
    fingerprint: str = ""
    final_eval: EvalStats | None = None

    def social_series(self) -> np.ndarray:
        return np.array([it.mean_social for it in self.iterations])


def _fingerprint(*parts) -> str:
    digest = hashlib.sha256("|".join(str(p) for p in parts).encode())
    return digest.hexdigest()[:16]


def _norm_params(space: ContractSpace, params: np.ndarray) -> np.ndarray:
    lo = np.array([b[0] for b in space.param_bounds])
    hi = np.array([b[1] for b in space.param_bounds])
    span = np.where(hi > lo, hi - lo, 1.0)
    return (np.atleast_1d(params) - lo) / span


class _EpisodeBuffer:
    __slots__ = ("obs", "idx", "u", "rewards")

    def __init__(self):
        self.obs, self.idx, self.u, self.rewards = [], [], [], []


def _collect(
    game,
    learners: list[PPOLearner],
    hp: Hyperparams,
    seed: int,
    first_episode: int,
    max_steps: int,
    contract_sampler=None,
    space: ContractSpace | None = None,
):
    """Draw at most ``max_steps`` play steps of experience.

    Collects whole episodes, truncating only the final one at the step
    budget (bootstrapping its tail from the value net). When
    ``contract_sampler`` is set, each episode forces the sampled contract
    into effect: transfers are added to rewards and the normalized
    parameters are appended to every observation.
    """
    n = game.num_agents
    all_batches = [[] for _ in range(n)]  # (buffer, returns) fragments
    social, per_agent_totals, episodes = [], [], 0
    steps = 0
    episode = first_episode
    thetas = []
    fused = getattr(game, "step", None)

    while steps < max_steps:
        stream = RolloutStream(seed, episode)
        contract = None
        extra = None
        if contract_sampler is not None:
            params = contract_sampler(episode, stream)
            contract = space.make(params)
            extra = _norm_params(space, params)
            thetas.append(params.copy())
        state = game.sample_initial_state(stream) if contract_sampler is None else game.initial_state
        buffers = [_EpisodeBuffer() for _ in range(n)]
        ep_rewards = []
        t = 0
        truncated = False
        while t < game.horizon and not game.is_terminal(state):
            if steps >= max_steps:
                truncated = True
                break
            actions = []
            for i in range(n):
                obs = game.observe(state, i)
                if extra is not None:
                    obs = np.concatenate([obs, extra])
                action, idx, u, _logp = learners[i].act(obs, stream.agent(i, t))
                buffers[i].obs.append(obs)
                buffers[i].idx.append(idx)
                buffers[i].u.append(u)
                actions.append(action)
            joint = tuple(actions)
            if fused is not None:
                reward, next_state = fused(state, joint, stream.env(t))
                reward = np.asarray(reward, dtype=float)
            else:
                reward = np.asarray(game.reward(state, joint), dtype=float)
                next_state = game.transition(state, joint, stream.env(t))
            if contract is not None and not contract.is_null:
                reward = reward + np.asarray(contract.delta(state, joint), dtype=float)
            ep_rewards.append(reward)
            state = next_state
            t += 1
            steps += 1

        if ep_rewards:
            rewards = np.stack(ep_rewards)
            bootstrap = np.zeros(n)
            if truncated and not game.is_terminal(state):
                for i in range(n):
                    obs = game.observe(state, i)
                    if extra is not None:
                        obs = np.concatenate([obs, extra])
                    bootstrap[i] = learners[i].value.predict(obs[None, :])[0]
            returns = _returns_to_go(rewards, hp.discount, bootstrap)
            for i in range(n):
                all_batches[i].append((buffers[i], returns[:, i]))
            social.append(float(rewards.sum()))
            per_agent_totals.append(rewards.sum(axis=0))
            episodes += 1
        episode += 1

    batches = [_assemble_batch(learners[i], all_batches[i]) for i in range(n)]
    stats = {
        "episodes": episodes,
        "steps": steps,
        "mean_social": float(np.mean(social)) if social else 0.0,
        "per_agent": np.mean(per_agent_totals, axis=0) if per_agent_totals else np.zeros(n),
        "next_episode": episode,
        "thetas": np.array(thetas) if thetas else None,
    }
    return batches, stats


def _returns_to_go(rewards: np.ndarray, discount: float, bootstrap: np.ndarray) -> np.ndarray:
    out = np.zeros_like(rewards)
    future = bootstrap.astype(float)
    for t in range(len(rewards) - 1, -1, -1):
        future = rewards[t] + discount * future
        out[t] = future
    return out


def _assemble_batch(learner: PPOLearner, fragments) -> Batch | None:
    if not fragments:
        return None
    obs = np.concatenate([np.stack(buf.obs) for buf, _ in fragments])
    returns = np.concatenate([ret for _, ret in fragments])
    idx = None
    u = None
    first = fragments[0][0]
    if first.idx and first.idx[0] is not None:
        idx = np.concatenate([np.asarray(buf.idx, dtype=int) for buf, _ in fragments])
    if first.u and first.u[0] is not None:
        u = np.concatenate([np.stack(buf.u) for buf, _ in fragments])
    old, _ = learner.policy.dist(obs)
    old = DistSnapshot(
        logits=None if old.logits is None else old.logits.copy(),
        mu=None if old.mu is None else old.mu.copy(),
        sigma=None if old.sigma is None else old.sigma.copy(),
    )
    logp = learner.policy.logp(old, idx, u)
    values = learner.value.predict(obs)
    return Batch(
        obs=obs,
        idx=idx,
        u=u,
        logp=logp,
        advantages=returns - values,
        value_targets=returns,
        old=old,
    )


def _train_independent(
    game,
    learners: list[PPOLearner],
    hp: Hyperparams,
    budget: int,
    seed: int,
    algorithm: str,
    contract_sampler=None,
    space: ContractSpace | None = None,
) -> tuple[TrainReport, int]:
    report = TrainReport(
        env_id=getattr(game, "env_id", "custom"),
        algorithm=algorithm,
        seed=seed,
        num_agents=game.num_agents,
        fingerprint=_fingerprint(getattr(game, "env_id", "custom"), algorithm, seed, budget, hp),
    )
    steps = 0
    episode = 0
    iteration = 0
    while steps < budget:
        target = min(hp.train_batch_size, budget - steps)
        batches, stats = _collect(
            game, learners, hp, seed, episode, target,
            contract_sampler=contract_sampler, space=space,
        )
        episode = stats["next_episode"]
        steps += stats["steps"]
        for i, batch in enumerate(batches):
            if batch is not None:
                policy_gradient_update(learners[i], batch, hp)
        entry = IterationStats(
            iteration=iteration,
            env_steps=steps,
            episodes=stats["episodes"],
            mean_social=stats["mean_social"],
            per_agent=stats["per_agent"],
        )
        if stats["thetas"] is not None:
            entry.theta_mean = float(stats["thetas"].mean())
            entry.theta_std = float(stats["thetas"].std())
        report.iterations.append(entry)
        iteration += 1
    report.total_env_steps = steps
    report.final_policies = {
        f"agent{i}": learner.policy.copy_params() for i, learner in enumerate(learners)
    }
    return report, episode


def _policy_callable(policy: Policy, featurize, agent: int):
    def call(state, rng):
        return policy.act(featurize(state, agent), rng)[0]

    return call


def evaluate_policies(policies, game, episodes: int, seed: int) -> EvalStats:
    """Mean and spread of per-episode reward under fixed policies.

    ``policies`` are per-agent callables (state, rng) -> action. No
    learning happens; results are deterministic given the seed. For
    augmented games the acceptance rate and proposed parameters are read
    off the trajectories.
    """
    if episodes < 1:
        raise ValueError("need at least one evaluation episode")
    socials, per_agent = [], []
    accepted = []
    thetas = []
    augmented = isinstance(game, AugmentedGame)
    for ep in range(episodes):
        traj = rollout(game, policies, RolloutStream(seed, ep))
        totals = undiscounted_totals(traj)
        socials.append(float(totals.sum()))
        per_agent.append(totals)
        if augmented:
            got_contract = False
            for state, _, _ in traj.steps:
                if state.phase == AWAIT and state.pending is not None:
                    thetas.append(state.pending.params)
                if state.phase == PLAY and state.contract is not None:
                    got_contract = True
            accepted.append(1.0 if got_contract else 0.0)
    per_agent = np.stack(per_agent)
    return EvalStats(
        episodes=episodes,
        social_mean=float(np.mean(socials)),
        social_std=float(np.std(socials)),
        per_agent_mean=per_agent.mean(axis=0),
        per_agent_std=per_agent.std(axis=0),
        acceptance_rate=float(np.mean(accepted)) if accepted else None,
        theta_mean=float(np.mean([t[0] for t in thetas])) if thetas else None,
    )


def train_separate(game: MarkovGame, hp: Hyperparams, budget: int, seed: int) -> TrainReport:
    """N selfish learners, each maximizing its own return."""
    learners = [
        PPOLearner(game.obs_dim, game.action_spaces[i], hp, seed, f"agent{i}")
        for i in range(game.num_agents)
    ]
    report, _ = _train_independent(game, learners, hp, budget, seed, "separate")
    report.final_eval = evaluate_policies(
        [_policy_callable(l.policy, game.observe, i) for i, l in enumerate(learners)],
        game,
        hp.eval_episodes,
        seed + 7_000_000,
    )
    return report


def train_gifting(game: MarkovGame, max_gift: float, hp: Hyperparams, budget: int, seed: int) -> TrainReport:
    """Separate training on the gifting-augmented game."""
    from ..augmentation import gifting_augment

    gifted = gifting_augment(game, max_gift)
    learners = [
        PPOLearner(gifted.obs_dim, gifted.action_spaces[i], hp, seed, f"agent{i}")
        for i in range(gifted.num_agents)
    ]
    report, _ = _train_independent(gifted, learners, hp, budget, seed, "gifting")
    report.final_eval = evaluate_policies(
        [_policy_callable(l.policy, gifted.observe, i) for i, l in enumerate(learners)],
        gifted,
        hp.eval_episodes,
        seed + 7_000_000,
    )
    return report


class JointGameView:
    """A multi-agent game recast as one welfare-maximizing controller."""

    def __init__(self, base: MarkovGame):
        self.base = base
        self.num_agents = 1
        self.env_id = base.env_id + "+joint"
        self.horizon = base.horizon
        self.discount = base.discount
        self.obs_dim = base.obs_dim * base.num_agents
        self.initial_state = base.initial_state
        self.is_terminal = base.is_terminal

        spaces = base.action_spaces
        if all(sp.labels is not None and sp.low is None for sp in spaces):
            self._kind = "discrete"
            self._sizes = [sp.n_labels for sp in spaces]
            total = int(np.prod(self._sizes))
            if total > 64:
                raise UnsupportedScaleError(
                    f"joint action space of {total} labels exceeds the 64-dim cap"
                )
            self.joint_space = ActionSpace(labels=tuple(str(i) for i in range(total)))
        elif all(sp.low is not None and sp.labels is None for sp in spaces):
            self._kind = "box"
            self._dims = [sp.box_dim for sp in spaces]
            if sum(self._dims) > 64:
                raise UnsupportedScaleError("joint box action exceeds the 64-dim cap")
            self.joint_space = ActionSpace(
                low=np.concatenate([sp.low for sp in spaces]),
                high=np.concatenate([sp.high for sp in spaces]),
            )
        else:
            raise UnsupportedOperationError("joint training needs all-discrete or all-box actions")

    def decode(self, action):
        if self._kind == "discrete":
            idx = int(action)
            out = []
            for size in reversed(self._sizes):
                out.append(idx % size)
                idx //= size
            return tuple(reversed(out))
        vec = np.asarray(action, dtype=float)
        parts = []
        at = 0
        for d in self._dims:
            parts.append(vec[at : at + d])
            at += d
        return tuple(parts)

    def observe(self, state, agent):
        return np.concatenate(
            [self.base.observe(state, i) for i in range(self.base.num_agents)]
        )

    def sample_initial_state(self, stream):
        return self.base.sample_initial_state(stream)

    def action_space_for(self, state, agent):
        return self.joint_space

    def is_negotiation_state(self, state):
        return False

    def reward(self, state, joint_action):
        base_r = self.base.reward(state, self.decode(joint_action[0]))
        return np.array([float(np.sum(base_r))])

    def transition(self, state, joint_action, rng):
        return self.base.transition(state, self.decode(joint_action[0]), rng)

    @property
    def action_spaces(self):
        return (self.joint_space,)


def train_joint(game: MarkovGame, hp: Hyperparams, budget: int, seed: int) -> TrainReport:
    """One centralized learner over the joint action space, paid welfare."""
    view = JointGameView(game)
    learner = PPOLearner(
        view.obs_dim, view.joint_space, hp, seed, "joint", hidden=hp.joint_hidden_sizes
    )
    report, _ = _train_independent(view, [learner], hp, budget, seed, "joint")
    report.env_id = game.env_id
    report.num_agents = game.num_agents

    def joint_callable(state, rng):
        return learner.policy.act(view.observe(state, 0), rng)[0]

    eval_stats = evaluate_policies([joint_callable], view, hp.eval_episodes, seed + 7_000_000)
    report.final_eval = eval_stats
    return report


@dataclass
class Stage1Result:
    """Frozen contract-conditioned play policies."""

    policies: list[Policy]
    aug: AugmentedGame
    steps_used: int
    budget: int
    report: TrainReport

    @property
    def frozen(self) -> bool:
        return all(p.frozen for p in self.policies)

    def observe(self, state, agent):
        return self.aug.observe(state, agent)


def subgame_train_stage1(aug: AugmentedGame, hp: Hyperparams, budget: int, seed: int) -> Stage1Result:
    """Stage 1: train play policies under uniformly sampled contracts.

    Every episode draws contract parameters uniformly from the family's
    box, forces the contract into effect without negotiation steps, and
    trains each agent independently with the parameters appended to its
    observation.
    """
    base = aug.base
    space = aug.contract_space
    obs_dim = base.obs_dim + space.num_params
    learners = [
        PPOLearner(obs_dim, base.action_spaces[i], hp, seed, f"stage1-agent{i}")
        for i in range(base.num_agents)
    ]

    lo = np.array([b[0] for b in space.param_bounds])
    hi = np.array([b[1] for b in space.param_bounds])

    def sampler(episode, stream):
        return lo + (hi - lo) * stream.env(-2).random(len(lo))

    report, _ = _train_independent(
        base, learners, hp, budget, seed, "contracting-stage1",
        contract_sampler=sampler, space=space,
    )
    for learner in learners:
        learner.freeze()
    return Stage1Result(
        policies=[l.policy for l in learners],
        aug=aug,
        steps_used=report.total_env_steps,
        budget=budget,
        report=report,
    )


@dataclass
class NegotiationResult:
    proposer: Policy
    acceptors: dict[int, Policy]
    stage1: Stage1Result

    def callables(self):
        """Per-agent (state, rng) -> action dispatchers over all phases."""
        aug = self.stage1.aug
        out = []
        for agent in range(aug.num_agents):
            def call(state, rng, agent=agent):
                if state.phase == PROPOSE:
                    if agent == state.proposer:
                        return self.proposer.act(aug.observe(state, agent), rng)[0]
                    return 0
                if state.phase == AWAIT:
                    if agent != state.proposer:
                        return self.acceptors[agent].act(aug.observe(state, agent), rng)[0]
                    return 0
                return self.stage1.policies[agent].act(aug.observe(state, agent), rng)[0]
            out.append(call)
        return out


def negotiation_train_stage2(
    aug: AugmentedGame,
    stage1: Stage1Result,
    hp: Hyperparams,
    budget: int | None,
    seed: int,
) -> tuple[NegotiationResult, TrainReport]:
    """Stage 2: train proposal and acceptance against the frozen stage.

    The proposer emits contract parameters through a squashed Gaussian;
    each non-proposer emits an accept probability. Episode rewards are the
    returns of one frozen-policy rollout under the chosen (or null)
    contract, plus the signing transfer. The step budget is capped at
    stage-1's fraction (10% by default).
    """
    if not stage1.frozen:
        raise FrozenPolicyError("stage-2 training requires frozen stage-1 policies")
    cap = int(stage1.budget * hp.stage2_fraction)
    if budget is None:
        budget = cap
    if budget > cap:
        raise ValueError(f"stage-2 budget {budget} exceeds the {cap}-step cap")

    base = aug.base
    space = aug.contract_space
    n = base.num_agents
    proposer_agent = 0
    proposer = PPOLearner(aug.obs_dim, aug.proposal_space, hp, seed, "stage2-proposer")
    accept_space = ActionSpace(labels=("reject", "acc"))
    acceptors = {
        i: PPOLearner(aug.obs_dim, accept_space, hp, seed, f"stage2-acceptor{i}")
        for i in range(n)
        if i != proposer_agent
    }

    hp2 = hp.override(minibatch_size=hp.stage2_minibatch_size)
    report = TrainReport(
        env_id=aug.env_id,
        algorithm="contracting",
        seed=seed,
        num_agents=n,
        fingerprint=_fingerprint(aug.env_id, "contracting", seed, budget, hp),
    )

    steps = 0
    episode = 1_000_000  # negotiation episodes use their own stream range
    iteration = 0
    while steps < budget:
        prop_frags, acc_frags = [], {i: [] for i in acceptors}
        socials, acc_flags, thetas = [], [], []
        agent_totals = []
        episodes_this_iter = 0
        while episodes_this_iter < hp.stage2_episodes_per_iter and steps < budget:
            stream = RolloutStream(seed, episode)
            state = aug.sample_initial_state(stream)
            prop_obs = aug.observe(state, proposer_agent)
            prop_action, _, prop_u, _ = proposer.act(prop_obs, stream.agent(proposer_agent, 0))
            joint = tuple(
                prop_action if i == state.proposer else 0 for i in range(n)
            )
            await_state = aug.transition(state, joint, stream.env(0))
            pending = await_state.pending
            thetas.append(pending.params.copy())

            votes = {}
            acc_samples = {}
            for i in acceptors:
                obs_i = aug.observe(await_state, i)
                _, idx, _, _ = acceptors[i].act(obs_i, stream.agent(i, 1))
                votes[i] = idx
                acc_samples[i] = (obs_i, idx)
            accepted = aug.acceptance_rule(votes)
            acc_flags.append(1.0 if accepted else 0.0)

            signing = pending.signing_delta if accepted else np.zeros(n)
            contract = pending if accepted else space.null()
            params = pending.params if accepted else np.zeros(space.num_params)
            extra = _norm_params(space, params)

            play_state = base.initial_state
            fused = getattr(base, "step", None)
            ep_rewards = []
            t = 0
            while t < base.horizon and not base.is_terminal(play_state) and steps < budget:
                actions = tuple(
                    stage1.policies[i].act(
                        np.concatenate([base.observe(play_state, i), extra]),
                        stream.agent(i, 2 + t),
                    )[0]
                    for i in range(n)
                )
                if fused is not None:
                    reward, next_play = fused(play_state, actions, stream.env(2 + t))
                    reward = np.asarray(reward, dtype=float)
                else:
                    reward = np.asarray(base.reward(play_state, actions), dtype=float)
                    next_play = base.transition(play_state, actions, stream.env(2 + t))
                if not contract.is_null:
                    reward = reward + np.asarray(
                        contract.delta(play_state, actions), dtype=float
                    )
                ep_rewards.append(reward)
                play_state = next_play
                t += 1
                steps += 1

            rewards = np.stack(ep_rewards) if ep_rewards else np.zeros((0, n))
            discounts = hp.discount ** np.arange(len(rewards))
            returns = signing + (discounts[:, None] * rewards).sum(axis=0)
            socials.append(float(rewards.sum()))
            agent_totals.append(signing + rewards.sum(axis=0))

            prop_buf = _EpisodeBuffer()
            prop_buf.obs.append(prop_obs)
            prop_buf.idx.append(None)
            prop_buf.u.append(prop_u)
            prop_frags.append((prop_buf, np.array([returns[proposer_agent]])))
            for i, (obs_i, idx) in acc_samples.items():
                buf = _EpisodeBuffer()
                buf.obs.append(obs_i)
                buf.idx.append(idx)
                buf.u.append(None)
                acc_frags[i].append((buf, np.array([returns[i]])))

            episodes_this_iter += 1
            episode += 1

        batch = _assemble_batch(proposer, prop_frags)
        if batch is not None:
            policy_gradient_update(proposer, batch, hp2)
        for i in acceptors:
            batch = _assemble_batch(acceptors[i], acc_frags[i])
            if batch is not None:
                policy_gradient_update(acceptors[i], batch, hp2)

        thetas_arr = np.array([t[0] for t in thetas]) if thetas else np.zeros(1)
        report.iterations.append(
            IterationStats(
                iteration=iteration,
                env_steps=steps,
                episodes=episodes_this_iter,
                mean_social=float(np.mean(socials)) if socials else 0.0,
                per_agent=np.mean(agent_totals, axis=0) if agent_totals else np.zeros(n),
                phase="stage2",
                theta_mean=float(thetas_arr.mean()),
                theta_std=float(thetas_arr.std()),
                acceptance_rate=float(np.mean(acc_flags)) if acc_flags else 0.0,
            )
        )
        iteration += 1

    report.total_env_steps = steps
    result = NegotiationResult(
        proposer=proposer.policy,
        acceptors={i: acceptors[i].policy for i in acceptors},
        stage1=stage1,
    )
    report.final_policies = {"proposer": proposer.policy.copy_params()}
    report.final_eval = evaluate_policies(
        result.callables(), aug, hp.eval_episodes, seed + 9_000_000
    )
    return result, report


def train_contracting(
    game: MarkovGame,
    space: ContractSpace,
    hp: Hyperparams,
    budget: int,
    seed: int,
) -> TrainReport:
    """Full two-stage contracting run: stage 1 on ``budget`` steps, stage 2
    on the 10% follow-up. The combined report carries both series."""
    aug = augment_single_proposer(game, space)
    stage1 = subgame_train_stage1(aug, hp, budget, seed)
    _, stage2_report = negotiation_train_stage2(aug, stage1, hp, None, seed)

    combined = TrainReport(
        env_id=game.env_id,
        algorithm="contracting",
        seed=seed,
        num_agents=game.num_agents,
        fingerprint=_fingerprint(game.env_id, "contracting", seed, budget, hp),
    )
    for it in stage1.report.iterations:
        combined.iterations.append(replace(it, phase="stage1"))
    offset = len(stage1.report.iterations)
    for it in stage2_report.iterations:
        shifted = replace(it, iteration=it.iteration + offset,
                          env_steps=it.env_steps + stage1.steps_used)
        combined.iterations.append(shifted)
    combined.total_env_steps = stage1.steps_used + stage2_report.total_env_steps
    combined.final_policies = stage2_report.final_policies
    combined.final_eval = stage2_report.final_eval
    return combined
