"""Clipped-surrogate policy optimization with an adaptive KL penalty.

One learner owns a policy net, a value baseline, momentum-SGD optimizers
and the adaptive KL coefficient. Updates run a fixed number of shuffled
minibatch passes; a non-finite loss aborts the whole update and restores
the parameters it started from.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np

from ..game import ActionSpace
from ..rng import named_generator
from .nets import make_optimizer
from .policy import DistSnapshot, Policy, ValueNet, _softmax_batch, _logsumexp


@dataclass(frozen=True)
class Hyperparams:
    """Training knobs; defaults follow the experimental setup."""

    lr: float = 1e-4
    sgd_iters: int = 30
    momentum: float = 0.99
    train_batch_size: int = 12000
    minibatch_size: int = 4092
    clip: float = 0.3
    kl_coeff: float = 0.2
    kl_target: float = 0.01
    vf_coeff: float = 1.0
    entropy_coeff: float = 0.0
    discount: float = 0.99
    hidden_sizes: tuple[int, ...] = (64, 64)
    joint_hidden_sizes: tuple[int, ...] = (256, 256)
    optimizer: str = "sgd"
    normalize_advantages: bool = True
    stage2_episodes_per_iter: int = 128
    stage2_minibatch_size: int = 128
    stage2_fraction: float = 0.1
    eval_episodes: int = 100

    def __post_init__(self):
        if not 0.0 < self.clip <= 1.0:
            raise ValueError("clip must lie in (0, 1]")
        for name in ("lr", "train_batch_size", "minibatch_size", "sgd_iters"):
            if getattr(self, name) <= 0:
                raise ValueError(f"{name} must be positive")
        if not 0.0 <= self.discount < 1.0:
            raise ValueError("discount must lie in [0, 1)")

    def override(self, **kwargs) -> "Hyperparams":
        return replace(self, **kwargs)


def clipped_surrogate(ratio: np.ndarray, advantage: np.ndarray, clip: float) -> np.ndarray:
    """Per-sample clipped surrogate min(r*A, clip(r)*A)."""
    ratio = np.asarray(ratio, dtype=float)
    advantage = np.asarray(advantage, dtype=float)
    return np.minimum(ratio * advantage, np.clip(ratio, 1.0 - clip, 1.0 + clip) * advantage)


@dataclass
class Batch:
    """Flat sample batch for one policy."""

    obs: np.ndarray
    idx: np.ndarray | None
    u: np.ndarray | None
    logp: np.ndarray
    advantages: np.ndarray
    value_targets: np.ndarray
    old: DistSnapshot

    def __len__(self) -> int:
        return len(self.obs)

    def take(self, sel: np.ndarray) -> "Batch":
        return Batch(
            obs=self.obs[sel],
            idx=None if self.idx is None else self.idx[sel],
            u=None if self.u is None else self.u[sel],
            logp=self.logp[sel],
            advantages=self.advantages[sel],
            value_targets=self.value_targets[sel],
            old=DistSnapshot(
                logits=None if self.old.logits is None else self.old.logits[sel],
                mu=None if self.old.mu is None else self.old.mu[sel],
                sigma=self.old.sigma,
            ),
        )


@dataclass
class UpdateStats:
    mean_kl: float = 0.0
    policy_loss: float = 0.0
    value_loss: float = 0.0
    kl_coeff: float = 0.0
    aborted: bool = False
    diagnostic: str = ""


def loss_and_grads(policy: Policy, value: ValueNet, mb: Batch, hp: Hyperparams, kl_coeff: float):
    """Total loss and analytic parameter gradients on one minibatch.

    The loss is the negative clipped surrogate plus the KL penalty, the
    entropy bonus, and the value regression term (on the value net's
    normalized scale). Returns (loss, policy_grads, value_grads).
    """
    m = len(mb)
    new, cache = policy.dist(mb.obs)
    logp_new = policy.logp(new, mb.idx, mb.u)
    ratio = np.exp(logp_new - mb.logp)
    adv = mb.advantages

    surr = clipped_surrogate(ratio, adv, hp.clip)
    kl = policy.kl(mb.old, new)
    entropy = policy.entropy(new)
    policy_loss = float(-surr.mean() + kl_coeff * kl.mean() - hp.entropy_coeff * entropy.mean())

    active = np.where(
        adv >= 0.0, ratio <= 1.0 + hp.clip + 1e-12, ratio >= 1.0 - hp.clip - 1e-12
    )
    g_logp = -(ratio * adv * active) / m  # d(policy_loss)/d(logp_new)

    out_grad = np.zeros((m, policy.n_labels + policy.box_dim))
    log_std_grad = None
    if policy.n_labels:
        p_new = _softmax_batch(new.logits)
        onehot = np.zeros_like(p_new)
        onehot[np.arange(m), mb.idx] = 1.0
        grad_logits = g_logp[:, None] * (onehot - p_new)
        p_old = _softmax_batch(mb.old.logits)
        grad_logits += (kl_coeff / m) * (p_new - p_old)
        if hp.entropy_coeff:
            logp_full = new.logits - _logsumexp(new.logits)
            h = -(p_new * logp_full).sum(axis=1, keepdims=True)
            dh = -p_new * (logp_full + h)
            grad_logits -= (hp.entropy_coeff / m) * dh
        out_grad[:, : policy.n_labels] = grad_logits
    if policy.box_dim:
        sigma = new.sigma
        var = sigma ** 2
        z = (mb.u - new.mu) / sigma
        grad_mu = g_logp[:, None] * (z / sigma)
        grad_mu += (kl_coeff / m) * (new.mu - mb.old.mu) / var
        out_grad[:, policy.n_labels :] = grad_mu
        log_std_grad = (g_logp[:, None] * (z ** 2 - 1.0)).sum(axis=0)
        var_old = mb.old.sigma ** 2
        log_std_grad += (kl_coeff / m) * (
            1.0 - (var_old + (mb.old.mu - new.mu) ** 2) / var
        ).sum(axis=0)
        log_std_grad -= hp.entropy_coeff  # dH/dlog_std = 1 per sample, mean over m
        log_std_grad = np.asarray(log_std_grad)

    gw, gb = policy.net.backward(cache, out_grad)
    policy_grads = gw + gb
    if policy.log_std is not None:
        policy_grads = policy_grads + [log_std_grad]

    v_out, v_cache = value.net.forward(mb.obs)
    t_norm = value.normalize_targets(mb.value_targets)
    v_err = v_out[:, 0] - t_norm
    value_loss = float(hp.vf_coeff * 0.5 * np.mean(v_err ** 2))
    vw, vb = value.net.backward(v_cache, (hp.vf_coeff * v_err / m)[:, None])
    value_grads = vw + vb

    return policy_loss + value_loss, policy_grads, value_grads, policy_loss, value_loss


class PPOLearner:
    """One agent's policy + baseline + optimizer state."""

    def __init__(
        self,
        obs_dim: int,
        space: ActionSpace,
        hp: Hyperparams,
        seed: int,
        name: str,
        hidden: tuple[int, ...] | None = None,
    ):
        hidden = tuple(hidden if hidden is not None else hp.hidden_sizes)
        self.hp = hp
        self.policy = Policy(obs_dim, space, hidden, named_generator(seed, name, "policy"))
        self.value = ValueNet(obs_dim, hidden, named_generator(seed, name, "value"))
        self.pol_opt = make_optimizer(hp.optimizer, self.policy.params(), hp.lr, hp.momentum)
        self.val_opt = make_optimizer(hp.optimizer, self.value.params(), hp.lr, hp.momentum)
        self.kl_coeff = hp.kl_coeff
        self.shuffle_rng = named_generator(seed, name, "shuffle")

    def act(self, obs: np.ndarray, rng: np.random.Generator):
        return self.policy.act(obs, rng)

    def freeze(self) -> None:
        self.policy.freeze()
        self.value.freeze()


def policy_gradient_update(learner: PPOLearner, batch: Batch, hp: Hyperparams) -> UpdateStats:
    """Run the full minibatched update on one collected batch.

    Parameters stay untouched when any minibatch produces a non-finite
    loss; the stats carry the diagnostic instead.
    """
    if len(batch) == 0:
        raise ValueError("policy update requires a non-empty batch")
    adv = batch.advantages
    if hp.normalize_advantages and len(batch) > 1 and adv.std() > 1e-6:
        # degenerate (constant-advantage) batches pass through unscaled so
        # a uniformly positive advantage still pushes its action up
        adv = (adv - adv.mean()) / adv.std()
    batch = Batch(
        obs=batch.obs,
        idx=batch.idx,
        u=batch.u,
        logp=batch.logp,
        advantages=adv,
        value_targets=batch.value_targets,
        old=batch.old,
    )

    policy_snapshot = learner.policy.copy_params()
    value_snapshot = [p.copy() for p in learner.value.params()]
    stats = UpdateStats(kl_coeff=learner.kl_coeff)
    m = len(batch)
    mb_size = min(hp.minibatch_size, m)
    for _ in range(hp.sgd_iters):
        perm = learner.shuffle_rng.permutation(m)
        for start in range(0, m, mb_size):
            sel = perm[start : start + mb_size]
            mb = batch.take(sel)
            loss, pol_grads, val_grads, pol_loss, val_loss = loss_and_grads(
                learner.policy, learner.value, mb, hp, learner.kl_coeff
            )
            if not np.isfinite(loss) or any(
                not np.all(np.isfinite(g)) for g in pol_grads + val_grads
            ):
                learner.policy.set_params(policy_snapshot)
                for p, snap in zip(learner.value.params(), value_snapshot):
                    np.copyto(p, snap)
                stats.aborted = True
                stats.diagnostic = f"non-finite loss {loss!r}; update aborted"
                return stats
            learner.pol_opt.step(pol_grads)
            learner.val_opt.step(val_grads)
            stats.policy_loss = pol_loss
            stats.value_loss = val_loss

    new, _ = learner.policy.dist(batch.obs)
    stats.mean_kl = float(learner.policy.kl(batch.old, new).mean())
    if stats.mean_kl > 2.0 * hp.kl_target:
        learner.kl_coeff *= 1.5
    elif stats.mean_kl < 0.5 * hp.kl_target:
        learner.kl_coeff *= 0.5
    stats.kl_coeff = learner.kl_coeff
    learner.value.update_stats(batch.value_targets)
    return stats
