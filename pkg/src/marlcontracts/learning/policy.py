"""Stochastic policies over discrete, box, and hybrid action spaces.

Discrete components use a softmax head. Box components use a squashed
Gaussian: the net outputs a pre-squash mean, a state-independent log-std is
learned alongside, and samples map into the box through a sigmoid. Because
the squash is a fixed diffeomorphism its Jacobian cancels from probability
ratios and KL divergences, so log-probabilities are kept in pre-squash
space throughout.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..game import ActionSpace
from .nets import MLP

_LOG_2PI = float(np.log(2.0 * np.pi))
_U_CLIP = 12.0  # pre-squash values this large are numerically saturated


def _sigmoid(u):
    return 1.0 / (1.0 + np.exp(-u))


def _logit(x):
    x = np.clip(x, 1e-9, 1.0 - 1e-9)
    return np.log(x) - np.log1p(-x)


@dataclass
class DistSnapshot:
    """Policy distribution at collection time, kept for ratios and KL."""

    logits: np.ndarray | None  # (M, K)
    mu: np.ndarray | None      # (M, D)
    sigma: np.ndarray | None   # (D,)


class Policy:
    """Action sampler plus everything PPO needs to differentiate it."""

    def __init__(self, obs_dim: int, space: ActionSpace, hidden, rng: np.random.Generator):
        self.space = space
        self.n_labels = space.n_labels
        self.box_dim = space.box_dim
        out_dim = self.n_labels + self.box_dim
        self.net = MLP((obs_dim,) + tuple(hidden) + (out_dim,), rng, out_scale=0.01)
        self.log_std = np.zeros(self.box_dim) if self.box_dim else None

    # -- parameters ------------------------------------------------------

    def params(self) -> list[np.ndarray]:
        out = self.net.params()
        if self.log_std is not None:
            out = out + [self.log_std]
        return out

    def copy_params(self) -> list[np.ndarray]:
        return [p.copy() for p in self.params()]

    def set_params(self, params) -> None:
        n_net = len(self.net.params())
        self.net.set_params(params[:n_net])
        if self.log_std is not None:
            np.copyto(self.log_std, params[n_net])

    def freeze(self) -> None:
        self.net.freeze()
        if self.log_std is not None:
            self.log_std.setflags(write=False)

    @property
    def frozen(self) -> bool:
        return self.net.frozen

    # -- distributions ---------------------------------------------------

    def dist(self, obs_batch: np.ndarray):
        out, cache = self.net.forward(obs_batch)
        logits = out[:, : self.n_labels] if self.n_labels else None
        mu = out[:, self.n_labels :] if self.box_dim else None
        sigma = np.exp(self.log_std) if self.log_std is not None else None
        return DistSnapshot(logits, mu, sigma), cache

    def act(self, obs: np.ndarray, rng: np.random.Generator):
        """Sample an env-format action; returns (action, idx, u, logp)."""
        out = self.net(obs[None, :])[0]
        idx = None
        u = None
        logp = 0.0
        if self.n_labels:
            probs = _softmax(out[: self.n_labels])
            idx = int(np.searchsorted(np.cumsum(probs), rng.random(), side="right"))
            idx = min(idx, self.n_labels - 1)
            logp += float(np.log(probs[idx] + 1e-300))
        if self.box_dim:
            mu = out[self.n_labels :]
            sigma = np.exp(self.log_std)
            eps = rng.standard_normal(self.box_dim)
            u = np.clip(mu + sigma * eps, -_U_CLIP, _U_CLIP)
            logp += float(_gauss_logp(u[None, :], mu[None, :], sigma)[0])
        return self._to_env_action(idx, u), idx, u, logp

    def mode_action(self, obs: np.ndarray):
        """Greedy action (argmax label, mean of the squashed Gaussian)."""
        snap, _ = self.dist(obs[None, :])
        idx = int(np.argmax(snap.logits[0])) if self.n_labels else None
        u = snap.mu[0] if self.box_dim else None
        return self._to_env_action(idx, u)

    def _to_env_action(self, idx, u):
        vec = None
        if u is not None:
            vec = self.space.low + (self.space.high - self.space.low) * _sigmoid(u)
        if idx is not None and vec is not None:
            return (idx, vec)
        return idx if idx is not None else vec

    def logp(self, snap: DistSnapshot, idx: np.ndarray | None, u: np.ndarray | None) -> np.ndarray:
        total = 0.0
        if self.n_labels:
            logits = snap.logits - _logsumexp(snap.logits)
            total = total + logits[np.arange(len(idx)), idx]
        if self.box_dim:
            total = total + _gauss_logp(u, snap.mu, snap.sigma)
        return np.asarray(total)

    def kl(self, old: DistSnapshot, new: DistSnapshot) -> np.ndarray:
        """Per-sample KL(old || new)."""
        total = 0.0
        if self.n_labels:
            p_old = _softmax_batch(old.logits)
            log_old = old.logits - _logsumexp(old.logits)
            log_new = new.logits - _logsumexp(new.logits)
            total = total + (p_old * (log_old - log_new)).sum(axis=1)
        if self.box_dim:
            var_old = old.sigma ** 2
            var_new = new.sigma ** 2
            total = total + (
                np.log(new.sigma / old.sigma)
                + (var_old + (old.mu - new.mu) ** 2) / (2.0 * var_new)
                - 0.5
            ).sum(axis=1)
        return np.asarray(total)

    def entropy(self, snap: DistSnapshot) -> np.ndarray:
        batch = len(snap.logits) if snap.logits is not None else len(snap.mu)
        total = np.zeros(batch)
        if self.n_labels:
            p = _softmax_batch(snap.logits)
            logp = snap.logits - _logsumexp(snap.logits)
            total = total + -(p * logp).sum(axis=1)
        if self.box_dim:
            total = total + (np.log(snap.sigma) + 0.5 * (1.0 + _LOG_2PI)).sum()
        return total


def _softmax(z: np.ndarray) -> np.ndarray:
    z = z - z.max()
    e = np.exp(z)
    return e / e.sum()


def _softmax_batch(z: np.ndarray) -> np.ndarray:
    z = z - z.max(axis=1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=1, keepdims=True)


def _logsumexp(z: np.ndarray) -> np.ndarray:
    m = z.max(axis=1, keepdims=True)
    return m + np.log(np.exp(z - m).sum(axis=1, keepdims=True))


def _gauss_logp(u: np.ndarray, mu: np.ndarray, sigma: np.ndarray) -> np.ndarray:
    z = (u - mu) / sigma
    return (-0.5 * z ** 2 - np.log(sigma) - 0.5 * _LOG_2PI).sum(axis=1)


class ValueNet:
    """State-value baseline with a running normalization of its targets.

    The net regresses normalized returns; predictions are de-normalized
    with the stored statistics, so environments with very large returns
    (the merge penalties) stay trainable at the paper's learning rate.
    """

    def __init__(self, obs_dim: int, hidden, rng: np.random.Generator):
        self.net = MLP((obs_dim,) + tuple(hidden) + (1,), rng, out_scale=1.0)
        self.target_mean = 0.0
        self.target_std = 1.0

    def predict(self, obs_batch: np.ndarray) -> np.ndarray:
        out, _ = self.net.forward(obs_batch)
        return out[:, 0] * self.target_std + self.target_mean

    def normalize_targets(self, targets: np.ndarray) -> np.ndarray:
        return (targets - self.target_mean) / self.target_std

    def update_stats(self, targets: np.ndarray, rate: float = 0.2) -> None:
        batch_mean = float(targets.mean())
        batch_std = float(targets.std()) + 1e-6
        self.target_mean += rate * (batch_mean - self.target_mean)
        self.target_std += rate * (batch_std - self.target_std)

    def params(self) -> list[np.ndarray]:
        return self.net.params()

    def freeze(self) -> None:
        self.net.freeze()
