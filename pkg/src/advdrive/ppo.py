"""On-policy PPO: complete-episode batches, GAE advantages, and a clipped
surrogate objective combined with an adaptive KL penalty, value loss, and
entropy bonus. Minibatch gradients flow through the hand-written network
backward pass and Adam.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import net
from .errors import ConfigurationError, NonFiniteError, PpoError
from .net import AdamState, NetworkParams

ADV_NORM_EPS = 1e-8
ON_POLICY_TOLERANCE = 1e-9


@dataclass
class PpoHyper:
    gamma: float = 0.99
    gae_lambda: float = 1.0
    clip: float = 0.3
    kl_target: float = 0.03
    kl_coef_init: float = 0.3
    vf_coef: float = 1.0
    ent_coef: float = 0.01
    minibatch: int = 64
    epochs_per_batch: int = 8
    train_batch: int = 128
    lr: float = 0.0006

    def validate(self):
        if not 0.0 <= self.gamma <= 1.0:
            raise ConfigurationError(f"gamma {self.gamma} outside [0, 1]")
        if not 0.0 <= self.gae_lambda <= 1.0:
            raise ConfigurationError(f"gae_lambda {self.gae_lambda} outside [0, 1]")
        if not 0.0 < self.clip <= 1.0:
            raise ConfigurationError(f"clip {self.clip} outside (0, 1]")
        for name in ("kl_target", "kl_coef_init", "vf_coef", "ent_coef", "lr"):
            if getattr(self, name) <= 0:
                raise ConfigurationError(f"{name} must be positive")
        for name in ("minibatch", "epochs_per_batch", "train_batch"):
            if getattr(self, name) < 1:
                raise ConfigurationError(f"{name} must be >= 1")


@dataclass
class Trajectory:
    """One agent's transitions for one episode, in order."""

    agent_id: str
    episode_index: int
    obs: list = field(default_factory=list)  # each (84, 84, 3) float64
    actions: list = field(default_factory=list)
    log_probs_old: list = field(default_factory=list)
    log_prob_vecs_old: list = field(default_factory=list)  # each (9,)
    values_old: list = field(default_factory=list)
    rewards: list = field(default_factory=list)
    dones: list = field(default_factory=list)

    def __len__(self) -> int:
        return len(self.rewards)

    def append(self, obs, action, log_prob, log_prob_vec, value, reward, done):
        self.obs.append(obs)
        self.actions.append(int(action))
        self.log_probs_old.append(float(log_prob))
        self.log_prob_vecs_old.append(np.asarray(log_prob_vec, dtype=np.float64))
        self.values_old.append(float(value))
        self.rewards.append(float(reward))
        self.dones.append(bool(done))

    def validate(self):
        if len(self) == 0:
            raise PpoError(f"empty trajectory for agent '{self.agent_id}'")
        if any(self.dones[:-1]) or not self.dones[-1]:
            raise PpoError("done must be set exactly on the final transition")


def compute_advantages(
    traj: Trajectory, gamma: float, lam: float
) -> tuple[np.ndarray, np.ndarray]:
    """GAE(gamma, lam); terminal bootstrap value is 0. Returns = adv + values."""
    n = len(traj)
    if n == 0:
        raise PpoError("cannot compute advantages of an empty trajectory")
    rewards = np.asarray(traj.rewards, dtype=np.float64)
    values = np.asarray(traj.values_old, dtype=np.float64)
    dones = np.asarray(traj.dones, dtype=bool)
    advantages = np.zeros(n, dtype=np.float64)
    last = 0.0
    for t in range(n - 1, -1, -1):
        nonterminal = 0.0 if dones[t] else 1.0
        next_value = values[t + 1] if t + 1 < n else 0.0
        delta = rewards[t] + gamma * next_value * nonterminal - values[t]
        last = delta + gamma * lam * nonterminal * last
        advantages[t] = last
    return advantages, advantages + values


@dataclass
class RolloutBatch:
    """Whole episodes stacked for one policy update; advantages already normalized."""

    obs: np.ndarray  # (N, 84, 84, 3)
    actions: np.ndarray  # (N,) int64
    log_probs_old: np.ndarray  # (N,)
    log_prob_vecs_old: np.ndarray  # (N, 9)
    values_old: np.ndarray  # (N,)
    advantages: np.ndarray  # (N,), mean 0 / std 1
    returns: np.ndarray  # (N,)
    n_steps: int
    n_episodes: int
    episode_rewards: np.ndarray  # (n_episodes,) undiscounted sums

    def slice(self, idx: np.ndarray) -> "Minibatch":
        return Minibatch(
            obs=self.obs[idx],
            actions=self.actions[idx],
            log_probs_old=self.log_probs_old[idx],
            log_prob_vecs_old=self.log_prob_vecs_old[idx],
            advantages=self.advantages[idx],
            returns=self.returns[idx],
        )


@dataclass
class Minibatch:
    obs: np.ndarray
    actions: np.ndarray
    log_probs_old: np.ndarray
    log_prob_vecs_old: np.ndarray
    advantages: np.ndarray
    returns: np.ndarray

    def __len__(self) -> int:
        return len(self.actions)


def build_rollout_batch(trajectories, gamma: float, lam: float) -> RolloutBatch:
    trajs = list(trajectories)
    if not trajs:
        raise PpoError("rollout batch needs at least one trajectory")
    adv_parts = []
    ret_parts = []
    for traj in trajs:
        traj.validate()
        adv, ret = compute_advantages(traj, gamma, lam)
        adv_parts.append(adv)
        ret_parts.append(ret)
    advantages = np.concatenate(adv_parts)
    mu = advantages.mean()
    sigma = advantages.std()
    normalized = (advantages - mu) / (sigma + ADV_NORM_EPS)
    return RolloutBatch(
        obs=np.stack([o for t in trajs for o in t.obs]),
        actions=np.array([a for t in trajs for a in t.actions], dtype=np.int64),
        log_probs_old=np.array([lp for t in trajs for lp in t.log_probs_old]),
        log_prob_vecs_old=np.stack([v for t in trajs for v in t.log_prob_vecs_old]),
        values_old=np.array([v for t in trajs for v in t.values_old]),
        advantages=normalized,
        returns=np.concatenate(ret_parts),
        n_steps=int(advantages.size),
        n_episodes=len(trajs),
        episode_rewards=np.array([float(np.sum(t.rewards)) for t in trajs]),
    )


def _loss_pieces(logits, values, mb: Minibatch, hyper: PpoHyper):
    logp = net.log_softmax(logits)
    n = len(mb)
    logp_act = logp[np.arange(n), mb.actions]
    ratio = np.exp(logp_act - mb.log_probs_old)
    if not np.all(np.isfinite(ratio)):
        bad = int(np.flatnonzero(~np.isfinite(ratio))[0])
        raise NonFiniteError(f"non-finite probability ratio at transition {bad}")
    clipped_ratio = np.clip(ratio, 1.0 - hyper.clip, 1.0 + hyper.clip)
    unclipped = ratio * mb.advantages
    clipped = clipped_ratio * mb.advantages
    objective = np.minimum(unclipped, clipped)

    probs = np.exp(logp)
    entropy = -(probs * logp).sum(axis=1)
    q = np.exp(mb.log_prob_vecs_old)
    kl = (q * (mb.log_prob_vecs_old - logp)).sum(axis=1)
    vf_err = values - mb.returns

    components = {
        "surrogate": float(-objective.mean()),
        "vf": float((vf_err**2).mean()),
        "entropy": float(entropy.mean()),
        "kl": float(kl.mean()),
    }
    # the KL penalty is added by the caller, scaled by the live coefficient
    partial_loss = (
        components["surrogate"]
        + hyper.vf_coef * components["vf"]
        - hyper.ent_coef * components["entropy"]
    )
    return logp, probs, ratio, unclipped, clipped, entropy, kl, vf_err, components, partial_loss


def ppo_loss(
    params: NetworkParams, mb: Minibatch, hyper: PpoHyper, kl_coef: float
) -> tuple[float, dict]:
    """Scalar PPO loss and its components (all components in loss convention
    except entropy and kl, which are reported as raw means)."""
    logits, values, _ = net.forward_batch(params, mb.obs)
    *_, components, loss = _loss_pieces(logits, values, mb, hyper)
    total = loss + kl_coef * components["kl"]
    if not np.isfinite(total):
        raise NonFiniteError("non-finite PPO loss")
    return float(total), components


def ppo_loss_grads(
    params: NetworkParams, mb: Minibatch, hyper: PpoHyper, kl_coef: float, obs_is_core: bool = False
) -> tuple[float, dict, dict]:
    """Loss, components, and exact parameter gradients for one minibatch."""
    fwd = net.forward_core if obs_is_core else net.forward_batch
    logits, values, cache = fwd(params, mb.obs)
    logp, probs, ratio, unclipped, clipped, entropy, kl, vf_err, components, loss = _loss_pieces(
        logits, values, mb, hyper
    )
    total = loss + kl_coef * components["kl"]
    if not np.isfinite(total):
        raise NonFiniteError("non-finite PPO loss")

    n = len(mb)
    onehot = np.zeros_like(logp)
    onehot[np.arange(n), mb.actions] = 1.0

    # surrogate: gradient flows only where the unclipped branch is active
    active = (unclipped <= clipped).astype(np.float64)
    coeff = -(active * ratio * mb.advantages) / n
    dlogits = coeff[:, None] * (onehot - probs)
    # entropy bonus: d(-ent_coef * mean(H)) with dH/dlogits = -p * (logp + H)
    dlogits += (hyper.ent_coef / n) * probs * (logp + entropy[:, None])
    # KL(old || new): gradient is p - q
    q = np.exp(mb.log_prob_vecs_old)
    dlogits += (kl_coef / n) * (probs - q)

    dvalues = (2.0 * hyper.vf_coef / n) * vf_err
    grads = net.backward(params, cache, dlogits, dvalues)
    return float(total), components, grads


def policy_log_probs(params: NetworkParams, batch: RolloutBatch) -> np.ndarray:
    logits, _, _ = net.forward_batch(params, batch.obs)
    return net.log_softmax(logits)


def adapt_kl_coef(kl_coef: float, mean_kl: float, kl_target: float) -> float:
    """RLlib-style two-sided adaptation: x1.5 above 2*target, x0.5 below target/2."""
    if mean_kl > 2.0 * kl_target:
        return kl_coef * 1.5
    if mean_kl < kl_target / 2.0:
        return kl_coef * 0.5
    return kl_coef


def update_policy(
    params: NetworkParams,
    adam_state: AdamState,
    batch: RolloutBatch,
    hyper: PpoHyper,
    kl_coef: float,
    rng: np.random.Generator,
) -> tuple[NetworkParams, AdamState, float, dict]:
    """Optimize one rollout batch: epochs of shuffled minibatches, Adam steps,
    then the adaptive-KL coefficient update measured over the whole batch.

    Raises PpoError if the batch was not collected under `params`
    (probability ratios at the start must be 1 within 1e-9).
    """
    core_obs = net.core_input(params.config, batch.obs)
    logits_start, _, _ = net.forward_core(params, core_obs)
    logp_start = net.log_softmax(logits_start)
    ratio_start = np.exp(logp_start[np.arange(batch.n_steps), batch.actions] - batch.log_probs_old)
    worst = float(np.abs(ratio_start - 1.0).max())
    if worst > ON_POLICY_TOLERANCE:
        raise PpoError(
            f"stale rollout batch: probability ratio deviates from 1 by {worst:.3e} at start"
        )

    last_loss = 0.0
    last_components: dict = {}
    grad_steps = 0
    for _ in range(hyper.epochs_per_batch):
        order = rng.permutation(batch.n_steps)
        for lo in range(0, batch.n_steps, hyper.minibatch):
            idx = order[lo : lo + hyper.minibatch]
            mb = Minibatch(
                obs=core_obs[idx],
                actions=batch.actions[idx],
                log_probs_old=batch.log_probs_old[idx],
                log_prob_vecs_old=batch.log_prob_vecs_old[idx],
                advantages=batch.advantages[idx],
                returns=batch.returns[idx],
            )
            last_loss, last_components, grads = ppo_loss_grads(
                params, mb, hyper, kl_coef, obs_is_core=True
            )
            params, adam_state = net.adam_update(params, grads, adam_state, hyper.lr)
            grad_steps += 1

    logits_final, _, _ = net.forward_core(params, core_obs)
    logp_final = net.log_softmax(logits_final)
    q = np.exp(batch.log_prob_vecs_old)
    mean_kl = float((q * (batch.log_prob_vecs_old - logp_final)).sum(axis=1).mean())
    mean_entropy = float(net.entropy_from_logp(logp_final).mean())
    new_kl_coef = adapt_kl_coef(kl_coef, mean_kl, hyper.kl_target)

    stats = {
        "n_steps": batch.n_steps,
        "n_episodes": batch.n_episodes,
        "grad_steps": grad_steps,
        "loss": last_loss,
        "surrogate": last_components.get("surrogate"),
        "vf": last_components.get("vf"),
        "mean_kl": mean_kl,
        "mean_entropy": mean_entropy,
        "kl_coef": kl_coef,
        "kl_coef_next": new_kl_coef,
        "mean_episode_reward": float(batch.episode_rewards.mean()),
    }
    return params, adam_state, new_kl_coef, stats
