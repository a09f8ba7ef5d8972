import math

import numpy as np
import pytest

from conftest import assert_relu_margin, fd_gradient, grad_close, tiny_net_config

from advdrive import net, ppo
from advdrive.errors import PpoError
from advdrive.ppo import (
    Minibatch,
    PpoHyper,
    Trajectory,
    adapt_kl_coef,
    build_rollout_batch,
    compute_advantages,
    ppo_loss,
    ppo_loss_grads,
    update_policy,
)

OBS_SEED = 777
TINY_SEED = 48


def probe_obs(n=1):
    rng = np.random.default_rng(OBS_SEED)
    return rng.uniform(0.05, 0.95, size=(n, 84, 84, 3))


def margin_params(config, seed, bias_boost=0.07):
    params = net.init_params(config, seed)
    for key in params.arrays:
        if key.endswith("/b"):
            params.arrays[key] += bias_boost
    return params


def make_trajectory(params, n, rewards=None, values=None, rng_seed=5, episode_index=0):
    """Transitions whose log-probs come from `params` (on-policy by construction)."""
    rng = np.random.default_rng(rng_seed)
    obs = rng.uniform(0.05, 0.95, size=(n, 84, 84, 3))
    traj = Trajectory(agent_id="victim1", episode_index=episode_index)
    for t in range(n):
        logits, value = net.forward(params, obs[t])
        chosen = net.sample_action(logits, rng)
        traj.append(
            obs[t],
            chosen.index,
            chosen.log_prob,
            chosen.log_prob_vector,
            value if values is None else values[t],
            rng.normal() if rewards is None else rewards[t],
            t == n - 1,
        )
    return traj


class TestAdvantages:
    def test_hand_evaluated_discounted_returns(self):
        traj = Trajectory(agent_id="a", episode_index=0)
        for t, r in enumerate([1.0, 1.0, 1.0]):
            traj.append(np.zeros((84, 84, 3)), 0, 0.0, np.zeros(9), 0.0, r, t == 2)
        adv, ret = compute_advantages(traj, gamma=0.99, lam=1.0)
        expected = [1.0 + 0.99 + 0.99**2, 1.0 + 0.99, 1.0]
        assert np.allclose(ret, expected, atol=1e-12)
        assert np.allclose(adv, expected, atol=1e-12)  # values are zero

    def test_zero_rewards_zero_values_zero_advantages(self):
        traj = Trajectory(agent_id="a", episode_index=0)
        for t in range(5):
            traj.append(np.zeros((84, 84, 3)), 0, 0.0, np.zeros(9), 0.0, 0.0, t == 4)
        adv, ret = compute_advantages(traj, gamma=0.99, lam=1.0)
        assert np.all(adv == 0.0) and np.all(ret == 0.0)

    def test_gamma_zero_is_one_step(self, rng):
        traj = Trajectory(agent_id="a", episode_index=0)
        rewards = rng.normal(size=6)
        values = rng.normal(size=6)
        for t in range(6):
            traj.append(np.zeros((84, 84, 3)), 0, 0.0, np.zeros(9), values[t], rewards[t], t == 5)
        adv, ret = compute_advantages(traj, gamma=0.0, lam=1.0)
        assert np.array_equal(adv, rewards - values)
        assert np.allclose(ret, rewards, atol=1e-12)

    def test_lambda_one_returns_are_reward_to_go(self, rng):
        traj = Trajectory(agent_id="a", episode_index=0)
        rewards = rng.normal(size=8)
        values = rng.normal(size=8)
        for t in range(8):
            traj.append(np.zeros((84, 84, 3)), 0, 0.0, np.zeros(9), values[t], rewards[t], t == 7)
        _, ret = compute_advantages(traj, gamma=0.9, lam=1.0)
        expected = np.zeros(8)
        acc = 0.0
        for t in range(7, -1, -1):
            acc = rewards[t] + 0.9 * acc
            expected[t] = acc
        assert np.allclose(ret, expected, atol=1e-12)

    def test_empty_trajectory_rejected(self):
        with pytest.raises(PpoError):
            compute_advantages(Trajectory(agent_id="a", episode_index=0), 0.99, 1.0)

    def test_done_must_be_last_only(self):
        traj = Trajectory(agent_id="a", episode_index=0)
        traj.append(np.zeros((84, 84, 3)), 0, 0.0, np.zeros(9), 0.0, 1.0, True)
        traj.append(np.zeros((84, 84, 3)), 0, 0.0, np.zeros(9), 0.0, 1.0, True)
        with pytest.raises(PpoError):
            traj.validate()


class TestRolloutBatch:
    def test_advantage_normalization(self):
        params = net.init_params(tiny_net_config(), 2)
        trajs = [make_trajectory(params, 20, rng_seed=s, episode_index=s) for s in range(3)]
        batch = build_rollout_batch(trajs, 0.99, 1.0)
        assert abs(batch.advantages.mean()) < 1e-9
        assert abs(batch.advantages.std() - 1.0) < 1e-6
        assert batch.n_steps == 60 and batch.n_episodes == 3

    def test_whole_episodes_only(self):
        params = net.init_params(tiny_net_config(), 2)
        t1 = make_trajectory(params, 7, rng_seed=1, episode_index=0)
        t2 = make_trajectory(params, 9, rng_seed=2, episode_index=1)
        batch = build_rollout_batch([t1, t2], 0.99, 1.0)
        assert batch.n_steps == 16
        assert batch.episode_rewards.shape == (2,)


class TestLoss:
    def setup_method(self):
        self.params = margin_params(tiny_net_config(), TINY_SEED)
        self.hyper = PpoHyper()

    def identity_minibatch(self, n=4, adv=None):
        obs = probe_obs(n)
        core = net.core_input(self.params.config, obs)
        logits, values, _ = net.forward_core(self.params, core)
        logp = net.log_softmax(logits)
        actions = np.arange(n) % 9
        return Minibatch(
            obs=obs,
            actions=actions,
            log_probs_old=logp[np.arange(n), actions],
            log_prob_vecs_old=logp,
            advantages=np.ones(n) if adv is None else np.asarray(adv, dtype=float),
            returns=values.copy(),
        )

    def test_identity_policy_surrogate_is_minus_mean_advantage(self, rng):
        adv = rng.normal(size=6)
        mb = self.identity_minibatch(6, adv=adv)
        _, comps = ppo_loss(self.params, mb, self.hyper, kl_coef=0.3)
        assert comps["surrogate"] == pytest.approx(-adv.mean(), abs=1e-12)
        assert comps["kl"] == pytest.approx(0.0, abs=1e-15)

    def test_clip_boundary_positive_advantage(self):
        mb = self.identity_minibatch(1, adv=[1.0])
        mb.log_probs_old = mb.log_probs_old - math.log(2.0)  # ratio = 2.0
        _, comps = ppo_loss(self.params, mb, self.hyper, kl_coef=0.0)
        # min(2.0 * 1, 1.3 * 1) -> clipped value 1.3
        assert comps["surrogate"] == pytest.approx(-1.3, abs=1e-12)

    def test_clip_boundary_negative_advantage(self):
        mb = self.identity_minibatch(1, adv=[-1.0])
        mb.log_probs_old = mb.log_probs_old + math.log(2.0)  # ratio = 0.5
        _, comps = ppo_loss(self.params, mb, self.hyper, kl_coef=0.0)
        # min(0.5 * -1, 0.7 * -1) = -0.7: the clipped branch is the pessimistic one
        assert comps["surrogate"] == pytest.approx(0.7, abs=1e-12)

    def test_full_loss_matches_scalar_oracle(self):
        n = 3
        mb = self.identity_minibatch(n, adv=[0.5, -1.2, 2.0])
        mb.log_probs_old = mb.log_probs_old + np.array([0.0, math.log(2.0), -math.log(2.0)])
        kl_coef = 0.25
        loss, comps = ppo_loss(self.params, mb, self.hyper, kl_coef)

        # independent recomputation with plain python/numpy arithmetic
        logits, values, _ = net.forward_batch(self.params, mb.obs)
        surr_terms = []
        ent_terms = []
        kl_terms = []
        vf_terms = []
        for i in range(n):
            z = logits[i] - logits[i].max()
            p = np.exp(z) / np.exp(z).sum()
            logp = np.log(p)
            ratio = math.exp(logp[mb.actions[i]] - mb.log_probs_old[i])
            clipped = min(max(ratio, 1 - 0.3), 1 + 0.3)
            surr_terms.append(min(ratio * mb.advantages[i], clipped * mb.advantages[i]))
            ent_terms.append(float(-(p * logp).sum()))
            q = np.exp(mb.log_prob_vecs_old[i])
            kl_terms.append(float((q * (mb.log_prob_vecs_old[i] - logp)).sum()))
            vf_terms.append((values[i] - mb.returns[i]) ** 2)
        expected = (
            -np.mean(surr_terms)
            + self.hyper.vf_coef * np.mean(vf_terms)
            - self.hyper.ent_coef * np.mean(ent_terms)
            + kl_coef * np.mean(kl_terms)
        )
        assert loss == pytest.approx(expected, abs=1e-9)

    def test_non_finite_ratio_names_transition(self):
        mb = self.identity_minibatch(2)
        mb.log_probs_old = mb.log_probs_old.copy()
        mb.log_probs_old[1] = -np.inf
        with pytest.raises(PpoError, match="transition 1"):
            ppo_loss(self.params, mb, self.hyper, kl_coef=0.1)

    def test_loss_gradient_matches_central_differences(self):
        # ratios pushed off 1 and one transition into each clip branch
        mb = self.identity_minibatch(4, adv=[0.8, -1.1, 1.7, -0.4])
        mb.log_probs_old = mb.log_probs_old + np.array(
            [0.0, math.log(2.0), -math.log(2.0), 0.1]
        )
        kl_coef = 0.2
        _, _, cache = net.forward_batch(self.params, mb.obs)
        assert_relu_margin(cache)
        _, _, analytic = ppo_loss_grads(self.params, mb, self.hyper, kl_coef)
        numeric = fd_gradient(
            lambda p: ppo_loss(p, mb, self.hyper, kl_coef)[0], self.params
        )
        for name, _ in self.params.config.param_layout():
            ok, worst = grad_close(analytic[name], numeric[name])
            assert ok, f"{name}: rel err {worst:.2e}"


class TestAdaptiveKl:
    def test_increase_above_twice_target(self):
        assert adapt_kl_coef(0.3, 0.1, 0.03) == 0.3 * 1.5

    def test_decrease_below_half_target(self):
        assert adapt_kl_coef(0.3, 0.01, 0.03) == 0.3 * 0.5

    def test_unchanged_in_band(self):
        for kl in (0.015, 0.03, 0.0599):
            assert adapt_kl_coef(0.3, kl, 0.03) == 0.3


class TestUpdatePolicy:
    def test_on_policy_identity_at_start(self):
        params = net.init_params(tiny_net_config(), 3)
        batch = build_rollout_batch([make_trajectory(params, 16)], 0.99, 1.0)
        logits, _, _ = net.forward_batch(params, batch.obs)
        logp = net.log_softmax(logits)
        ratios = np.exp(logp[np.arange(batch.n_steps), batch.actions] - batch.log_probs_old)
        assert np.all(np.abs(ratios - 1.0) <= 1e-9)

    def test_stale_batch_rejected(self):
        params_a = net.init_params(tiny_net_config(), 3)
        params_b = net.init_params(tiny_net_config(), 4)
        batch = build_rollout_batch([make_trajectory(params_a, 12)], 0.99, 1.0)
        with pytest.raises(PpoError, match="stale"):
            update_policy(
                params_b, net.init_adam_state(params_b), batch, PpoHyper(), 0.3,
                np.random.default_rng(0),
            )

    def test_zero_advantage_batch_does_not_reduce_entropy(self):
        params = net.init_params(tiny_net_config(), 3)
        traj = make_trajectory(params, 24, rewards=np.zeros(24), values=np.zeros(24))
        batch = build_rollout_batch([traj], 0.99, 1.0)
        assert np.all(batch.advantages == 0.0)

        logits0, _, _ = net.forward_batch(params, batch.obs)
        entropy_before = float(net.entropy_from_logp(net.log_softmax(logits0)).mean())
        new_params, _, _, stats = update_policy(
            params, net.init_adam_state(params), batch, PpoHyper(), 0.3,
            np.random.default_rng(1),
        )
        logits1, _, _ = net.forward_batch(new_params, batch.obs)
        entropy_after = float(net.entropy_from_logp(net.log_softmax(logits1)).mean())
        assert entropy_after >= entropy_before - 1e-12

    def test_kl_coef_adapts_through_update(self):
        # a hot learning rate moves the policy; thresholds bracket the measured
        # KL from both sides to exercise the 1.5x and 0.5x adaptations
        params = net.init_params(tiny_net_config(), 3)
        batch = build_rollout_batch([make_trajectory(params, 16)], 0.99, 1.0)
        hot = PpoHyper(lr=0.05, kl_target=0.004)
        _, _, kl_up, stats = update_policy(
            params.copy(), net.init_adam_state(params), batch, hot, 0.3,
            np.random.default_rng(2),
        )
        assert stats["mean_kl"] > 2 * hot.kl_target
        assert kl_up == 0.3 * 1.5

        lax = PpoHyper(lr=0.05, kl_target=1.0)
        _, _, kl_down, stats = update_policy(
            params.copy(), net.init_adam_state(params), batch, lax, 0.3,
            np.random.default_rng(2),
        )
        assert stats["mean_kl"] < lax.kl_target / 2
        assert kl_down == 0.3 * 0.5

    def test_update_is_deterministic(self):
        params = net.init_params(tiny_net_config(), 3)
        batch = build_rollout_batch([make_trajectory(params, 20)], 0.99, 1.0)
        outs = []
        for _ in range(2):
            p, _, _, _ = update_policy(
                params.copy(), net.init_adam_state(params), batch, PpoHyper(), 0.3,
                np.random.default_rng(7),
            )
            outs.append(np.concatenate([p.arrays[k].ravel() for k in sorted(p.arrays)]))
        assert np.array_equal(outs[0], outs[1])
