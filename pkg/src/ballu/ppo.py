"""Clipped-surrogate PPO with GAE over the numpy MLP stack.

Single-threaded, fully deterministic given a seed. The environment protocol
is minimal: reset() -> obs and step(action) -> (obs, reward, done); an
optional seed(int) method reseeds episode-level randomness.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .nn import Adam, MlpPolicy, ValueNet, clip_grad_norm


@dataclass(frozen=True)
class PpoHyperparams:
    batch_steps: int = 2048
    epochs: int = 10
    minibatch_size: int = 256
    clip_ratio: float = 0.2
    gamma: float = 0.99
    gae_lambda: float = 0.95
    learning_rate: float = 3e-4
    linear_lr_decay: bool = True
    value_coef: float = 0.5
    entropy_coef: float = 0.0
    max_grad_norm: float = 0.5


@dataclass
class RolloutBatch:
    observations: np.ndarray
    actions: np.ndarray          # raw (pre-clip) Gaussian samples
    rewards: np.ndarray
    dones: np.ndarray
    values: np.ndarray
    log_probs: np.ndarray
    advantages: np.ndarray = None
    returns: np.ndarray = None


class PpoDiverged(RuntimeError):
    def __init__(self, message, snapshot):
        super().__init__(message)
        self.snapshot = snapshot


def compute_gae(rewards, values, dones, last_value, gamma, lam):
    """Generalized advantage estimates and lambda-returns.

    lam=0 reduces to one-step TD advantages, lam=1 to discounted returns
    minus the value baseline.
    """
    rewards = np.asarray(rewards, dtype=float)
    values = np.asarray(values, dtype=float)
    dones = np.asarray(dones, dtype=bool)
    n = len(rewards)
    adv = np.zeros(n)
    gae = 0.0
    for t in reversed(range(n)):
        next_value = last_value if t == n - 1 else values[t + 1]
        mask = 0.0 if dones[t] else 1.0
        delta = rewards[t] + gamma * next_value * mask - values[t]
        gae = delta + gamma * lam * mask * gae
        adv[t] = gae
    return adv, adv + values


def normalize_advantages(adv):
    return (adv - adv.mean()) / (adv.std() + 1e-8)


def _collect(env, policy, value_net, steps, rng, obs_holder):
    obs_buf = np.zeros((steps, policy.obs_dim))
    act_buf = np.zeros((steps, policy.act_dim))
    rew_buf = np.zeros(steps)
    done_buf = np.zeros(steps, dtype=bool)
    val_buf = np.zeros(steps)
    logp_buf = np.zeros(steps)
    episode_returns = []
    ep_ret = obs_holder.get("ep_ret", 0.0)
    obs = obs_holder["obs"]
    for t in range(steps):
        policy.normalizer.update(obs)
        action, raw, logp = policy.sample_action(obs, rng)
        z = policy.normalizer.normalize(obs)
        value = float(value_net.forward(z)[0])
        next_obs, reward, done = env.step(action)
        obs_buf[t] = obs
        act_buf[t] = raw
        rew_buf[t] = reward
        done_buf[t] = done
        val_buf[t] = value
        logp_buf[t] = logp
        ep_ret += reward
        if done:
            episode_returns.append(ep_ret)
            ep_ret = 0.0
            next_obs = env.reset()
        obs = next_obs
    obs_holder["obs"] = obs
    obs_holder["ep_ret"] = ep_ret
    batch = RolloutBatch(observations=obs_buf, actions=act_buf,
                         rewards=rew_buf, dones=done_buf, values=val_buf,
                         log_probs=logp_buf)
    return batch, episode_returns


def _update(policy, value_net, optimizer, batch, hyper, lr, rng):
    n = len(batch.rewards)
    z_all = policy.normalizer.normalize(batch.observations)
    stats = {"policy_loss": 0.0, "value_loss": 0.0, "clip_frac": 0.0,
             "updates": 0}
    for _ in range(hyper.epochs):
        order = rng.permutation(n)
        for start in range(0, n, hyper.minibatch_size):
            idx = order[start:start + hyper.minibatch_size]
            z = z_all[idx]
            acts = batch.actions[idx]
            adv = batch.advantages[idx]
            old_logp = batch.log_probs[idx]
            rets = batch.returns[idx]
            m = len(idx)

            mean = policy.net.forward(z)
            std = np.exp(policy.log_std)
            zscore = (acts - mean) / std
            logp = -0.5 * np.sum(zscore ** 2 + 2.0 * policy.log_std
                                 + math.log(2.0 * math.pi), axis=1)
            ratio = np.exp(logp - old_logp)
            clipped = np.clip(ratio, 1.0 - hyper.clip_ratio,
                              1.0 + hyper.clip_ratio)
            surr = ratio * adv
            surr_clip = clipped * adv
            policy_loss = -np.mean(np.minimum(surr, surr_clip))
            # gradient flows only where the unclipped branch is active
            active = (surr <= surr_clip).astype(float)
            dlogp = -(adv * ratio * active) / m

            policy.zero_grads()
            dmean = dlogp[:, None] * (zscore / std)
            policy.net.backward(dmean)
            policy.log_std_grad = np.sum(
                dlogp[:, None] * (zscore ** 2 - 1.0), axis=0)

            values = value_net.forward(z)
            verr = values - rets
            value_loss = float(np.mean(verr ** 2))
            value_net.net.zero_grads()
            value_net.net.backward(
                (hyper.value_coef * 2.0 * verr / m)[:, None])

            grads = policy.grads() + value_net.net.grads()
            grads, _ = clip_grad_norm(grads, hyper.max_grad_norm)
            total_loss = policy_loss + hyper.value_coef * value_loss
            if not np.isfinite(total_loss):
                raise PpoDiverged("non-finite PPO loss", snapshot={
                    "policy_loss": float(policy_loss),
                    "value_loss": value_loss,
                    "adv_mean": float(adv.mean()),
                    "adv_std": float(adv.std()),
                    "param_norm": float(np.sqrt(sum(
                        (p ** 2).sum() for p in policy.params()))),
                })
            optimizer.step(grads, lr=lr)
            policy.clamp_log_std()
            stats["policy_loss"] += float(policy_loss)
            stats["value_loss"] += value_loss
            stats["clip_frac"] += float(np.mean(
                np.abs(ratio - 1.0) > hyper.clip_ratio))
            stats["updates"] += 1
    k = max(1, stats.pop("updates"))
    return {key: v / k for key, v in stats.items()}


def ppo_train(env, policy: MlpPolicy, hyper: PpoHyperparams,
              total_steps: int, seed: int = 0):
    """Train `policy` on `env`; returns (policy, per-iteration log)."""
    log = []
    if total_steps <= 0:
        return policy, log
    rng = np.random.default_rng(seed)
    if hasattr(env, "seed"):
        env.seed(seed)
    value_net = ValueNet(policy.obs_dim, rng)
    optimizer = Adam(policy.params() + value_net.net.params(),
                     lr=hyper.learning_rate)
    n_iters = max(1, math.ceil(total_steps / hyper.batch_steps))
    obs_holder = {"obs": env.reset(), "ep_ret": 0.0}
    for it in range(n_iters):
        batch, ep_returns = _collect(env, policy, value_net,
                                     hyper.batch_steps, rng, obs_holder)
        z_last = policy.normalizer.normalize(obs_holder["obs"])
        last_value = 0.0 if batch.dones[-1] else \
            float(value_net.forward(z_last)[0])
        adv, rets = compute_gae(batch.rewards, batch.values, batch.dones,
                                last_value, hyper.gamma, hyper.gae_lambda)
        batch.advantages = normalize_advantages(adv)
        batch.returns = rets
        lr = hyper.learning_rate
        if hyper.linear_lr_decay:
            lr *= 1.0 - it / n_iters
        stats = _update(policy, value_net, optimizer, batch, hyper, lr, rng)
        entry = {
            "iteration": it,
            "env_steps": (it + 1) * hyper.batch_steps,
            "mean_return": (float(np.mean(ep_returns))
                            if ep_returns else float("nan")),
            "episodes": len(ep_returns),
            "mean_reward": float(batch.rewards.mean()),
            **stats,
        }
        log.append(entry)
    policy.normalizer.frozen = True
    return policy, log


def evaluate_policy(env, policy, episodes=5, max_steps=10_000):
    """Deterministic (mean-action) episode returns."""
    returns = []
    for _ in range(episodes):
        obs = env.reset()
        total = 0.0
        for _ in range(max_steps):
            obs, reward, done = env.step(policy.mean_action(obs))
            total += reward
            if done:
                break
        returns.append(total)
    return returns
