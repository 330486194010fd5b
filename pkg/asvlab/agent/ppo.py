# -*- coding: utf-8 -*-
"""Proximal policy optimization with generalized advantage estimation"""

import logging
from dataclasses import dataclass
from typing import Optional

import numpy as np
import pandas as pd

from asvlab.core import AsvLabError, AsvLabValidationError, TrainingDiverged, UsageError
from asvlab.neural import (
    Tensor,
    adam_step,
    backward,
    clip,
    clip_grad_norm,
    exp,
    minimum,
    square,
)
from asvlab.agent.env import NAV_DIM, EnvConfig, RewardConfig, VesselEnv
from asvlab.agent.policy import Policy, gaussian_entropy, gaussian_log_prob
from asvlab.report import summarize_episodes
from asvlab.utils.process import parallel_map

logger = logging.getLogger("asvlab.agent.ppo")

EPISODE_COLUMNS = [
    "episode",
    "timesteps",
    "steps",
    "progress",
    "mean_cte",
    "cumulative_reward",
    "collision",
    "termination_reason",
]
TRAJECTORY_COLUMNS = ["t", "x_n", "y_n", "psi", "u", "v", "r", "reward"]


@dataclass(frozen=True)
class PpoConfig:
    learning_rate: float = 2e-4
    n_steps: int = 1024
    batch_size: int = 32
    n_epochs: int = 4
    gamma: float = 0.999
    gae_lambda: float = 0.98
    clip_range: float = 0.2
    normalize_advantage: bool = True
    ent_coef: float = 0.01
    vf_coef: float = 0.5
    max_grad_norm: float = 0.5
    total_timesteps: int = 3000000
    hidden: int = 64
    log_std_init: float = 0.0

    def __post_init__(self):
        for key in ("n_steps", "batch_size", "n_epochs", "total_timesteps", "hidden"):
            if getattr(self, key) < 1:
                raise AsvLabValidationError("invalid_config_value", key=key, value=getattr(self, key))
        for key in ("gamma", "gae_lambda"):
            if not 0 <= getattr(self, key) <= 1:
                raise AsvLabValidationError("invalid_config_value", key=key, value=getattr(self, key))
        if not self.learning_rate > 0 or not self.clip_range > 0:
            raise AsvLabValidationError(
                "invalid_config_value", key="learning_rate", value=self.learning_rate
            )


# Advantages -----------------------------------------------------------


def gae(rewards, values, dones, last_value, gamma, lam):
    """Generalized advantage estimation over one rollout

    dones[t] marks the end of an episode after step t, which cuts the
    bootstrap from the next value.

    Returns:
        (advantages, returns) with returns = advantages + values

    """
    rewards = np.asarray(rewards, dtype=np.float64)
    values = np.asarray(values, dtype=np.float64)
    dones = np.asarray(dones, dtype=np.float64)
    if not len(rewards) == len(values) == len(dones):
        raise AsvLabValidationError(
            "gae_length_mismatch",
            rewards=len(rewards),
            values=len(values),
            dones=len(dones),
        )

    advantages = np.zeros_like(rewards)
    running = 0.0
    for t in reversed(range(len(rewards))):
        next_value = last_value if t == len(rewards) - 1 else values[t + 1]
        nonterminal = 1.0 - dones[t]
        delta = rewards[t] + gamma * next_value * nonterminal - values[t]
        running = delta + gamma * lam * nonterminal * running
        advantages[t] = running
    return advantages, advantages + values


class RolloutBuffer:
    """Fixed capacity storage of one rollout"""

    def __init__(self, capacity, n_rays, act_dim=2):
        self.capacity = capacity
        self.nav = np.zeros((capacity, NAV_DIM), dtype=np.float32)
        self.scan = np.zeros((capacity, n_rays), dtype=np.float32)
        self.actions = np.zeros((capacity, act_dim))
        self.log_probs = np.zeros(capacity)
        self.values = np.zeros(capacity)
        self.rewards = np.zeros(capacity)
        self.dones = np.zeros(capacity)
        self.advantages = None
        self.returns = None
        self.size = 0

    @property
    def full(self):
        return self.size == self.capacity

    def reset(self):
        self.size = 0
        self.advantages = self.returns = None

    def add(self, obs, action, log_prob, value, reward, done):
        if self.full:
            raise UsageError("buffer_full", capacity=self.capacity)
        i = self.size
        self.nav[i] = obs["nav"]
        self.scan[i] = obs["scan"]
        self.actions[i] = action
        self.log_probs[i] = log_prob
        self.values[i] = value
        self.rewards[i] = reward
        self.dones[i] = float(done)
        self.size += 1

    def compute(self, last_value, gamma, lam):
        if not self.full:
            raise UsageError("buffer_not_full", size=self.size, capacity=self.capacity)
        self.advantages, self.returns = gae(
            self.rewards, self.values, self.dones, last_value, gamma, lam
        )


# Update ---------------------------------------------------------------


def normalize(advantages):
    return (advantages - advantages.mean()) / (advantages.std() + 1e-8)


def ppo_losses(policy: Policy, nav, scans, actions, old_log_probs, advantages, returns, cfg: PpoConfig):
    """Clipped surrogate, value and entropy terms of one minibatch

    Returns:
        (loss, stats) where loss is the scalar tensor to minimize

    """
    dtype = policy.ac.store.dtype
    obs = policy.observe(nav, scans)
    mean = policy.ac.actor(obs)
    log_prob = gaussian_log_prob(Tensor(np.asarray(actions, dtype=dtype)), mean, policy.ac.log_std)
    ratio = exp(log_prob - np.asarray(old_log_probs, dtype=dtype))

    adv = np.asarray(advantages, dtype=dtype)
    surrogate = minimum(ratio * adv, clip(ratio, 1.0 - cfg.clip_range, 1.0 + cfg.clip_range) * adv)
    policy_loss = -surrogate.mean()
    value_loss = square(policy.ac.critic(obs) - np.asarray(returns, dtype=dtype)).mean()
    entropy = gaussian_entropy(policy.ac.log_std)
    loss = policy_loss + value_loss * cfg.vf_coef - entropy * cfg.ent_coef

    stats = {
        "policy_loss": policy_loss.item(),
        "value_loss": value_loss.item(),
        "entropy": entropy.item(),
        "clip_fraction": float(np.mean(np.abs(ratio.data - 1.0) > cfg.clip_range)),
    }
    return loss, stats


def ppo_update(buffer: RolloutBuffer, policy: Policy, cfg: PpoConfig, rng):
    """n_epochs passes of shuffled minibatches over a computed rollout

    Returns:
        The mean policy loss, value loss, entropy and clip fraction

    """
    if buffer.advantages is None:
        raise UsageError("buffer_not_computed")

    sums = {"policy_loss": 0.0, "value_loss": 0.0, "entropy": 0.0, "clip_fraction": 0.0}
    count = 0
    for _ in range(cfg.n_epochs):
        order = rng.permutation(buffer.size)
        for start in range(0, buffer.size, cfg.batch_size):
            idx = order[start : start + cfg.batch_size]
            adv = buffer.advantages[idx]
            if cfg.normalize_advantage and len(idx) > 1:
                adv = normalize(adv)

            for store in policy.stores:
                store.zero_grad()
            loss, stats = ppo_losses(
                policy,
                buffer.nav[idx],
                buffer.scan[idx],
                buffer.actions[idx],
                buffer.log_probs[idx],
                adv,
                buffer.returns[idx],
                cfg,
            )
            if not np.isfinite(loss.item()):
                raise TrainingDiverged("ppo_training_diverged", **stats)
            backward(loss)
            clip_grad_norm(policy.stores, cfg.max_grad_norm)
            for store in policy.stores:
                adam_step(store, cfg.learning_rate)

            for key in sums:
                sums[key] += stats[key]
            count += 1
    return {key: value / max(count, 1) for key, value in sums.items()}


# Training and evaluation ----------------------------------------------


@dataclass
class TrainedAgent:
    policy: Policy
    episodes: pd.DataFrame
    updates: pd.DataFrame
    encoder_sha256: str = ""


def _episode_row(episode, timesteps, info):
    return {
        "episode": episode,
        "timesteps": timesteps,
        "steps": info["t"],
        "progress": info["progress"],
        "mean_cte": info["mean_cte"],
        "cumulative_reward": info["cumulative_reward"],
        "collision": int(info["collided"]),
        "termination_reason": info["termination_reason"],
    }


def train_agent(
    mode,
    cfg: PpoConfig = PpoConfig(),
    env_cfg: EnvConfig = EnvConfig(),
    reward_cfg: RewardConfig = RewardConfig(),
    seed=0,
    ckpt=None,
    policy: Optional[Policy] = None,
) -> TrainedAgent:
    """Train a policy on the training scenario stream

    In locked modes the encoder digest is checked after every update.
    """
    policy = policy or Policy.create(mode, ckpt, seed, cfg.hidden, cfg.log_std_init)
    env = VesselEnv(env_cfg, reward_cfg, kind="train", scenario_seed=seed)
    buffer = RolloutBuffer(cfg.n_steps, env.sensor.n_rays)
    rng = np.random.default_rng([int(seed), 0xBB0])
    locked_digest = policy.extractor.digest()

    episodes, updates = [], []
    timesteps = 0

    def fresh_episode(obs, info):
        while env.done:
            episodes.append(_episode_row(len(episodes), timesteps, info))
            obs, info = env.reset()
        return obs, info

    obs, info = env.reset(seed=int(seed))
    obs, info = fresh_episode(obs, info)

    while timesteps < cfg.total_timesteps:
        buffer.reset()
        while not buffer.full:
            action, log_prob, value = policy.act(obs, rng)
            next_obs, reward, terminated, truncated, info = env.step(action)
            timesteps += 1
            if truncated and not terminated:
                reward += cfg.gamma * policy.value(next_obs)
            buffer.add(obs, action, log_prob, value, reward, terminated or truncated)
            obs = next_obs
            if terminated or truncated:
                obs, info = fresh_episode(obs, info)

        buffer.compute(policy.value(obs), cfg.gamma, cfg.gae_lambda)
        stats = ppo_update(buffer, policy, cfg, rng)
        stats["timesteps"] = timesteps
        updates.append(stats)

        if policy.extractor.locked and policy.extractor.digest() != locked_digest:
            raise AsvLabError("agent_locked_extractor_changed")

        recent = episodes[-100:]
        logger.info(
            "%d/%d steps, %d episodes, recent progress %.3f, policy loss %.4f, clip fraction %.3f",
            timesteps,
            cfg.total_timesteps,
            len(episodes),
            float(np.mean([e["progress"] for e in recent])) if recent else float("nan"),
            stats["policy_loss"],
            stats["clip_fraction"],
        )

    return TrainedAgent(
        policy,
        pd.DataFrame(episodes, columns=EPISODE_COLUMNS),
        pd.DataFrame(updates),
        policy.extractor.digest(),
    )


def _trajectory_row(env, t, reward):
    s = env.state
    return [t, s.x_n, s.y_n, s.psi, s.u, s.v, s.r, reward]


def run_episode(job):
    """Roll out one evaluation episode with deterministic actions

    Returns:
        (episode row, trajectory rows)

    """
    policy, index, scenario, env_cfg, reward_cfg, seed = job
    env = VesselEnv(env_cfg, reward_cfg, kind="test", scenario_seed=seed)
    obs, info = env.reset(seed=int(seed) + int(index), options={"scenario": scenario})
    dt = env.sim.dt * env_cfg.substeps
    trajectory = [_trajectory_row(env, 0.0, 0.0)]
    while not env.done:
        action, _, _ = policy.act(obs, deterministic=True)
        obs, reward, _, _, info = env.step(action)
        trajectory.append(_trajectory_row(env, env.steps * dt, reward))
    row = _episode_row(index, info["t"], info)
    return row, trajectory


def evaluate_agent(
    policy,
    n_episodes=100,
    seed=0,
    env_cfg: EnvConfig = EnvConfig(),
    reward_cfg: RewardConfig = RewardConfig(),
    scenarios=None,
    workers=None,
):
    """Run fresh test scenarios and aggregate the episode metrics

    Keyword arguments:
        - policy -- Anything with act(obs, deterministic=True)
        - seed -- Seed of the test scenario stream
        - scenarios -- Explicit scenarios, drawn from the test stream if None

    Returns:
        (episodes frame, report frame, trajectories)

    """
    from asvlab.world import SCENARIO_PRESETS, scenario_for

    if scenarios is None:
        preset = SCENARIO_PRESETS[env_cfg.scenario]
        scenarios = [scenario_for(seed, "test", i, preset) for i in range(n_episodes)]
    jobs = [(policy, i, s, env_cfg, reward_cfg, seed) for i, s in enumerate(scenarios)]
    results = parallel_map(run_episode, jobs, workers)

    episodes = pd.DataFrame([row for row, _ in results], columns=EPISODE_COLUMNS)
    trajectories = [pd.DataFrame(rows, columns=TRAJECTORY_COLUMNS) for _, rows in results]
    return episodes, summarize_episodes(episodes), trajectories
