import itertools
from dataclasses import replace
import os

import numpy as np
import pytest
import yaml

from asvlab.core import AsvLabValidationError, UsageError
from asvlab.utils.filesystem import read_csv, read_json
from asvlab.vae import VaeModel
from asvlab.agent import agent_evaluate, agent_train
from asvlab.agent.env import EnvConfig
from asvlab.agent.policy import Policy
from asvlab.agent.ppo import (
    EPISODE_COLUMNS,
    PpoConfig,
    RolloutBuffer,
    evaluate_agent,
    gae,
    normalize,
    ppo_losses,
    ppo_update,
    train_agent,
)

TINY_ENV = EnvConfig(scenario="empty", max_steps=5)
TINY_PPO = PpoConfig(n_steps=8, batch_size=4, n_epochs=2, total_timesteps=16, hidden=8)


def _brute_force_gae(rewards, values, dones, last_value, gamma, lam):
    n = len(rewards)
    next_values = np.append(values[1:], last_value)
    deltas = rewards + gamma * next_values * (1 - dones) - values
    advantages = np.zeros(n)
    for t in range(n):
        for k in range(t, n):
            advantages[t] += (gamma * lam) ** (k - t) * deltas[k]
            if dones[k]:
                break
    return advantages


@pytest.mark.parametrize("gamma,lam", list(itertools.product([0.0, 0.5, 0.98, 1.0], repeat=2)))
def test_gae_matches_brute_force(gamma, lam, rng):
    rewards = rng.normal(size=12)
    values = rng.normal(size=12)
    dones = np.zeros(12)
    dones[[3, 8]] = 1.0
    advantages, returns = gae(rewards, values, dones, 0.7, gamma, lam)
    np.testing.assert_allclose(advantages, _brute_force_gae(rewards, values, dones, 0.7, gamma, lam), atol=1e-12)
    np.testing.assert_allclose(returns, advantages + values)


def test_gae_monte_carlo_returns(rng):
    rewards = rng.normal(size=6)
    values = rng.normal(size=6)
    _, returns = gae(rewards, values, np.zeros(6), 2.0, 1.0, 1.0)
    expected = np.cumsum(rewards[::-1])[::-1] + 2.0
    np.testing.assert_allclose(returns, expected)


def test_gae_length_mismatch():
    with pytest.raises(AsvLabValidationError):
        gae([1.0, 2.0], [0.0], [0.0, 0.0], 0.0, 0.99, 0.95)


def test_normalize(rng):
    adv = normalize(rng.normal(3.0, 2.0, size=100))
    assert adv.mean() == pytest.approx(0.0, abs=1e-12)
    assert adv.std() == pytest.approx(1.0, abs=1e-6)


def _filled_buffer(policy, rng, size=8):
    buffer = RolloutBuffer(size, 180)
    for t in range(size):
        obs = {"nav": rng.normal(size=6), "scan": rng.uniform(size=180)}
        action, log_prob, value = policy.act(obs, rng)
        buffer.add(obs, action, log_prob, value, rng.normal(), t == size - 1)
    return buffer


def test_buffer_protocol(rng):
    policy = Policy.create("baseline", hidden=8)
    buffer = RolloutBuffer(2, 180)
    with pytest.raises(UsageError):
        buffer.compute(0.0, 0.99, 0.95)
    with pytest.raises(UsageError):
        ppo_update(buffer, policy, TINY_PPO, rng)

    buffer = _filled_buffer(policy, rng, size=2)
    assert buffer.full
    with pytest.raises(UsageError):
        buffer.add({"nav": np.zeros(6), "scan": np.zeros(180)}, np.zeros(2), 0.0, 0.0, 0.0, False)


def test_unclipped_surrogate(rng):
    policy = Policy.create("baseline", hidden=8)
    buffer = _filled_buffer(policy, rng)
    adv = rng.normal(size=8)
    _, stats = ppo_losses(
        policy, buffer.nav, buffer.scan, buffer.actions, buffer.log_probs, adv, buffer.values, TINY_PPO
    )
    assert stats["policy_loss"] == pytest.approx(-adv.mean(), abs=1e-5)
    assert stats["clip_fraction"] == 0.0


def test_clipped_surrogate(rng):
    policy = Policy.create("baseline", hidden=8)
    buffer = _filled_buffer(policy, rng)
    adv = np.abs(rng.normal(size=8)) + 0.1
    # a ratio of e^5 is clipped to 1.2 for positive advantages
    loss, stats = ppo_losses(
        policy, buffer.nav, buffer.scan, buffer.actions, buffer.log_probs - 5.0, adv, buffer.values, TINY_PPO
    )
    assert stats["policy_loss"] == pytest.approx(-1.2 * adv.mean(), rel=1e-5)
    assert stats["clip_fraction"] == 1.0


@pytest.fixture
def shallow_ckpt(tmp_path):
    file_path = str(tmp_path / "vae_shallow.ckpt")
    VaeModel("shallow", seed=1).save(file_path)
    return file_path


def test_update_keeps_a_locked_encoder(shallow_ckpt, rng):
    policy = Policy.create("shallow_locked", shallow_ckpt, hidden=8)
    before = policy.extractor.digest()
    actor_before = policy.ac.store.digest()
    buffer = _filled_buffer(policy, rng)
    buffer.compute(0.0, 0.99, 0.95)
    stats = ppo_update(buffer, policy, TINY_PPO, rng)
    assert set(stats) == {"policy_loss", "value_loss", "entropy", "clip_fraction"}
    assert policy.extractor.digest() == before
    assert policy.ac.store.digest() != actor_before


def test_update_trains_an_unlocked_encoder(shallow_ckpt, rng):
    policy = Policy.create("shallow_unlocked", shallow_ckpt, hidden=8)
    before = policy.extractor.digest()
    decoder_before = policy.extractor.store.digest("decoder.")
    buffer = _filled_buffer(policy, rng)
    buffer.compute(0.0, 0.99, 0.95)
    ppo_update(buffer, policy, TINY_PPO, rng)
    assert policy.extractor.digest() != before
    assert policy.extractor.store.digest("decoder.") == decoder_before


def test_train_agent_is_deterministic():
    first = train_agent("baseline", TINY_PPO, TINY_ENV, seed=2)
    second = train_agent("baseline", TINY_PPO, TINY_ENV, seed=2)
    assert list(first.episodes.columns) == EPISODE_COLUMNS
    assert len(first.updates) == 2
    assert len(first.episodes) >= 2
    assert first.episodes.equals(second.episodes)
    assert first.policy.ac.store.digest() == second.policy.ac.store.digest()


def test_evaluate_agent():
    policy = Policy.create("baseline", hidden=8)
    episodes, report, trajectories = evaluate_agent(policy, 3, seed=1, env_cfg=TINY_ENV, workers=1)
    assert len(episodes) == 3
    assert list(report["metric"]) == ["progress", "cte", "duration", "collision_rate"]
    for (_, row), trajectory in zip(episodes.iterrows(), trajectories):
        assert len(trajectory) == row["steps"] + 1
        assert trajectory["t"].iloc[0] == 0.0


def test_agent_actions(tmp_path, monkeypatch):
    monkeypatch.setenv("ASVLAB_THREADS", "1")
    config = str(tmp_path / "run.yml")
    with open(config, "w") as f:
        yaml.safe_dump(
            {
                "ppo": {"n_steps": 8, "batch_size": 4, "n_epochs": 1, "hidden": 8},
                "env": {"scenario": "empty", "max_steps": 5},
            },
            f,
        )
    train_out = str(tmp_path / "train")
    result = agent_train("baseline", total_timesteps=8, config=config, seed=4, out=train_out)
    policy_path = result["baseline"]["policy"]
    assert os.path.exists(policy_path)
    assert read_json(os.path.join(train_out, "manifest.json"))["command"] == "agent train"
    assert list(read_csv(os.path.join(train_out, "episodes.csv")).columns) == EPISODE_COLUMNS

    eval_out = str(tmp_path / "eval")
    summary = agent_evaluate(policy_path, episodes=2, trajectories=True, perturb=True, config=config, out=eval_out)
    assert set(summary) == {"progress", "cte", "duration", "collision_rate"}
    assert os.path.exists(os.path.join(eval_out, "trajectories", "episode_001.csv"))
    resolved = read_json(os.path.join(eval_out, "resolved_config.json"))
    assert resolved["env"]["perturb_heading"] == 0.2


def test_zero_advantages_leave_the_policy_head(rng):
    policy = Policy.create("baseline", hidden=8)
    buffer = _filled_buffer(policy, rng)
    buffer.compute(0.0, 0.99, 0.95)
    buffer.advantages = np.zeros(buffer.size)
    actor_before = policy.ac.store.digest("pi.")
    critic_before = policy.ac.store.digest("vf.")

    ppo_update(buffer, policy, replace(TINY_PPO, ent_coef=0.0), rng)
    assert policy.ac.store.digest("pi.") == actor_before
    assert policy.ac.store.digest("vf.") != critic_before
