# -*- coding: utf-8 -*-

import os
import logging

from asvlab.config import RunConfig
from asvlab.utils.filesystem import mkdir, write_to_csv
from asvlab.agent.env import EnvConfig, RewardConfig
from asvlab.agent.policy import Policy
from asvlab.agent.ppo import PpoConfig, evaluate_agent, train_agent

logger = logging.getLogger("asvlab.agent")


def _run_name(ckpt):
    name = os.path.basename(ckpt)
    return name[: -len(".ckpt")] if name.endswith(".ckpt") else name


def agent_train(mode, encoder=None, total_timesteps=None, scenario=None, config=None, seed=None, out=None):
    """Train one agent per encoder checkpoint

    Keyword arguments:
        - mode -- Feature extractor mode, e.g. shallow_locked or baseline
        - encoder -- VAE checkpoints, one run each in its own directory
        - total_timesteps -- Override the configured training length
        - scenario -- Scenario preset: full, reduced or empty

    """
    run = RunConfig.load(config, seed, out)
    cfg = run.section("ppo", PpoConfig, total_timesteps=total_timesteps)
    env_cfg = run.section("env", EnvConfig, scenario=scenario)
    reward_cfg = run.section("reward", RewardConfig)
    run.record("agent", {"mode": mode, "encoder": list(encoder or [])})

    targets = [(_run_name(c), c) for c in encoder] if encoder else [(mode, None)]
    written, result = [], {}
    for name, ckpt in targets:
        directory = run.path(name) if len(targets) > 1 else run.out
        mkdir(directory, parents=True, force=True)
        logger.info("training %s agent %s for %d steps", mode, name, cfg.total_timesteps)

        trained = train_agent(mode, cfg, env_cfg, reward_cfg, run.seed, ckpt)

        policy_path = os.path.join(directory, "policy.ckpt")
        trained.policy.save(policy_path, meta={"seed": run.seed, "encoder": ckpt})
        episodes_path = os.path.join(directory, "episodes.csv")
        write_to_csv(episodes_path, trained.episodes)
        updates_path = os.path.join(directory, "updates.csv")
        write_to_csv(updates_path, trained.updates)
        written += [policy_path, policy_path + ".json", episodes_path, updates_path]

        recent = trained.episodes.tail(100)
        result[name] = {
            "policy": policy_path,
            "episodes": int(len(trained.episodes)),
            "recent_progress": float(recent["progress"].mean()) if len(recent) else None,
            "encoder_sha256": trained.encoder_sha256,
        }
        logger.success("agent %s written to %s", name, policy_path)

    run.write_manifest("agent train", written)
    return result


def agent_evaluate(policy, episodes=100, trajectories=False, perturb=False, scenario=None, config=None, seed=None, out=None):
    """Evaluate a trained policy on fresh test scenarios

    Keyword arguments:
        - policy -- Policy checkpoint written by 'agent train'
        - episodes -- Number of test scenarios
        - trajectories -- Dump one trajectory CSV per episode
        - perturb -- Jitter the start heading and offset of the vessel

    """
    run = RunConfig.load(config, seed, out)
    overrides = {"scenario": scenario}
    if perturb:
        overrides.update(perturb_heading=0.2, perturb_offset=5.0)
    env_cfg = run.section("env", EnvConfig, **overrides)
    reward_cfg = run.section("reward", RewardConfig)
    run.record("evaluate", {"policy": policy, "episodes": episodes})

    loaded = Policy.load(policy)
    table, report, dumps = evaluate_agent(loaded, int(episodes), run.seed, env_cfg, reward_cfg)

    episodes_path = run.path("evaluation_episodes.csv")
    write_to_csv(episodes_path, table)
    report_path = run.path("report.csv")
    write_to_csv(report_path, report)
    written = [episodes_path, report_path]

    if trajectories:
        directory = run.path("trajectories")
        mkdir(directory, parents=True, force=True)
        for i, frame in enumerate(dumps):
            file_path = os.path.join(directory, "episode_%03d.csv" % i)
            write_to_csv(file_path, frame)
            written.append(file_path)

    run.write_manifest("agent evaluate", written)
    logger.success("evaluation report written to %s", report_path)
    return {
        row["metric"]: {"mean": row["mean"], "ci": [row["ci_low"], row["ci_high"]]}
        for row in report.to_dict("records")
    }
