# -*- coding: utf-8 -*-
"""Path following and collision avoidance environment"""

import math
import logging
from dataclasses import dataclass
from typing import Optional

import numpy as np
import gymnasium as gym
from gymnasium import spaces

from asvlab.core import AsvLabValidationError, SimulationFault, UsageError
from asvlab.dynamics import ShipModel, SimConfig, action_to_control, step
from asvlab.guidance import (
    GuidanceConfig,
    NavFeatures,
    PathTracker,
    nav_features,
    progress,
)
from asvlab.world import (
    SCENARIO_PRESETS,
    Scenario,
    SensorConfig,
    collision_check,
    perturbed,
    scan,
    scenario_for,
    step_obstacles,
)

logger = logging.getLogger("asvlab.agent.env")

NAV_DIM = 6

# termination reasons, in decreasing priority
FAULT = "fault"
COLLISION = "collision"
GOAL = "goal"
PROGRESS = "progress"
TIMEOUT = "timeout"
DIVERGENCE = "divergence"
TERMINATION_REASONS = (FAULT, COLLISION, GOAL, PROGRESS, TIMEOUT, DIVERGENCE)


@dataclass(frozen=True)
class RewardConfig:
    r_collision: float = -1000.0
    r_exists: float = 1.0

    def __post_init__(self):
        if not self.r_collision < 0:
            raise AsvLabValidationError("invalid_config_value", key="r_collision", value=self.r_collision)
        if self.r_exists < 0:
            raise AsvLabValidationError("invalid_config_value", key="r_exists", value=self.r_exists)


@dataclass(frozen=True)
class EnvConfig:
    """Episode rules and observation scaling

    Velocities are divided by the maximum surge speed, the yaw rate by
    r_ref, the cross-track error by cte_ref and both heading errors by pi.
    """

    scenario: str = "full"
    substeps: int = 10
    max_steps: int = 2000
    min_reward: float = -2000.0
    progress_goal: float = 0.99
    r_ref: float = 0.1
    cte_ref: float = 100.0
    perturb_heading: float = 0.0
    perturb_offset: float = 0.0
    ship_model: Optional[str] = None

    def __post_init__(self):
        if self.scenario not in SCENARIO_PRESETS:
            raise AsvLabValidationError("scenario_unknown_preset", preset=self.scenario)
        for key in ("substeps", "max_steps"):
            if getattr(self, key) < 1:
                raise AsvLabValidationError("invalid_config_value", key=key, value=getattr(self, key))
        for key in ("r_ref", "cte_ref"):
            if not getattr(self, key) > 0:
                raise AsvLabValidationError("invalid_config_value", key=key, value=getattr(self, key))


def path_reward(u, nav: NavFeatures, u_max):
    """Speed, heading and cross-track product, in [0, 2]"""
    speed = max(u / u_max, 0.0)
    return speed * (1.0 + math.cos(nav.psi_err)) / (1.0 + abs(nav.epsilon))


def reward(state, nav: NavFeatures, collided, cfg: RewardConfig, u_max):
    if collided:
        return cfg.r_collision
    return path_reward(state.u, nav, u_max) - cfg.r_exists


def normalize_nav(nav: NavFeatures, u_max, cfg: EnvConfig):
    return np.array(
        [
            nav.u / u_max,
            nav.v / u_max,
            nav.r / cfg.r_ref,
            nav.epsilon / cfg.cte_ref,
            nav.psi_err / math.pi,
            nav.psi_err_LA / math.pi,
        ],
        dtype=np.float32,
    )


class VesselEnv(gym.Env):
    """A vessel following a path among static and moving obstacles

    Observations are dicts with the normalized navigation features under
    "nav" and the perception vector under "scan". Actions in [-1, 1]^2
    scale the surge force and the yaw moment. One step holds the action
    for `substeps` integration steps.

    Keyword arguments:
        - cfg -- Episode rules and observation scaling
        - reward_cfg -- Reward constants
        - kind -- Scenario stream, "train" or "test"
        - scenario_seed -- Seed of the scenario stream

    """

    metadata = {"render_modes": []}

    def __init__(
        self,
        cfg: EnvConfig = EnvConfig(),
        reward_cfg: RewardConfig = RewardConfig(),
        kind="train",
        scenario_seed=0,
        model: Optional[ShipModel] = None,
        sim: SimConfig = SimConfig(),
        guidance: GuidanceConfig = GuidanceConfig(),
        sensor: SensorConfig = SensorConfig(),
    ):
        super().__init__()
        self.cfg = cfg
        self.reward_cfg = reward_cfg
        self.kind = kind
        self.scenario_seed = int(scenario_seed)
        self.model = model or ShipModel.load(cfg.ship_model)
        self.sim = sim
        self.guidance = guidance
        self.sensor = sensor

        self.observation_space = spaces.Dict(
            {
                "nav": spaces.Box(-np.inf, np.inf, shape=(NAV_DIM,), dtype=np.float32),
                "scan": spaces.Box(0.0, 1.0, shape=(sensor.n_rays,), dtype=np.float32),
            }
        )
        self.action_space = spaces.Box(-1.0, 1.0, shape=(2,), dtype=np.float32)

        self.episode = 0
        self.scenario: Optional[Scenario] = None
        self.state = None
        self.done = False
        self.faulted = False

    # Gym API ---------------------------------------------------------

    def reset(self, *, seed=None, options=None):
        super().reset(seed=seed)
        if seed is not None:
            self.scenario_seed = int(seed)
            self.episode = 0

        scenario = (options or {}).get("scenario")
        if scenario is None:
            scenario = scenario_for(
                self.scenario_seed, self.kind, self.episode, SCENARIO_PRESETS[self.cfg.scenario]
            )
            self.episode += 1
        if self.cfg.perturb_heading > 0 or self.cfg.perturb_offset > 0:
            scenario = perturbed(scenario, self.np_random, self.cfg.perturb_heading, self.cfg.perturb_offset)

        self.scenario = scenario
        self.path = scenario.path
        self.obstacles = list(scenario.obstacles)
        self.state = scenario.vessel_start
        self.tracker = PathTracker(self.path, self.guidance.search_window)
        self.omega = self.tracker.reset(self.state.position)
        self.steps = 0
        self.cumulative_reward = 0.0
        self.cte_sum = 0.0
        self.faulted = False
        self.collided = collision_check(self.state, self.obstacles, self.model.hull_radius)
        self.nav = nav_features(self.path, self.state, self.guidance, self.omega)
        self.termination_reason = self._termination()
        self.done = self.termination_reason is not None
        if self.done:
            logger.debug("episode over at reset: %s", self.termination_reason)
        return self._get_obs(), self._get_info()

    def step(self, action):
        if self.state is None:
            raise UsageError("env_step_before_reset")
        if self.done:
            raise UsageError("env_step_after_done")

        f = action_to_control(action, self.model)
        for _ in range(self.cfg.substeps):
            try:
                self.state = step(self.state, f, self.model, self.sim)
            except SimulationFault as e:
                # the last finite state is kept for the final observation
                logger.warning("episode %d ended by a simulation fault: %s", self.episode, e)
                self.faulted = True
                break
            self.obstacles = step_obstacles(self.obstacles, self.sim.dt)
            if collision_check(self.state, self.obstacles, self.model.hull_radius):
                self.collided = True
                break

        self.omega = self.tracker.update(self.state.position)
        self.nav = nav_features(self.path, self.state, self.guidance, self.omega)
        r = reward(self.state, self.nav, self.collided, self.reward_cfg, self.model.u_max)
        self.steps += 1
        self.cumulative_reward += r
        self.cte_sum += self.nav.epsilon

        self.termination_reason = self._termination()
        self.done = self.termination_reason is not None
        truncated = self.termination_reason == TIMEOUT
        terminated = self.done and not truncated
        return self._get_obs(), float(r), terminated, truncated, self._get_info()

    # Internals -------------------------------------------------------

    def _termination(self):
        end = self.path.point(self.path.length)
        if self.faulted:
            return FAULT
        if self.collided:
            return COLLISION
        if math.hypot(self.state.x_n - end[0], self.state.y_n - end[1]) <= self.guidance.end_radius:
            return GOAL
        if progress(self.path, self.omega) > self.cfg.progress_goal:
            return PROGRESS
        if self.steps >= self.cfg.max_steps:
            return TIMEOUT
        if self.cumulative_reward < self.cfg.min_reward:
            return DIVERGENCE
        return None

    def _get_obs(self):
        return {
            "nav": normalize_nav(self.nav, self.model.u_max, self.cfg),
            "scan": scan(self.state, self.obstacles, self.sensor).astype(np.float32),
        }

    def _get_info(self):
        return {
            "progress": progress(self.path, self.omega),
            "cte": self.nav.epsilon,
            "collided": self.collided,
            "t": self.steps,
            "cumulative_reward": self.cumulative_reward,
            "mean_cte": self.cte_sum / self.steps if self.steps else self.nav.epsilon,
            "termination_reason": self.termination_reason,
        }
