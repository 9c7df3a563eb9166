"""Locomotion task training: forward walking and turning left.

Task policies map a single-step 27-feature observation to two motor commands
in [0, 1]; per-step reward is the balloon's instantaneous x (forward) or y
(turn-left) velocity. Optional per-episode domain randomization perturbs
friction and the initial state.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace

import numpy as np

from . import dynamics
from .config import MorphologyConfig
from .envmimic import FEATURES_PER_STEP, state_features
from .nn import MlpPolicy
from .ppo import PpoHyperparams, ppo_train

TASKS = ("forward", "turn_left")
EPISODE_HORIZON = 400            # control steps (20 s)

TaskObservation = state_features   # single-step 27 features, no history


@dataclass(frozen=True)
class DomainRandomizationConfig:
    friction_scale_range: tuple = (0.4, 1.2)   # multiplicative on nominal
    position_jitter: float = 0.02              # base x-y [m]
    yaw_jitter: float = math.radians(3.0)
    joint_jitter: float = math.radians(2.0)

    def __post_init__(self):
        lo, hi = self.friction_scale_range
        if not lo <= 1.0 <= hi:
            raise ValueError("friction range must contain the nominal scale")

    def sample_friction(self, rng, nominal: float) -> float:
        lo, hi = self.friction_scale_range
        return float(rng.uniform(lo, hi)) * nominal

    def jitter_state(self, state: dynamics.RobotState,
                     rng) -> dynamics.RobotState:
        dx, dy = rng.uniform(-self.position_jitter, self.position_jitter,
                             size=2)
        dyaw = float(rng.uniform(-self.yaw_jitter, self.yaw_jitter))
        dq = rng.uniform(-self.joint_jitter, self.joint_jitter, size=4)
        px, py, pz = state.base_position
        roll, pitch, yaw = state.base_orientation
        # anchors are cleared: the perturbed feet re-anchor on first contact
        return replace(
            state,
            base_position=(px + dx, py + dy, pz),
            base_orientation=(roll, pitch, yaw + dyaw),
            joint_angles=tuple(q + d for q, d in zip(state.joint_angles, dq)),
            contact_anchors=(None, None))


class TaskEnv:
    """Velocity-reward episode environment over any conforming simulator.

    `sim_factory(config) -> simulator` lets domain randomization rebuild the
    simulator with a per-episode friction coefficient; the initial state is
    always the nominal-friction quiescent stand (plus jitter when randomized).
    """

    def __init__(self, sim_factory, task: str, config: MorphologyConfig,
                 dr: DomainRandomizationConfig = None,
                 horizon: int = EPISODE_HORIZON):
        if task not in TASKS:
            raise ValueError(f"unknown task {task!r}")
        self.sim_factory = sim_factory
        self.task = task
        self.config = config
        self.dr = dr
        self.horizon = horizon
        self._rng = np.random.default_rng(0)
        self._base_sim = sim_factory(config)
        self._home = self._base_sim.initial_state()
        self.obs_dim = FEATURES_PER_STEP
        self.act_dim = 2

    def seed(self, s: int):
        self._rng = np.random.default_rng(s)

    def reset(self):
        start = self._home
        if self.dr is not None:
            mu = self.dr.sample_friction(self._rng,
                                         self.config.friction_coefficient)
            self.sim = self.sim_factory(self.config.with_friction(mu))
            start = self.dr.jitter_state(start, self._rng)
        else:
            self.sim = self._base_sim
        self.sim.reset(state=start)
        self.t = 0
        return state_features(self.sim.state, self.sim.config)

    def step(self, action):
        action = np.clip(np.asarray(action, dtype=float), 0.0, 1.0)
        state = self.sim.step(tuple(action))
        vx, vy, _ = dynamics.balloon_velocity(state, self.sim.config)
        reward = vx if self.task == "forward" else vy
        self.t += 1
        done = self.t >= self.horizon
        return state_features(state, self.sim.config), reward, done


def train_task_policy(task: str, sim_factory, config: MorphologyConfig, *,
                      dr: DomainRandomizationConfig = None,
                      total_steps: int = 300_000, seed: int = 0,
                      hyper: PpoHyperparams = None,
                      horizon: int = EPISODE_HORIZON):
    """Train a task policy; returns (policy, training log)."""
    env = TaskEnv(sim_factory, task, config, dr=dr, horizon=horizon)
    policy = MlpPolicy(FEATURES_PER_STEP, 2, np.random.default_rng(seed),
                       action_low=0.0, action_high=1.0)
    return ppo_train(env, policy, hyper or PpoHyperparams(), total_steps,
                     seed=seed)


def record_action_sequences(policy: MlpPolicy, sim, episodes: int, *,
                            horizon: int = EPISODE_HORIZON,
                            dr: DomainRandomizationConfig = None,
                            seed: int = 0):
    """Closed-loop episodes reduced to per-step action sequences.

    Episodes differ through initial-state jitter (when `dr` is given); the
    recorded sequences are reused open-loop for reference collection and
    trajectory comparison.
    """
    rng = np.random.default_rng(seed)
    home = sim.initial_state()
    sequences = []
    for _ in range(episodes):
        start = dr.jitter_state(home, rng) if dr is not None else home
        state = sim.reset(state=start)
        seq = []
        for _ in range(horizon):
            action = policy.mean_action(state_features(state, sim.config))
            action = tuple(np.clip(action, 0.0, 1.0))
            seq.append(action)
            state = sim.step(action)
        sequences.append(seq)
    return sequences
