"""Hardware stand-in: the same dynamics with secret parameters.

Adds quadratic aerodynamic drag on the balloon, a per-episode lateral wind
bias, per-step force noise, and left/right actuator asymmetry. Everything the
training stack is not supposed to know lives behind HiddenWorldConfig; the
config file carries a marker so non-collection tooling can refuse to load it.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, replace
from typing import Optional, Sequence

import numpy as np

from . import dynamics
from .actuator import ActuatorParams
from .config import MorphologyConfig
from .trajectory import Trajectory

HIDDEN_MARKER = "hidden_world"


def default_hidden_params() -> ActuatorParams:
    """Secret actuator set: ~15% left/right gain asymmetry, shifted defaults.

    Every value lies strictly inside the sysid optimization bounds.
    """
    return ActuatorParams(
        motor_gain=(0.14, 0.14 / 1.15),
        knee_stiffness=(0.13, 0.15),
        default_motor_angle=(0.30, 0.40),
        default_knee_angle=(1.00, 1.20),
    )


@dataclass(frozen=True)
class HiddenWorldConfig:
    actuator_params: ActuatorParams
    drag_coefficient: float = 0.8      # quadratic balloon drag [N*s^2/m^2]
    wind_bias_range: float = 0.05      # per-episode lateral (y) bias [N]
    process_noise_std: float = 0.01    # per-step force noise [N]
    episode_seed: int = 0

    @classmethod
    def default(cls) -> "HiddenWorldConfig":
        return cls(actuator_params=default_hidden_params())

    def quiet(self) -> "HiddenWorldConfig":
        """Measurement mode: hidden actuators kept, all disturbances zeroed."""
        return replace(self, drag_coefficient=0.0, wind_bias_range=0.0,
                       process_noise_std=0.0)

    def save(self, path) -> None:
        p = self.actuator_params
        data = {
            HIDDEN_MARKER: True,
            "motor_gain": list(p.motor_gain),
            "knee_stiffness": list(p.knee_stiffness),
            "default_motor_angle": list(p.default_motor_angle),
            "default_knee_angle": list(p.default_knee_angle),
            "knee_damping": p.knee_damping,
            "servo_slew": p.servo_slew,
            "drag_coefficient": self.drag_coefficient,
            "wind_bias_range": self.wind_bias_range,
            "process_noise_std": self.process_noise_std,
            "episode_seed": self.episode_seed,
        }
        with open(path, "w") as fh:
            json.dump(data, fh, indent=2)

    @classmethod
    def load(cls, path) -> "HiddenWorldConfig":
        with open(path) as fh:
            data = json.load(fh)
        if not data.get(HIDDEN_MARKER):
            raise ValueError(f"{path} is not a hidden-world config")
        params = ActuatorParams(
            motor_gain=tuple(data["motor_gain"]),
            knee_stiffness=tuple(data["knee_stiffness"]),
            default_motor_angle=tuple(data["default_motor_angle"]),
            default_knee_angle=tuple(data["default_knee_angle"]),
            knee_damping=data["knee_damping"],
            servo_slew=data["servo_slew"],
        )
        return cls(actuator_params=params,
                   drag_coefficient=data["drag_coefficient"],
                   wind_bias_range=data["wind_bias_range"],
                   process_noise_std=data["process_noise_std"],
                   episode_seed=data.get("episode_seed", 0))


def hidden_step(state, action, config: HiddenWorldConfig,
                morphology: MorphologyConfig, rng: np.random.Generator,
                wind_bias: float = 0.0, external_force=None):
    """One control step of the emulator.

    Drag is evaluated per substep from the instantaneous balloon velocity;
    wind bias and the per-step noise draw are held constant over the step.
    """
    cd = config.drag_coefficient
    if config.process_noise_std > 0.0:
        nx, ny, nz = rng.normal(0.0, config.process_noise_std, size=3)
    else:
        nx = ny = nz = 0.0
    ny += wind_bias

    def disturbance(balloon_vel):
        bvx, bvy, bvz = balloon_vel
        speed = math.sqrt(bvx * bvx + bvy * bvy + bvz * bvz)
        c = cd * speed
        return (nx - c * bvx, ny - c * bvy, nz - c * bvz)

    return dynamics.step(state, action, external_force,
                         config.actuator_params, morphology,
                         balloon_force_fn=disturbance)


class HiddenWorldSim:
    """Stateful emulator instance; per-episode RNG owned by the rollout."""

    source = "hidden-world"

    def __init__(self, config: HiddenWorldConfig,
                 morphology: MorphologyConfig):
        self.hidden_config = config
        self.config = morphology
        self.state = None
        self._rng = np.random.default_rng(config.episode_seed)
        self._wind = 0.0
        self.last_disturbance = (0.0, 0.0, 0.0)

    @property
    def params(self):
        # intentionally not exposed by the CLI; kept for in-process oracles
        return self.hidden_config.actuator_params

    def initial_state(self):
        return dynamics.settle_state(self.hidden_config.actuator_params,
                                     self.config)

    def reset(self, state=None, seed: Optional[int] = None):
        if seed is None:
            seed = self.hidden_config.episode_seed
        self._rng = np.random.default_rng(seed)
        w = self.hidden_config.wind_bias_range
        self._wind = float(self._rng.uniform(-w, w)) if w > 0.0 else 0.0
        self.state = state if state is not None else self.initial_state()
        return self.state

    def step(self, action, external_force=None):
        cfg = self.hidden_config
        if cfg.process_noise_std > 0.0:
            noise = self._rng.normal(0.0, cfg.process_noise_std, size=3)
        else:
            noise = (0.0, 0.0, 0.0)
        nx, ny, nz = noise[0], noise[1] + self._wind, noise[2]
        cd = cfg.drag_coefficient
        tracker = self

        def disturbance(balloon_vel):
            bvx, bvy, bvz = balloon_vel
            speed = math.sqrt(bvx * bvx + bvy * bvy + bvz * bvz)
            c = cd * speed
            f = (nx - c * bvx, ny - c * bvy, nz - c * bvz)
            tracker.last_disturbance = f
            return f

        self.state = dynamics.step(self.state, action, external_force,
                                   cfg.actuator_params, self.config,
                                   balloon_force_fn=disturbance)
        return self.state

    def bench_reset(self):
        return dynamics.nominal_state(self.hidden_config.actuator_params,
                                      self.config)

    def bench_step(self, state, action):
        return dynamics.bench_step(state, action,
                                   self.hidden_config.actuator_params,
                                   self.config)

    def rollout(self, initial, action_source, residual_source, horizon,
                *, seed: int = 0) -> Trajectory:
        self.reset(state=initial, seed=seed)

        def step_fn(s, a, ext):
            return self.step(a, external_force=ext)

        return dynamics.rollout(initial, action_source, residual_source,
                                horizon, self.hidden_config.actuator_params,
                                self.config, source=self.source, seed=seed,
                                step_fn=step_fn)


def collect_reference_set(action_sequences: Sequence, episodes_per_sequence: int,
                          config: HiddenWorldConfig,
                          morphology: MorphologyConfig,
                          base_seed: int = 0) -> list[Trajectory]:
    """Open-loop replay of each action sequence under distinct episode seeds."""
    if not action_sequences:
        raise ValueError("need at least one action sequence")
    sim = HiddenWorldSim(config, morphology)
    start = sim.initial_state()
    out = []
    for si, seq in enumerate(action_sequences):
        for ep in range(episodes_per_sequence):
            seed = base_seed + 1000 * si + ep
            try:
                traj = sim.rollout(start, list(seq), None, len(seq),
                                   seed=seed)
            except dynamics.SimulationDiverged as err:
                raise RuntimeError(
                    f"divergence in sequence {si}, episode {ep}") from err
            out.append(traj)
    return out
