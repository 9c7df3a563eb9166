"""Thin stateful wrappers around the stepper with a common interface.

Every simulator exposes: `config`, `source`, `initial_state()`,
`reset(state=None, seed=None)`, `step(action, external_force=None)`, and the
test-stand pair `bench_reset()` / `bench_step(state, action)` used for
response-curve measurement. Instances are independent and single-threaded.
"""

from __future__ import annotations

from typing import Optional

from . import dynamics
from .actuator import ActuatorParams
from .config import MorphologyConfig
from .trajectory import Trajectory


class VanillaSim:
    """Plain simulator with known actuator parameters."""

    source = "vanilla"

    def __init__(self, params: ActuatorParams, config: MorphologyConfig):
        self.params = params
        self.config = config
        self.state: Optional[dynamics.RobotState] = None

    def initial_state(self) -> dynamics.RobotState:
        return dynamics.settle_state(self.params, self.config)

    def reset(self, state=None, seed=None) -> dynamics.RobotState:
        self.state = state if state is not None else self.initial_state()
        return self.state

    def step(self, action, external_force=None) -> dynamics.RobotState:
        self.state = dynamics.step(self.state, action, external_force,
                                   self.params, self.config)
        return self.state

    def bench_reset(self) -> dynamics.RobotState:
        return dynamics.nominal_state(self.params, self.config)

    def bench_step(self, state, action) -> dynamics.RobotState:
        return dynamics.bench_step(state, action, self.params, self.config)

    def rollout(self, initial, action_source, residual_source, horizon,
                *, seed: int = 0) -> Trajectory:
        return dynamics.rollout(initial, action_source, residual_source,
                                horizon, self.params, self.config,
                                source=self.source, seed=seed)
