"""Trajectory exchange format and JSON-lines serialization.

A trajectory file starts with one metadata line (schema_version, dt, seed,
source, config_hash) followed by one JSON object per control step. Floats go
through Python's json round-trip repr, so reload is bit-exact.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from typing import Optional

SCHEMA_VERSION = 1
VALID_SOURCES = ("vanilla", "improved", "hidden-world")


@dataclass(frozen=True)
class TrajectoryStep:
    time: float
    state: "RobotState"
    action: tuple[float, float]
    external_force: Optional[tuple[float, float, float]] = None


@dataclass
class Trajectory:
    metadata: dict
    steps: list[TrajectoryStep]

    @classmethod
    def build(cls, steps, config, *, source: str = "vanilla",
              seed: int = 0) -> "Trajectory":
        meta = {
            "schema_version": SCHEMA_VERSION,
            "dt": config.control_dt,
            "seed": seed,
            "source": source,
            "config_hash": config.config_hash(),
        }
        return cls(metadata=meta, steps=list(steps))

    def __post_init__(self):
        if not self.steps:
            raise ValueError("trajectory must be nonempty")
        dt = self.metadata["dt"]
        times = [s.time for s in self.steps]
        for i in range(1, len(times)):
            if abs((times[i] - times[i - 1]) - dt) > 1e-9:
                raise ValueError("trajectory times must be uniformly spaced")

    def __len__(self) -> int:
        return len(self.steps)

    @property
    def dt(self) -> float:
        return self.metadata["dt"]

    @property
    def actions(self) -> list[tuple[float, float]]:
        return [s.action for s in self.steps]

    def states(self) -> list:
        return [s.state for s in self.steps]

    def save(self, path) -> None:
        with open(path, "w") as fh:
            fh.write(json.dumps(self.metadata) + "\n")
            for s in self.steps:
                st = s.state
                row = {
                    "time": s.time,
                    "base_pos": list(st.base_position),
                    "base_orn": list(st.base_orientation),
                    "base_linvel": list(st.base_linear_velocity),
                    "base_angvel": list(st.base_angular_velocity),
                    "joint_q": list(st.joint_angles),
                    "joint_qd": list(st.joint_rates),
                    "motor_angles": list(st.motor_angles),
                    "action": list(s.action),
                    "ext_force": (list(s.external_force)
                                  if s.external_force is not None else None),
                    # extra key beyond the base schema: stiction anchors,
                    # needed for bit-exact replay from a loaded state
                    "contact_anchors": [list(a) if a is not None else None
                                        for a in st.contact_anchors],
                }
                fh.write(json.dumps(row) + "\n")

    @classmethod
    def load(cls, path) -> "Trajectory":
        from .dynamics import RobotState
        with open(path) as fh:
            lines = [line for line in fh if line.strip()]
        if len(lines) < 2:
            raise ValueError(f"{path}: trajectory file needs metadata + steps")
        meta = json.loads(lines[0])
        if meta.get("schema_version") != SCHEMA_VERSION:
            raise ValueError(f"{path}: unsupported schema_version")
        steps = []
        for line in lines[1:]:
            row = json.loads(line)
            state = RobotState(
                base_position=tuple(row["base_pos"]),
                base_orientation=tuple(row["base_orn"]),
                base_linear_velocity=tuple(row["base_linvel"]),
                base_angular_velocity=tuple(row["base_angvel"]),
                joint_angles=tuple(row["joint_q"]),
                joint_rates=tuple(row["joint_qd"]),
                motor_angles=tuple(row["motor_angles"]),
                sim_time=row["time"],
                contact_anchors=tuple(
                    tuple(a) if a is not None else None
                    for a in row.get("contact_anchors", (None, None))),
            )
            steps.append(TrajectoryStep(
                time=row["time"], state=state, action=tuple(row["action"]),
                external_force=(tuple(row["ext_force"])
                                if row["ext_force"] is not None else None)))
        return cls(metadata=meta, steps=steps)
