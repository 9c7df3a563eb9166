"""Morphology configuration for the reduced buoyant-biped model.

The robot is modeled as one rigid torso (balloon collapsed to a buoyancy
point above the base) with two legs, each a passive hip pitch joint and an
actuated knee. The buoyancy point sits slightly ahead of the base axis
(`balloon_arm`), matching a tether attachment offset from the hip line; the
resulting weathervane moment means aerodynamic forces at the balloon couple
into yaw instead of leaving heading a pure contact artifact. All
geometric/inertial numbers live here and are overridable.
"""

from __future__ import annotations

import hashlib
import json
import math
from dataclasses import asdict, dataclass, replace

GRAVITY = 9.81
HALF_PI = math.pi / 2.0


@dataclass(frozen=True)
class MorphologyConfig:
    torso_mass: float = 0.06
    balloon_offset: float = 0.5           # buoyancy point height above base [m]
    balloon_arm: float = 0.15             # buoyancy point offset along body x [m]
    buoyancy_force: float | None = None   # defaults to 0.97 x total weight [N]
    femur_length: float = 0.35
    tibia_length: float = 0.35
    femur_mass: float = 0.01
    tibia_mass: float = 0.01
    foot_mass: float = 0.02               # foot-located servo mass per leg
    hip_lateral_offset: float = 0.07      # half stance width [m]
    hip_spring_stiffness: float = 0.03    # passive hip centering [N*m/rad]
    hip_damping: float = 0.02             # [N*m*s/rad]
    default_hip_angle: float = -0.55      # hip rest angle (rad); legs angled back
    foot_contact_stiffness: float = 600.0  # [N/m]
    foot_contact_damping: float = 10.0     # [N*s/m]
    friction_coefficient: float = 0.8
    base_angular_damping: float = 0.002    # weak aero damping on torso rotation
    base_yaw_damping: float = 0.02         # rotational drag about the body z axis
    physics_dt: float = 1.0 / 240.0
    control_dt: float = 0.05

    def __post_init__(self):
        for name in ("torso_mass", "balloon_offset", "femur_length",
                     "tibia_length", "femur_mass", "tibia_mass", "foot_mass",
                     "hip_lateral_offset", "hip_spring_stiffness",
                     "foot_contact_stiffness", "foot_contact_damping",
                     "physics_dt", "control_dt"):
            if getattr(self, name) <= 0.0:
                raise ValueError(f"{name} must be strictly positive")
        n = self.control_dt / self.physics_dt
        if abs(n - round(n)) > 1e-9 or round(n) < 1:
            raise ValueError("physics_dt must divide control_dt exactly")
        if self.buoyancy_force is None:
            object.__setattr__(self, "buoyancy_force",
                               0.97 * self.total_mass * GRAVITY)
        if self.buoyancy_force > self.total_mass * GRAVITY:
            raise ValueError("buoyancy_force must not exceed total weight")

    @property
    def total_mass(self) -> float:
        return (self.torso_mass
                + 2.0 * (self.femur_mass + self.tibia_mass + self.foot_mass))

    @property
    def leg_mass(self) -> float:
        return self.femur_mass + self.tibia_mass + self.foot_mass

    @property
    def substeps(self) -> int:
        return int(round(self.control_dt / self.physics_dt))

    @property
    def hip_inertia(self) -> float:
        """Effective leg inertia about the hip axis (straight-leg pose)."""
        lf, lt = self.femur_length, self.tibia_length
        return (self.femur_mass * (0.5 * lf) ** 2
                + self.tibia_mass * (lf + 0.5 * lt) ** 2
                + self.foot_mass * (lf + lt) ** 2)

    @property
    def knee_inertia(self) -> float:
        """Tibia-plus-foot inertia about the knee axis."""
        lt = self.tibia_length
        return self.tibia_mass * (0.5 * lt) ** 2 + self.foot_mass * lt ** 2

    @property
    def base_inertia(self) -> tuple[float, float, float]:
        """Diagonal torso-frame inertia (constant approximation).

        Computed from the straight-down leg pose plus a torso term spanning
        the balloon offset; kept fixed so the rotational dynamics stay cheap.
        """
        lf, lt, w = self.femur_length, self.tibia_length, self.hip_lateral_offset
        leg_r2 = (self.femur_mass * (0.5 * lf) ** 2
                  + self.tibia_mass * (lf + 0.5 * lt) ** 2
                  + self.foot_mass * (lf + lt) ** 2)
        torso = self.torso_mass * (0.5 * self.balloon_offset) ** 2
        ixx = 2.0 * (leg_r2 + self.leg_mass * w ** 2) + torso
        iyy = 2.0 * leg_r2 + torso
        izz = 2.0 * self.leg_mass * w ** 2 + 0.5 * torso
        return (ixx, iyy, izz)

    def config_hash(self) -> str:
        blob = json.dumps(asdict(self), sort_keys=True)
        return hashlib.sha256(blob.encode()).hexdigest()[:12]

    def with_friction(self, coefficient: float) -> "MorphologyConfig":
        return replace(self, friction_coefficient=coefficient)
