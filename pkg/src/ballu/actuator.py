"""Cable-driven knee actuation model and response-curve measurement.

The knee torque is a taut-cable pull with a return spring:

    tau = G * max(0, theta_m - theta_m0) - k * (theta_k - theta_k0) - c * qd

The max(0, .) term encodes that cables pull but cannot push, which gives the
steady-state command->angle map a slack/taut breakpoint and makes the eight
per-leg parameters (G, k, theta_m0, theta_k0 for each leg) identifiable.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace

import numpy as np

from .config import HALF_PI

# flat parameter vector layout used by sysid
PARAM_NAMES = (
    "motor_gain_L", "motor_gain_R",
    "knee_stiffness_L", "knee_stiffness_R",
    "default_motor_angle_L", "default_motor_angle_R",
    "default_knee_angle_L", "default_knee_angle_R",
)

PARAM_BOUNDS = (
    (0.01, 1.0), (0.01, 1.0),     # motor gains [N*m/rad]
    (0.01, 1.0), (0.01, 1.0),     # knee spring stiffness [N*m/rad]
    (0.0, 0.8), (0.0, 0.8),       # default motor angles [rad]
    (0.2, 2.5), (0.2, 2.5),       # default knee angles [rad]
)


@dataclass(frozen=True)
class ActuatorParams:
    """Per-leg actuator parameters; the first 8 fields are the sysID vector."""
    motor_gain: tuple[float, float] = (0.12, 0.12)          # (L, R) [N*m/rad]
    knee_stiffness: tuple[float, float] = (0.14, 0.14)      # [N*m/rad]
    default_motor_angle: tuple[float, float] = (0.35, 0.35)  # theta_m0 [rad]
    default_knee_angle: tuple[float, float] = (1.1, 1.1)     # theta_k0 [rad]
    knee_damping: float = 0.005   # fixed, excluded from sysID [N*m*s/rad]
    servo_slew: float = 6.0       # fixed, excluded from sysID [rad/s]

    def __post_init__(self):
        for side in (0, 1):
            if self.motor_gain[side] <= 0 or self.knee_stiffness[side] <= 0:
                raise ValueError("motor gain and knee stiffness must be > 0")
            if not 0.0 <= self.default_motor_angle[side] <= HALF_PI:
                raise ValueError("default_motor_angle outside [0, pi/2]")
            if not 0.0 <= self.default_knee_angle[side] <= math.pi:
                raise ValueError("default_knee_angle outside [0, pi]")

    def to_vector(self) -> np.ndarray:
        return np.array([
            self.motor_gain[0], self.motor_gain[1],
            self.knee_stiffness[0], self.knee_stiffness[1],
            self.default_motor_angle[0], self.default_motor_angle[1],
            self.default_knee_angle[0], self.default_knee_angle[1],
        ])

    @classmethod
    def from_vector(cls, p, **fixed) -> "ActuatorParams":
        p = [float(v) for v in p]
        if len(p) != 8:
            raise ValueError("parameter vector must have 8 elements")
        return cls(motor_gain=(p[0], p[1]), knee_stiffness=(p[2], p[3]),
                   default_motor_angle=(p[4], p[5]),
                   default_knee_angle=(p[6], p[7]), **fixed)


def command_to_motor_target(action: float) -> float:
    """Map a [0, 1] command to the servo arm target angle in [0, pi/2]."""
    if not 0.0 <= action <= 1.0:
        raise ValueError(f"action {action} outside [0, 1]")
    return HALF_PI * action


def knee_torque(motor_angle: float, knee_angle: float, knee_rate: float,
                params: ActuatorParams, leg: int) -> float:
    """Knee joint torque for leg 0 (left) or 1 (right)."""
    g = params.motor_gain[leg]
    k = params.knee_stiffness[leg]
    pull = motor_angle - params.default_motor_angle[leg]
    return (g * (pull if pull > 0.0 else 0.0)
            - k * (knee_angle - params.default_knee_angle[leg])
            - params.knee_damping * knee_rate)


def steady_state_knee_angle(action: float, params: ActuatorParams,
                            leg: int) -> float:
    """Analytic zero-torque knee angle for a held command (taut or slack)."""
    theta_m = command_to_motor_target(action)
    g = params.motor_gain[leg]
    k = params.knee_stiffness[leg]
    pull = max(0.0, theta_m - params.default_motor_angle[leg])
    return params.default_knee_angle[leg] + (g / k) * pull


CURVE_ORDER = ("motor_L", "knee_L", "motor_R", "knee_R")


@dataclass
class ResponseCurve:
    """Steady-state command->angle samples for one joint plus a cubic fit."""
    joint: str
    samples: list[tuple[float, float]]       # (action, angle rad), sorted
    coefficients: np.ndarray = None           # degree-3, highest power first
    dense: np.ndarray = None                   # (100, 2) resampled fit
    fit_rms: float = 0.0
    timeout_flags: list[bool] = None

    def __post_init__(self):
        self.samples = sorted(self.samples, key=lambda s: s[0])
        acts = np.array([s[0] for s in self.samples])
        angs = np.array([s[1] for s in self.samples])
        self.coefficients = np.polyfit(acts, angs, deg=3)
        fitted = np.polyval(self.coefficients, acts)
        self.fit_rms = float(np.sqrt(np.mean((fitted - angs) ** 2)))
        a_dense = np.linspace(0.0, 1.0, 100)
        self.dense = np.column_stack(
            [a_dense, np.polyval(self.coefficients, a_dense)])
        if self.timeout_flags is None:
            self.timeout_flags = [False] * len(self.samples)

    def to_rows(self) -> list[tuple]:
        rows = []
        for action, angle in self.samples:
            fitted = float(np.polyval(self.coefficients, action))
            rows.append((self.joint, action, angle, fitted))
        return rows


def export_curves_csv(curves, path) -> None:
    import csv
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["joint", "action", "measured_angle_rad",
                         "fitted_angle_rad"])
        for curve in curves:
            writer.writerows(curve.to_rows())


def load_curves_csv(path) -> list[ResponseCurve]:
    """Rebuild ResponseCurves (refitting the cubic) from an exported CSV."""
    import csv
    samples = {}
    with open(path, newline="") as fh:
        for row in csv.DictReader(fh):
            samples.setdefault(row["joint"], []).append(
                (float(row["action"]), float(row["measured_angle_rad"])))
    missing = [j for j in CURVE_ORDER if j not in samples]
    if missing:
        raise ValueError(f"curve CSV missing joints: {missing}")
    return [ResponseCurve(joint=j, samples=samples[j]) for j in CURVE_ORDER]


def save_params(params: ActuatorParams, path) -> None:
    """Key-value text file with the 8 named sysID parameters."""
    vec = params.to_vector()
    with open(path, "w") as fh:
        for name, value in zip(PARAM_NAMES, vec):
            fh.write(f"{name} = {float(value)!r}\n")


def load_params(path) -> ActuatorParams:
    values = {}
    with open(path) as fh:
        for line in fh:
            line = line.strip()
            if not line or line.startswith("#"):
                continue
            name, _, value = line.partition("=")
            values[name.strip()] = float(value)
    try:
        vec = [values[name] for name in PARAM_NAMES]
    except KeyError as err:
        raise ValueError(f"params file missing {err.args[0]}") from None
    return ActuatorParams.from_vector(vec)


SETTLE_RATE_TOL = 1e-3   # rad/s
SETTLE_TIMEOUT = 3.0     # s


def measure_response_curves(sim, actions) -> list[ResponseCurve]:
    """Measure steady-state motor and knee angles over an action sweep.

    Each action is applied symmetrically to both legs on the simulator's
    test stand (base clamped, leg gravity off) and held until joint rates
    drop below 1e-3 rad/s or 3 s elapse. Samples are warm-started from the
    previous steady state, so sweeps should be sorted ascending.
    """
    actions = sorted(actions)
    if not actions:
        raise ValueError("action sweep must be nonempty")
    state = sim.bench_reset()
    dt = sim.config.control_dt
    steps_per_check = max(1, int(round(0.05 / dt)))
    max_steps = int(round(SETTLE_TIMEOUT / dt))
    samples = {name: [] for name in CURVE_ORDER}
    flags = []
    for action in actions:
        timed_out = True
        for i in range(max_steps):
            state = sim.bench_step(state, (action, action))
            if (i + 1) % steps_per_check == 0:
                rate = max(abs(state.joint_rates[1]), abs(state.joint_rates[3]))
                motor_err = max(abs(state.motor_angles[0] - HALF_PI * action),
                                abs(state.motor_angles[1] - HALF_PI * action))
                if rate < SETTLE_RATE_TOL and motor_err < 1e-9:
                    timed_out = False
                    break
        flags.append(timed_out)
        samples["motor_L"].append((action, state.motor_angles[0]))
        samples["knee_L"].append((action, state.joint_angles[1]))
        samples["motor_R"].append((action, state.motor_angles[1]))
        samples["knee_R"].append((action, state.joint_angles[3]))
    return [ResponseCurve(joint=name, samples=samples[name],
                          timeout_flags=list(flags))
            for name in CURVE_ORDER]
