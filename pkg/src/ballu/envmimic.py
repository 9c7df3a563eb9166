"""Residual-dynamics learning by trajectory imitation.

A force policy (3 components in [-1, 1] N, applied at the balloon center) is
trained so that the identified simulator, replaying recorded action sequences
open-loop, tracks reference trajectories collected from the hardware
emulator. A supervised baseline fits the same mapping on per-step force
labels recovered by a one-step force-identification oracle. Either residual
can then be frozen into an "improved" simulator for task training.
"""

from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass

import numpy as np

from . import dynamics
from .actuator import ActuatorParams
from .config import MorphologyConfig
from .nn import MlpPolicy, MlpRegressor, mlp_supervised_fit
from .ppo import PpoHyperparams, ppo_train
from .trajectory import Trajectory

FEATURES_PER_STEP = 27
HISTORY = 3
OBS_DIM = FEATURES_PER_STEP * HISTORY          # 81
TERMINATION_DISTANCE = 0.5                     # m, balloon-position divergence
FORCE_RESOLUTION = 0.01                        # N, oracle grid resolution


def state_features(state: dynamics.RobotState,
                   config: MorphologyConfig) -> np.ndarray:
    """27 per-step features: balloon pose/velocity, base, feet."""
    bp = dynamics.balloon_position(state, config)
    bv = dynamics.balloon_velocity(state, config)
    fp = dynamics.foot_positions(state, config)
    fv = dynamics.foot_velocities(state, config)
    return np.array([*bp, *bv, *state.base_orientation,
                     *state.base_position, *state.base_linear_velocity,
                     *fp[0], *fp[1], *fv[0], *fv[1]])


@dataclass
class MimicObservation:
    """Feature history over the current and two previous control steps."""

    history: tuple    # (current, previous, two-back), each a 27-vector

    @classmethod
    def initial(cls, state, config) -> "MimicObservation":
        f = state_features(state, config)
        return cls(history=(f, f.copy(), f.copy()))

    def advance(self, state, config) -> "MimicObservation":
        f = state_features(state, config)
        return MimicObservation(history=(f, self.history[0],
                                         self.history[1]))

    def vector(self) -> np.ndarray:
        return np.concatenate(self.history)


@dataclass(frozen=True)
class RewardWeights:
    w_pos: float = 0.7
    w_orn: float = 0.3
    orientation_metric: tuple = (0.2, 0.4, 0.4)
    pos_sharpness: float = 10.0
    orn_sharpness: float = 2.0

    def __post_init__(self):
        if not math.isclose(self.w_pos + self.w_orn, 1.0):
            raise ValueError("position and orientation weights must sum to 1")
        if any(w <= 0.0 for w in self.orientation_metric):
            raise ValueError("orientation metric entries must be positive")


def mimic_reward(actual: dynamics.RobotState,
                 reference: dynamics.RobotState,
                 weights: RewardWeights,
                 config: MorphologyConfig) -> float:
    """Tracking reward in (0, 1]: weighted balloon position/orientation terms."""
    pa = dynamics.balloon_position(actual, config)
    pr = dynamics.balloon_position(reference, config)
    pos_err2 = sum((a - r) ** 2 for a, r in zip(pa, pr))
    orn_err2 = sum(
        w * dynamics.wrap_angle(a - r) ** 2
        for w, a, r in zip(weights.orientation_metric,
                           actual.base_orientation,
                           reference.base_orientation))
    return (weights.w_pos * math.exp(-weights.pos_sharpness * pos_err2)
            + weights.w_orn * math.exp(-weights.orn_sharpness * orn_err2))


@dataclass
class ReferenceSet:
    """Hidden-world reference trajectories with recorded action sequences."""

    trajectories: list
    holdout_indices: tuple

    def __post_init__(self):
        if not self.trajectories:
            raise ValueError("reference set is empty")
        if not self.holdout_indices:
            raise ValueError("held-out split must be nonempty")
        if not self.train_indices:
            raise ValueError("training split must be nonempty")
        for traj in self.trajectories:
            if any(s.action is None for s in traj.steps):
                raise ValueError("reference trajectory lacks recorded actions")

    @classmethod
    def build(cls, trajectories, holdout: int = 1) -> "ReferenceSet":
        """Hold out the last `holdout` trajectories."""
        n = len(trajectories)
        return cls(trajectories=list(trajectories),
                   holdout_indices=tuple(range(n - holdout, n)))

    @property
    def train_indices(self):
        held = set(self.holdout_indices)
        return tuple(i for i in range(len(self.trajectories))
                     if i not in held)

    def actions(self, index: int):
        return [s.action for s in self.trajectories[index].steps]


class MimicEnv:
    """Imitation MDP: residual force in, tracking reward out.

    Each episode picks a training reference uniformly, starts from a
    uniformly sampled reference step (reference-state initialization), and
    replays the recorded actions open-loop while the agent's 3D force acts at
    the balloon center. Terminates at trajectory end or at 0.5 m balloon
    divergence.
    """

    def __init__(self, reference: ReferenceSet, params: ActuatorParams,
                 config: MorphologyConfig,
                 weights: RewardWeights = RewardWeights()):
        self.reference = reference
        self.params = params
        self.config = config
        self.weights = weights
        self._rng = np.random.default_rng(0)
        self.obs_dim = OBS_DIM
        self.act_dim = 3

    def seed(self, s: int):
        self._rng = np.random.default_rng(s)

    def reset(self):
        idx = int(self._rng.choice(self.reference.train_indices))
        self.traj = self.reference.trajectories[idx]
        n = len(self.traj.steps)
        self.ptr = int(self._rng.integers(0, n - 1))   # start in [0, N-2]
        self.state = self.traj.steps[self.ptr].state
        self.obs = MimicObservation.initial(self.state, self.config)
        return self.obs.vector()

    def step(self, force):
        force = np.clip(np.asarray(force, dtype=float), -1.0, 1.0)
        ref = self.traj.steps[self.ptr + 1]
        self.state = dynamics.step(
            self.state, ref.action, dynamics.ExternalForce(tuple(force)),
            self.params, self.config)
        reward = mimic_reward(self.state, ref.state, self.weights,
                              self.config)
        self.ptr += 1
        pa = dynamics.balloon_position(self.state, self.config)
        pr = dynamics.balloon_position(ref.state, self.config)
        diverged = math.dist(pa, pr) > TERMINATION_DISTANCE
        done = diverged or self.ptr >= len(self.traj.steps) - 1
        self.obs = self.obs.advance(self.state, self.config)
        return self.obs.vector(), reward, done


def train_envmimic(reference: ReferenceSet, identified_params: ActuatorParams,
                   config: MorphologyConfig, *, total_steps: int = 300_000,
                   seed: int = 0, hyper: PpoHyperparams = None,
                   weights: RewardWeights = RewardWeights()):
    """Train the residual force policy; returns (policy, training log)."""
    env = MimicEnv(reference, identified_params, config, weights)
    policy = MlpPolicy(OBS_DIM, 3, np.random.default_rng(seed),
                       action_low=-1.0, action_high=1.0)
    return ppo_train(env, policy, hyper or PpoHyperparams(), total_steps,
                     seed=seed)


def identify_step_force(state, action, target_balloon_pos,
                        params: ActuatorParams, config: MorphologyConfig):
    """One-step force-identification oracle.

    Coarse 3D grid then coordinate descent (down to 0.01 N) over the constant
    balloon force minimizing next-step balloon-position error. Returns
    (force, error, baseline_error); the caller drops the transition when the
    best error fails to beat the zero-force baseline.
    """
    def error(f):
        try:
            nxt = dynamics.step(state, action, dynamics.ExternalForce(f),
                                params, config)
        except dynamics.SimulationDiverged:
            return math.inf
        return math.dist(dynamics.balloon_position(nxt, config),
                         target_balloon_pos)

    baseline = error((0.0, 0.0, 0.0))
    best_f = (0.0, 0.0, 0.0)
    best_e = baseline
    for fx in (-0.8, -0.4, 0.0, 0.4, 0.8):
        for fy in (-0.8, -0.4, 0.0, 0.4, 0.8):
            for fz in (-0.8, -0.4, 0.0, 0.4, 0.8):
                e = error((fx, fy, fz))
                if e < best_e:
                    best_e, best_f = e, (fx, fy, fz)
    step_size = 0.2
    while step_size >= FORCE_RESOLUTION - 1e-12:
        improved = False
        for axis in range(3):
            for direction in (1.0, -1.0):
                cand = list(best_f)
                cand[axis] = min(1.0, max(-1.0,
                                          cand[axis] + direction * step_size))
                e = error(tuple(cand))
                if e < best_e:
                    best_e, best_f = e, tuple(cand)
                    improved = True
        if not improved:
            step_size *= 0.5
    return best_f, best_e, baseline


@dataclass
class SlResidual:
    """Supervised residual: mimic observation -> force, with fit diagnostics."""

    model: MlpRegressor
    dropped_transitions: int
    labels: np.ndarray
    train_loss: float
    val_loss: float

    def predict_force(self, obs_vector):
        f = self.model.predict(obs_vector)[0]
        return np.clip(f, -1.0, 1.0)

    def save(self, path, extra=None):
        data = {"kind": "sl_residual",
                "model": self.model.state_dict(),
                "dropped_transitions": self.dropped_transitions,
                "train_loss": self.train_loss, "val_loss": self.val_loss}
        if extra:
            data["extra"] = extra
        with open(path, "w") as fh:
            json.dump(data, fh)

    @classmethod
    def load(cls, path) -> "SlResidual":
        with open(path) as fh:
            data = json.load(fh)
        return cls(model=MlpRegressor.from_state(data["model"]),
                   dropped_transitions=data["dropped_transitions"],
                   labels=np.zeros((0, 3)),
                   train_loss=data["train_loss"],
                   val_loss=data["val_loss"])


def train_sl_residual(reference: ReferenceSet,
                      identified_params: ActuatorParams,
                      config: MorphologyConfig, *, seed: int = 0,
                      max_epochs: int = 300) -> SlResidual:
    """Fit the supervised force baseline on oracle-labeled transitions."""
    inputs, labels, groups = [], [], []
    dropped = 0
    for ti in reference.train_indices:
        traj = reference.trajectories[ti]
        obs = MimicObservation.initial(traj.steps[0].state, config)
        for j in range(len(traj.steps) - 1):
            state = traj.steps[j].state
            nxt = traj.steps[j + 1]
            target = dynamics.balloon_position(nxt.state, config)
            force, err, baseline = identify_step_force(
                state, nxt.action, target, identified_params, config)
            if err >= baseline:
                dropped += 1
            else:
                inputs.append(obs.vector())
                labels.append(force)
                groups.append(ti)
            obs = obs.advance(state, config)
    labels = np.asarray(labels, dtype=float)
    fit = mlp_supervised_fit(np.asarray(inputs), labels,
                             groups=np.asarray(groups), seed=seed,
                             max_epochs=max_epochs)
    return SlResidual(model=fit.model, dropped_transitions=dropped,
                      labels=labels, train_loss=fit.train_loss,
                      val_loss=fit.val_loss)


def _residual_fn(residual):
    """Normalize the residual interface to obs-vector -> clipped force."""
    if residual is None:
        return None, OBS_DIM
    if isinstance(residual, MlpPolicy):
        if residual.obs_dim != OBS_DIM:
            raise ValueError(f"residual policy expects {residual.obs_dim} "
                             f"features, simulator provides {OBS_DIM}")
        return (lambda v: np.clip(residual.mean_action(v), -1.0, 1.0),
                residual.obs_dim)
    if isinstance(residual, SlResidual):
        in_dim = residual.model.net.sizes[0]
        if in_dim != OBS_DIM:
            raise ValueError(f"residual model expects {in_dim} features, "
                             f"simulator provides {OBS_DIM}")
        return residual.predict_force, in_dim
    raise TypeError(f"unsupported residual type {type(residual).__name__}")


class ImprovedSim:
    """Identified simulator with a frozen residual force in the loop.

    Presents the same interface as VanillaSim; the residual force is queried
    deterministically from the mimic observation each control step and summed
    with any caller-supplied external force (clipped to the +/-1 N budget).
    """

    source = "improved"

    def __init__(self, params: ActuatorParams, config: MorphologyConfig,
                 residual):
        self._force_fn, _ = _residual_fn(residual)
        self.params = params
        self.config = config
        self.state = None
        self._obs = None

    def initial_state(self):
        return dynamics.settle_state(self.params, self.config)

    def reset(self, state=None, seed=None):
        self.state = state if state is not None else self.initial_state()
        self._obs = MimicObservation.initial(self.state, self.config)
        return self.state

    def step(self, action, external_force=None):
        force = np.zeros(3)
        if self._force_fn is not None:
            force = np.asarray(self._force_fn(self._obs.vector()),
                               dtype=float)
        if external_force is not None:
            ext = external_force.force \
                if isinstance(external_force, dynamics.ExternalForce) \
                else external_force
            force = np.clip(force + np.asarray(ext, dtype=float), -1.0, 1.0)
        ext = dynamics.ExternalForce(tuple(force)) if np.any(force) else None
        self.state = dynamics.step(self.state, action, ext, self.params,
                                   self.config)
        self._obs = self._obs.advance(self.state, self.config)
        return self.state

    def bench_reset(self):
        return dynamics.nominal_state(self.params, self.config)

    def bench_step(self, state, action):
        return dynamics.bench_step(state, action, self.params, self.config)

    def rollout(self, initial, action_source, residual_source, horizon,
                *, seed: int = 0) -> Trajectory:
        self.reset(state=initial)

        def step_fn(s, a, ext):
            return self.step(a, external_force=ext)

        return dynamics.rollout(initial, action_source, residual_source,
                                horizon, self.params, self.config,
                                source=self.source, seed=seed,
                                step_fn=step_fn)


def improved_sim(identified_params: ActuatorParams,
                 config: MorphologyConfig, residual) -> ImprovedSim:
    return ImprovedSim(identified_params, config, residual)


@dataclass
class ComparisonResult:
    traces: dict          # system -> list of (t, x, y, yaw)
    mean_position_error: dict
    final_yaw_error: dict
    diverged: dict

    def save_csv(self, path):
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(["system", "t", "x", "y", "yaw"])
            for system, rows in self.traces.items():
                for t, x, y, yaw in rows:
                    writer.writerow([system, f"{t:.6f}", f"{x:.9f}",
                                     f"{y:.9f}", f"{yaw:.9f}"])


def _trace(traj: Trajectory, config: MorphologyConfig):
    rows = []
    for s in traj.steps:
        x, y, _ = dynamics.balloon_position(s.state, config)
        rows.append((s.time, x, y, s.state.base_orientation[2]))
    return rows


def trajectory_comparison(action_sequence, systems: dict, hidden_sim,
                          config: MorphologyConfig, *,
                          seed: int = 0) -> ComparisonResult:
    """Open-loop replay of one action sequence across systems vs ground truth.

    Each system starts from its own quiescent state (hardware state cannot be
    set); errors are measured against the hidden-world trace. Divergence is
    recorded per system and the comparison continues.
    """
    horizon = len(action_sequence)
    hidden_traj = hidden_sim.rollout(hidden_sim.initial_state(),
                                     list(action_sequence), None, horizon,
                                     seed=seed)
    hidden_trace = _trace(hidden_traj, config)
    traces = {"hidden-world": hidden_trace}
    mean_err, yaw_err, diverged = {}, {}, {}
    for name, sim in systems.items():
        try:
            traj = sim.rollout(sim.initial_state(), list(action_sequence),
                               None, horizon, seed=seed)
        except dynamics.SimulationDiverged as err:
            diverged[name] = True
            traces[name] = _trace(err.partial, config) if err.partial else []
            continue
        diverged[name] = False
        trace = _trace(traj, config)
        traces[name] = trace
        errs = [math.hypot(x - hx, y - hy)
                for (_, x, y, _), (_, hx, hy, _)
                in zip(trace, hidden_trace)]
        mean_err[name] = float(np.mean(errs))
        yaw_err[name] = dynamics.wrap_angle(trace[-1][3]
                                            - hidden_trace[-1][3])
    return ComparisonResult(traces=traces, mean_position_error=mean_err,
                            final_yaw_error=yaw_err, diverged=diverged)
