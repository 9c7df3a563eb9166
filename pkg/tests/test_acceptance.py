"""End-to-end acceptance suite.

Twelve criteria covering the whole stack: exact geometry oracles, the
actuator steady-state law, system identification and its behavioral effect,
the tracking reward, the PPO engine, residual-force learning and its
supervised baseline, task-policy transfer orderings across the four training
settings, and the standing physics invariants.

The expensive fixtures (residual training, task policies) are session-scoped
and shared between criteria; the full module is a desktop-CPU-scale run (on
the order of an hour single-threaded).
"""

import math
import time
from dataclasses import replace

import numpy as np
import pytest

from ballu import dynamics
from ballu.actuator import (ActuatorParams, PARAM_BOUNDS,
                            measure_response_curves, steady_state_knee_angle)
from ballu.config import MorphologyConfig
from ballu.envmimic import (MimicObservation, ReferenceSet, RewardWeights,
                            improved_sim, mimic_reward, train_envmimic,
                            train_sl_residual, trajectory_comparison)
from ballu.harness import evaluate_transfer
from ballu.hiddenworld import (HiddenWorldConfig, HiddenWorldSim,
                               collect_reference_set, default_hidden_params)
from ballu.nn import Mlp, MlpPolicy, flat_params, set_flat_params
from ballu.ppo import PpoHyperparams, evaluate_policy, ppo_train
from ballu.simulators import VanillaSim
from ballu.sysid import (ActionSweep, bang_bang_actions, directed_hausdorff,
                         run_sysid, sysid_effect_demo)
from ballu.tasks import DomainRandomizationConfig, train_task_policy

# --- shared tuning knobs ------------------------------------------------------

SWEEP_POINTS = 20
REF_HORIZON = 150                      # 7.5 s references at 20 Hz
REF_PERIODS = (0.8, 1.0, 1.2, 0.85)    # bang-bang periods; last one held out
COLLECT_SEED = 42
RESIDUAL_SEED = 3
RESIDUAL_STEPS = 5_000_000
RESIDUAL_BATCH = 8192
NOISY_RESIDUAL_STEPS = 2_500_000
TASK_STEPS = 300_000
TASK_HORIZON = 400
EVAL_SEEDS = (0, 1, 2, 3, 4)
SETTINGS = ("sysid-only", "dr-only", "sysid+dr", "envmimic")


@pytest.fixture(scope="session")
def config():
    return MorphologyConfig()


@pytest.fixture(scope="session")
def hidden_config():
    return HiddenWorldConfig.default()


@pytest.fixture(scope="session")
def sysid_fix(config, hidden_config):
    """Clean-mode curve measurement and the parameter fit from a 30% offset."""
    hidden = HiddenWorldSim(hidden_config.quiet(), config)
    sweep = ActionSweep.default(SWEEP_POINTS)
    hw_curves = measure_response_curves(hidden, sweep.actions)
    truth = default_hidden_params().to_vector()
    lo = np.array([b[0] for b in PARAM_BOUNDS])
    hi = np.array([b[1] for b in PARAM_BOUNDS])
    p0 = np.clip(truth * 1.3, lo, hi)
    t0 = time.perf_counter()
    report = run_sysid(p0, PARAM_BOUNDS, sweep, hw_curves, config)
    wall = time.perf_counter() - t0
    identified = ActuatorParams.from_vector(report.final_params)
    return {"sweep": sweep, "hw_curves": hw_curves, "report": report,
            "identified": identified, "wall": wall}


def _references(config, hidden_cfg, *, horizon=REF_HORIZON,
                periods=REF_PERIODS, base_seed=COLLECT_SEED) -> ReferenceSet:
    seqs = [bang_bang_actions(horizon, config.control_dt, p) for p in periods]
    trajs = collect_reference_set(seqs, 1, hidden_cfg, config,
                                  base_seed=base_seed)
    return ReferenceSet.build(trajs, holdout=1)


@pytest.fixture(scope="session")
def residual_fix(config, hidden_config):
    """RL residual trained on drag-plus-asymmetry references (no noise)."""
    clean_cfg = replace(hidden_config, wind_bias_range=0.0,
                        process_noise_std=0.0)
    refs = _references(config, clean_cfg)
    t0 = time.perf_counter()
    policy, log = train_envmimic(
        refs, default_hidden_params(), config, total_steps=RESIDUAL_STEPS,
        seed=RESIDUAL_SEED, hyper=PpoHyperparams(batch_steps=RESIDUAL_BATCH))
    wall = time.perf_counter() - t0
    return {"refs": refs, "policy": policy, "log": log, "wall": wall,
            "hidden_cfg": clean_cfg}


@pytest.fixture(scope="session")
def noisy_residual_fix(config, hidden_config):
    """RL and SL residuals from references collected with process noise."""
    refs = _references(config, hidden_config)
    params = default_hidden_params()
    rl, _ = train_envmimic(
        refs, params, config, total_steps=NOISY_RESIDUAL_STEPS,
        seed=RESIDUAL_SEED, hyper=PpoHyperparams(batch_steps=RESIDUAL_BATCH))
    sl = train_sl_residual(refs, params, config, seed=RESIDUAL_SEED)
    return {"refs": refs, "rl": rl, "sl": sl}


@pytest.fixture(scope="session")
def transfer_fix(config, hidden_config, residual_fix):
    """Task policies for all four training settings, evaluated on the emulator."""
    naive = ActuatorParams()
    ident = default_hidden_params()
    factories = {
        "sysid-only": (lambda cfg: VanillaSim(ident, cfg), None),
        "dr-only": (lambda cfg: VanillaSim(naive, cfg),
                    DomainRandomizationConfig()),
        "sysid+dr": (lambda cfg: VanillaSim(ident, cfg),
                     DomainRandomizationConfig()),
        "envmimic": (lambda cfg: improved_sim(ident, cfg,
                                              residual_fix["policy"]),
                     DomainRandomizationConfig()),
    }
    hidden = HiddenWorldSim(hidden_config, config)
    report = {}
    for task in ("forward", "turn_left"):
        report[task] = {}
        for setting, (factory, dr) in factories.items():
            policy, _ = train_task_policy(
                task, factory, config, dr=dr, total_steps=TASK_STEPS,
                seed=0, horizon=TASK_HORIZON)
            report[task][setting] = evaluate_transfer(
                policy, factory(config), hidden, EVAL_SEEDS, config,
                horizon=TASK_HORIZON)
    return report


# --- 1: directed Hausdorff oracle equivalence ---------------------------------

def brute_force_hausdorff(a, b):
    best = 0.0
    for p in a:
        nearest = min(math.dist(p, q) for q in b)
        best = max(best, nearest)
    return best


def test_criterion_01_hausdorff_oracle():
    rng = np.random.default_rng(0)
    pairs = []
    for _ in range(200):
        na, nb = rng.integers(1, 65, size=2)
        pairs.append((rng.normal(size=(na, 2)) * 10,
                      rng.normal(size=(nb, 2)) * 10))
    elapsed = 0.0
    for a, b in pairs:
        t0 = time.perf_counter()
        got = directed_hausdorff(a, b)
        elapsed += time.perf_counter() - t0
        want = brute_force_hausdorff(a.tolist(), b.tolist())
        assert abs(got - want) <= 1e-12
    assert elapsed < 1.0


# --- 2: actuator steady-state law ----------------------------------------------

def test_criterion_02_steady_state_law(config):
    params = ActuatorParams()
    sweep = ActionSweep.default(50)
    curves = measure_response_curves(VanillaSim(params, config),
                                     sweep.actions)
    tol = math.radians(0.5)
    for curve in curves:
        leg = 0 if curve.joint.endswith("_L") else 1
        for action, measured in curve.samples:
            if curve.joint.startswith("knee"):
                expected = steady_state_knee_angle(action, params, leg)
                assert abs(measured - expected) < tol, curve.joint


# --- 3: sysid recovery ----------------------------------------------------------

def test_criterion_03_sysid_recovery(config, sysid_fix):
    report = sysid_fix["report"]
    assert report.final_objective <= 0.1 * report.initial_objective
    assert sysid_fix["wall"] < 300.0
    id_curves = measure_response_curves(
        VanillaSim(sysid_fix["identified"], config),
        sysid_fix["sweep"].actions)
    for c_id, c_hw in zip(id_curves, sysid_fix["hw_curves"]):
        errs = [abs(a - b) for (_, a), (_, b)
                in zip(c_id.samples, c_hw.samples)]
        mae = math.degrees(sum(errs) / len(errs))
        assert mae < 2.0, c_id.joint


# --- 4: sysid behavioral effect --------------------------------------------------

def test_criterion_04_sysid_effect(config, sysid_fix):
    gaps = sysid_effect_demo(ActuatorParams(), sysid_fix["identified"],
                             config)
    assert gaps["final_com_gap_m"] > 0.05
    assert gaps["mean_joint_angle_gap_deg"] > 2.0


# --- 5: tracking reward point checks ---------------------------------------------

def test_criterion_05_reward_point_checks(config):
    params = ActuatorParams()
    weights = RewardWeights()
    s = dynamics.nominal_state(params, config)
    assert mimic_reward(s, s, weights, config) == pytest.approx(1.0,
                                                                abs=1e-4)

    px, py, pz = s.base_position
    moved = replace(s, base_position=(px + math.sqrt(0.1), py, pz))
    assert mimic_reward(moved, s, weights, config) == pytest.approx(
        0.5575, abs=1e-4)

    tilted = replace(s, base_orientation=(0.0, 1.0, 0.0))
    # cancel the balloon displacement caused by the pitch so only the
    # orientation term differs
    bp_ref = dynamics.balloon_position(s, config)
    bp_act = dynamics.balloon_position(tilted, config)
    tilted = replace(tilted, base_position=(
        px + bp_ref[0] - bp_act[0], py + bp_ref[1] - bp_act[1],
        pz + bp_ref[2] - bp_act[2]))
    assert mimic_reward(tilted, s, weights, config) == pytest.approx(
        0.8348, abs=1e-4)


# --- 6: PPO engine sanity ----------------------------------------------------------

class PointMass1D:
    """Push a 1D point mass to hold position 1."""

    def __init__(self):
        self.rng = np.random.default_rng(0)

    def seed(self, s):
        self.rng = np.random.default_rng(s)

    def reset(self):
        self.x = float(self.rng.uniform(-2, 2))
        self.v = 0.0
        self.t = 0
        return np.array([self.x, self.v])

    def step(self, action):
        a = float(np.clip(action[0], -1.0, 1.0))
        self.v += 0.1 * a
        self.x += 0.1 * self.v
        self.t += 1
        return (np.array([self.x, self.v]),
                -abs(self.x - 1.0) - 0.01 * a * a, self.t >= 100)


def test_criterion_06_ppo_improvement():
    policy = MlpPolicy(2, 1, np.random.default_rng(1))
    base = np.mean(evaluate_policy(PointMass1D(), policy, episodes=10,
                                   max_steps=100))
    policy, _ = ppo_train(PointMass1D(), policy, PpoHyperparams(),
                          100_000, seed=0)
    after = np.mean(evaluate_policy(PointMass1D(), policy, episodes=10,
                                    max_steps=100))
    assert abs(base) / abs(after) >= 5.0


def test_criterion_06_gradient_check():
    rng = np.random.default_rng(0)
    net = Mlp([5, 8, 8, 2], rng, out_gain=1.0)
    x = rng.normal(size=(7, 5))
    y = rng.normal(size=(7, 2))
    net.zero_grads()
    pred = net.forward(x)
    net.backward(2.0 * (pred - y) / pred.size)
    analytic = flat_params(net.grads())
    params = net.params()
    flat = flat_params(params).copy()
    numeric = np.zeros_like(flat)
    for i in range(len(flat)):
        probe = flat.copy()
        probe[i] += 1e-6
        set_flat_params(params, probe)
        lp = float(np.mean((net.forward(x) - y) ** 2))
        probe[i] -= 2e-6
        set_flat_params(params, probe)
        lm = float(np.mean((net.forward(x) - y) ** 2))
        numeric[i] = (lp - lm) / 2e-6
    set_flat_params(params, flat)
    rel = np.abs(analytic - numeric) / (np.abs(numeric) + 1e-8)
    assert rel.max() < 1e-4


# --- 7: residual tracking ------------------------------------------------------------

def _open_loop_replay(traj, policy, params, config):
    """Replay a reference's actions with the residual's mean forces."""
    state = traj.steps[0].state
    obs = MimicObservation.initial(state, config)
    rewards = []
    weights = RewardWeights()
    for j in range(1, len(traj.steps)):
        force = np.clip(policy.mean_action(obs.vector()), -1.0, 1.0) \
            if policy is not None else None
        ext = dynamics.ExternalForce(tuple(force)) \
            if force is not None else None
        state = dynamics.step(state, traj.steps[j].action, ext, params,
                              config)
        obs = obs.advance(state, config)
        rewards.append(mimic_reward(state, traj.steps[j].state,
                                    weights, config))
    return state, rewards


def _final_errors(state, reference_final, config):
    pos_err = math.dist(dynamics.balloon_position(state, config),
                        dynamics.balloon_position(reference_final, config))
    yaw_err = abs(math.degrees(dynamics.wrap_angle(
        state.base_orientation[2]
        - reference_final.base_orientation[2])))
    return pos_err, yaw_err


def test_criterion_07_residual_tracking(config, residual_fix):
    assert residual_fix["wall"] < 3600.0
    refs = residual_fix["refs"]
    policy = residual_fix["policy"]
    params = default_hidden_params()

    for ti in refs.train_indices:
        _, rewards = _open_loop_replay(refs.trajectories[ti], policy,
                                       params, config)
        assert np.mean(rewards) >= 0.8, f"training trajectory {ti}"

    holdout = refs.trajectories[refs.holdout_indices[0]]
    final_ref = holdout.steps[-1].state
    with_policy, _ = _open_loop_replay(holdout, policy, params, config)
    without, _ = _open_loop_replay(holdout, None, params, config)
    pos_rl, yaw_rl = _final_errors(with_policy, final_ref, config)
    pos_v, yaw_v = _final_errors(without, final_ref, config)
    assert pos_rl <= 0.5 * pos_v
    assert yaw_rl <= 0.5 * yaw_v


# --- 8: RL-vs-SL residual ordering ------------------------------------------------------

def test_criterion_08_rl_vs_sl_yaw(config, hidden_config,
                                   noisy_residual_fix):
    refs = noisy_residual_fix["refs"]
    params = default_hidden_params()
    holdout = refs.trajectories[refs.holdout_indices[0]]
    systems = {
        "rl": improved_sim(params, config, noisy_residual_fix["rl"]),
        "sl": improved_sim(params, config, noisy_residual_fix["sl"]),
    }
    hidden = HiddenWorldSim(hidden_config, config)
    yaw = {"rl": [], "sl": []}
    for seed in EVAL_SEEDS:
        result = trajectory_comparison(holdout.actions, systems, hidden,
                                       config, seed=seed)
        for name in yaw:
            yaw[name].append(abs(math.degrees(
                result.final_yaw_error[name])))
    assert np.median(yaw["rl"]) <= np.median(yaw["sl"])


# --- 9-11: transfer orderings across the four settings ------------------------------------

def test_criterion_09_forward_transfer(transfer_fix):
    x = {s: transfer_fix["forward"][s].median["x_distance"]
         for s in SETTINGS}
    assert x["envmimic"] >= 1.5 * x["sysid-only"]
    assert x["envmimic"] == max(x.values())


def test_criterion_10_turn_transfer(transfer_fix):
    y = {s: transfer_fix["turn_left"][s].median["y_distance"]
         for s in SETTINGS}
    assert y["envmimic"] == max(y.values())


def test_criterion_11_error_metrics(transfer_fix):
    for task in ("forward", "turn_left"):
        com = {s: transfer_fix[task][s].median["mean_per_step_com_error"]
               for s in SETTINGS}
        yaw = {s: abs(transfer_fix[task][s].median["final_yaw_error"])
               for s in SETTINGS}
        assert com["envmimic"] == min(com.values()), task
        assert yaw["envmimic"] == min(yaw.values()), task


# --- 12: physics invariants -----------------------------------------------------------------

def test_criterion_12_static_drift(config):
    params = ActuatorParams()
    s0 = dynamics.settle_state(params, config)
    state = s0
    for _ in range(int(round(5.0 / config.control_dt))):
        state = dynamics.step(state, (0.0, 0.0), None, params, config)
    assert math.dist(state.base_position, s0.base_position) < 1e-3


def test_criterion_12_impulse_consistency(config):
    params = ActuatorParams()
    s0 = dynamics.nominal_state(params, config)
    s0 = replace(s0, base_position=(0.0, 0.0, s0.base_position[2] + 2.0))
    force = (0.3, -0.2, 0.1)
    state = s0
    n = 20
    for _ in range(n):
        state = dynamics.step(state, (0.0, 0.0),
                              dynamics.ExternalForce(force), params, config)
    t = n * config.control_dt
    m = config.total_mass
    expected = np.array([force[0] * t, force[1] * t,
                         (force[2] + config.buoyancy_force
                          - m * dynamics.GRAVITY) * t])
    actual = m * np.asarray(state.base_linear_velocity)
    assert np.allclose(actual, expected, rtol=1e-9, atol=1e-15)


def test_criterion_12_penetration(config):
    params = ActuatorParams()
    state = dynamics.nominal_state(params, config, height_margin=0.05)
    worst = 0.0
    for _ in range(int(round(3.0 / config.control_dt))):
        state = dynamics.step(state, (0.0, 0.0), None, params, config)
        worst = min(worst, min(
            fz for _, _, fz in dynamics.foot_positions(state, config)))
    assert worst > -5e-3


def test_criterion_12_determinism(config, hidden_config):
    params = ActuatorParams()

    def run():
        sim = HiddenWorldSim(hidden_config, config)
        sim.reset(seed=11)
        for i in range(40):
            sim.step((0.5 + 0.4 * math.sin(0.3 * i), 0.5))
        return sim.state

    assert run() == run()
    van = VanillaSim(params, config)
    t1 = van.rollout(van.initial_state(), [(0.8, 0.2)] * 30, None, 30)
    t2 = van.rollout(van.initial_state(), [(0.8, 0.2)] * 30, None, 30)
    assert t1.steps[-1].state == t2.steps[-1].state
