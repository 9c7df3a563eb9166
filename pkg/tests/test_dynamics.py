"""Physics unit tests: kinematics, stepping, contact, conservation laws."""

import math
from dataclasses import replace

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from ballu import dynamics
from ballu.config import GRAVITY, MorphologyConfig
from ballu.dynamics import (ExternalForce, RobotState, SimulationDiverged,
                            balloon_position, com_position, foot_positions,
                            mechanical_energy, nominal_state, rotation_matrix,
                            rollout, settle_state, step, wrap_angle)

angles = st.floats(min_value=-50.0, max_value=50.0,
                   allow_nan=False, allow_infinity=False)


@given(angles)
def test_wrap_angle_range(a):
    w = wrap_angle(a)
    assert -math.pi < w <= math.pi


@given(angles)
def test_wrap_angle_preserves_direction(a):
    w = wrap_angle(a)
    assert math.isclose(math.sin(w), math.sin(a), abs_tol=1e-9)
    assert math.isclose(math.cos(w), math.cos(a), abs_tol=1e-9)


def test_wrap_angle_boundary():
    assert wrap_angle(math.pi) == pytest.approx(math.pi)
    assert wrap_angle(-math.pi) == pytest.approx(math.pi)
    assert wrap_angle(0.0) == 0.0


@given(angles, angles, angles)
@settings(max_examples=50)
def test_rotation_matrix_orthonormal(roll, pitch, yaw):
    R = np.asarray(rotation_matrix(roll, pitch, yaw)).reshape(3, 3)
    assert np.allclose(R @ R.T, np.eye(3), atol=1e-12)
    assert np.linalg.det(R) == pytest.approx(1.0, abs=1e-12)


def test_rotation_matrix_yaw_quarter_turn():
    # yaw pi/2 sends +x to +y
    R = np.asarray(rotation_matrix(0.0, 0.0, math.pi / 2)).reshape(3, 3)
    assert np.allclose(R @ [1.0, 0.0, 0.0], [0.0, 1.0, 0.0], atol=1e-12)


def test_balloon_position_upright(params, config):
    state = nominal_state(params, config)
    bx, by, bz = balloon_position(state, config)
    px, py, pz = state.base_position
    assert (bx, by) == (px + config.balloon_arm, py)
    assert bz == pytest.approx(pz + config.balloon_offset)


def test_foot_positions_nominal_geometry(params, config):
    state = nominal_state(params, config)
    (lx, ly, lz), (rx, ry, rz) = foot_positions(state, config)
    # independent sagittal two-link forward kinematics
    th = config.default_hip_angle
    for leg, (fx, fy, fz) in enumerate(((lx, ly, lz), (rx, ry, rz))):
        tk = params.default_knee_angle[leg]
        ex = (config.femur_length * math.sin(th)
              + config.tibia_length * math.sin(th + tk))
        ez = -(config.femur_length * math.cos(th)
               + config.tibia_length * math.cos(th + tk))
        assert fx == pytest.approx(state.base_position[0] + ex, abs=1e-12)
        assert fz == pytest.approx(state.base_position[2] + ez, abs=1e-12)
    assert ly == pytest.approx(config.hip_lateral_offset)
    assert ry == pytest.approx(-config.hip_lateral_offset)
    # nominal pose rests the lower foot exactly at ground level
    assert min(lz, rz) == pytest.approx(0.0, abs=1e-12)


def test_com_centered_for_symmetric_pose(params, config):
    state = nominal_state(params, config)
    _, cy, _ = com_position(state, config)
    assert cy == pytest.approx(0.0, abs=1e-12)


def test_step_is_deterministic(params, config):
    s0 = settle_state(params, config)
    a = step(s0, (0.7, 0.3), ExternalForce((0.1, -0.2, 0.0)), params, config)
    b = step(s0, (0.7, 0.3), ExternalForce((0.1, -0.2, 0.0)), params, config)
    assert a == b


def test_step_rejects_out_of_range_action(params, config):
    s0 = nominal_state(params, config)
    with pytest.raises(ValueError):
        step(s0, (1.2, 0.0), None, params, config)
    with pytest.raises(ValueError):
        step(s0, (0.0, -0.1), None, params, config)


def test_external_force_budget():
    ExternalForce((1.0, -1.0, 0.999))
    with pytest.raises(ValueError):
        ExternalForce((1.5, 0.0, 0.0))


def test_step_raises_on_nonfinite_state(params, config):
    bad = replace(nominal_state(params, config),
                  base_position=(math.nan, 0.0, 1.0))
    with pytest.raises(SimulationDiverged):
        step(bad, (0.0, 0.0), None, params, config)


def test_settle_state_is_quiescent(params, config):
    s = settle_state(params, config)
    assert s.base_position[:2] == (0.0, 0.0)
    assert s.base_linear_velocity == (0.0, 0.0, 0.0)
    assert s.base_angular_velocity == (0.0, 0.0, 0.0)
    assert s.joint_rates == (0.0, 0.0, 0.0, 0.0)
    assert s.base_orientation[2] == 0.0
    assert s.sim_time == 0.0


def test_static_equilibrium_drift(params, config):
    # < 1 mm base drift over 5 s of zero action from the settled stand
    s0 = settle_state(params, config)
    state = s0
    for _ in range(int(round(5.0 / config.control_dt))):
        state = step(state, (0.0, 0.0), None, params, config)
    drift = math.dist(state.base_position, s0.base_position)
    assert drift < 1e-3


def test_impulse_consistency_free_flight(params, config):
    # momentum change equals (external + buoyancy - weight) * t exactly
    s0 = nominal_state(params, config)
    s0 = replace(s0, base_position=(0.0, 0.0, s0.base_position[2] + 2.0))
    force = (0.3, -0.2, 0.1)
    n_steps = 20
    state = s0
    for _ in range(n_steps):
        state = step(state, (0.0, 0.0), ExternalForce(force), params, config)
    assert all(fz > 0.1 for _, _, fz in foot_positions(state, config))
    t = n_steps * config.control_dt
    m = config.total_mass
    expected = np.array([force[0] * t, force[1] * t,
                         (force[2] + config.buoyancy_force
                          - m * GRAVITY) * t])
    actual = m * (np.asarray(state.base_linear_velocity)
                  - np.asarray(s0.base_linear_velocity))
    assert np.allclose(actual, expected, rtol=1e-9, atol=1e-15)


def test_penetration_bounded_on_drop(params, config):
    state = nominal_state(params, config, height_margin=0.05)
    worst = 0.0
    for _ in range(int(round(3.0 / config.control_dt))):
        state = step(state, (0.0, 0.0), None, params, config)
        lowest = min(fz for _, _, fz in foot_positions(state, config))
        worst = min(worst, lowest)
    assert worst > -5e-3


def test_stiction_holds_small_lateral_load(params, config):
    # under a lateral force well inside the friction cone the robot may lean
    # (the force acts at the balloon) but the feet must not slip
    s0 = settle_state(params, config)
    feet0 = foot_positions(s0, config)
    state = s0
    for _ in range(int(round(1.0 / config.control_dt))):
        state = step(state, (0.0, 0.0), ExternalForce((0.005, 0.0, 0.0)),
                     params, config)
    for (x0, y0, _), (x1, y1, _) in zip(feet0,
                                        foot_positions(state, config)):
        assert math.hypot(x1 - x0, y1 - y0) < 1e-3


def test_lift_off_clears_contact_anchors(params, config):
    state = settle_state(params, config)
    assert any(a is not None for a in state.contact_anchors)
    for _ in range(20):
        state = step(state, (0.0, 0.0), ExternalForce((0.0, 0.0, 1.0)),
                     params, config)
    assert state.base_position[2] > settle_state(params, config
                                                 ).base_position[2] + 0.05
    assert state.contact_anchors == (None, None)


def test_energy_dissipates_from_perturbed_state(params, config):
    state = replace(settle_state(params, config),
                    base_linear_velocity=(0.05, 0.02, 0.0),
                    joint_rates=(0.0, 0.3, 0.0, -0.3))
    e_prev = mechanical_energy(state, params, config)
    e0 = e_prev
    for _ in range(100):
        state = step(state, (0.0, 0.0), None, params, config)
        e = mechanical_energy(state, params, config)
        assert e <= e_prev + 1e-6
        e_prev = e
    assert e_prev < e0


def test_rollout_shape_and_times(params, config):
    s0 = settle_state(params, config)
    traj = rollout(s0, [(0.0, 0.0)] * 10, None, 10, params, config)
    assert len(traj) == 10
    times = [s.time for s in traj.steps]
    assert times[0] == pytest.approx(config.control_dt)
    assert np.allclose(np.diff(times), config.control_dt)
    with pytest.raises(ValueError):
        rollout(s0, [], None, 0, params, config)


def test_rollout_callable_sources_match_recorded(params, config):
    s0 = settle_state(params, config)
    acts = [(0.5, 0.2)] * 8
    forces = [(0.1, 0.0, -0.1)] * 8
    a = rollout(s0, acts, forces, 8, params, config)
    b = rollout(s0, lambda s, i: acts[i], lambda s, i: forces[i], 8,
                params, config)
    assert a.steps[-1].state == b.steps[-1].state


def test_buoyancy_cannot_exceed_weight():
    with pytest.raises(ValueError):
        MorphologyConfig(buoyancy_force=10.0)


def test_control_dt_must_be_multiple_of_physics_dt():
    with pytest.raises(ValueError):
        MorphologyConfig(physics_dt=0.003, control_dt=0.05)


def test_config_hash_sensitivity(config):
    assert config.config_hash() == MorphologyConfig().config_hash()
    assert config.with_friction(0.5).config_hash() != config.config_hash()
