"""Directed Hausdorff distance, objective plumbing, and a small recovery run."""

import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from ballu.actuator import ActuatorParams, PARAM_BOUNDS, \
    measure_response_curves
from ballu.config import MorphologyConfig
from ballu.simulators import VanillaSim
from ballu.sysid import (ActionSweep, bang_bang_actions, curve_distance,
                         directed_hausdorff, run_sysid, sysid_effect_demo,
                         sysid_objective, _forward_gradient)

point_sets = st.lists(
    st.tuples(st.floats(-5, 5), st.floats(-5, 5)),
    min_size=1, max_size=24)


def brute_force_directed_hausdorff(a, b):
    return max(min(math.dist(p, q) for q in b) for p in a)


@given(point_sets, point_sets)
@settings(max_examples=60)
def test_directed_hausdorff_matches_brute_force(a, b):
    assert directed_hausdorff(a, b) == pytest.approx(
        brute_force_directed_hausdorff(a, b), abs=1e-12)


def test_directed_hausdorff_is_asymmetric():
    a = [(0.0, 0.0)]
    b = [(0.0, 0.0), (3.0, 4.0)]
    assert directed_hausdorff(a, b) == 0.0
    assert directed_hausdorff(b, a) == pytest.approx(5.0)


def test_directed_hausdorff_rejects_empty():
    with pytest.raises(ValueError):
        directed_hausdorff(np.zeros((0, 2)), [(0.0, 0.0)])


def test_action_sweep_sorts_and_validates():
    sweep = ActionSweep(actions=(0.9, 0.1, 0.5))
    assert sweep.actions == (0.1, 0.5, 0.9)
    assert len(ActionSweep.default(20)) == 20
    with pytest.raises(ValueError):
        ActionSweep(actions=(0.5, 1.2))


def test_bang_bang_actions_alternate():
    acts = bang_bang_actions(40, 0.05, period=1.0)
    assert acts[0] == (1.0, 0.0)
    assert acts[10] == (0.0, 1.0)
    assert acts[20] == (1.0, 0.0)
    assert len(acts) == 40


def test_objective_penalizes_invalid_params(config):
    sweep = ActionSweep.default(5)
    ref = measure_response_curves(VanillaSim(ActuatorParams(), config),
                                  sweep.actions)
    bad = np.array([-0.1, 0.12, 0.14, 0.14, 0.35, 0.35, 1.1, 1.1])
    assert sysid_objective(bad, sweep, ref, config) == pytest.approx(1e6)


def test_objective_zero_at_truth(config):
    sweep = ActionSweep.default(5)
    truth = ActuatorParams()
    ref = measure_response_curves(VanillaSim(truth, config), sweep.actions)
    val = sysid_objective(truth.to_vector(), sweep, ref, config)
    assert val < 1e-9


def test_forward_gradient_on_quadratic():
    bounds = [(-10.0, 10.0)] * 3
    h = np.array([2.0, -1.0, 0.5])

    def f(p):
        return float(np.sum(h * p ** 2))

    p = np.array([1.0, 2.0, -3.0])
    grad = _forward_gradient(f, p, bounds)
    assert np.allclose(grad, 2 * h * p, rtol=1e-3)


def test_forward_gradient_respects_upper_bound():
    bounds = [(0.0, 1.0)]
    calls = []

    def f(p):
        calls.append(float(p[0]))
        return float(p[0] ** 2)

    _forward_gradient(f, np.array([1.0]), bounds)
    assert all(c <= 1.0 for c in calls)


def test_run_sysid_rejects_out_of_bounds_start(config):
    sweep = ActionSweep.default(5)
    ref = measure_response_curves(VanillaSim(ActuatorParams(), config),
                                  sweep.actions)
    p0 = ActuatorParams().to_vector()
    p0[0] = 5.0
    with pytest.raises(ValueError):
        run_sysid(p0, PARAM_BOUNDS, sweep, ref, config)


def test_run_sysid_small_recovery(config):
    # perturbed start on a short sweep: monotone history, big reduction
    truth = ActuatorParams(motor_gain=(0.14, 0.12),
                           default_knee_angle=(1.0, 1.2))
    sweep = ActionSweep.default(8)
    ref = measure_response_curves(VanillaSim(truth, config), sweep.actions)
    p0 = truth.to_vector() * np.array([1.2, 0.85, 1.1, 0.9, 1.0, 1.0,
                                       1.15, 0.85])
    report = run_sysid(p0, PARAM_BOUNDS, sweep, ref, config,
                       max_iterations=25)
    hist = report.objective_history
    assert all(b <= a + 1e-12 for a, b in zip(hist, hist[1:]))
    assert report.final_objective < 0.2 * report.initial_objective
    assert len(report.per_curve_distances) == 4
    d = report.to_dict()
    assert set(d["final_params"]) == {
        "motor_gain_L", "motor_gain_R", "knee_stiffness_L",
        "knee_stiffness_R", "default_motor_angle_L", "default_motor_angle_R",
        "default_knee_angle_L", "default_knee_angle_R"}


def test_sysid_effect_demo_keys(config):
    naive = ActuatorParams()
    other = ActuatorParams(motor_gain=(0.2, 0.08))
    out = sysid_effect_demo(naive, other, config, horizon=40)
    assert out["final_com_gap_m"] > 0.0
    assert out["mean_joint_angle_gap_deg"] > 0.0
    same = sysid_effect_demo(naive, naive, config, horizon=20)
    assert same["final_com_gap_m"] == pytest.approx(0.0, abs=1e-12)


def test_curve_distance_normalization(config):
    curves = measure_response_curves(VanillaSim(ActuatorParams(), config),
                                     np.linspace(0, 1, 5))
    assert curve_distance(curves, curves) == pytest.approx([0.0] * 4)
