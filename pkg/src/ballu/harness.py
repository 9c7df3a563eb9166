"""Transfer evaluation: deploy task policies in the hardware emulator.

For each seed the policy runs closed-loop in the hidden world and, from the
matched initial state, in its own training simulator; the gap between the two
traces and the hardware-side displacement metrics are aggregated as
median/IQR across seeds.
"""

from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass, field

import numpy as np

from . import dynamics
from .config import MorphologyConfig
from .envmimic import state_features
from .hiddenworld import HIDDEN_MARKER

METRIC_NAMES = ("mean_per_step_com_error", "x_distance", "y_distance",
                "total_distance", "final_yaw_error", "delta_alpha_hw")


class HiddenConfigError(RuntimeError):
    """A training-side stage was handed the hidden-world config."""


def ensure_not_hidden(path) -> None:
    """Firewall: refuse hidden-world config files in training-side stages."""
    try:
        with open(path) as fh:
            data = json.load(fh)
    except (OSError, json.JSONDecodeError):
        return
    if isinstance(data, dict) and data.get(HIDDEN_MARKER):
        raise HiddenConfigError(
            f"{path} is a hidden-world config; this stage must not see it")


def check_morphology(sim_a, sim_b) -> None:
    if sim_a.config.config_hash() != sim_b.config.config_hash():
        raise ValueError(
            "morphology hash mismatch: "
            f"{sim_a.config.config_hash()} vs {sim_b.config.config_hash()}")


@dataclass
class TransferMetrics:
    """Per-seed transfer metrics plus median/IQR aggregates."""

    seeds: tuple
    per_seed: dict                 # metric name -> list (surviving seeds)
    failures: int = 0
    median: dict = field(default_factory=dict)
    iqr: dict = field(default_factory=dict)

    def __post_init__(self):
        for name in METRIC_NAMES:
            vals = np.asarray(self.per_seed.get(name, ()), dtype=float)
            if len(vals):
                q1, med, q3 = np.percentile(vals, (25, 50, 75))
                self.median[name] = float(med)
                self.iqr[name] = float(q3 - q1)
            else:
                self.median[name] = float("nan")
                self.iqr[name] = float("nan")

    def to_dict(self) -> dict:
        return {"seeds": list(self.seeds), "failures": self.failures,
                "per_seed": {k: list(map(float, v))
                             for k, v in self.per_seed.items()},
                "median": self.median, "iqr": self.iqr}

    @classmethod
    def from_dict(cls, data) -> "TransferMetrics":
        return cls(seeds=tuple(data["seeds"]), per_seed=data["per_seed"],
                   failures=data["failures"])


def _closed_loop(sim, policy, start, horizon, *, seed=None):
    if seed is not None:
        sim.reset(state=start, seed=seed)
    else:
        sim.reset(state=start)
    states = []
    state = sim.state
    for _ in range(horizon):
        action = tuple(np.clip(
            policy.mean_action(state_features(state, sim.config)), 0.0, 1.0))
        state = sim.step(action)
        states.append(state)
    return states


def evaluate_transfer(policy, training_sim, hidden_sim,
                      seeds, config: MorphologyConfig, *,
                      horizon: int = 400) -> TransferMetrics:
    """Closed-loop hidden-world deployment vs the training simulator."""
    seeds = tuple(seeds)
    if len(seeds) < 5:
        raise ValueError("need at least 5 evaluation seeds")
    check_morphology(training_sim, hidden_sim)
    per_seed = {name: [] for name in METRIC_NAMES}
    failures = 0
    start = hidden_sim.initial_state()
    for seed in seeds:
        try:
            hw = _closed_loop(hidden_sim, policy, start, horizon, seed=seed)
            sim = _closed_loop(training_sim, policy, start, horizon)
        except dynamics.SimulationDiverged:
            failures += 1
            continue
        com_errs = [math.dist(dynamics.com_position(a, config),
                              dynamics.com_position(b, config))
                    for a, b in zip(sim, hw)]
        bpos = [dynamics.balloon_position(s, config) for s in hw]
        b0 = dynamics.balloon_position(start, config)
        path = sum(math.hypot(b[0] - a[0], b[1] - a[1])
                   for a, b in zip([b0] + bpos[:-1], bpos))
        yaw_sim = sim[-1].base_orientation[2]
        yaw_hw = hw[-1].base_orientation[2]
        per_seed["mean_per_step_com_error"].append(float(np.mean(com_errs)))
        per_seed["x_distance"].append(bpos[-1][0] - b0[0])
        per_seed["y_distance"].append(bpos[-1][1] - b0[1])
        per_seed["total_distance"].append(path)
        per_seed["final_yaw_error"].append(
            math.degrees(dynamics.wrap_angle(yaw_sim - yaw_hw)))
        per_seed["delta_alpha_hw"].append(
            math.degrees(dynamics.wrap_angle(
                yaw_hw - start.base_orientation[2])))
    return TransferMetrics(seeds=seeds, per_seed=per_seed, failures=failures)


def write_metrics_csv(path, rows: dict) -> None:
    """One CSV row per setting; columns are the TransferMetrics field names."""
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["setting", *METRIC_NAMES,
                         *(f"{n}_iqr" for n in METRIC_NAMES)])
        for setting, metrics in rows.items():
            writer.writerow([
                setting,
                *(f"{metrics.median[n]:.6f}" for n in METRIC_NAMES),
                *(f"{metrics.iqr[n]:.6f}" for n in METRIC_NAMES)])
