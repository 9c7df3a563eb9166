"""End-to-end experiment pipeline: sysid -> collect -> residuals -> tasks -> eval.

Each stage writes its artifacts under the output directory and is skipped on
re-entry when a matching artifact (same config hash and seed) already exists,
so a killed run resumes from the last completed stage.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

from .actuator import (ActuatorParams, PARAM_BOUNDS, export_curves_csv,
                       load_params, measure_response_curves, save_params)
from .config import MorphologyConfig
from .envmimic import (ReferenceSet, SlResidual, improved_sim,
                       train_envmimic, train_sl_residual)
from .harness import evaluate_transfer, write_metrics_csv
from .hiddenworld import HiddenWorldConfig, HiddenWorldSim, \
    collect_reference_set
from .nn import MlpPolicy
from .ppo import PpoHyperparams
from .simulators import VanillaSim
from .sysid import ActionSweep, run_sysid
from .tasks import (DomainRandomizationConfig, record_action_sequences,
                    train_task_policy)
from .trajectory import Trajectory

SETTINGS = ("sysid-only", "dr-only", "sysid+dr", "envmimic")
TASK_NAMES = ("forward", "turn_left")


@dataclass
class ExperimentConfig:
    seed: int = 0
    sweep_points: int = 20
    vanilla_policy_steps: int = 200_000
    reference_sequences: int = 4          # last one held out
    episodes_per_sequence: int = 1
    reference_horizon: int = 100
    residual_steps: int = 1_500_000
    residual_batch: int = 8192
    task_steps: int = 300_000
    task_horizon: int = 400
    eval_seeds: tuple = (0, 1, 2, 3, 4)
    eval_horizon: int = 400
    morphology: MorphologyConfig = field(default_factory=MorphologyConfig)
    hidden: HiddenWorldConfig = field(
        default_factory=HiddenWorldConfig.default)

    @classmethod
    def from_json(cls, path) -> "ExperimentConfig":
        with open(path) as fh:
            data = json.load(fh)
        kwargs = dict(data)
        if "morphology" in kwargs:
            kwargs["morphology"] = MorphologyConfig(**kwargs["morphology"])
        if "eval_seeds" in kwargs:
            kwargs["eval_seeds"] = tuple(kwargs["eval_seeds"])
        if "hidden" in kwargs:
            raise ValueError("hidden-world settings must come from the "
                             "hidden config file, not the experiment config")
        return cls(**kwargs)


def _stamp(config: ExperimentConfig) -> dict:
    return {"config_hash": config.morphology.config_hash(),
            "seed": config.seed}


def _fresh(path: Path, config: ExperimentConfig) -> bool:
    """True when `path` holds an artifact produced under this config."""
    if not path.exists():
        return False
    try:
        with open(path) as fh:
            text = fh.read()
        try:
            head = json.loads(text)
        except json.JSONDecodeError:
            head = json.loads(text.splitlines()[0])   # JSONL: metadata line
    except (json.JSONDecodeError, OSError, IndexError):
        return False
    stamp = head.get("extra", head)
    return (stamp.get("config_hash") == config.morphology.config_hash()
            and stamp.get("seed") == config.seed)


def stage_sysid(config: ExperimentConfig, out: Path) -> ActuatorParams:
    report_path = out / "sysid_report.json"
    params_path = out / "identified_params.txt"
    if _fresh(report_path, config) and params_path.exists():
        return load_params(params_path)
    morphology = config.morphology
    hidden_sim = HiddenWorldSim(config.hidden.quiet(), morphology)
    sweep = ActionSweep.default(config.sweep_points)
    hardware_curves = measure_response_curves(hidden_sim, sweep.actions)
    export_curves_csv(hardware_curves, out / "hardware_curves.csv")
    p0 = ActuatorParams().to_vector()
    report = run_sysid(p0, PARAM_BOUNDS, sweep, hardware_curves, morphology)
    identified = ActuatorParams.from_vector(report.final_params)
    save_params(identified, params_path)
    with open(report_path, "w") as fh:
        json.dump({**_stamp(config), **report.to_dict()}, fh, indent=2)
    return identified


def stage_collect(config: ExperimentConfig, out: Path,
                  identified: ActuatorParams) -> ReferenceSet:
    ref_dir = out / "references"
    ref_dir.mkdir(exist_ok=True)
    n_total = config.reference_sequences * config.episodes_per_sequence
    paths = [ref_dir / f"ref_{i:03d}.jsonl" for i in range(n_total)]
    if all(_fresh(p, config) for p in paths):
        return ReferenceSet.build([Trajectory.load(p) for p in paths],
                                  holdout=config.episodes_per_sequence)
    morphology = config.morphology
    vanilla = VanillaSim(identified, morphology)
    policy, _ = train_task_policy(
        "forward", lambda cfg: VanillaSim(identified, cfg), morphology,
        total_steps=config.vanilla_policy_steps, seed=config.seed,
        horizon=config.reference_horizon)
    sequences = record_action_sequences(
        policy, vanilla, config.reference_sequences,
        horizon=config.reference_horizon,
        dr=DomainRandomizationConfig(), seed=config.seed)
    trajectories = collect_reference_set(
        sequences, config.episodes_per_sequence, config.hidden, morphology,
        base_seed=config.seed)
    policy.save(out / "collect_policy.json", extra=_stamp(config))
    for path, traj in zip(paths, trajectories):
        traj.metadata.update(_stamp(config))
        traj.save(path)
    return ReferenceSet.build(trajectories,
                              holdout=config.episodes_per_sequence)


def stage_residuals(config: ExperimentConfig, out: Path,
                    identified: ActuatorParams, refs: ReferenceSet):
    rl_path = out / "residual_rl.json"
    sl_path = out / "residual_sl.json"
    if _fresh(rl_path, config):
        rl = MlpPolicy.load(rl_path)
    else:
        rl, _ = train_envmimic(
            refs, identified, config.morphology,
            total_steps=config.residual_steps, seed=config.seed,
            hyper=PpoHyperparams(batch_steps=config.residual_batch))
        rl.save(rl_path, extra=_stamp(config))
    if _fresh(sl_path, config):
        sl = SlResidual.load(sl_path)
    else:
        sl = train_sl_residual(refs, identified, config.morphology,
                               seed=config.seed)
        sl.save(sl_path, extra=_stamp(config))
    return rl, sl


def _sim_factory(setting: str, naive: ActuatorParams,
                 identified: ActuatorParams, residual):
    if setting == "dr-only":
        return lambda cfg: VanillaSim(naive, cfg)
    if setting in ("sysid-only", "sysid+dr"):
        return lambda cfg: VanillaSim(identified, cfg)
    if setting == "envmimic":
        return lambda cfg: improved_sim(identified, cfg, residual)
    raise ValueError(f"unknown setting {setting!r}")


def stage_tasks(config: ExperimentConfig, out: Path, naive: ActuatorParams,
                identified: ActuatorParams, residual) -> dict:
    task_dir = out / "tasks"
    task_dir.mkdir(exist_ok=True)
    policies = {}
    for task in TASK_NAMES:
        for setting in SETTINGS:
            path = task_dir / f"{task}_{setting.replace('+', '_')}.json"
            if _fresh(path, config):
                policies[(task, setting)] = MlpPolicy.load(path)
                continue
            dr = None if setting == "sysid-only" \
                else DomainRandomizationConfig()
            policy, _ = train_task_policy(
                task, _sim_factory(setting, naive, identified, residual),
                config.morphology, dr=dr, total_steps=config.task_steps,
                seed=config.seed, horizon=config.task_horizon)
            policy.save(path, extra=_stamp(config))
            policies[(task, setting)] = policy
    return policies


def stage_eval(config: ExperimentConfig, out: Path, naive: ActuatorParams,
               identified: ActuatorParams, residual, policies) -> dict:
    report_path = out / "report.json"
    if _fresh(report_path, config):
        with open(report_path) as fh:
            return json.load(fh)
    morphology = config.morphology
    hidden_sim = HiddenWorldSim(config.hidden, morphology)
    report = {**_stamp(config), "settings": {}}
    for task in TASK_NAMES:
        rows = {}
        for setting in SETTINGS:
            training_sim = _sim_factory(setting, naive, identified,
                                        residual)(morphology)
            metrics = evaluate_transfer(
                policies[(task, setting)], training_sim, hidden_sim,
                config.eval_seeds, morphology, horizon=config.eval_horizon)
            rows[setting] = metrics
            report["settings"].setdefault(task, {})[setting] = \
                metrics.to_dict()
        write_metrics_csv(out / f"table_{task}.csv", rows)
    with open(report_path, "w") as fh:
        json.dump(report, fh, indent=2)
    return report


def run_pipeline(config: ExperimentConfig, out_dir) -> dict:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    naive = ActuatorParams()
    identified = stage_sysid(config, out)
    refs = stage_collect(config, out, identified)
    rl_residual, _sl = stage_residuals(config, out, identified, refs)
    policies = stage_tasks(config, out, naive, identified, rl_residual)
    return stage_eval(config, out, naive, identified, rl_residual, policies)
