"""Command-line entry points.

Every subcommand shares --seed/--config/--out-dir; failures exit nonzero with
a machine-readable JSON error object on stderr. Training-side commands
(sysid, train-residual, train-sl-residual, train-task) refuse to read the
hidden-world config; only `collect` and `eval` may load it.
"""

from __future__ import annotations

import functools
import json
import sys
from pathlib import Path

import click

from .actuator import (ActuatorParams, PARAM_BOUNDS, load_curves_csv,
                       load_params, save_params)
from .config import MorphologyConfig
from .envmimic import (ReferenceSet, SlResidual, improved_sim,
                       train_envmimic, train_sl_residual,
                       trajectory_comparison)
from .harness import ensure_not_hidden, evaluate_transfer, write_metrics_csv
from .hiddenworld import HiddenWorldConfig, HiddenWorldSim
from .nn import MlpPolicy
from .pipeline import ExperimentConfig, run_pipeline
from .simulators import VanillaSim
from .sysid import ActionSweep, run_sysid
from .tasks import DomainRandomizationConfig, train_task_policy
from .trajectory import Trajectory


def _fail(kind: str, message: str, **details):
    payload = {"error": kind, "message": message}
    if details:
        payload["details"] = details
    click.echo(json.dumps(payload), err=True)
    sys.exit(1)


def handle_errors(fn):
    @functools.wraps(fn)
    def wrapper(*args, **kwargs):
        try:
            return fn(*args, **kwargs)
        except click.ClickException:
            raise
        except Exception as err:                       # noqa: BLE001
            _fail(type(err).__name__, str(err))
    return wrapper


def _load_morphology(path) -> MorphologyConfig:
    if path is None:
        return MorphologyConfig()
    ensure_not_hidden(path)
    with open(path) as fh:
        return MorphologyConfig(**json.load(fh))


@click.group()
@click.option("--seed", type=int, default=0, show_default=True)
@click.option("--config", "config_path", type=click.Path(exists=True),
              default=None, help="Morphology config JSON.")
@click.option("--out-dir", type=click.Path(), default=".",
              show_default=True)
@click.pass_context
def main(ctx, seed, config_path, out_dir):
    """Sim-to-sim transfer experiments for a buoyancy-assisted biped."""
    ctx.ensure_object(dict)
    ctx.obj["seed"] = seed
    ctx.obj["config_path"] = config_path
    ctx.obj["out_dir"] = Path(out_dir)
    ctx.obj["out_dir"].mkdir(parents=True, exist_ok=True)


@main.command("sysid")
@click.option("--hardware-curves", required=True, type=click.Path(exists=True))
@click.option("--init", "init_path", type=click.Path(exists=True),
              default=None, help="Initial params file (defaults to nominal).")
@click.option("--out", "out_name", default="sysid_report.json",
              show_default=True)
@click.pass_context
@handle_errors
def sysid_cmd(ctx, hardware_curves, init_path, out_name):
    """Fit the 8 actuator parameters to measured response curves."""
    ensure_not_hidden(hardware_curves)
    if init_path is not None:
        ensure_not_hidden(init_path)
    morphology = _load_morphology(ctx.obj["config_path"])
    curves = load_curves_csv(hardware_curves)
    sweep = ActionSweep(actions=tuple(a for a, _ in curves[0].samples))
    p0 = (load_params(init_path) if init_path
          else ActuatorParams()).to_vector()
    report = run_sysid(p0, PARAM_BOUNDS, sweep, curves, morphology)
    out = ctx.obj["out_dir"] / out_name
    with open(out, "w") as fh:
        json.dump(report.to_dict(), fh, indent=2)
    save_params(ActuatorParams.from_vector(report.final_params),
                ctx.obj["out_dir"] / "identified_params.txt")
    click.echo(f"final objective {report.final_objective:.6f} "
               f"({report.iterations} iterations) -> {out}")


@main.command("collect")
@click.option("--hidden-config", required=True, type=click.Path(exists=True))
@click.option("--sequence", "sequences", multiple=True, required=True,
              type=click.Path(exists=True),
              help="Trajectory JSONL whose actions are replayed (repeatable).")
@click.option("--episodes", type=int, default=1, show_default=True)
@click.pass_context
@handle_errors
def collect_cmd(ctx, hidden_config, sequences, episodes):
    """Replay action sequences in the hidden world, record trajectories."""
    from .hiddenworld import collect_reference_set
    morphology = _load_morphology(ctx.obj["config_path"])
    hidden = HiddenWorldConfig.load(hidden_config)
    action_seqs = [Trajectory.load(p).actions for p in sequences]
    trajs = collect_reference_set(action_seqs, episodes, hidden, morphology,
                                  base_seed=ctx.obj["seed"])
    for i, traj in enumerate(trajs):
        path = ctx.obj["out_dir"] / f"ref_{i:03d}.jsonl"
        traj.save(path)
    click.echo(f"wrote {len(trajs)} reference trajectories to "
               f"{ctx.obj['out_dir']}")


def _load_refs(ref_dir, holdout=1) -> ReferenceSet:
    paths = sorted(Path(ref_dir).glob("*.jsonl"))
    if not paths:
        raise ValueError(f"no .jsonl references under {ref_dir}")
    return ReferenceSet.build([Trajectory.load(p) for p in paths],
                              holdout=holdout)


@main.command("train-residual")
@click.option("--refs", "ref_dir", required=True, type=click.Path(exists=True))
@click.option("--params", "params_path", required=True,
              type=click.Path(exists=True))
@click.option("--steps", type=int, default=1_500_000, show_default=True)
@click.option("--out", "out_name", default="residual_rl.json",
              show_default=True)
@click.pass_context
@handle_errors
def train_residual_cmd(ctx, ref_dir, params_path, steps, out_name):
    """Train the RL residual-force policy on reference trajectories."""
    ensure_not_hidden(params_path)
    morphology = _load_morphology(ctx.obj["config_path"])
    refs = _load_refs(ref_dir)
    params = load_params(params_path)
    policy, log = train_envmimic(refs, params, morphology,
                                 total_steps=steps, seed=ctx.obj["seed"])
    out = ctx.obj["out_dir"] / out_name
    policy.save(out, extra={"seed": ctx.obj["seed"],
                            "config_hash": morphology.config_hash()})
    last = log[-1]["mean_reward"] if log else float("nan")
    click.echo(f"residual policy -> {out} (final mean reward {last:.3f})")


@main.command("train-sl-residual")
@click.option("--refs", "ref_dir", required=True, type=click.Path(exists=True))
@click.option("--params", "params_path", required=True,
              type=click.Path(exists=True))
@click.option("--out", "out_name", default="residual_sl.json",
              show_default=True)
@click.pass_context
@handle_errors
def train_sl_residual_cmd(ctx, ref_dir, params_path, out_name):
    """Fit the supervised residual baseline."""
    ensure_not_hidden(params_path)
    morphology = _load_morphology(ctx.obj["config_path"])
    refs = _load_refs(ref_dir)
    params = load_params(params_path)
    sl = train_sl_residual(refs, params, morphology, seed=ctx.obj["seed"])
    out = ctx.obj["out_dir"] / out_name
    sl.save(out, extra={"seed": ctx.obj["seed"],
                        "config_hash": morphology.config_hash()})
    click.echo(f"SL residual -> {out} (val loss {sl.val_loss:.6f}, "
               f"{sl.dropped_transitions} transitions dropped)")


@main.command("train-task")
@click.option("--task", type=click.Choice(["forward", "turn_left"]),
              required=True)
@click.option("--params", "params_path", required=True,
              type=click.Path(exists=True))
@click.option("--residual", "residual_path", type=click.Path(exists=True),
              default=None, help="RL residual checkpoint for the improved sim.")
@click.option("--dr/--no-dr", default=True, show_default=True)
@click.option("--steps", type=int, default=300_000, show_default=True)
@click.option("--out", "out_name", default=None)
@click.pass_context
@handle_errors
def train_task_cmd(ctx, task, params_path, residual_path, dr, steps,
                   out_name):
    """Train a locomotion policy in the chosen simulator setting."""
    ensure_not_hidden(params_path)
    if residual_path is not None:
        ensure_not_hidden(residual_path)
    morphology = _load_morphology(ctx.obj["config_path"])
    params = load_params(params_path)
    if residual_path is not None:
        residual = MlpPolicy.load(residual_path)
        factory = lambda cfg: improved_sim(params, cfg, residual)  # noqa: E731
    else:
        factory = lambda cfg: VanillaSim(params, cfg)               # noqa: E731
    policy, log = train_task_policy(
        task, factory, morphology,
        dr=DomainRandomizationConfig() if dr else None,
        total_steps=steps, seed=ctx.obj["seed"])
    out = ctx.obj["out_dir"] / (out_name or f"{task}_policy.json")
    policy.save(out, extra={"seed": ctx.obj["seed"], "task": task,
                            "config_hash": morphology.config_hash()})
    last = log[-1]["mean_reward"] if log else float("nan")
    click.echo(f"task policy -> {out} (final mean reward {last:.4f})")


@main.command("eval")
@click.option("--policy", "policy_path", required=True,
              type=click.Path(exists=True))
@click.option("--params", "params_path", required=True,
              type=click.Path(exists=True))
@click.option("--hidden-config", required=True, type=click.Path(exists=True))
@click.option("--residual", "residual_path", type=click.Path(exists=True),
              default=None)
@click.option("--eval-seeds", default="0,1,2,3,4", show_default=True)
@click.option("--out", "out_name", default="transfer_metrics.json",
              show_default=True)
@click.pass_context
@handle_errors
def eval_cmd(ctx, policy_path, params_path, hidden_config, residual_path,
             eval_seeds, out_name):
    """Evaluate a task policy's transfer into the hidden world."""
    morphology = _load_morphology(ctx.obj["config_path"])
    policy = MlpPolicy.load(policy_path)
    params = load_params(params_path)
    hidden = HiddenWorldSim(HiddenWorldConfig.load(hidden_config), morphology)
    if residual_path is not None:
        training_sim = improved_sim(params, morphology,
                                    MlpPolicy.load(residual_path))
    else:
        training_sim = VanillaSim(params, morphology)
    seeds = tuple(int(s) for s in eval_seeds.split(","))
    metrics = evaluate_transfer(policy, training_sim, hidden, seeds,
                                morphology)
    out = ctx.obj["out_dir"] / out_name
    with open(out, "w") as fh:
        json.dump(metrics.to_dict(), fh, indent=2)
    write_metrics_csv(ctx.obj["out_dir"] / "transfer_metrics.csv",
                      {"policy": metrics})
    click.echo(f"transfer metrics -> {out}")


@main.command("compare")
@click.option("--sequence", "sequence_path", required=True,
              type=click.Path(exists=True))
@click.option("--params", "params_path", required=True,
              type=click.Path(exists=True))
@click.option("--hidden-config", required=True, type=click.Path(exists=True))
@click.option("--systems", default="vanilla", show_default=True,
              help="Comma-separated: vanilla, sl, envmimic.")
@click.option("--rl-residual", type=click.Path(exists=True), default=None)
@click.option("--sl-residual", type=click.Path(exists=True), default=None)
@click.option("--out", "out_name", default="comparison.csv",
              show_default=True)
@click.pass_context
@handle_errors
def compare_cmd(ctx, sequence_path, params_path, hidden_config, systems,
                rl_residual, sl_residual, out_name):
    """Replay one action sequence across simulators vs the hidden world."""
    morphology = _load_morphology(ctx.obj["config_path"])
    params = load_params(params_path)
    actions = Trajectory.load(sequence_path).actions
    sims = {}
    for name in systems.split(","):
        name = name.strip()
        if name == "vanilla":
            sims[name] = VanillaSim(params, morphology)
        elif name == "envmimic":
            if rl_residual is None:
                raise ValueError("--rl-residual required for envmimic")
            sims[name] = improved_sim(params, morphology,
                                      MlpPolicy.load(rl_residual))
        elif name == "sl":
            if sl_residual is None:
                raise ValueError("--sl-residual required for sl")
            sims[name] = improved_sim(params, morphology,
                                      SlResidual.load(sl_residual))
        else:
            raise ValueError(f"unknown system {name!r}")
    hidden = HiddenWorldSim(HiddenWorldConfig.load(hidden_config), morphology)
    result = trajectory_comparison(actions, sims, hidden, morphology,
                                   seed=ctx.obj["seed"])
    out = ctx.obj["out_dir"] / out_name
    result.save_csv(out)
    summary = {name: {"mean_position_error": result.mean_position_error.get(name),
                      "final_yaw_error": result.final_yaw_error.get(name),
                      "diverged": result.diverged[name]}
               for name in sims}
    click.echo(json.dumps(summary, indent=2))


@main.command("pipeline")
@click.option("--experiment-config", type=click.Path(exists=True),
              default=None, help="ExperimentConfig JSON overrides.")
@click.pass_context
@handle_errors
def pipeline_cmd(ctx, experiment_config):
    """Run the full sysid -> collect -> residual -> tasks -> eval pipeline."""
    if experiment_config is not None:
        ensure_not_hidden(experiment_config)
        config = ExperimentConfig.from_json(experiment_config)
    else:
        config = ExperimentConfig()
    config.seed = ctx.obj["seed"]
    if ctx.obj["config_path"] is not None:
        config.morphology = _load_morphology(ctx.obj["config_path"])
    report = run_pipeline(config, ctx.obj["out_dir"])
    click.echo(json.dumps({"report": str(ctx.obj["out_dir"] / "report.json"),
                           "settings": sorted(report["settings"])}, indent=2))


if __name__ == "__main__":
    main()
