#!/usr/bin/env python3
"""Residual-learning tracking demo: vanilla vs SL vs RL residual simulators.

Collects bang-bang reference trajectories from the hardware emulator, trains
the RL residual-force policy and the supervised (SL) baseline on all but the
last sequence, then replays the held-out action sequence open-loop through
each simulator and reports tracking error against the emulator. Optionally
plots the x-y balloon paths.
"""

import argparse
from pathlib import Path

from ballu.config import MorphologyConfig
from ballu.envmimic import (ReferenceSet, improved_sim, train_envmimic,
                            train_sl_residual, trajectory_comparison)
from ballu.hiddenworld import (HiddenWorldConfig, HiddenWorldSim,
                               collect_reference_set, default_hidden_params)
from ballu.ppo import PpoHyperparams
from ballu.simulators import VanillaSim
from ballu.sysid import bang_bang_actions


def main():
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--out-dir", default="tracking_out")
    parser.add_argument("--steps", type=int, default=1_500_000,
                        help="RL residual training steps.")
    parser.add_argument("--horizon", type=int, default=100)
    parser.add_argument("--seed", type=int, default=3)
    parser.add_argument("--plot", action="store_true",
                        help="Write an x-y path plot (requires matplotlib).")
    args = parser.parse_args()

    out = Path(args.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    config = MorphologyConfig()
    hidden_cfg = HiddenWorldConfig.default()

    # In a real deployment the identified parameters come from `ballu sysid`;
    # here we take the recovered optimum as given to isolate the residual step.
    identified = default_hidden_params()

    periods = (0.6, 0.8, 1.0, 0.7)       # last sequence held out
    sequences = [bang_bang_actions(args.horizon, config.control_dt, p)
                 for p in periods]
    refs = ReferenceSet.build(
        collect_reference_set(sequences, 1, hidden_cfg, config, base_seed=42),
        holdout=1)

    rl, log = train_envmimic(refs, identified, config,
                             total_steps=args.steps, seed=args.seed,
                             hyper=PpoHyperparams(batch_steps=8192))
    rl.save(out / "residual_rl.json")
    if log:
        print(f"RL residual final mean reward {log[-1]['mean_reward']:.3f}")
    sl = train_sl_residual(refs, identified, config, seed=args.seed)
    sl.save(out / "residual_sl.json")
    print(f"SL residual val loss {sl.val_loss:.6f} "
          f"({sl.dropped_transitions} transitions dropped)")

    holdout = refs.trajectories[refs.holdout_indices[0]]
    systems = {
        "vanilla": VanillaSim(identified, config),
        "sl": improved_sim(identified, config, sl),
        "envmimic": improved_sim(identified, config, rl),
    }
    hidden_sim = HiddenWorldSim(hidden_cfg, config)
    result = trajectory_comparison(holdout.actions, systems, hidden_sim,
                                   config, seed=args.seed)
    result.save_csv(out / "comparison.csv")
    for name in systems:
        print(f"{name:10s} mean position error "
              f"{result.mean_position_error[name]:.4f} m, "
              f"final yaw error {result.final_yaw_error[name]:+.2f} deg")

    if args.plot:
        import matplotlib
        matplotlib.use("Agg")
        import matplotlib.pyplot as plt

        fig, ax = plt.subplots(figsize=(6, 5))
        for name, rows in result.traces.items():
            ax.plot([r[1] for r in rows], [r[2] for r in rows], label=name)
        ax.set_xlabel("x [m]")
        ax.set_ylabel("y [m]")
        ax.legend()
        ax.set_title("Held-out open-loop balloon paths")
        fig.savefig(out / "comparison.png", dpi=150)
        print(f"plot: {out / 'comparison.png'}")


if __name__ == "__main__":
    main()
