#!/usr/bin/env python3
"""Run the full experiment pipeline: sysid -> collect -> residuals -> tasks -> eval.

Stages resume from artifacts already present in the output directory, so a
killed run can simply be restarted. Budgets can be overridden with an
ExperimentConfig JSON (see ballu.pipeline.ExperimentConfig for the fields).
"""

import argparse
import json

from ballu.pipeline import ExperimentConfig, run_pipeline


def main():
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--out-dir", default="pipeline_out")
    parser.add_argument("--seed", type=int, default=0)
    parser.add_argument("--experiment-config", default=None,
                        help="JSON file with ExperimentConfig overrides.")
    args = parser.parse_args()

    if args.experiment_config is not None:
        config = ExperimentConfig.from_json(args.experiment_config)
    else:
        config = ExperimentConfig()
    config.seed = args.seed

    report = run_pipeline(config, args.out_dir)
    for task, rows in report["settings"].items():
        print(f"\n{task}:")
        for setting, metrics in rows.items():
            med = metrics["median"]
            print(f"  {setting:10s} x {med['x_distance']:+.3f} m  "
                  f"y {med['y_distance']:+.3f} m  "
                  f"com err {med['mean_per_step_com_error']:.4f} m  "
                  f"yaw err {med['final_yaw_error']:+.2f} deg")
    print(f"\nfull report: {args.out_dir}/report.json")
    print(json.dumps({"config_hash": report["config_hash"],
                      "seed": report["seed"]}))


if __name__ == "__main__":
    main()
